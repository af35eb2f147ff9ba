//! Scalar Chebyshev and Bernstein approximation of target response functions,
//! with Gibbs overshoot measurement on a dense grid.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filters::{chebyshev_values, damping_vector, Damping};

pub const DEFAULT_GRID: usize = 100_000;
pub const DEFAULT_EXCLUSION: f64 = 0.05;
/// Chebyshev–Gauss nodes used for partial-sum coefficients by default.
pub const DEFAULT_QUADRATURE: usize = 1 << 14;
pub const DEFAULT_MAGNITUDE_CAP: f64 = 1e6;

type Evaluator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Scalar function on `[-1, 1]` with its known jump or singular points.
#[derive(Clone)]
pub struct TargetFunction {
    name: String,
    eval: Evaluator,
    discontinuities: Vec<f64>,
    magnitude_cap: f64,
}

impl fmt::Debug for TargetFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetFunction")
            .field("name", &self.name)
            .field("discontinuities", &self.discontinuities)
            .finish()
    }
}

impl TargetFunction {
    pub fn new<F>(name: impl Into<String>, eval: F, discontinuities: Vec<f64>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        TargetFunction { name: name.into(), eval: Arc::new(eval), discontinuities, magnitude_cap: DEFAULT_MAGNITUDE_CAP }
    }

    /// `sign(x - c)` with value 0 at the jump.
    pub fn step(c: f64) -> Self {
        Self::new(
            "step",
            move |x| {
                let d = x - c;
                if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            },
            vec![c],
        )
    }

    /// `|x - c|`.
    pub fn abs(c: f64) -> Self {
        Self::new("abs", move |x| (x - c).abs(), vec![])
    }

    /// `max(0, x - c)`.
    pub fn ramp(c: f64) -> Self {
        Self::new("ramp", move |x| (x - c).max(0.0), vec![])
    }

    /// `1 / (x - c)`, singular at `c`.
    pub fn inverse(c: f64) -> Self {
        Self::new("inverse-singularity", move |x| 1.0 / (x - c), vec![c])
    }

    pub fn identity() -> Self {
        Self::new("identity", |x| x, vec![])
    }

    /// Parses `name` or `name:c` where `name` is one of `step`, `abs`, `ramp`,
    /// `inverse-singularity` (alias `inverse`) and `c` shifts the feature
    /// location (default 0).
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, loc) = match spec.split_once(':') {
            Some((n, c)) => {
                let c: f64 = c.trim().parse().map_err(|_| Error::param(format!("bad target location {c:?}")))?;
                if !(-1.0..=1.0).contains(&c) {
                    return Err(Error::param(format!("target location {c} outside [-1, 1]")));
                }
                (n, c)
            }
            None => (spec, 0.0),
        };
        match name.trim() {
            "step" | "sign" => Ok(Self::step(loc)),
            "abs" => Ok(Self::abs(loc)),
            "ramp" => Ok(Self::ramp(loc)),
            "inverse" | "inverse-singularity" => Ok(Self::inverse(loc)),
            "identity" => Ok(Self::identity()),
            other => Err(Error::param(format!(
                "unknown target {other:?} (expected step, abs, ramp, inverse-singularity)"
            ))),
        }
    }

    pub fn with_magnitude_cap(mut self, cap: f64) -> Self {
        self.magnitude_cap = cap;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn discontinuities(&self) -> &[f64] {
        &self.discontinuities
    }

    /// Raw evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    /// Evaluation clamped to the magnitude cap. A non-finite value means the
    /// point sits on a singularity and is reported as an error.
    pub fn sample(&self, x: f64) -> Result<f64> {
        let v = self.eval(x);
        if !v.is_finite() {
            return Err(Error::Domain(format!("target {:?} is undefined at x = {x}", self.name)));
        }
        Ok(v.clamp(-self.magnitude_cap, self.magnitude_cap))
    }
}

/// Chebyshev nodes `cos((2j + 1)π / 2N)`, `j = 0..N`, in decreasing order.
pub fn cheb_nodes(count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::param("at least one Chebyshev node is required"));
    }
    let n = count as f64;
    // The middle node of an odd count is exactly 0, not cos(π/2) ≈ 6e-17.
    Ok((0..count)
        .map(|j| if 2 * j + 1 == count { 0.0 } else { ((2 * j + 1) as f64 * PI / (2.0 * n)).cos() })
        .collect())
}

/// Chebyshev coefficients by discrete quadrature over `K + 1` nodes:
/// `μ_k = 2/(K+1) Σ_j f(x_j) T_k(x_j)`.
pub fn cheb_coefficients(f: &TargetFunction, order: usize) -> Result<Vec<f64>> {
    cheb_coefficients_with_nodes(f, order, order + 1)
}

/// Coefficients `μ_0..μ_K` from an `N`-node Chebyshev–Gauss quadrature,
/// `μ_k = 2/N Σ_j f(x_j) T_k(x_j)` with `N ≥ K + 1`. `N = K + 1` gives the
/// interpolant; large `N` approaches the truncated Chebyshev series.
pub fn cheb_coefficients_with_nodes(f: &TargetFunction, order: usize, count: usize) -> Result<Vec<f64>> {
    if count < order + 1 {
        return Err(Error::param(format!("order {order} needs at least {} quadrature nodes, got {count}", order + 1)));
    }
    let nodes = cheb_nodes(count)?;
    let mut mu = vec![0.0; order + 1];
    for &x in &nodes {
        let fx = f.sample(x)?;
        for (m, t) in mu.iter_mut().zip(chebyshev_values(x, order)) {
            *m += fx * t;
        }
    }
    let scale = 2.0 / count as f64;
    mu.iter_mut().for_each(|m| *m *= scale);
    Ok(mu)
}

/// Coefficients of the damped partial sum in plain `Σ c_k T_k` form, with
/// the halved leading term.
fn partial_sum_coefficients(mu: &[f64], damping: Damping) -> Vec<f64> {
    let order = mu.len().saturating_sub(1);
    let g = damping_vector(damping, order);
    mu.iter().zip(g).enumerate().map(|(k, (m, g))| if k == 0 { 0.5 * m } else { g * m }).collect()
}

fn clenshaw(c: &[f64], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    c.first().copied().unwrap_or(0.0) + x * b1 - b2
}

/// `μ_0/2 + Σ_{k≥1} g_k μ_k T_k(x)`.
pub fn cheb_eval(mu: &[f64], damping: Damping, x: f64) -> Result<f64> {
    if !(x.abs() <= 1.0) {
        return Err(Error::Domain(format!("x = {x} outside [-1, 1]")));
    }
    Ok(clenshaw(&partial_sum_coefficients(mu, damping), x))
}

/// Bernstein approximant `Σ_k f(k/K) C(K,k) x^k (1-x)^{K-k}` on `[0, 1]`,
/// evaluated by de Casteljau's algorithm.
pub fn bernstein_eval<F>(f: F, order: usize, x: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if order == 0 {
        return Err(Error::param("Bernstein order must be >= 1"));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    let samples: Vec<f64> = (0..=order).map(|k| f(k as f64 / order as f64)).collect();
    Ok(de_casteljau(samples, x))
}

fn de_casteljau(mut b: Vec<f64>, x: f64) -> f64 {
    let n = b.len();
    for r in 1..n {
        for i in 0..(n - r) {
            b[i] = (1.0 - x) * b[i] + x * b[i + 1];
        }
    }
    b[0]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsOptions {
    pub grid: usize,
    pub exclusion: f64,
    /// Quadrature nodes for the coefficients. `None` uses `K + 1` nodes (the
    /// interpolant); the default approximates the truncated series.
    pub quadrature: Option<usize>,
}

impl Default for GibbsOptions {
    fn default() -> Self {
        GibbsOptions { grid: DEFAULT_GRID, exclusion: DEFAULT_EXCLUSION, quadrature: Some(DEFAULT_QUADRATURE) }
    }
}

impl GibbsOptions {
    fn coefficients(&self, f: &TargetFunction, order: usize) -> Result<Vec<f64>> {
        let count = self.quadrature.map_or(order + 1, |n| n.max(order + 1));
        cheb_coefficients_with_nodes(f, order, count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxReport {
    #[serde(rename = "K")]
    pub order: usize,
    pub damping: String,
    /// `max |f - p|` over grid points farther than the exclusion radius from every jump.
    pub sup_error_away: f64,
    /// Largest `max p - max f` over the regions around each jump (the whole
    /// interval for continuous targets).
    pub overshoot: f64,
    /// `max p` over the whole grid.
    pub peak: f64,
    pub grid_size: usize,
}

fn uniform_grid(points: usize, lo: f64, hi: f64) -> Vec<f64> {
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| if i + 1 == points { hi } else { lo + step * i as f64 }).collect()
}

/// Index of the jump region containing `x`: regions are split halfway
/// between consecutive jumps.
fn region_of(x: f64, cuts: &[f64]) -> usize {
    cuts.iter().take_while(|&&c| x >= c).count()
}

fn near_jump(x: f64, jumps: &[f64], radius: f64) -> bool {
    jumps.iter().any(|&d| (x - d).abs() <= radius)
}

/// Quantifies the Gibbs phenomenon of the order-`K` Chebyshev partial sum of
/// `f`, optionally damped.
pub fn measure_gibbs(f: &TargetFunction, order: usize, damping: Damping, opts: GibbsOptions) -> Result<ApproxReport> {
    if opts.grid < 2 {
        return Err(Error::param("grid needs at least two points"));
    }
    if !f.discontinuities().is_empty() && !(opts.exclusion > 0.0) {
        return Err(Error::param("exclusion radius must be positive for discontinuous targets"));
    }
    let mu = opts.coefficients(f, order)?;
    let coeffs = partial_sum_coefficients(&mu, damping);
    let mut jumps = f.discontinuities().to_vec();
    jumps.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = jumps.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let regions = jumps.len().max(1);

    let grid = uniform_grid(opts.grid, -1.0, 1.0);
    let cap = f.magnitude_cap;
    let (err_away, p_max, f_max) = grid
        .par_iter()
        .map(|&x| {
            let p = clenshaw(&coeffs, x);
            let fx = f.eval(x);
            let fx = if fx.is_finite() { fx.clamp(-cap, cap) } else { f64::NAN };
            let r = region_of(x, &cuts);
            let mut p_max = vec![f64::NEG_INFINITY; regions];
            let mut f_max = vec![f64::NEG_INFINITY; regions];
            p_max[r] = p;
            if !fx.is_nan() {
                f_max[r] = fx;
            }
            let err = if !fx.is_nan() && !near_jump(x, &jumps, opts.exclusion) { (fx - p).abs() } else { 0.0 };
            (err, p_max, f_max)
        })
        .reduce(
            || (0.0, vec![f64::NEG_INFINITY; regions], vec![f64::NEG_INFINITY; regions]),
            |(e1, mut p1, mut f1), (e2, p2, f2)| {
                for i in 0..regions {
                    p1[i] = p1[i].max(p2[i]);
                    f1[i] = f1[i].max(f2[i]);
                }
                (e1.max(e2), p1, f1)
            },
        );
    let overshoot = p_max
        .iter()
        .zip(&f_max)
        .filter(|(_, f)| f.is_finite())
        .map(|(p, f)| p - f)
        .fold(f64::NEG_INFINITY, f64::max);
    let peak = p_max.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ApproxReport {
        order,
        damping: damping.to_string(),
        sup_error_away: err_away,
        overshoot,
        peak,
        grid_size: opts.grid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproxBasis {
    Chebyshev,
    Bernstein,
}

/// Sup-norm error of the undamped approximant at each order, measured on a
/// uniform grid over `[-1, 1]` away from jumps. The Bernstein side works on
/// `t = (x + 1) / 2 ∈ [0, 1]`.
pub fn convergence_curve(
    f: &TargetFunction,
    basis: ApproxBasis,
    orders: &[usize],
    opts: GibbsOptions,
) -> Result<Vec<(usize, f64)>> {
    if orders.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("orders must be ascending"));
    }
    let grid = uniform_grid(opts.grid.max(2), -1.0, 1.0);
    let jumps = f.discontinuities();
    let points: Vec<(f64, f64)> = grid
        .into_iter()
        .filter(|&x| !near_jump(x, jumps, opts.exclusion))
        .filter_map(|x| f.sample(x).ok().map(|fx| (x, fx)))
        .collect();
    orders
        .iter()
        .map(|&order| {
            let err = match basis {
                ApproxBasis::Chebyshev => {
                    let coeffs = partial_sum_coefficients(&cheb_coefficients(f, order)?, Damping::None);
                    points.par_iter().map(|&(x, fx)| (fx - clenshaw(&coeffs, x)).abs()).reduce(|| 0.0, f64::max)
                }
                ApproxBasis::Bernstein => {
                    if order == 0 {
                        return Err(Error::param("Bernstein order must be >= 1"));
                    }
                    let samples = (0..=order)
                        .map(|k| f.sample(2.0 * k as f64 / order as f64 - 1.0))
                        .collect::<Result<Vec<_>>>()?;
                    points
                        .par_iter()
                        .map(|&(x, fx)| (fx - de_casteljau(samples.clone(), 0.5 * (x + 1.0))).abs())
                        .reduce(|| 0.0, f64::max)
                }
            };
            Ok((order, err))
        })
        .collect()
}
