//! Polynomial graph filters.
//!
//! A filter is `Σ_k w_k g_k P_k(S) X` for a basis `P_k`, a coefficient vector
//! `w` and (for the Chebyshev basis only) Gibbs damping factors `g_k`. The
//! Chebyshev terms are produced by the three-term recurrence applied to `X`
//! directly, so no `n × n` matrix polynomial is ever formed and at most three
//! term matrices are alive at once.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Chebyshev,
    Monomial,
    Bernstein,
}

/// Gibbs damping applied to Chebyshev terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Damping {
    #[default]
    None,
    Jackson,
    /// `sinc(k / (K + 1))^m`.
    Lanczos { m: u32 },
}

impl Damping {
    pub fn name(&self) -> &'static str {
        match self {
            Damping::None => "none",
            Damping::Jackson => "jackson",
            Damping::Lanczos { .. } => "lanczos",
        }
    }

    /// Parses `none`, `jackson`, `lanczos` (m = 1) or `lanczos:<m>`.
    pub fn parse_with_m(s: &str, default_m: u32) -> Result<Self> {
        let (kind, m) = match s.split_once(':') {
            Some((k, m)) => (k, Some(m)),
            None => (s, None),
        };
        match kind.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Damping::None),
            "jackson" => Ok(Damping::Jackson),
            "lanczos" => {
                let m = match m {
                    Some(m) => m.trim().parse().map_err(|_| Error::param(format!("bad Lanczos exponent {m:?}")))?,
                    None => default_m,
                };
                if m == 0 {
                    return Err(Error::param("Lanczos exponent m must be >= 1"));
                }
                Ok(Damping::Lanczos { m })
            }
            other => Err(Error::param(format!("unknown damping {other:?} (expected none, jackson, lanczos)"))),
        }
    }
}

impl FromStr for Damping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Damping::parse_with_m(s, 1)
    }
}

impl Serialize for Damping {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Damping {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Damping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Damping::Lanczos { m } => write!(f, "lanczos:{m}"),
            other => f.write_str(other.name()),
        }
    }
}

/// Jackson damping factor `g_{k,K}`.
pub fn jackson_factor(k: usize, order: usize) -> Result<f64> {
    if k > order {
        return Err(Error::param(format!("damping index {k} exceeds order {order}")));
    }
    if k == 0 {
        return Ok(1.0);
    }
    let n = (order + 2) as f64;
    let a = PI / n;
    let kf = k as f64;
    Ok(((n - kf) * a.sin() * (kf * a).cos() + a.cos() * (kf * a).sin()) / (n * a.sin()))
}

/// Lanczos damping factor `sinc(k / (K + 1))^m` with `sinc(0) = 1`.
pub fn lanczos_factor(k: usize, order: usize, m: u32) -> Result<f64> {
    if k > order {
        return Err(Error::param(format!("damping index {k} exceeds order {order}")));
    }
    if m == 0 {
        return Err(Error::param("Lanczos exponent m must be >= 1"));
    }
    if k == 0 {
        return Ok(1.0);
    }
    let x = PI * k as f64 / (order + 1) as f64;
    Ok((x.sin() / x).powi(m as i32))
}

/// `(g_{0,K}, …, g_{K,K})` for the given damping kind.
pub fn damping_vector(damping: Damping, order: usize) -> Vec<f64> {
    (0..=order)
        .map(|k| match damping {
            Damping::None => 1.0,
            Damping::Jackson => jackson_factor(k, order).expect("k <= order"),
            Damping::Lanczos { m } => lanczos_factor(k, order, m.max(1)).expect("k <= order"),
        })
        .collect()
}

/// Everything needed to apply one polynomial graph filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FilterSpecWire", into = "FilterSpecWire")]
pub struct FilterSpec {
    pub basis: Basis,
    pub order: usize,
    pub damping: Damping,
    pub coefficients: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FilterSpecWire {
    basis: Basis,
    #[serde(rename = "K")]
    order: usize,
    damping: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<u32>,
    coefficients: Vec<f64>,
}

impl TryFrom<FilterSpecWire> for FilterSpec {
    type Error = Error;

    fn try_from(w: FilterSpecWire) -> Result<Self> {
        let damping = Damping::parse_with_m(&w.damping, w.m.unwrap_or(1))?;
        let spec = FilterSpec { basis: w.basis, order: w.order, damping, coefficients: w.coefficients };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<FilterSpec> for FilterSpecWire {
    fn from(s: FilterSpec) -> Self {
        let m = match s.damping {
            Damping::Lanczos { m } => Some(m),
            _ => None,
        };
        FilterSpecWire { basis: s.basis, order: s.order, damping: s.damping.name().to_string(), m, coefficients: s.coefficients }
    }
}

impl FilterSpec {
    pub fn new(basis: Basis, damping: Damping, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidFilter("at least one coefficient is required".into()));
        }
        let spec = FilterSpec { basis, order: coefficients.len() - 1, damping, coefficients };
        spec.validate()?;
        Ok(spec)
    }

    pub fn chebyshev(damping: Damping, coefficients: Vec<f64>) -> Result<Self> {
        Self::new(Basis::Chebyshev, damping, coefficients)
    }

    pub fn validate(&self) -> Result<()> {
        if self.coefficients.len() != self.order + 1 {
            return Err(Error::InvalidFilter(format!(
                "order {} needs {} coefficients, got {}",
                self.order,
                self.order + 1,
                self.coefficients.len()
            )));
        }
        if let Damping::Lanczos { m } = self.damping {
            if m < 1 {
                return Err(Error::InvalidFilter("Lanczos exponent m must be >= 1".into()));
            }
        }
        if self.basis != Basis::Chebyshev && self.damping != Damping::None {
            return Err(Error::InvalidFilter(format!("{} damping only applies to the Chebyshev basis", self.damping)));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidFilter("coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn damping_factors(&self) -> Vec<f64> {
        damping_vector(self.damping, self.order)
    }

    /// `w_k g_k` for every order.
    pub fn effective_coefficients(&self) -> Vec<f64> {
        self.coefficients.iter().zip(self.damping_factors()).map(|(w, g)| w * g).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("filter spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Counts live recurrence term buffers on the current thread.
pub mod term_probe {
    use std::cell::Cell;

    thread_local! {
        static LIVE: Cell<usize> = const { Cell::new(0) };
        static PEAK: Cell<usize> = const { Cell::new(0) };
    }

    pub(crate) fn acquire() {
        LIVE.with(|l| {
            let v = l.get() + 1;
            l.set(v);
            PEAK.with(|p| p.set(p.get().max(v)));
        });
    }

    pub(crate) fn release() {
        LIVE.with(|l| l.set(l.get() - 1));
    }

    /// Resets the peak to the current live count.
    pub fn reset() {
        let live = LIVE.with(|l| l.get());
        PEAK.with(|p| p.set(live));
    }

    pub fn peak() -> usize {
        PEAK.with(|p| p.get())
    }

    pub fn live() -> usize {
        LIVE.with(|l| l.get())
    }
}

/// Dense term matrix registered with [`term_probe`].
struct TermBuf(Array2<f64>);

impl TermBuf {
    fn new(m: Array2<f64>) -> Self {
        term_probe::acquire();
        TermBuf(m)
    }
}

impl Drop for TermBuf {
    fn drop(&mut self) {
        term_probe::release();
    }
}

fn check_operand(s: &SparseOperator, x: &ArrayView2<f64>) -> Result<()> {
    if x.nrows() != s.dim() {
        return Err(Error::shape(format!("operator is {0}x{0}, features have {1} rows", s.dim(), x.nrows())));
    }
    Ok(())
}

/// Streams `T_k(S) X` for `k = 0..=order` into `visit`, keeping only the two
/// previous terms plus one output buffer.
pub fn for_each_cheb_term<F>(s: &SparseOperator, x: &ArrayView2<f64>, order: usize, mut visit: F) -> Result<()>
where
    F: FnMut(usize, &Array2<f64>),
{
    check_operand(s, x)?;
    let mut prev = TermBuf::new(x.to_owned());
    visit(0, &prev.0);
    if order == 0 {
        return Ok(());
    }
    let mut cur = TermBuf::new(s.matmul(x)?);
    visit(1, &cur.0);
    if order == 1 {
        return Ok(());
    }
    let mut next = TermBuf::new(Array2::zeros(x.raw_dim()));
    for k in 2..=order {
        s.recurrence_step(2.0, &cur.0.view(), &prev.0.view(), &mut next.0)?;
        visit(k, &next.0);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(())
}

/// All Chebyshev terms `T_0(S) X, …, T_K(S) X`. Materializes `K + 1`
/// matrices; filters should use [`for_each_cheb_term`] instead.
pub fn cheb_terms(s: &SparseOperator, x: &ArrayView2<f64>, order: usize) -> Result<Vec<Array2<f64>>> {
    let mut out = Vec::with_capacity(order + 1);
    for_each_cheb_term(s, x, order, |_, t| out.push(t.clone()))?;
    Ok(out)
}

/// `Σ_k c_k T_k(S) X` for already-damped coefficients `c`.
pub fn cheb_combination(s: &SparseOperator, x: &ArrayView2<f64>, coeffs: &[f64]) -> Result<Array2<f64>> {
    let order = coeffs.len().saturating_sub(1);
    let mut acc = Array2::zeros(x.raw_dim());
    for_each_cheb_term(s, x, order, |k, t| acc.scaled_add(coeffs[k], t))?;
    Ok(acc)
}

/// Applies `spec` to the columns of `x` using operator `s`.
pub fn apply_poly_filter(spec: &FilterSpec, s: &SparseOperator, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
    spec.validate()?;
    check_operand(s, x)?;
    match spec.basis {
        Basis::Chebyshev => cheb_combination(s, x, &spec.effective_coefficients()),
        Basis::Monomial => {
            let mut acc = x.to_owned() * spec.coefficients[0];
            let mut power = TermBuf::new(x.to_owned());
            let mut scratch = TermBuf::new(Array2::zeros(x.raw_dim()));
            for &w in &spec.coefficients[1..] {
                s.matmul_into(&power.0.view(), &mut scratch.0)?;
                std::mem::swap(&mut power, &mut scratch);
                acc.scaled_add(w, &power.0);
            }
            Ok(acc)
        }
        Basis::Bernstein => {
            let order = spec.order;
            let up = s.affine(0.5, 0.5);
            let down = s.affine(-0.5, 0.5);
            let mut acc = Array2::zeros(x.raw_dim());
            let mut cur = TermBuf::new(Array2::zeros(x.raw_dim()));
            let mut scratch = TermBuf::new(Array2::zeros(x.raw_dim()));
            for (k, &w) in spec.coefficients.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                cur.0.assign(x);
                for step in 0..order {
                    let op = if step < order - k { &down } else { &up };
                    op.matmul_into(&cur.0.view(), &mut scratch.0)?;
                    std::mem::swap(&mut cur, &mut scratch);
                }
                acc.scaled_add(w * binomial(order, k), &cur.0);
            }
            Ok(acc)
        }
    }
}

/// `C(n, k)` as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `T_0(x), …, T_K(x)` by the scalar recurrence.
pub fn chebyshev_values(x: f64, order: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(order + 1);
    t.push(1.0);
    if order >= 1 {
        t.push(x);
    }
    for k in 2..=order {
        t.push(2.0 * x * t[k - 1] - t[k - 2]);
    }
    t
}

/// Bernstein basis polynomial `C(K,k) t^k (1-t)^{K-k}`.
pub fn bernstein_basis(k: usize, order: usize, t: f64) -> f64 {
    binomial(order, k) * t.powi(k as i32) * (1.0 - t).powi((order - k) as i32)
}

/// Frequency response of `spec` at a single eigenvalue.
pub fn scalar_response(spec: &FilterSpec, lambda: f64) -> Result<f64> {
    spec.validate()?;
    let needs_unit_interval = matches!(spec.basis, Basis::Chebyshev | Basis::Bernstein);
    if needs_unit_interval && !(lambda.abs() <= 1.0 + 1e-12) {
        return Err(Error::Domain(format!("eigenvalue {lambda} outside [-1, 1]")));
    }
    Ok(match spec.basis {
        Basis::Chebyshev => {
            let lambda = lambda.clamp(-1.0, 1.0);
            spec.effective_coefficients().iter().zip(chebyshev_values(lambda, spec.order)).map(|(c, t)| c * t).sum()
        }
        Basis::Monomial => spec.coefficients.iter().rev().fold(0.0, |acc, &c| acc * lambda + c),
        Basis::Bernstein => {
            let t = ((1.0 + lambda) / 2.0).clamp(0.0, 1.0);
            spec.coefficients.iter().enumerate().map(|(k, &w)| w * bernstein_basis(k, spec.order, t)).sum()
        }
    })
}

/// Frobenius norms `‖c_k T_k(S) X‖_F` of the individual filter terms.
pub fn term_norms(s: &SparseOperator, x: &ArrayView2<f64>, coeffs: &[f64]) -> Result<Vec<f64>> {
    let order = coeffs.len().saturating_sub(1);
    let mut norms = Vec::with_capacity(coeffs.len());
    for_each_cheb_term(s, x, order, |k, t| {
        let mut sq = 0.0;
        Zip::from(t).for_each(|v| sq += v * v);
        norms.push(coeffs[k].abs() * sq.sqrt());
    })?;
    Ok(norms)
}
