//! Undirected graphs, graph shift operators and graph-level diagnostics.
//!
//! All normalized operators follow the Moore–Penrose convention for isolated
//! nodes: the inverse square-root degree of a degree-0 node is taken as 0.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

/// Simple undirected graph. Each unordered edge is stored once as `(u, v)` with `u < v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

/// What [`build_graph`] discarded while normalizing the edge list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildReport {
    pub duplicates: usize,
    pub self_loops: usize,
}

/// Builds a graph from an arbitrary list of pairs, dropping self-loops and
/// repeated unordered pairs.
pub fn build_graph(n: usize, edge_list: &[(usize, usize)]) -> Result<(Graph, BuildReport)> {
    let mut report = BuildReport::default();
    let mut set = BTreeSet::new();
    for &(u, v) in edge_list {
        if u >= n || v >= n {
            return Err(Error::IndexOutOfRange { u, v, n });
        }
        if u == v {
            report.self_loops += 1;
            continue;
        }
        if !set.insert((u.min(v), u.max(v))) {
            report.duplicates += 1;
        }
    }
    if report.duplicates + report.self_loops > 0 {
        log::warn!("dropped {} duplicate edges and {} self-loops", report.duplicates, report.self_loops);
    }
    let edges: Vec<_> = set.into_iter().collect();
    let mut neighbors = vec![Vec::new(); n];
    for &(u, v) in &edges {
        neighbors[u].push(v);
        neighbors[v].push(u);
    }
    neighbors.iter_mut().for_each(|nb| nb.sort_unstable());
    Ok((Graph { n, edges, neighbors }, report))
}

impl Graph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.neighbors[u].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    /// Parses a whitespace-separated edge list, one `u v` pair per line.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse_edge_list(text: &str, origin: &Path) -> Result<Vec<(usize, usize)>> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut next = |what: &str| -> Result<usize> {
                let tok = it.next().ok_or_else(|| Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    msg: format!("missing {what} endpoint"),
                })?;
                tok.parse().map_err(|_| Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    msg: format!("non-numeric node index {tok:?}"),
                })
            };
            let u = next("first")?;
            let v = next("second")?;
            pairs.push((u, v));
        }
        Ok(pairs)
    }

    pub fn read_edge_file(path: &Path) -> Result<Vec<(usize, usize)>> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_edge_list(&text, path)
    }

    pub fn to_edge_list_string(&self) -> String {
        self.edges.iter().map(|(u, v)| format!("{u} {v}\n")).collect()
    }
}

fn inv_sqrt_or_zero(d: f64) -> f64 {
    if d > 0.0 {
        1.0 / d.sqrt()
    } else {
        0.0
    }
}

/// `D^{-1/2} A D^{-1/2}`.
pub fn sym_norm_adjacency(g: &Graph) -> SparseOperator {
    let scale: Vec<f64> = g.degrees().into_iter().map(|d| inv_sqrt_or_zero(d as f64)).collect();
    let mut triplets = Vec::with_capacity(2 * g.num_edges());
    for &(u, v) in g.edges() {
        let w = scale[u] * scale[v];
        triplets.push((u, v, w));
        triplets.push((v, u, w));
    }
    SparseOperator::from_triplets(g.n(), &triplets, true).expect("edges validated at construction")
}

/// `I - D^{-1/2} A D^{-1/2}`.
pub fn sym_norm_laplacian(g: &Graph) -> SparseOperator {
    sym_norm_adjacency(g).affine(-1.0, 1.0)
}

/// Renormalized adjacency `D̃^{-1/2} (A + ηI) D̃^{-1/2}` with `D̃ = D + ηI`.
pub fn renormalized_adjacency(g: &Graph, eta: f64) -> Result<SparseOperator> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::param(format!("self-loop weight eta must be >= 0, got {eta}")));
    }
    let scale: Vec<f64> = g.degrees().into_iter().map(|d| inv_sqrt_or_zero(d as f64 + eta)).collect();
    let mut triplets = Vec::with_capacity(2 * g.num_edges() + g.n());
    for &(u, v) in g.edges() {
        let w = scale[u] * scale[v];
        triplets.push((u, v, w));
        triplets.push((v, u, w));
    }
    for (u, s) in scale.iter().enumerate() {
        triplets.push((u, u, eta * s * s));
    }
    Ok(SparseOperator::from_triplets(g.n(), &triplets, true).expect("edges validated at construction"))
}

/// `(2 / λ_max) L - I`, mapping the Laplacian spectrum into `[-1, 1]`.
pub fn scaled_laplacian(laplacian: &SparseOperator, lambda_max: f64) -> Result<SparseOperator> {
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(Error::param(format!("lambda_max must be positive, got {lambda_max}")));
    }
    Ok(laplacian.affine(2.0 / lambda_max, -1.0))
}

/// How λ_max is chosen for the scaled Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMaxMode {
    #[default]
    Power,
    Fixed2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaMaxEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub const POWER_TOL: f64 = 1e-6;
pub const POWER_MAX_ITER: usize = 1000;

/// Largest eigenvalue of a symmetric positive semidefinite operator by power
/// iteration on the Rayleigh quotient, clamped to `(0, 2]`.
pub fn estimate_lambda_max(laplacian: &SparseOperator) -> LambdaMaxEstimate {
    let n = laplacian.dim();
    if n == 0 {
        return LambdaMaxEstimate { value: 2.0, converged: false, iterations: 0 };
    }
    // fixed, non-symmetric start vector so it is never orthogonal to a
    // structured eigenvector
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i as f64 + 1.0) * 0.754_877_666).fract()).collect();
    normalize(&mut x);
    let mut rayleigh = 0.0;
    for it in 1..=POWER_MAX_ITER {
        let y = laplacian.matvec(&x).expect("square operator");
        let next: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return LambdaMaxEstimate { value: f64::MIN_POSITIVE, converged: true, iterations: it };
        }
        let delta = (next - rayleigh).abs();
        rayleigh = next;
        x = y.into_iter().map(|v| v / norm).collect();
        if it > 1 && delta <= POWER_TOL * rayleigh.abs() {
            return LambdaMaxEstimate { value: clamp_lambda(rayleigh), converged: true, iterations: it };
        }
    }
    log::warn!("power iteration did not converge in {POWER_MAX_ITER} iterations");
    LambdaMaxEstimate { value: clamp_lambda(rayleigh), converged: false, iterations: POWER_MAX_ITER }
}

fn clamp_lambda(v: f64) -> f64 {
    v.clamp(f64::MIN_POSITIVE, 2.0)
}

fn normalize(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= norm);
}

pub fn lambda_max_for(laplacian: &SparseOperator, mode: LambdaMaxMode) -> f64 {
    match mode {
        LambdaMaxMode::Power => estimate_lambda_max(laplacian).value,
        LambdaMaxMode::Fixed2 => 2.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomophilyReport {
    pub h: f64,
    /// Fraction of same-label neighbors per node; `None` for nodes that were
    /// not evaluated (isolated, or outside the mask).
    pub per_node: Vec<Option<f64>>,
    pub n_isolated: usize,
}

/// Node homophily index: mean over nodes of the fraction of neighbors sharing
/// the node's label.
///
/// With a mask only the masked nodes' labels are treated as known: a node is
/// evaluated when it is masked, and only its masked neighbors count.
pub fn node_homophily(g: &Graph, labels: &[usize], mask: Option<&[usize]>) -> Result<HomophilyReport> {
    if labels.len() != g.n() {
        return Err(Error::shape(format!("{} labels for {} nodes", labels.len(), g.n())));
    }
    let known: Vec<bool> = match mask {
        None => vec![true; g.n()],
        Some(idx) => {
            let mut k = vec![false; g.n()];
            for &i in idx {
                if i >= g.n() {
                    return Err(Error::param(format!("mask index {i} out of range")));
                }
                k[i] = true;
            }
            k
        }
    };
    let mut per_node = vec![None; g.n()];
    let mut n_isolated = 0;
    let mut total = 0.0;
    let mut count = 0usize;
    for u in 0..g.n() {
        if !known[u] {
            continue;
        }
        let (mut same, mut deg) = (0usize, 0usize);
        for &v in g.neighbors(u) {
            if known[v] {
                deg += 1;
                same += usize::from(labels[v] == labels[u]);
            }
        }
        if deg == 0 {
            n_isolated += 1;
            continue;
        }
        let frac = same as f64 / deg as f64;
        per_node[u] = Some(frac);
        total += frac;
        count += 1;
    }
    if count == 0 {
        return Err(Error::HomophilyUndefined);
    }
    Ok(HomophilyReport { h: total / count as f64, per_node, n_isolated })
}

/// Resolution of `h == threshold` when choosing the shift operator's sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TieBreak {
    #[default]
    Homophilous,
    Heterophilous,
}

pub const DEFAULT_HOMOPHILY_THRESHOLD: f64 = 0.5;

/// `+1` for homophilous graphs, `-1` otherwise.
pub fn gso_sign(h: f64, threshold: f64, tie: TieBreak) -> f64 {
    if h > threshold || (h == threshold && tie == TieBreak::Homophilous) {
        1.0
    } else {
        -1.0
    }
}

/// Renormalized adjacency (η = 1), negated for heterophilous graphs.
pub fn select_gso(g: &Graph, h: f64, threshold: f64, tie: TieBreak) -> (SparseOperator, f64) {
    let op = renormalized_adjacency(g, 1.0).expect("eta = 1 is valid");
    let sign = gso_sign(h, threshold, tie);
    if sign > 0.0 {
        (op, sign)
    } else {
        (op.neg(), sign)
    }
}

/// `λ_j - λ_{j-1}` for an ascending spectrum.
pub fn spectral_gap(eigenvalues: &[f64], j: usize) -> Result<f64> {
    if j == 0 || j >= eigenvalues.len() {
        return Err(Error::param(format!("gap index must be in 1..{}, got {j}", eigenvalues.len())));
    }
    if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("eigenvalues must be sorted ascending"));
    }
    Ok(eigenvalues[j] - eigenvalues[j - 1])
}

/// Degree-weighted distance between rows `u` and `v` of a dense filter
/// matrix, `sqrt(Σ_w (H(u,w) - H(v,w))² / π(w))` with `π(w) = d_w / Σ d`.
/// Isolated nodes carry no stationary mass and are skipped.
pub fn diffusion_distance(h: &ArrayView2<f64>, g: &Graph, u: usize, v: usize) -> Result<f64> {
    if g.num_edges() == 0 {
        return Err(Error::StationaryDensityUndefined);
    }
    if h.dim() != (g.n(), g.n()) {
        return Err(Error::shape(format!("filter matrix {:?} for graph with {} nodes", h.dim(), g.n())));
    }
    if u >= g.n() || v >= g.n() {
        return Err(Error::param(format!("node pair ({u}, {v}) out of range")));
    }
    let total = 2.0 * g.num_edges() as f64;
    let sum: f64 = (0..g.n())
        .filter(|&w| g.degree(w) > 0)
        .map(|w| {
            let pi = g.degree(w) as f64 / total;
            let d = h[[u, w]] - h[[v, w]];
            d * d / pi
        })
        .sum();
    Ok(sum.sqrt())
}
