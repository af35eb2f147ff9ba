#![allow(dead_code)]

use chebgibbs::graph::{build_graph, Graph};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random spanning tree plus Erdős–Rényi edges with probability `p`.
pub fn connected_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    build_graph(n, &edges).unwrap().0
}

/// Erdős–Rényi graph that may be disconnected or contain isolated nodes.
pub fn any_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    build_graph(n, &edges).unwrap().0
}

pub fn gaussian(shape: (usize, usize), rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || StandardNormal.sample(rng))
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
