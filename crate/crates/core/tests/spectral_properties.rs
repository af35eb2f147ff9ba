mod common;

use chebgibbs::filters::{apply_poly_filter, scalar_response, Basis, Damping, FilterSpec};
use chebgibbs::graph::{renormalized_adjacency, scaled_laplacian, sym_norm_laplacian};
use chebgibbs::spectral::{
    apply_filter_spectral, eigendecompose, fit_vandermonde, graph_fourier, inverse_graph_fourier, DEFAULT_ORACLE_CAP,
};
use common::{connected_graph, gaussian, max_abs_diff};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a = gaussian((n, n), rng);
    (&a + &a.t()) * 0.5
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn eigendecomposition_reconstructs(n in 1usize..=64, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_symmetric(n, &mut rng);
        let es = eigendecompose(&m.view(), DEFAULT_ORACLE_CAP).unwrap();
        let err = (&es.reconstruct() - &m).iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-8, "reconstruction error {}", err);
        prop_assert!(es.values.windows(2).into_iter().all(|w| w[0] <= w[1]));
    }

    #[test]
    fn fourier_transform_preserves_norm(n in 1usize..=48, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let es = eigendecompose(&random_symmetric(n, &mut rng).view(), DEFAULT_ORACLE_CAP).unwrap();
        let x: Array1<f64> = gaussian((n, 1), &mut rng).column(0).to_owned();
        let xhat = graph_fourier(&es, &x.view()).unwrap();
        let norm = |v: &Array1<f64>| v.dot(v).sqrt();
        prop_assert!((norm(&xhat) - norm(&x)).abs() <= 1e-10 * norm(&x).max(1.0));
        let back = inverse_graph_fourier(&es, &xhat.view()).unwrap();
        prop_assert!((&back - &x).iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn vandermonde_interpolates_exactly(n in 1usize..=8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Well-separated nodes keep the system well conditioned.
        let nodes: Vec<f64> = (0..n).map(|j| -1.0 + 2.0 * (j as f64 + rng.random_range(0.2..0.8)) / n as f64).collect();
        let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let zeta = fit_vandermonde(&nodes, &targets, n - 1).unwrap();
        for (x, t) in nodes.iter().zip(&targets) {
            let p: f64 = zeta.iter().enumerate().map(|(k, z)| z * x.powi(k as i32)).sum();
            prop_assert!((p - t).abs() <= 1e-6);
        }
    }
}

#[test]
fn spatial_filters_match_spectral_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let n = rng.random_range(4..=64);
        let g = connected_graph(n, rng.random_range(0.05..0.3), &mut rng);
        let s = if trial % 2 == 0 {
            renormalized_adjacency(&g, 1.0).unwrap()
        } else {
            scaled_laplacian(&sym_norm_laplacian(&g), 2.0).unwrap()
        };
        let es = eigendecompose(&s.to_dense().view(), DEFAULT_ORACLE_CAP).unwrap();
        let x = gaussian((n, 2), &mut rng);
        for j in 0..20 {
            let order = rng.random_range(0..=16);
            let coeffs: Vec<f64> = (0..=order).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (basis, damping) = match j % 5 {
                0 => (Basis::Chebyshev, Damping::None),
                1 => (Basis::Chebyshev, Damping::Jackson),
                2 => (Basis::Chebyshev, Damping::Lanczos { m: (1 + j % 3) as u32 }),
                3 => (Basis::Monomial, Damping::None),
                _ => (Basis::Bernstein, Damping::None),
            };
            let spec = FilterSpec::new(basis, damping, coeffs).unwrap();
            let spatial = apply_poly_filter(&spec, &s, &x.view()).unwrap();
            let spectral =
                apply_filter_spectral(&es, |l| scalar_response(&spec, l.clamp(-1.0, 1.0)).unwrap(), &x.view())
                    .unwrap();
            worst = worst.max(max_abs_diff(&spatial, &spectral));
        }
    }
    assert!(worst <= 1e-8, "max deviation {worst:e}");
}
