mod common;

use chebgibbs::graph::{
    diffusion_distance, estimate_lambda_max, node_homophily, renormalized_adjacency, scaled_laplacian, select_gso,
    sym_norm_adjacency, sym_norm_laplacian, TieBreak,
};
use chebgibbs::spectral::{eigendecompose, filter_matrix, DEFAULT_ORACLE_CAP};
use common::{any_graph, connected_graph};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spectrum(op: &chebgibbs::sparse::SparseOperator) -> Vec<f64> {
    eigendecompose(&op.to_dense().view(), DEFAULT_ORACLE_CAP).unwrap().values.to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn operator_spectra_lie_in_their_intervals(n in 2usize..=64, p in 0.02f64..0.5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = connected_graph(n, p, &mut rng);
        for l in spectrum(&sym_norm_laplacian(&g)) {
            prop_assert!((-1e-9..=2.0 + 1e-9).contains(&l));
        }
        for op in [sym_norm_adjacency(&g), renormalized_adjacency(&g, 1.0).unwrap()] {
            for l in spectrum(&op) {
                prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&l));
            }
        }
    }

    #[test]
    fn exact_lambda_max_scales_onto_unit_interval(n in 2usize..=48, p in 0.02f64..0.5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = connected_graph(n, p, &mut rng);
        let lap = sym_norm_laplacian(&g);
        let lmax = *spectrum(&lap).last().unwrap();
        let eigs = spectrum(&scaled_laplacian(&lap, lmax).unwrap());
        prop_assert!((eigs.last().unwrap() - 1.0).abs() <= 1e-9);
        prop_assert!(eigs[0] >= -1.0 - 1e-9);
    }

    #[test]
    fn power_iteration_bounds_the_spectrum(n in 2usize..=48, p in 0.05f64..0.5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = connected_graph(n, p, &mut rng);
        let lap = sym_norm_laplacian(&g);
        let est = estimate_lambda_max(&lap);
        let exact = *spectrum(&lap).last().unwrap();
        prop_assert!(est.value > 0.0 && est.value <= 2.0);
        // Rayleigh quotients never exceed the true maximum.
        prop_assert!(est.value <= exact + 1e-9);
    }

    #[test]
    fn selected_gso_spectrum_is_symmetric_interval(n in 2usize..=40, h in 0.0f64..=1.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = connected_graph(n, 0.2, &mut rng);
        let (op, sign) = select_gso(&g, h, 0.5, TieBreak::Homophilous);
        prop_assert_eq!(sign, if h >= 0.5 { 1.0 } else { -1.0 });
        for l in spectrum(&op) {
            prop_assert!(l.abs() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn homophily_in_unit_interval(n in 2usize..=60, classes in 1usize..=4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = any_graph(n, 0.15, &mut rng);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        match node_homophily(&g, &labels, None) {
            Ok(r) => {
                prop_assert!((0.0..=1.0).contains(&r.h));
                let pure = g.edges().iter().all(|&(u, v)| labels[u] == labels[v]);
                prop_assert_eq!(r.h == 1.0, pure);
            }
            Err(_) => prop_assert_eq!(g.num_edges(), 0),
        }
    }
}

#[test]
fn diffusion_distance_is_a_pseudometric() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..12 {
        let n = rng.random_range(3..=16);
        let g = if trial % 3 == 0 { any_graph(n, 0.3, &mut rng) } else { connected_graph(n, 0.2, &mut rng) };
        if g.num_edges() == 0 {
            continue;
        }
        let es = eigendecompose(&renormalized_adjacency(&g, 1.0).unwrap().to_dense().view(), 64).unwrap();
        let h = filter_matrix(&es, |l| l.powi(3) + 0.5 * l);
        let mut d = vec![vec![0.0; n]; n];
        for u in 0..n {
            for v in 0..n {
                d[u][v] = diffusion_distance(&h.view(), &g, u, v).unwrap();
            }
        }
        for u in 0..n {
            assert_eq!(d[u][u], 0.0);
            for v in 0..n {
                assert!(d[u][v] >= 0.0);
                assert!((d[u][v] - d[v][u]).abs() <= 1e-12);
                for w in 0..n {
                    assert!(d[u][w] <= d[u][v] + d[v][w] + 1e-12, "triangle violated at ({u},{v},{w})");
                }
            }
        }
    }
}
