mod common;

use chebgibbs::nn::{adam_step, softmax, softmax_cross_entropy, AdamState, Mlp, ParamTensor};
use common::gaussian;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_distributions(seed in any::<u64>(), scale in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = gaussian((7, 4), &mut rng) * scale;
        let p = softmax(&logits.view());
        for row in p.rows() {
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
        let labels = [0usize, 1, 2, 3, 0, 1, 2];
        let (loss, _) = softmax_cross_entropy(&logits.view(), &labels, &[0, 2, 4, 6]).unwrap();
        prop_assert!(loss >= 0.0);
    }
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mlp = Mlp::glorot(&[5, 6, 3], &mut rng).unwrap();
    let x = gaussian((9, 5), &mut rng);
    let labels = [0usize, 1, 2, 0, 1, 2, 0, 1, 2];
    let mask: Vec<usize> = (0..9).collect();
    let loss = |m: &Mlp| {
        let (out, _) = m.forward(&x.view(), 0.0, &mut ChaCha8Rng::seed_from_u64(0), false).unwrap();
        softmax_cross_entropy(&out.view(), &labels, &mask).unwrap().0
    };
    let (out, cache) = mlp.forward(&x.view(), 0.0, &mut rng, false).unwrap();
    let (_, g) = softmax_cross_entropy(&out.view(), &labels, &mask).unwrap();
    let (grads, _) = mlp.backward(&cache, &g.view()).unwrap();
    let h = 1e-5;
    for l in 0..2 {
        let (r, c) = mlp.layers[l].weight.dim();
        for i in 0..r {
            for j in 0..c {
                let mut p = mlp.clone();
                p.layers[l].weight[(i, j)] += h;
                let mut m = mlp.clone();
                m.layers[l].weight[(i, j)] -= h;
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                let an = grads[l].weight[(i, j)];
                assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-6));
            }
        }
        for j in 0..c {
            let mut p = mlp.clone();
            p.layers[l].bias[j] += h;
            let mut m = mlp.clone();
            m.layers[l].bias[j] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            let an = grads[l].bias[j];
            assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-6));
        }
    }
}

#[test]
fn dropout_preserves_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mlp = Mlp::glorot(&[4, 1], &mut rng).unwrap();
    let x = gaussian((3, 4), &mut rng) + 2.0;
    let (eval, _) = mlp.forward(&x.view(), 0.0, &mut rng, false).unwrap();
    let trials = 10_000;
    let mut mean = eval.clone() * 0.0;
    for _ in 0..trials {
        let (out, _) = mlp.forward(&x.view(), 0.5, &mut rng, true).unwrap();
        mean += &out;
    }
    mean /= trials as f64;
    for (m, e) in mean.iter().zip(eval.iter()) {
        assert!((m - e).abs() <= 0.02 * e.abs().max(0.1), "{m} vs {e}");
    }
}

#[test]
fn adam_with_zero_rate_is_identity() {
    let mut values = vec![0.3, -1.2, 4.0];
    let before = values.clone();
    let grad = vec![1.0, 2.0, -3.0];
    let mut state = AdamState::new(0.0);
    for _ in 0..5 {
        adam_step(&mut state, &mut [ParamTensor { values: &mut values, grad: &grad, decay: true }], 5e-4).unwrap();
    }
    assert_eq!(values, before);
}
