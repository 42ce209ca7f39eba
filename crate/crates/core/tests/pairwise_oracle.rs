//! Dense-expansion oracle for the sparse pairwise layer: expand the input
//! into all d(d-1)/2 cross features, multiply by a dense masked weight
//! matrix, and compare against the layer's sparse forward pass.

use pairwise_cl::layers::{cross_count, PairwiseConnections};
use pairwise_cl::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Builds the dense [n_crosses x n_outputs] matrix equivalent of a sparse
/// wiring and computes logits as crosses(x) * M in f64.
fn oracle_forward(layer: &PairwiseConnections, x: &Tensor) -> Vec<f64> {
    let d = layer.input_width();
    let n_out = layer.n_outputs();
    let n_crosses = cross_count(d) as usize;
    let mut m = vec![0.0f64; n_crosses * n_out];
    let weights = layer.weights.theta.data();
    for (j, (a, b, o)) in layer.triples().enumerate() {
        // cross id of (a, b) with a < b in lexicographic order
        let (a, b) = (a as usize, b as usize);
        let cross = a * d - a * (a + 1) / 2 + (b - a - 1);
        m[cross * n_out + o as usize] += weights[j] as f64;
    }
    let batch = x.rows();
    let mut out = vec![0.0f64; batch * n_out];
    for r in 0..batch {
        let row = x.row(r);
        let mut cross = 0usize;
        for a in 0..d {
            for b in a + 1..d {
                let v = row[a] as f64 * row[b] as f64;
                if v != 0.0 {
                    for o in 0..n_out {
                        out[r * n_out + o] += v * m[cross * n_out + o];
                    }
                }
                cross += 1;
            }
        }
    }
    out
}

#[test]
fn sparse_forward_matches_dense_oracle_on_100_random_configs() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_101);
    for case in 0..100 {
        let d = rng.gen_range(3..=50usize);
        let n_out = rng.gen_range(2..=10usize);
        let space = cross_count(d) * n_out as u64;
        let budget = rng.gen_range(1..=space.min(300)) as usize;
        let layer_seed = rng.gen::<u64>();
        let mut layer = PairwiseConnections::sample(d, n_out, budget, layer_seed).unwrap();
        assert_eq!(layer.n_connections(), budget);

        let batch = rng.gen_range(1..=5usize);
        let mut xv: Vec<f32> = (0..batch * d).map(|_| rng.gen_range(-2.0f32..2.0)).collect();
        // sparsify like a k-WTA output would
        for v in xv.iter_mut() {
            if rng.gen_bool(0.6) {
                *v = 0.0;
            }
        }
        let x = Tensor::from_vec(&[batch, d], xv).unwrap();
        let got = layer.forward(&x, false).unwrap();
        let want = oracle_forward(&layer, &x);
        for (i, (&g, &w)) in got.data().iter().zip(&want).enumerate() {
            let rel = (g as f64 - w).abs() / w.abs().max(1e-3);
            assert!(
                rel < 1e-5,
                "case {case} (d={d}, n_out={n_out}, budget={budget}): \
                 logit {i} sparse {g} vs oracle {w} (rel {rel:.2e})"
            );
        }
    }
}

#[test]
fn oracle_agrees_on_fully_dense_input() {
    // no zeros at all: the active-set path must still cover every cross
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut layer = PairwiseConnections::sample(20, 5, 150, 3).unwrap();
    let xv: Vec<f32> = (0..3 * 20).map(|_| rng.gen_range(0.1f32..1.0)).collect();
    let x = Tensor::from_vec(&[3, 20], xv).unwrap();
    let got = layer.forward(&x, false).unwrap();
    let want = oracle_forward(&layer, &x);
    for (&g, &w) in got.data().iter().zip(&want) {
        assert!((g as f64 - w).abs() / w.abs().max(1e-3) < 1e-5);
    }
}
