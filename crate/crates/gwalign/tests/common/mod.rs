//! Deterministic fixtures shared by the integration suites.
//!
//! Every generator takes an explicit seed so a failure reproduces exactly;
//! nothing here reads ambient randomness.

#![allow(dead_code)]

use gwalign::{EmbeddingMatrix, SimilarityMatrix, WeightVector};
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Random unit columns labeled `<prefix>000, <prefix>001, ...`.
pub fn toy_language(seed: u64, prefix: &str, dim: usize, n: usize) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Array2::zeros((dim, n));
    for mut col in m.columns_mut() {
        loop {
            for v in col.iter_mut() {
                *v = rng.random_range(-1.0f64..1.0);
            }
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-3 {
                col.mapv_inplace(|v| v / norm);
                break;
            }
        }
    }
    let vocab = (0..n).map(|i| format!("{prefix}{i:03}")).collect();
    EmbeddingMatrix::new(vocab, m).unwrap()
}

/// Random orthogonal matrix via QR, sign convention fixed so the result
/// is a deterministic function of the seed.
pub fn random_orthogonal(seed: u64, d: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = nalgebra::DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0f64..1.0));
    let (mut q, r) = raw.qr().unpack();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Array2::from_shape_fn((d, d), |(i, j)| q[(i, j)])
}

/// `emb` rotated by a random orthogonal Q (columns become `Q^T x_i`) and
/// relabeled with `prefix`. Returns the copy and Q, which is then the map
/// carrying the copy back onto `emb`.
pub fn rotated_copy(emb: &EmbeddingMatrix, seed: u64, prefix: &str) -> (EmbeddingMatrix, Array2<f64>) {
    let q = random_orthogonal(seed, emb.dim());
    let rotated = q.t().dot(&emb.vectors());
    let vocab = (0..emb.len()).map(|i| format!("{prefix}{i:03}")).collect();
    (EmbeddingMatrix::new(vocab, rotated).unwrap(), q)
}

/// Cosine-similarity matrix of a fresh toy language with uniform weights.
pub fn random_similarity(seed: u64, dim: usize, n: usize) -> SimilarityMatrix {
    let emb = toy_language(seed, "w", dim, n);
    SimilarityMatrix::cosine_similarity(&emb, WeightVector::uniform(n).unwrap()).unwrap()
}

/// A random strictly feasible coupling and its exact marginals.
pub fn random_coupling_raw(rng: &mut impl Rng, n: usize, m: usize) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let raw = Array2::from_shape_fn((n, m), |_| rng.random_range(0.05f64..1.0));
    let gamma = &raw / raw.sum();
    let p = Array1::from_iter(gamma.rows().into_iter().map(|r| r.sum()));
    let q = Array1::from_iter(gamma.columns().into_iter().map(|c| c.sum()));
    (gamma, p, q)
}

/// Writes `emb` in fastText text format (`<count> <dim>` header).
pub fn write_vec_file(path: &std::path::Path, emb: &EmbeddingMatrix) {
    emb.write_text_file(path, true).unwrap();
}
