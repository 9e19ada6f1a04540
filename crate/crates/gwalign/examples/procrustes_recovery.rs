//! Orthogonal Procrustes: the closed-form map between paired point sets.
//!
//! Given paired columns X (source) and Y (target), the orthogonal matrix
//! minimizing `sum_i |x_i - P y_i|^2` is `P = U V^T` where
//! `U S V^T = svd(X Y^T)` (Schonemann 1966). This example plants a random
//! orthogonal map, recovers it from the pairs, and then does the same
//! *without* pairs using a coupling and the barycentric variant
//! (`svd(X G Y^T)`), which is how the alignment pipeline extends a
//! Gromov-Wasserstein coupling to whole vocabularies.
//!
//! Run with: cargo run --example procrustes_recovery

use gwalign::mapping::{barycentric_procrustes, procrustes, read_map, write_map};
use gwalign::sinkhorn::Coupling;
use gwalign::{EmbeddingMatrix, WeightVector};
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0f64..1.0))
}

/// Random d x d orthogonal matrix via QR with the sign convention fixed.
fn random_orthogonal(rng: &mut impl Rng, d: usize) -> Array2<f64> {
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

fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn main() -> Result<(), gwalign::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (d, k) = (8, 40);

    // Plant Q and build the paired sets: y_i = Q^T x_i, so the map that
    // carries the target back onto the source is exactly Q.
    let x = random_matrix(&mut rng, d, k);
    let q = random_orthogonal(&mut rng, d);
    let y = q.t().dot(&x);

    let map = procrustes(x.view(), y.view())?;
    let recovery_error = frobenius(&(&map.matrix().to_owned() - &q));
    println!("planted d={d} orthogonal map, {k} paired columns");
    println!("|P - Q|_F        = {recovery_error:.3e}");

    let residual = {
        let mapped = map.matrix().dot(&y);
        (&x - &mapped).iter().map(|v| v.abs()).fold(0.0f64, f64::max)
    };
    println!("max |x_i - P y_i| = {residual:.3e}");
    assert!(recovery_error <= 1e-8);

    // Barycentric variant with the uniform diagonal coupling G = (1/k) I:
    // X G Y^T is then a positive multiple of X Y^T, so both solves share
    // one SVD problem and the maps agree exactly.
    let uniform = Array2::from_diag(&Array1::from_elem(k, 1.0 / k as f64));
    let coupling = Coupling::new(uniform, WeightVector::uniform(k)?, WeightVector::uniform(k)?)?;
    let bary = barycentric_procrustes(x.view(), y.view(), &coupling)?;
    let disagreement = map
        .matrix()
        .iter()
        .zip(bary.matrix().iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("barycentric (G = I/k) vs paired: max entry diff = {disagreement:.1e}");
    assert_eq!(disagreement, 0.0);

    // Degenerate inputs are solved but flagged: columns confined to one
    // direction leave the rotation around it unconstrained.
    let line = {
        let dir = random_matrix(&mut rng, d, 1);
        let coeff = random_matrix(&mut rng, 1, k);
        dir.dot(&coeff)
    };
    let degenerate = procrustes(line.view(), line.view())?;
    println!("rank-1 input: is_degenerate = {}", degenerate.is_degenerate());
    assert!(degenerate.is_degenerate());

    // Maps round-trip through the on-disk format bit-exactly.
    let dir = tempfile::tempdir()?;
    let (json, bin) = write_map(&map, dir.path().join("map"))?;
    let reread = read_map(dir.path().join("map"))?;
    let roundtrip_ok = map.matrix() == reread.matrix();
    println!(
        "round-trip through {} + {}: bit-exact = {roundtrip_ok}",
        json.file_name().unwrap().to_string_lossy(),
        bin.file_name().unwrap().to_string_lossy()
    );
    assert!(roundtrip_ok);

    // Applying the map to an embedding preserves its geometry.
    let vocab = (0..k).map(|i| format!("w{i}")).collect();
    let emb = EmbeddingMatrix::new(vocab, y.clone())?;
    let mapped = map.apply(&emb)?;
    let first_norm_before = y.column(0).iter().map(|v| v * v).sum::<f64>().sqrt();
    let first_norm_after = mapped.vector(0).iter().map(|v| v * v).sum::<f64>().sqrt();
    println!("norm of first vector before/after mapping: {first_norm_before:.6} / {first_norm_after:.6}");
    Ok(())
}
