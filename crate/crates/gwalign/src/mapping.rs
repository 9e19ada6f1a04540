//! Orthogonal maps between embedding spaces.
//!
//! The Procrustes problem `min_P |X - P Y|_F` over orthogonal `P` has the
//! closed-form solution `P* = U V^T` with `U S V^T = svd(X Y^T)`
//! (Schonemann 1966). The barycentric variant replaces the paired product
//! with `X G Y^T` for a coupling `G`, which extends a vocabulary-subset
//! alignment to every word: once `P*` is known, any target vector `y` maps
//! into the source space as `P* y`.
//!
//! Maps carry a fixed direction: they send *target* vectors into the
//! *source* space.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingestion::EmbeddingMatrix;
use crate::sinkhorn::Coupling;
use crate::{Error, Result};

/// Direction tag carried by every serialized map.
pub const MAP_DIRECTION: &str = "target-to-source";

/// A `d x d` orthogonal matrix mapping target vectors into the source
/// space.
///
/// Invariants: `|P^T P - I|_inf <= 1e-8` and `|det P| = 1` within 1e-6
/// (rotations and reflections are both admissible).
#[derive(Debug, Clone)]
pub struct OrthogonalMap {
    matrix: Array2<f64>,
    degenerate: bool,
}

impl OrthogonalMap {
    /// Validates orthogonality and wraps the matrix. `degenerate` marks a
    /// map whose producing SVD was rank-deficient (optimum not unique).
    pub fn new(matrix: Array2<f64>, degenerate: bool) -> Result<Self> {
        let d = matrix.nrows();
        if d == 0 {
            return Err(Error::EmptyInput("orthogonal map of dimension zero".into()));
        }
        if matrix.ncols() != d {
            return Err(Error::Shape(format!(
                "orthogonal map must be square, got {}x{}",
                d,
                matrix.ncols()
            )));
        }
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::DegenerateMatrix(
                "orthogonal map contains a non-finite entry".into(),
            ));
        }
        let gram = matrix.t().dot(&matrix);
        let mut worst = 0.0f64;
        for ((i, j), v) in gram.indexed_iter() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
        if worst > 1e-8 {
            return Err(Error::DegenerateMatrix(format!(
                "matrix is not orthogonal: |P^T P - I|_inf = {worst:.3e}"
            )));
        }
        let det = to_na(matrix.view()).determinant();
        if (det.abs() - 1.0).abs() > 1e-6 {
            return Err(Error::DegenerateMatrix(format!(
                "matrix determinant {det} is not +/-1"
            )));
        }
        Ok(Self { matrix, degenerate })
    }

    /// The identity map in dimension `d`.
    pub fn identity(d: usize) -> Result<Self> {
        Self::new(Array2::eye(d), false)
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// True when the producing SVD had a near-zero singular value, so the
    /// optimum was not unique.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Maps every column of `emb` into the source space.
    pub fn apply(&self, emb: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        if emb.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "map dimension {} but embeddings have dimension {}",
                self.dim(),
                emb.dim()
            )));
        }
        let mapped = self.matrix.dot(&emb.vectors());
        EmbeddingMatrix::new(emb.vocab().to_vec(), mapped)
    }
}

/// Free-function form of [`OrthogonalMap::apply`].
pub fn apply_map(map: &OrthogonalMap, emb: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    map.apply(emb)
}

/// Solves `min_P |X - P Y|_F` over orthogonal `P` for paired columns.
pub fn procrustes(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<OrthogonalMap> {
    check_paired(x, y)?;
    orthogonal_from_product(x.dot(&y.t()))
}

/// Solves `min_P sum_ij G_ij |x_i - P y_j|^2` over orthogonal `P`, where
/// `G` couples the columns of `X` (sources) to the columns of `Y`
/// (targets). `X` may be `d x n` and `Y` `d x m` with an `n x m`
/// coupling; the solution is `U V^T` from the SVD of `X G Y^T`.
pub fn barycentric_procrustes(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    coupling: &Coupling,
) -> Result<OrthogonalMap> {
    if x.nrows() != y.nrows() {
        return Err(Error::Shape(format!(
            "embedding dimensions differ: {} vs {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.ncols() == 0 || y.ncols() == 0 || x.nrows() == 0 {
        return Err(Error::EmptyInput("barycentric inputs have no data".into()));
    }
    if coupling.nrows() != x.ncols() || coupling.ncols() != y.ncols() {
        return Err(Error::Shape(format!(
            "coupling is {}x{} but the matrices have {} and {} columns",
            coupling.nrows(),
            coupling.ncols(),
            x.ncols(),
            y.ncols()
        )));
    }
    // A uniform diagonal coupling reduces to the plain paired product
    // (the scalar factor does not change the SVD's U and V).
    let product = if is_uniform_diagonal(coupling.values()) {
        x.dot(&y.t())
    } else {
        x.dot(&coupling.values()).dot(&y.t())
    };
    orthogonal_from_product(product)
}

fn is_uniform_diagonal(g: ArrayView2<'_, f64>) -> bool {
    if g.nrows() != g.ncols() {
        return false;
    }
    let first = g[[0, 0]];
    g.indexed_iter()
        .all(|((i, j), &v)| if i == j { v == first } else { v == 0.0 })
}

fn check_paired(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::Shape(format!(
            "paired matrices differ in shape: {:?} vs {:?}",
            x.dim(),
            y.dim()
        )));
    }
    if x.ncols() == 0 || x.nrows() == 0 {
        return Err(Error::EmptyInput("paired matrices have no data".into()));
    }
    Ok(())
}

/// `U V^T` from the SVD of `product`, flagged degenerate when the smallest
/// singular value is below `1e-10` times the largest.
fn orthogonal_from_product(product: Array2<f64>) -> Result<OrthogonalMap> {
    if !product.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateMatrix(
            "cross-covariance contains a non-finite entry".into(),
        ));
    }
    let svd = to_na(product.view()).svd(true, true);
    let u = svd.u.expect("u requested from svd");
    let v_t = svd.v_t.expect("v_t requested from svd");
    let sv = &svd.singular_values;
    let max_sv = sv.iter().copied().fold(0.0f64, f64::max);
    let min_sv = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let degenerate = min_sv < 1e-10 * max_sv;
    let p = u * v_t;
    OrthogonalMap::new(from_na(&p), degenerate)
}

fn to_na(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

#[derive(Debug, Serialize, Deserialize)]
struct MapHeader {
    dim: usize,
    direction: String,
    checksum: String,
    #[serde(default)]
    degenerate: bool,
}

/// Writes `<base>.json` (header with a payload checksum) and `<base>.bin`
/// (row-major little-endian f64 payload). Returns the two paths.
pub fn write_map<P: AsRef<Path>>(map: &OrthogonalMap, base: P) -> Result<(PathBuf, PathBuf)> {
    let json_path = base.as_ref().with_extension("json");
    let bin_path = base.as_ref().with_extension("bin");

    let mut payload = Vec::with_capacity(map.dim() * map.dim() * 8);
    for row in map.matrix().rows() {
        for v in row.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = MapHeader {
        dim: map.dim(),
        direction: MAP_DIRECTION.to_string(),
        checksum: format!("sha256:{}", hex::encode(Sha256::digest(&payload))),
        degenerate: map.is_degenerate(),
    };

    let mut w = BufWriter::new(File::create(&bin_path)?);
    w.write_all(&payload)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(&json_path)?);
    serde_json::to_writer_pretty(&mut w, &header).map_err(|e| Error::Format {
        line: 1,
        detail: format!("cannot encode map header: {e}"),
    })?;
    writeln!(w)?;
    w.flush()?;
    Ok((json_path, bin_path))
}

/// Reads a map written by [`write_map`], verifying the payload checksum
/// and re-validating orthogonality.
pub fn read_map<P: AsRef<Path>>(base: P) -> Result<OrthogonalMap> {
    let json_path = base.as_ref().with_extension("json");
    let bin_path = base.as_ref().with_extension("bin");

    let header: MapHeader =
        serde_json::from_reader(BufReader::new(File::open(&json_path)?)).map_err(|e| {
            Error::Format {
                line: 1,
                detail: format!("cannot parse map header: {e}"),
            }
        })?;
    if header.direction != MAP_DIRECTION {
        return Err(Error::Format {
            line: 1,
            detail: format!(
                "map direction {:?} is not {MAP_DIRECTION:?}",
                header.direction
            ),
        });
    }

    let mut payload = Vec::new();
    BufReader::new(File::open(&bin_path)?).read_to_end(&mut payload)?;
    let checksum = format!("sha256:{}", hex::encode(Sha256::digest(&payload)));
    if checksum != header.checksum {
        return Err(Error::Format {
            line: 1,
            detail: format!(
                "map payload checksum {checksum} does not match header {}",
                header.checksum
            ),
        });
    }
    let expected = header.dim * header.dim * 8;
    if payload.len() != expected {
        return Err(Error::Format {
            line: 1,
            detail: format!(
                "map payload is {} bytes, expected {expected} for dim {}",
                payload.len(),
                header.dim
            ),
        });
    }

    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let matrix = Array2::from_shape_vec((header.dim, header.dim), values)
        .map_err(|e| Error::Shape(e.to_string()))?;
    OrthogonalMap::new(matrix, header.degenerate)
}

/// Writes the map as a plain-text `d x d` matrix, one row per line, with
/// 17 significant digits so a reload is bit-exact.
pub fn write_map_text<P: AsRef<Path>>(map: &OrthogonalMap, path: P) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in map.matrix().rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a plain-text map written by [`write_map_text`].
pub fn read_map_text<P: AsRef<Path>>(path: P) -> Result<OrthogonalMap> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse::<f64>).collect();
        let row = row.map_err(|e| Error::Format {
            line: i + 1,
            detail: format!("cannot parse map row: {e}"),
        })?;
        rows.push(row);
    }
    let d = rows.len();
    if d == 0 {
        return Err(Error::EmptyInput("text map file has no rows".into()));
    }
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("text map is not square".into()));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let matrix =
        Array2::from_shape_vec((d, d), flat).map_err(|e| Error::Shape(e.to_string()))?;
    OrthogonalMap::new(matrix, false)
}
