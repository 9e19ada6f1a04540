//! Intra-space similarity matrices and the scale normalization that fixes
//! uneven cross-corpus similarity ranges.
//!
//! A metric-measure view of an embedding space is the pair (C, p): the
//! pairwise cosine matrix of the vocabulary plus a probability weight per
//! word. These are the objects the Gromov-Wasserstein solver compares, so
//! everything here is deterministic and order-preserving.

use std::io::Write;

use indexmap::IndexMap;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::ingestion::EmbeddingMatrix;
use crate::{Error, Result};

/// A probability vector: non-negative entries summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Array1<f64>);

impl WeightVector {
    /// The uniform distribution over `n` atoms.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("weight vector of length zero".into()));
        }
        Ok(Self(Array1::from_elem(n, 1.0 / n as f64)))
    }

    /// Builds a weight vector from raw non-negative masses, renormalizing
    /// them to sum to 1.
    pub fn new(values: Array1<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("weight vector of length zero".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = values.sum();
        if total <= 0.0 {
            return Err(Error::EmptyInput("weights sum to zero".into()));
        }
        Ok(Self(values / total))
    }

    /// Looks up one weight per vocabulary word in a `<word> <weight>`
    /// table (see [`crate::ingestion::load_weight_file`]), renormalizes,
    /// and reports how many words were missing from the table (they get
    /// weight 0).
    pub fn for_vocab(
        vocab: &[String],
        table: &IndexMap<String, f64>,
    ) -> Result<(Self, usize)> {
        let mut missing = 0usize;
        let values = Array1::from_iter(vocab.iter().map(|w| match table.get(w) {
            Some(&v) => v,
            None => {
                missing += 1;
                0.0
            }
        }));
        let weights = Self::new(values).map_err(|e| match e {
            Error::EmptyInput(_) => {
                Error::EmptyInput("no vocabulary word carries positive weight".into())
            }
            other => other,
        })?;
        Ok((weights, missing))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

/// What a similarity matrix's entries mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    CosineSimilarity,
    CosineDistance,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::CosineSimilarity => "cosine_similarity",
            Metric::CosineDistance => "cosine_distance",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Statistic of the absolute entries used to rescale a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationScheme {
    Mean,
    Median,
    Max,
}

impl NormalizationScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            NormalizationScheme::Mean => "mean",
            NormalizationScheme::Median => "median",
            NormalizationScheme::Max => "max",
        }
    }
}

impl std::fmt::Display for NormalizationScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NormalizationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(NormalizationScheme::Mean),
            "median" => Ok(NormalizationScheme::Median),
            "max" => Ok(NormalizationScheme::Max),
            other => Err(Error::InvalidConfig(format!(
                "unknown normalization scheme {other:?} (expected mean, median, or max)"
            ))),
        }
    }
}

/// An `n x n` pairwise similarity (or distance) matrix together with the
/// word weights of the space it describes.
///
/// Invariants: square, finite, symmetric within 1e-10; for
/// `cosine_similarity` built from unit vectors the diagonal is 1 within 1e-9.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    values: Array2<f64>,
    weights: WeightVector,
    metric: Metric,
    normalization: Option<NormalizationScheme>,
}

impl SimilarityMatrix {
    /// `C[i,j] = <x_i, x_j> / (|x_i| |x_j|)` for the columns of `emb`.
    pub fn cosine_similarity(emb: &EmbeddingMatrix, weights: WeightVector) -> Result<Self> {
        let unit = emb.unit_normalized()?;
        if weights.len() != emb.len() {
            return Err(Error::Shape(format!(
                "{} weights for {} words",
                weights.len(),
                emb.len()
            )));
        }
        let vectors = unit.vectors();
        let values = vectors.t().dot(&vectors);
        Ok(Self {
            values,
            weights,
            metric: Metric::CosineSimilarity,
            normalization: None,
        })
    }

    /// `1 - cos(x_i, x_j)`.
    pub fn cosine_distance(emb: &EmbeddingMatrix, weights: WeightVector) -> Result<Self> {
        let mut sim = Self::cosine_similarity(emb, weights)?;
        sim.values.mapv_inplace(|v| 1.0 - v);
        sim.metric = Metric::CosineDistance;
        Ok(sim)
    }

    /// Wraps a precomputed matrix, validating squareness, finiteness, and
    /// symmetry (within 1e-10).
    pub fn from_values(values: Array2<f64>, weights: WeightVector, metric: Metric) -> Result<Self> {
        let n = values.nrows();
        if n == 0 {
            return Err(Error::EmptyInput("similarity matrix of size zero".into()));
        }
        if values.ncols() != n {
            return Err(Error::Shape(format!(
                "similarity matrix is {}x{}, not square",
                n,
                values.ncols()
            )));
        }
        if weights.len() != n {
            return Err(Error::Shape(format!("{} weights for {n} rows", weights.len())));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::DegenerateMatrix(
                "similarity matrix contains a non-finite entry".into(),
            ));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (values[[i, j]] - values[[j, i]]).abs() > 1e-10 {
                    return Err(Error::DegenerateMatrix(format!(
                        "asymmetric at ({i},{j}): {} vs {}",
                        values[[i, j]],
                        values[[j, i]]
                    )));
                }
            }
        }
        Ok(Self {
            values,
            weights,
            metric,
            normalization: None,
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn normalization(&self) -> Option<NormalizationScheme> {
        self.normalization
    }

    /// Divides every entry by the scheme's statistic of the absolute
    /// entries. Weights are unchanged. The statistic must be positive.
    pub fn normalize_in_place(&mut self, scheme: NormalizationScheme) -> Result<()> {
        let stat = self.normalization_statistic(scheme);
        if stat <= 0.0 {
            return Err(Error::DegenerateMatrix(format!(
                "{scheme} of absolute entries is zero; cannot normalize"
            )));
        }
        self.values.mapv_inplace(|v| v / stat);
        self.normalization = Some(scheme);
        Ok(())
    }

    /// Non-destructive [`Self::normalize_in_place`].
    pub fn normalized(&self, scheme: NormalizationScheme) -> Result<Self> {
        let mut out = self.clone();
        out.normalize_in_place(scheme)?;
        Ok(out)
    }

    fn normalization_statistic(&self, scheme: NormalizationScheme) -> f64 {
        match scheme {
            NormalizationScheme::Mean => {
                self.values.iter().map(|v| v.abs()).sum::<f64>() / (self.values.len() as f64)
            }
            NormalizationScheme::Median => {
                let mut abs: Vec<f64> = self.values.iter().map(|v| v.abs()).collect();
                abs.sort_unstable_by(f64::total_cmp);
                let mid = abs.len() / 2;
                // Even count: mean of the two middle values.
                if abs.len() % 2 == 0 {
                    (abs[mid - 1] + abs[mid]) / 2.0
                } else {
                    abs[mid]
                }
            }
            NormalizationScheme::Max => self
                .values
                .iter()
                .fold(0.0f64, |acc, v| acc.max(v.abs())),
        }
    }

    /// Uniform-bin histogram of the entries over their observed range.
    /// A constant matrix yields a single zero-width bin.
    pub fn histogram(&self, bins: usize) -> Vec<HistogramBin> {
        assert!(bins > 0, "histogram needs at least one bin");
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if min == max {
            return vec![HistogramBin {
                left: min,
                right: max,
                count: self.values.len(),
            }];
        }
        let width = (max - min) / bins as f64;
        let mut out: Vec<HistogramBin> = (0..bins)
            .map(|b| HistogramBin {
                left: min + b as f64 * width,
                right: min + (b + 1) as f64 * width,
                count: 0,
            })
            .collect();
        for v in self.values.iter() {
            let idx = (((v - min) / width) as usize).min(bins - 1);
            out[idx].count += 1;
        }
        out
    }
}

/// One histogram bucket: `[left, right)` except the last, which is closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

/// Writes `bin_left,bin_right,count` rows with a header line.
pub fn write_histogram_csv<W: Write>(mut w: W, bins: &[HistogramBin]) -> Result<()> {
    writeln!(w, "bin_left,bin_right,count")?;
    for bin in bins {
        writeln!(w, "{:.17e},{:.17e},{}", bin.left, bin.right, bin.count)?;
    }
    Ok(())
}

/// Checks that two similarity matrices are comparable under a common metric.
pub(crate) fn ensure_same_metric(a: &SimilarityMatrix, b: &SimilarityMatrix) -> Result<()> {
    if a.metric() != b.metric() {
        return Err(Error::MetricMismatch {
            left: a.metric().to_string(),
            right: b.metric().to_string(),
        });
    }
    Ok(())
}
