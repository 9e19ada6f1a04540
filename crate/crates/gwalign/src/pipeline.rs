//! End-to-end alignment orchestration.
//!
//! [`align`] runs the two-step procedure: solve the entropic
//! Gromov-Wasserstein problem on the most frequent words of each space,
//! then (optionally) fit a barycentric Procrustes map from the coupling
//! and use it to translate the *full* vocabularies by nearest-neighbor
//! and CSLS retrieval. Every stage is timed, every failure is tagged with
//! the stage that produced it, and the returned [`AlignmentRun`] carries
//! enough state to reproduce or extend the run (the reproducibility
//! contract: identical inputs and config give identical outputs up to
//! floating-point reduction order).
//!
//! [`language_distance_matrix`] applies the same machinery pairwise over
//! several embedding sets, producing the symmetric matrix of entropic GW
//! distances between languages.

use std::collections::BTreeMap;
use std::time::Instant;

use indexmap::IndexMap;
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::gromov::{gw_distance, gw_solve, GwConfig, GwResult};
use crate::ingestion::{BilingualLexicon, EmbeddingMatrix};
use crate::mapping::{barycentric_procrustes, OrthogonalMap};
use crate::retrieval::{
    csls_translate, nn_translate, precision_at_k, translate_from_coupling, EvalReport,
    TranslationTable,
};
use crate::similarity::{NormalizationScheme, SimilarityMatrix, WeightVector};
use crate::{Error, Result};

/// Everything [`align`] needs beyond the embeddings themselves. The
/// snapshot fully determines the run for fixed inputs.
#[derive(Debug, Clone, Serialize)]
pub struct AlignConfig {
    /// Number of most-frequent words fed to the GW solver (clamped to the
    /// actual vocabulary size when smaller).
    pub gw_vocab: usize,
    /// Optional similarity-matrix normalization applied before the solve.
    pub normalize: Option<NormalizationScheme>,
    pub gw: GwConfig,
    /// Fit the barycentric Procrustes map and extend retrieval to the
    /// full vocabularies.
    pub fit_map: bool,
    /// Candidates retrieved per source word.
    pub translation_k: usize,
    pub csls_neighborhood: usize,
    /// Precision@k cutoffs evaluated against the lexicon; each must be
    /// at most `translation_k`.
    pub eval_ks: Vec<usize>,
    /// Drop untranslatable words from the precision denominator instead
    /// of counting them as wrong.
    pub skip_empty: bool,
    /// Optional `word -> mass` table replacing uniform source marginals.
    #[serde(skip)]
    pub src_weights: Option<IndexMap<String, f64>>,
    /// Optional `word -> mass` table replacing uniform target marginals.
    #[serde(skip)]
    pub tgt_weights: Option<IndexMap<String, f64>>,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            gw_vocab: 20_000,
            normalize: None,
            gw: GwConfig::default(),
            fit_map: true,
            translation_k: 10,
            csls_neighborhood: 10,
            eval_ks: vec![1, 5, 10],
            skip_empty: false,
            src_weights: None,
            tgt_weights: None,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gw_vocab < 2 {
            return Err(Error::InvalidConfig(
                "gw_vocab must be at least 2: the solver needs pairwise structure".into(),
            ));
        }
        if self.translation_k == 0 {
            return Err(Error::InvalidConfig("translation_k must be at least 1".into()));
        }
        if self.csls_neighborhood == 0 {
            return Err(Error::InvalidConfig(
                "csls_neighborhood must be at least 1".into(),
            ));
        }
        if self.eval_ks.is_empty() {
            return Err(Error::InvalidConfig("eval_ks must not be empty".into()));
        }
        for &k in &self.eval_ks {
            if k == 0 || k > self.translation_k {
                return Err(Error::InvalidConfig(format!(
                    "evaluation cutoff {k} must lie in 1..=translation_k ({})",
                    self.translation_k
                )));
            }
        }
        self.gw.validate()
    }
}

/// Output of [`align`]: solver result, fitted map, translation tables,
/// metrics, and per-stage timings.
#[derive(Debug)]
pub struct AlignmentRun {
    /// Snapshot of the configuration that produced this run.
    pub config: AlignConfig,
    pub gw: GwResult,
    /// The fitted map, present when `config.fit_map`.
    pub map: Option<OrthogonalMap>,
    /// Translations read directly off the coupling (GW subset only).
    pub coupling_table: TranslationTable,
    /// Full-vocabulary nearest-neighbor table, present when `fit_map`.
    pub nn_table: Option<TranslationTable>,
    /// Full-vocabulary CSLS table, present when `fit_map`.
    pub csls_table: Option<TranslationTable>,
    /// `"<method>@<k>"` -> precision report; empty without a lexicon.
    pub metrics: BTreeMap<String, EvalReport>,
    /// Stage name -> wall-clock seconds.
    pub timings: BTreeMap<String, f64>,
    /// The unit-normalized GW-subset embeddings actually aligned; exposed
    /// so callers can re-fit or extend maps from the coupling.
    pub source_gw: EmbeddingMatrix,
    pub target_gw: EmbeddingMatrix,
    /// Words of each GW-subset vocabulary missing from the corresponding
    /// weight table (and therefore given zero mass).
    pub src_weight_missing: usize,
    pub tgt_weight_missing: usize,
}

fn stage(name: &'static str) -> impl Fn(Error) -> Error {
    move |e| Error::at_stage(name, e)
}

/// Runs the full alignment chain. Any stage failure aborts the run with
/// an error tagged by the stage name (`configure`, `normalize-embeddings`,
/// `truncate`, `similarity`, `normalize-similarity`,
/// `gromov-wasserstein`, `coupling-retrieval`, `procrustes`,
/// `map-apply`, `nn-retrieval`, `csls-retrieval`, `evaluate`).
///
/// Precision cutoffs larger than a table's candidate count are evaluated
/// at the candidate count; this is exact, not an approximation, because
/// candidates beyond the target-vocabulary size cannot exist.
pub fn align(
    source: &EmbeddingMatrix,
    target: &EmbeddingMatrix,
    lexicon: Option<&BilingualLexicon>,
    cfg: &AlignConfig,
) -> Result<AlignmentRun> {
    cfg.validate().map_err(stage("configure"))?;
    let mut timings = BTreeMap::new();

    // Unit-normalize the full vocabularies once; truncation preserves
    // unit columns, so every later stage can reuse these.
    let t = Instant::now();
    let source_n = source.unit_normalized().map_err(stage("normalize-embeddings"))?;
    let target_n = target.unit_normalized().map_err(stage("normalize-embeddings"))?;
    timings.insert("normalize-embeddings".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let source_gw = source_n.truncated(cfg.gw_vocab).map_err(stage("truncate"))?;
    let target_gw = target_n.truncated(cfg.gw_vocab).map_err(stage("truncate"))?;
    timings.insert("truncate".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let (src_w, src_weight_missing) = marginals(&source_gw, cfg.src_weights.as_ref())
        .map_err(stage("similarity"))?;
    let (tgt_w, tgt_weight_missing) = marginals(&target_gw, cfg.tgt_weights.as_ref())
        .map_err(stage("similarity"))?;
    let mut cs =
        SimilarityMatrix::cosine_similarity(&source_gw, src_w).map_err(stage("similarity"))?;
    let mut ct =
        SimilarityMatrix::cosine_similarity(&target_gw, tgt_w).map_err(stage("similarity"))?;
    timings.insert("similarity".into(), t.elapsed().as_secs_f64());

    if let Some(scheme) = cfg.normalize {
        let t = Instant::now();
        cs.normalize_in_place(scheme).map_err(stage("normalize-similarity"))?;
        ct.normalize_in_place(scheme).map_err(stage("normalize-similarity"))?;
        timings.insert("normalize-similarity".into(), t.elapsed().as_secs_f64());
    }

    let t = Instant::now();
    let gw = gw_solve(&cs, &ct, &cfg.gw).map_err(stage("gromov-wasserstein"))?;
    timings.insert("gromov-wasserstein".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let coupling_table = translate_from_coupling(
        &gw.coupling,
        source_gw.vocab(),
        target_gw.vocab(),
        cfg.translation_k,
    )
    .map_err(stage("coupling-retrieval"))?;
    timings.insert("coupling-retrieval".into(), t.elapsed().as_secs_f64());

    let (map, nn_table, csls_table) = if cfg.fit_map {
        let t = Instant::now();
        let map = barycentric_procrustes(
            source_gw.vectors(),
            target_gw.vectors(),
            &gw.coupling,
        )
        .map_err(stage("procrustes"))?;
        timings.insert("procrustes".into(), t.elapsed().as_secs_f64());

        let t = Instant::now();
        let mapped_target = map.apply(&target_n).map_err(stage("map-apply"))?;
        timings.insert("map-apply".into(), t.elapsed().as_secs_f64());

        let t = Instant::now();
        let nn = nn_translate(&source_n, &mapped_target, cfg.translation_k)
            .map_err(stage("nn-retrieval"))?;
        timings.insert("nn-retrieval".into(), t.elapsed().as_secs_f64());

        let t = Instant::now();
        let csls = csls_translate(
            &source_n,
            &mapped_target,
            cfg.translation_k,
            cfg.csls_neighborhood,
        )
        .map_err(stage("csls-retrieval"))?;
        timings.insert("csls-retrieval".into(), t.elapsed().as_secs_f64());

        (Some(map), Some(nn), Some(csls))
    } else {
        (None, None, None)
    };

    let mut metrics = BTreeMap::new();
    if let Some(lexicon) = lexicon {
        let t = Instant::now();
        let tables = [
            ("coupling", Some(&coupling_table)),
            ("nn", nn_table.as_ref()),
            ("csls", csls_table.as_ref()),
        ];
        for (name, table) in tables {
            let Some(table) = table else { continue };
            for &k in &cfg.eval_ks {
                let report = precision_at_k(table, lexicon, k.min(table.k()), cfg.skip_empty)
                    .map_err(stage("evaluate"))?;
                metrics.insert(format!("{name}@{k}"), report);
            }
        }
        timings.insert("evaluate".into(), t.elapsed().as_secs_f64());
    }

    Ok(AlignmentRun {
        config: cfg.clone(),
        gw,
        map,
        coupling_table,
        nn_table,
        csls_table,
        metrics,
        timings,
        source_gw,
        target_gw,
        src_weight_missing,
        tgt_weight_missing,
    })
}

fn marginals(
    emb: &EmbeddingMatrix,
    table: Option<&IndexMap<String, f64>>,
) -> Result<(WeightVector, usize)> {
    match table {
        Some(table) => WeightVector::for_vocab(emb.vocab(), table),
        None => Ok((WeightVector::uniform(emb.len())?, 0)),
    }
}

/// Pairwise entropic GW distances between embedding sets, computed over
/// each set's `top_n` most frequent words with uniform marginals and no
/// similarity normalization. The diagonal holds actual self-distances
/// (expected near zero) rather than hard-coded zeros, and cells are
/// solved concurrently.
pub fn language_distance_matrix(
    embs: &[EmbeddingMatrix],
    top_n: usize,
    cfg: &GwConfig,
) -> Result<Array2<f64>> {
    cfg.validate()?;
    if embs.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "distance matrix needs at least 2 embedding sets, got {}",
            embs.len()
        )));
    }
    let sims: Vec<SimilarityMatrix> = embs
        .iter()
        .map(|e| {
            let sub = e.truncated(top_n)?.unit_normalized()?;
            let w = WeightVector::uniform(sub.len())?;
            SimilarityMatrix::cosine_similarity(&sub, w)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = embs.len();
    let cells: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i..n).map(move |j| (i, j)))
        .collect();
    let solved: Vec<((usize, usize), f64)> = cells
        .into_par_iter()
        .map(|(i, j)| gw_distance(&sims[i], &sims[j], cfg).map(|d| ((i, j), d)))
        .collect::<Result<Vec<_>>>()?;

    let mut out = Array2::zeros((n, n));
    for ((i, j), d) in solved {
        out[[i, j]] = d;
        out[[j, i]] = d;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Deterministic unit-ish embeddings: random Gaussian columns.
    fn toy_embeddings(seed: u64, prefix: &str, d: usize, n: usize) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab: Vec<String> = (0..n).map(|i| format!("{prefix}{i}")).collect();
        let m = Array2::from_shape_fn((d, n), |_| rng.random_range(-1.0..1.0));
        EmbeddingMatrix::new(vocab, m).unwrap()
    }

    fn rotated_copy(emb: &EmbeddingMatrix, seed: u64) -> (EmbeddingMatrix, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = emb.dim();
        let raw = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let q_na = raw.qr().q();
        let q = Array2::from_shape_fn((d, d), |(i, j)| q_na[(i, j)]);
        let rotated = q.t().dot(&emb.vectors());
        (
            EmbeddingMatrix::new(emb.vocab().to_vec(), rotated).unwrap(),
            q,
        )
    }

    /// Desk-scale settings: tiny fixtures need a larger lambda than the
    /// full-scale defaults (whose kernels underflow here) but one sharp
    /// enough that self-alignments recover near-exact couplings.
    fn desk_config() -> AlignConfig {
        let mut gw = GwConfig::with_lambda(2e-3);
        gw.sinkhorn.max_inner_iters = 50_000;
        AlignConfig {
            gw_vocab: 64,
            gw,
            translation_k: 3,
            csls_neighborhood: 2,
            eval_ks: vec![1, 3],
            ..AlignConfig::default()
        }
    }

    #[test]
    fn self_alignment_recovers_the_identity() {
        let emb = toy_embeddings(31, "w", 6, 12);
        let lexicon = BilingualLexicon::identity(emb.vocab().iter().cloned());
        let run = align(&emb, &emb, Some(&lexicon), &desk_config()).unwrap();

        assert_eq!(run.metrics["coupling@1"].p_at_k, 1.0);
        assert_eq!(run.metrics["nn@1"].p_at_k, 1.0);
        assert_eq!(run.metrics["csls@1"].p_at_k, 1.0);
        assert!(run.gw.gw_value <= 1e-6, "self gw_value {}", run.gw.gw_value);
        assert!(run.map.is_some());
        assert!(run.timings.contains_key("gromov-wasserstein"));
    }

    #[test]
    fn rotated_copy_recovers_identity_pairing_and_the_rotation() {
        let emb = toy_embeddings(32, "w", 5, 14);
        let (rotated, q) = rotated_copy(&emb, 33);
        let lexicon = BilingualLexicon::identity(emb.vocab().iter().cloned());
        let run = align(&emb, &rotated, Some(&lexicon), &desk_config()).unwrap();

        assert_eq!(run.metrics["coupling@1"].p_at_k, 1.0);
        assert_eq!(run.metrics["csls@1"].p_at_k, 1.0);

        let map = run.map.as_ref().unwrap();
        let diff = &map.matrix().to_owned() - &q;
        let frob = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(frob < 1e-6, "map missed the rotation by {frob}");
    }

    #[test]
    fn gw_vocab_clamps_to_the_actual_vocabulary() {
        let emb = toy_embeddings(34, "w", 4, 10);
        let cfg = AlignConfig {
            gw_vocab: 50,
            ..desk_config()
        };
        let run = align(&emb, &emb, None, &cfg).unwrap();
        assert_eq!(run.source_gw.len(), 10);
        assert_eq!(run.target_gw.len(), 10);
        assert!(run.metrics.is_empty());
    }

    #[test]
    fn fit_map_false_skips_map_dependent_stages() {
        let emb = toy_embeddings(35, "w", 4, 10);
        let lexicon = BilingualLexicon::identity(emb.vocab().iter().cloned());
        let cfg = AlignConfig {
            fit_map: false,
            ..desk_config()
        };
        let run = align(&emb, &emb, Some(&lexicon), &cfg).unwrap();
        assert!(run.map.is_none());
        assert!(run.nn_table.is_none());
        assert!(run.csls_table.is_none());
        assert!(run.metrics.contains_key("coupling@1"));
        assert!(!run.metrics.contains_key("nn@1"));
        assert!(!run.timings.contains_key("procrustes"));
    }

    /// Stage composition: a run without the map, plus a manual
    /// barycentric fit on the exposed GW-subset matrices, reproduces the
    /// fit_map run's map bit for bit.
    #[test]
    fn manual_map_fit_matches_the_integrated_run() {
        let emb = toy_embeddings(36, "w", 5, 12);
        let (rotated, _) = rotated_copy(&emb, 37);

        let integrated = align(&emb, &rotated, None, &desk_config()).unwrap();
        let staged = align(
            &emb,
            &rotated,
            None,
            &AlignConfig {
                fit_map: false,
                ..desk_config()
            },
        )
        .unwrap();

        let manual = barycentric_procrustes(
            staged.source_gw.vectors(),
            staged.target_gw.vectors(),
            &staged.gw.coupling,
        )
        .unwrap();
        let integrated_map = integrated.map.unwrap();
        for (a, b) in integrated_map.matrix().iter().zip(manual.matrix().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn identical_runs_are_deterministic() {
        let emb = toy_embeddings(38, "w", 5, 12);
        let (rotated, _) = rotated_copy(&emb, 39);
        let lexicon = BilingualLexicon::identity(emb.vocab().iter().cloned());

        let a = align(&emb, &rotated, Some(&lexicon), &desk_config()).unwrap();
        let b = align(&emb, &rotated, Some(&lexicon), &desk_config()).unwrap();

        assert_eq!(a.metrics, b.metrics);
        for (ga, gb) in a
            .gw
            .coupling
            .values()
            .iter()
            .zip(b.gw.coupling.values().iter())
        {
            assert_eq!(ga.to_bits(), gb.to_bits());
        }
        assert_eq!(a.csls_table.unwrap().entries(), b.csls_table.unwrap().entries());
    }

    #[test]
    fn stage_tags_name_the_failing_stage() {
        let bad = EmbeddingMatrix::new(
            vec!["a".into(), "b".into()],
            ndarray::array![[1.0, 0.0], [0.0, 0.0]],
        )
        .unwrap();
        let err = align(&bad, &bad, None, &desk_config()).unwrap_err();
        assert_eq!(err.stage(), Some("normalize-embeddings"));
        assert!(matches!(err.root(), Error::DegenerateVector { .. }));

        let emb = toy_embeddings(40, "w", 4, 8);
        let cfg = AlignConfig {
            eval_ks: vec![5],
            translation_k: 3,
            ..desk_config()
        };
        let err = align(&emb, &emb, None, &cfg).unwrap_err();
        assert_eq!(err.stage(), Some("configure"));
        assert!(matches!(err.root(), Error::InvalidConfig(_)));
    }

    #[test]
    fn weight_tables_drive_the_marginals() {
        let emb = toy_embeddings(41, "w", 4, 6);
        let mut table = IndexMap::new();
        for i in 0..5 {
            table.insert(format!("w{i}"), 1.0 + i as f64);
        }
        // w5 is missing from the table and must be reported.
        let cfg = AlignConfig {
            src_weights: Some(table),
            fit_map: false,
            ..desk_config()
        };
        let run = align(&emb, &emb, None, &cfg).unwrap();
        assert_eq!(run.src_weight_missing, 1);
        assert_eq!(run.tgt_weight_missing, 0);
        let p = run.gw.coupling.row_weights().view().to_owned();
        assert!(p[5] == 0.0, "missing word must carry zero mass");
        assert!(p[4] > p[0], "heavier words must carry more mass");
    }

    #[test]
    fn distance_matrix_is_symmetric_with_small_diagonal() {
        let a = toy_embeddings(42, "a", 5, 10);
        let (b, _) = rotated_copy(&a, 43);
        let c = toy_embeddings(45, "c", 5, 10);
        let cfg = desk_config().gw;

        let m = language_distance_matrix(&[a.clone(), b, c], 10, &cfg).unwrap();
        assert_eq!(m.dim(), (3, 3));
        for i in 0..3 {
            assert!(m[[i, i]] <= 1e-6, "self-distance {}", m[[i, i]]);
            for j in 0..3 {
                assert!((m[[i, j]] - m[[j, i]]).abs() <= 1e-5);
            }
        }
        // a and its rotated copy share all pairwise structure.
        assert!(m[[0, 1]] <= 1e-6, "rotated pair distance {}", m[[0, 1]]);
        assert!(m[[0, 2]] > m[[0, 1]]);

        let err = language_distance_matrix(&[a], 10, &cfg).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }
}
