//! Translation retrieval and lexicon-based evaluation.
//!
//! Three retrieval rules produce ranked translation candidates for every
//! source word:
//!
//! * **coupling argmax** reads the transport plan directly: the candidates
//!   for source word `i` are the targets with the most mass in row `i`;
//! * **nearest neighbor** ranks targets by cosine similarity after the
//!   target space has been mapped into the source space;
//! * **CSLS** (cross-domain similarity local scaling, Conneau et al. 2018)
//!   penalizes hub vectors: `csls(x, y) = 2 cos(x, y) - r_T(x) - r_S(y)`,
//!   where `r_T(x)` is the mean cosine from `x` to its `neighborhood`
//!   nearest targets and `r_S(y)` the mean from `y` to its `neighborhood`
//!   nearest sources.
//!
//! Ties are always broken toward the lower target index so runs are
//! reproducible. [`precision_at_k`] scores a table against a bilingual
//! lexicon: a source word counts as correct when any of its top-`k`
//! candidates is one of the lexicon's accepted translations.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::s;
use serde::Serialize;

use crate::ingestion::{BilingualLexicon, EmbeddingMatrix};
use crate::sinkhorn::Coupling;
use crate::{Error, Result};

/// Upper bound on the number of f64 entries a similarity block may hold;
/// keeps the chunked GEMMs under ~32 MiB regardless of vocabulary size.
const MAX_BLOCK_ELEMS: usize = 1 << 22;

/// How a translation table was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetrievalMethod {
    CouplingArgmax,
    NearestNeighbor,
    Csls,
}

impl RetrievalMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::CouplingArgmax => "coupling",
            Self::NearestNeighbor => "nn",
            Self::Csls => "csls",
        }
    }
}

impl std::fmt::Display for RetrievalMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ranked candidates for one source word.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationEntry {
    pub source: String,
    /// Candidates ordered best-first as `(target word, score)`.
    pub candidates: Vec<(String, f64)>,
    /// True when the retrieval rule had no evidence at all for this word
    /// (e.g. an all-zero coupling row); such entries carry no candidates.
    pub untranslatable: bool,
}

/// A full retrieval run: one entry per source word, in vocabulary order.
#[derive(Debug, Clone)]
pub struct TranslationTable {
    entries: Vec<TranslationEntry>,
    k: usize,
    method: RetrievalMethod,
}

impl TranslationTable {
    pub fn entries(&self) -> &[TranslationEntry] {
        &self.entries
    }

    /// Number of candidates retrieved per translatable word (already
    /// clamped to the target vocabulary size).
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn method(&self) -> RetrievalMethod {
        self.method
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes one line per source word: the word, then tab-separated
    /// `target:score` fields best-first. Untranslatable words produce a
    /// bare source word. Scores use 17 significant digits so a reload is
    /// bit-exact.
    pub fn write_tsv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for entry in &self.entries {
            write!(w, "{}", entry.source)?;
            for (word, score) in &entry.candidates {
                write!(w, "\t{word}:{score:.16e}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`TranslationTable::write_tsv`]. The
    /// score separator is the *last* `:` in each field, so target words
    /// containing `:` survive the round trip.
    pub fn read_tsv<P: AsRef<Path>>(path: P, method: RetrievalMethod) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut entries = Vec::new();
        let mut k = 0usize;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let source = fields.next().expect("split yields at least one field");
            let mut candidates = Vec::new();
            for field in fields {
                let (word, score) = field.rsplit_once(':').ok_or_else(|| Error::Format {
                    line: i + 1,
                    detail: format!("candidate field {field:?} has no ':' separator"),
                })?;
                let score: f64 = score.parse().map_err(|e| Error::Format {
                    line: i + 1,
                    detail: format!("cannot parse score in {field:?}: {e}"),
                })?;
                candidates.push((word.to_string(), score));
            }
            k = k.max(candidates.len());
            entries.push(TranslationEntry {
                source: source.to_string(),
                untranslatable: candidates.is_empty(),
                candidates,
            });
        }
        if entries.is_empty() {
            return Err(Error::EmptyInput("translation table file has no rows".into()));
        }
        Ok(Self { entries, k, method })
    }
}

/// Reads translations straight off a transport plan: the candidates for
/// source word `i` are the `k` targets with the most mass in row `i`.
/// A row that is exactly zero everywhere yields an untranslatable entry.
pub fn translate_from_coupling(
    coupling: &Coupling,
    source_vocab: &[String],
    target_vocab: &[String],
    k: usize,
) -> Result<TranslationTable> {
    if coupling.nrows() != source_vocab.len() || coupling.ncols() != target_vocab.len() {
        return Err(Error::Shape(format!(
            "coupling is {}x{} but vocabularies have {} and {} words",
            coupling.nrows(),
            coupling.ncols(),
            source_vocab.len(),
            target_vocab.len()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("translation k must be at least 1".into()));
    }
    let k = k.min(target_vocab.len());
    let values = coupling.values();
    let mut entries = Vec::with_capacity(source_vocab.len());
    for (i, source) in source_vocab.iter().enumerate() {
        let row: Vec<f64> = values.row(i).to_vec();
        if row.iter().all(|&v| v == 0.0) {
            entries.push(TranslationEntry {
                source: source.clone(),
                candidates: Vec::new(),
                untranslatable: true,
            });
            continue;
        }
        let candidates = top_k_indices(&row, k)
            .into_iter()
            .map(|j| (target_vocab[j].clone(), row[j]))
            .collect();
        entries.push(TranslationEntry {
            source: source.clone(),
            candidates,
            untranslatable: false,
        });
    }
    Ok(TranslationTable {
        entries,
        k,
        method: RetrievalMethod::CouplingArgmax,
    })
}

/// Nearest-neighbor retrieval by cosine similarity. `target` must already
/// be mapped into the source space; both sides are unit-normalized here.
pub fn nn_translate(
    source: &EmbeddingMatrix,
    target: &EmbeddingMatrix,
    k: usize,
) -> Result<TranslationTable> {
    let (x, y, k) = prepare_retrieval(source, target, k, 1)?;
    let mut entries = Vec::with_capacity(source.len());
    for (start, block) in similarity_blocks(&x, &y) {
        for (r, row) in block.rows().into_iter().enumerate() {
            let scores = row.to_vec();
            let candidates = top_k_indices(&scores, k)
                .into_iter()
                .map(|j| (target.word(j).to_string(), scores[j]))
                .collect();
            entries.push(TranslationEntry {
                source: source.word(start + r).to_string(),
                candidates,
                untranslatable: false,
            });
        }
    }
    debug_assert_eq!(entries.len(), source.len());
    Ok(TranslationTable {
        entries,
        k,
        method: RetrievalMethod::NearestNeighbor,
    })
}

/// CSLS retrieval. `target` must already be mapped into the source space.
/// `neighborhood` is clamped to each vocabulary's size.
pub fn csls_translate(
    source: &EmbeddingMatrix,
    target: &EmbeddingMatrix,
    k: usize,
    neighborhood: usize,
) -> Result<TranslationTable> {
    let (x, y, k) = prepare_retrieval(source, target, k, neighborhood)?;
    let n = source.len();
    let m = target.len();
    let nb_t = neighborhood.min(m);
    let nb_s = neighborhood.min(n);

    // r_S[j]: mean cosine from target j to its nb_s nearest sources,
    // gathered by chunking rows of the transposed similarity matrix.
    let mut r_s = vec![0.0f64; m];
    for (start, block) in similarity_blocks(&y, &x) {
        for (r, row) in block.rows().into_iter().enumerate() {
            r_s[start + r] = mean_of_largest(&row.to_vec(), nb_s);
        }
    }

    let mut entries = Vec::with_capacity(n);
    for (start, block) in similarity_blocks(&x, &y) {
        for (r, row) in block.rows().into_iter().enumerate() {
            let cosines = row.to_vec();
            let r_t = mean_of_largest(&cosines, nb_t);
            let scores: Vec<f64> = cosines
                .iter()
                .zip(r_s.iter())
                .map(|(&c, &rs)| 2.0 * c - r_t - rs)
                .collect();
            let candidates = top_k_indices(&scores, k)
                .into_iter()
                .map(|j| (target.word(j).to_string(), scores[j]))
                .collect();
            entries.push(TranslationEntry {
                source: source.word(start + r).to_string(),
                candidates,
                untranslatable: false,
            });
        }
    }
    Ok(TranslationTable {
        entries,
        k,
        method: RetrievalMethod::Csls,
    })
}

/// Shared validation for the cosine retrievers; returns unit-normalized
/// column matrices and the clamped candidate count.
fn prepare_retrieval(
    source: &EmbeddingMatrix,
    target: &EmbeddingMatrix,
    k: usize,
    neighborhood: usize,
) -> Result<(EmbeddingMatrix, EmbeddingMatrix, usize)> {
    if source.dim() != target.dim() {
        return Err(Error::Shape(format!(
            "source dimension {} differs from target dimension {}",
            source.dim(),
            target.dim()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("translation k must be at least 1".into()));
    }
    if neighborhood == 0 {
        return Err(Error::InvalidConfig(
            "CSLS neighborhood must be at least 1".into(),
        ));
    }
    Ok((
        source.unit_normalized()?,
        target.unit_normalized()?,
        k.min(target.len()),
    ))
}

/// Yields `(first_left_index, S_block)` pairs where `S_block` holds the
/// cosine rows for a contiguous chunk of `left`'s words against all of
/// `right`'s words. Inputs must be unit-normalized.
fn similarity_blocks<'a>(
    left: &'a EmbeddingMatrix,
    right: &'a EmbeddingMatrix,
) -> impl Iterator<Item = (usize, ndarray::Array2<f64>)> + 'a {
    let n = left.len();
    let m = right.len();
    let block = (MAX_BLOCK_ELEMS / m.max(1)).max(1);
    (0..n).step_by(block).map(move |start| {
        let end = (start + block).min(n);
        let chunk = left.vectors().slice(s![.., start..end]).t().to_owned();
        (start, chunk.dot(&right.vectors()))
    })
}

/// Indices of the `k` largest scores, best-first; ties go to the lower
/// index. `k` must satisfy `1 <= k <= scores.len()`.
fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx
}

/// Mean of the `nb` largest scores (tie handling is irrelevant for a
/// mean). `nb` must satisfy `1 <= nb <= scores.len()`.
fn mean_of_largest(scores: &[f64], nb: usize) -> f64 {
    if nb >= scores.len() {
        return scores.iter().sum::<f64>() / scores.len() as f64;
    }
    let mut v = scores.to_vec();
    let split = v.len() - nb;
    v.select_nth_unstable_by(split, f64::total_cmp);
    v[split..].iter().sum::<f64>() / nb as f64
}

/// Outcome of scoring a translation table against a lexicon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    /// Source words that entered the denominator.
    pub evaluable: usize,
    /// Evaluable words with an accepted translation in the top `k`.
    pub correct: usize,
    pub p_at_k: f64,
    /// Fraction of the lexicon's source words that were evaluable.
    pub coverage: f64,
}

/// Precision@k of `table` against `lexicon`.
///
/// The denominator is the set of lexicon source words present in the
/// table. Untranslatable words count as wrong unless `skip_empty`, which
/// drops them from the denominator instead. Fails with
/// [`Error::EmptyEvaluation`] when no word is evaluable.
pub fn precision_at_k(
    table: &TranslationTable,
    lexicon: &BilingualLexicon,
    k: usize,
    skip_empty: bool,
) -> Result<EvalReport> {
    if k == 0 {
        return Err(Error::InvalidConfig("evaluation k must be at least 1".into()));
    }
    if k > table.k() {
        return Err(Error::InvalidConfig(format!(
            "cannot evaluate precision@{k}: the table holds only {} candidates per word",
            table.k()
        )));
    }
    if lexicon.len() == 0 {
        return Err(Error::EmptyInput("lexicon has no entries".into()));
    }
    let mut evaluable = 0usize;
    let mut correct = 0usize;
    for entry in table.entries() {
        let Some(accepted) = lexicon.translations(&entry.source) else {
            continue;
        };
        if entry.untranslatable {
            if !skip_empty {
                evaluable += 1;
            }
            continue;
        }
        evaluable += 1;
        if entry
            .candidates
            .iter()
            .take(k)
            .any(|(word, _)| accepted.contains(word))
        {
            correct += 1;
        }
    }
    if evaluable == 0 {
        return Err(Error::EmptyEvaluation(format!(
            "no evaluable source words: the lexicon has {} entries but none matched a \
             translatable table row (table has {} rows)",
            lexicon.len(),
            table.len()
        )));
    }
    Ok(EvalReport {
        evaluable,
        correct,
        p_at_k: correct as f64 / evaluable as f64,
        coverage: evaluable as f64 / lexicon.len() as f64,
    })
}
