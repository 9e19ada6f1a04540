//! Loading and writing of embedding matrices, bilingual lexicons, and
//! per-word weight files.
//!
//! Embeddings use the fastText text format: an optional `<count> <dim>`
//! header line followed by one `<word> <v_1> ... <v_d>` row per word.
//! Rows are kept in file order, so a frequency-sorted input stays
//! frequency-sorted after truncation. Vectors are stored column-major
//! (one column per word) and are *not* normalized at load time.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use indexmap::{IndexMap, IndexSet};
use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::{Error, Result};

/// A vocabulary plus its embedding vectors, stored as a `d x n` matrix
/// with one column per word.
///
/// Invariants: the vocabulary is non-empty and duplicate-free, every
/// entry of the matrix is finite, and column `i` belongs to `vocab[i]`.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Array2<f64>,
}

impl EmbeddingMatrix {
    /// Builds an embedding matrix from a vocabulary and a `d x n` matrix
    /// whose column `i` is the vector of `vocab[i]`.
    pub fn new(vocab: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if vocab.is_empty() {
            return Err(Error::EmptyInput("embedding vocabulary".into()));
        }
        if vectors.ncols() != vocab.len() {
            return Err(Error::Shape(format!(
                "{} words but {} vector columns",
                vocab.len(),
                vectors.ncols()
            )));
        }
        if vectors.nrows() == 0 {
            return Err(Error::EmptyInput("embedding dimensionality is zero".into()));
        }
        if !vectors.iter().all(|v| v.is_finite()) {
            return Err(Error::DegenerateMatrix(
                "embedding matrix contains a non-finite entry".into(),
            ));
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, word) in vocab.iter().enumerate() {
            if index.insert(word.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "duplicate word {word:?} in vocabulary"
                )));
            }
        }
        Ok(Self {
            vocab,
            index,
            vectors,
        })
    }

    /// Embedding dimensionality `d`.
    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    /// Vocabulary size `n`.
    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn word(&self, i: usize) -> &str {
        &self.vocab[i]
    }

    /// Position of `word` in the vocabulary, if present.
    pub fn position(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// The full `d x n` matrix, one column per word.
    pub fn vectors(&self) -> ArrayView2<'_, f64> {
        self.vectors.view()
    }

    /// Vector of the `i`-th word.
    pub fn vector(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.column(i)
    }

    /// Keeps the first `k` words (file order, i.e. the most frequent ones
    /// for frequency-sorted inputs). `k` larger than the vocabulary is
    /// clamped; `k = 0` is rejected.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptyInput("truncation to zero words".into()));
        }
        let k = k.min(self.len());
        let vocab: Vec<String> = self.vocab[..k].to_vec();
        let vectors = self.vectors.slice(ndarray::s![.., ..k]).to_owned();
        Self::new(vocab, vectors)
    }

    /// Returns a copy with every column scaled to unit Euclidean norm.
    /// A zero-norm column is reported with the offending word.
    pub fn unit_normalized(&self) -> Result<Self> {
        let mut vectors = self.vectors.clone();
        for (i, mut col) in vectors.columns_mut().into_iter().enumerate() {
            let norm = col.dot(&col).sqrt();
            if norm == 0.0 {
                return Err(Error::DegenerateVector {
                    word: self.vocab[i].clone(),
                });
            }
            col.mapv_inplace(|v| v / norm);
        }
        Self::new(self.vocab.clone(), vectors)
    }

    /// Writes the matrix in fastText text format. Values are printed with
    /// 17 significant digits so that a reload reproduces them bit-exactly.
    pub fn write_text<W: Write>(&self, mut w: W, with_header: bool) -> Result<()> {
        if with_header {
            writeln!(w, "{} {}", self.len(), self.dim())?;
        }
        for (word, col) in self.vocab.iter().zip(self.vectors.columns()) {
            write!(w, "{word}")?;
            for v in col.iter() {
                write!(w, " {v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Writes the matrix to `path` in fastText text format.
    pub fn write_text_file<P: AsRef<Path>>(&self, path: P, with_header: bool) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_text(&mut w, with_header)?;
        w.flush()?;
        Ok(())
    }
}

/// Header expectation for the embedding loader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeaderMode {
    /// Treat the first line as a header iff it is exactly two integers.
    #[default]
    Auto,
    /// The first line must be a `<count> <dim>` header.
    Present,
    /// There is no header; every line is a row.
    Absent,
}

/// Options for [`load_embeddings`].
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Keep at most this many words (file order). `None` keeps all.
    pub max_vocab: Option<usize>,
    pub header: HeaderMode,
    /// In strict mode any malformed row aborts the load; otherwise
    /// malformed rows are skipped and counted.
    pub strict: bool,
}

/// Bookkeeping from a completed load.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadSummary {
    /// Rows skipped for being malformed (lenient mode only).
    pub skipped_rows: usize,
    /// Rows skipped because their word was already present.
    pub skipped_duplicates: usize,
    /// Word count declared by the header, if one was read.
    pub declared_count: Option<usize>,
}

/// Loads embeddings in fastText text format from `path`.
pub fn load_embeddings<P: AsRef<Path>>(
    path: P,
    options: &LoadOptions,
) -> Result<(EmbeddingMatrix, LoadSummary)> {
    read_embeddings(BufReader::new(File::open(path)?), options)
}

/// Loads embeddings in fastText text format from any reader.
pub fn read_embeddings<R: Read>(
    reader: R,
    options: &LoadOptions,
) -> Result<(EmbeddingMatrix, LoadSummary)> {
    let mut reader = BufReader::new(reader);
    let mut summary = LoadSummary::default();
    let mut vocab: Vec<String> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut data: Vec<f64> = Vec::new();
    let mut dim: Option<usize> = None;

    let limit = options.max_vocab.unwrap_or(usize::MAX);
    let mut raw = Vec::new();
    let mut line_no = 0usize;
    while vocab.len() < limit {
        raw.clear();
        if reader.read_until(b'\n', &mut raw)? == 0 {
            break;
        }
        line_no += 1;
        let line = match std::str::from_utf8(&raw) {
            Ok(s) => s.trim_end_matches(['\n', '\r']),
            Err(_) => {
                if options.strict {
                    return Err(Error::Format {
                        line: line_no,
                        detail: "line is not valid UTF-8".into(),
                    });
                }
                summary.skipped_rows += 1;
                continue;
            }
        };
        if line.trim().is_empty() {
            continue;
        }

        if line_no == 1 && options.header != HeaderMode::Absent {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let header = tokens.len() == 2 && tokens.iter().all(|t| t.parse::<usize>().is_ok());
            if header {
                let declared_dim: usize = tokens[1].parse().unwrap();
                if declared_dim == 0 {
                    return Err(Error::Format {
                        line: 1,
                        detail: "header declares dimensionality 0".into(),
                    });
                }
                summary.declared_count = Some(tokens[0].parse().unwrap());
                dim = Some(declared_dim);
                continue;
            }
            if options.header == HeaderMode::Present {
                return Err(Error::Format {
                    line: 1,
                    detail: format!("expected `<count> <dim>` header, found {line:?}"),
                });
            }
        }

        match parse_row(line, dim) {
            Ok((word, values)) => {
                if dim.is_none() {
                    dim = Some(values.len());
                }
                if seen.contains_key(&word) {
                    summary.skipped_duplicates += 1;
                    continue;
                }
                seen.insert(word.clone(), vocab.len());
                vocab.push(word);
                data.extend_from_slice(&values);
            }
            Err(kind) => {
                if options.strict {
                    return Err(kind.into_error(line_no));
                }
                summary.skipped_rows += 1;
            }
        }
    }

    let dim = dim.filter(|_| !vocab.is_empty()).ok_or_else(|| {
        Error::EmptyInput("no usable embedding rows in input".into())
    })?;
    // Rows were appended contiguously, so the buffer is n x d row-major;
    // transposing yields the d x n column-per-word layout.
    let rows = Array2::from_shape_vec((vocab.len(), dim), data)
        .map_err(|e| Error::Shape(e.to_string()))?;
    let matrix = EmbeddingMatrix::new(vocab, rows.t().to_owned())?;
    Ok((matrix, summary))
}

enum RowDefect {
    BadFloat(String),
    NonFinite(String),
    WrongCount { expected: usize, found: usize },
    NoValues,
}

impl RowDefect {
    fn into_error(self, line: usize) -> Error {
        match self {
            RowDefect::BadFloat(tok) => Error::Format {
                line,
                detail: format!("cannot parse {tok:?} as a float"),
            },
            RowDefect::NonFinite(tok) => Error::Format {
                line,
                detail: format!("non-finite value {tok:?}"),
            },
            RowDefect::WrongCount { expected, found } => Error::Row {
                line,
                expected,
                found,
            },
            RowDefect::NoValues => Error::Format {
                line,
                detail: "row has a word but no values".into(),
            },
        }
    }
}

fn parse_row(line: &str, dim: Option<usize>) -> std::result::Result<(String, Vec<f64>), RowDefect> {
    let mut tokens = line.split_whitespace();
    let word = tokens.next().expect("non-empty line has a first token");
    let mut values = Vec::new();
    for tok in tokens {
        let v: f64 = tok.parse().map_err(|_| RowDefect::BadFloat(tok.into()))?;
        if !v.is_finite() {
            return Err(RowDefect::NonFinite(tok.into()));
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(RowDefect::NoValues);
    }
    if let Some(expected) = dim {
        if values.len() != expected {
            return Err(RowDefect::WrongCount {
                expected,
                found: values.len(),
            });
        }
    }
    Ok((word.to_string(), values))
}

/// A source-to-target translation dictionary.
///
/// Source words keep file order; each source word maps to the ordered set
/// of its admissible translations.
#[derive(Debug, Clone, Default)]
pub struct BilingualLexicon {
    pairs: IndexMap<String, IndexSet<String>>,
}

impl BilingualLexicon {
    /// Loads `<source> <target>` pairs, one per line, whitespace-separated.
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }

    /// Reads `<source> <target>` pairs from any reader.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lexicon = Self::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != 2 {
                return Err(Error::Format {
                    line: i + 1,
                    detail: format!("expected `<source> <target>`, found {} tokens", tokens.len()),
                });
            }
            lexicon.insert(tokens[0], tokens[1]);
        }
        if lexicon.is_empty() {
            return Err(Error::EmptyInput("bilingual lexicon has no pairs".into()));
        }
        Ok(lexicon)
    }

    /// A lexicon that maps every given word to itself. Useful when source
    /// and target share a vocabulary.
    pub fn identity<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut lexicon = Self::default();
        for word in words {
            let word = word.into();
            lexicon.pairs.entry(word.clone()).or_default().insert(word);
        }
        lexicon
    }

    pub fn insert(&mut self, source: &str, target: &str) {
        self.pairs
            .entry(source.to_string())
            .or_default()
            .insert(target.to_string());
    }

    /// Admissible translations of `source`, if any.
    pub fn translations(&self, source: &str) -> Option<&IndexSet<String>> {
        self.pairs.get(source)
    }

    /// Number of distinct source words.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Source words in file order.
    pub fn source_words(&self) -> impl Iterator<Item = &str> {
        self.pairs.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &IndexSet<String>)> {
        self.pairs.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Loads a `<word> <weight>` side file. Weights must be finite and
/// non-negative; the first occurrence of a word wins.
pub fn load_weight_file<P: AsRef<Path>>(path: P) -> Result<IndexMap<String, f64>> {
    read_weight_file(BufReader::new(File::open(path)?))
}

/// Reads a `<word> <weight>` side file from any reader.
pub fn read_weight_file<R: BufRead>(reader: R) -> Result<IndexMap<String, f64>> {
    let mut weights = IndexMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(Error::Format {
                line: i + 1,
                detail: format!("expected `<word> <weight>`, found {} tokens", tokens.len()),
            });
        }
        let w: f64 = tokens[1].parse().map_err(|_| Error::Format {
            line: i + 1,
            detail: format!("cannot parse {:?} as a float", tokens[1]),
        })?;
        if !w.is_finite() || w < 0.0 {
            return Err(Error::Format {
                line: i + 1,
                detail: format!("weight {w} must be finite and non-negative"),
            });
        }
        weights.entry(tokens[0].to_string()).or_insert(w);
    }
    if weights.is_empty() {
        return Err(Error::EmptyInput("weight file has no entries".into()));
    }
    Ok(weights)
}
