//! Unsupervised alignment of word-embedding spaces via entropic
//! Gromov-Wasserstein optimal transport.
//!
//! Given two embedding sets trained independently on different languages
//! (or corpora), this crate matches their vocabularies **without any
//! parallel data**. Nothing ties the two coordinate systems together, so
//! instead of comparing vectors across spaces the solver compares each
//! space's *internal* geometry: the matrix of cosine similarities between
//! a language's own words. Gromov-Wasserstein optimal transport (Memoli
//! 2011) finds the soft correspondence that makes the two geometries
//! agree best, and entropic regularization (Cuturi 2013; Peyre, Cuturi
//! and Solomon 2016) makes that search a sequence of fast Sinkhorn
//! matrix-scaling problems.
//!
//! The pipeline, end to end:
//!
//! 1. [`ingestion`] loads fastText-format embeddings, frequency-ordered;
//! 2. [`similarity`] builds intra-language cosine similarity matrices
//!    (optionally rescaled by [`similarity::NormalizationScheme`]);
//! 3. [`gromov`] solves the entropic GW problem with a projected-gradient
//!    outer loop around the [`sinkhorn`] inner solver, yielding a
//!    [`sinkhorn::Coupling`] between the vocabularies;
//! 4. [`mapping`] turns the coupling into an orthogonal (Procrustes) map
//!    so the alignment extends to words the solver never saw;
//! 5. [`retrieval`] reads translations off the coupling or retrieves them
//!    by nearest-neighbor / CSLS search, and scores precision@k against a
//!    bilingual lexicon;
//! 6. [`pipeline`] orchestrates the whole chain, and [`cli`] exposes it
//!    as the `gwalign` binary.
//!
//! The `examples/` directory demonstrates each capability in isolation;
//! start with `align_pipeline`.

pub mod cli;
pub mod error;
pub mod gromov;
pub mod ingestion;
pub mod mapping;
pub mod pipeline;
pub mod retrieval;
pub mod similarity;
pub mod sinkhorn;

pub use error::{Error, Result};
pub use gromov::{gw_distance, gw_objective, gw_solve, GwConfig, GwResult};
pub use ingestion::{load_embeddings, BilingualLexicon, EmbeddingMatrix, LoadOptions};
pub use mapping::{apply_map, barycentric_procrustes, procrustes, OrthogonalMap};
pub use pipeline::{align, language_distance_matrix, AlignConfig, AlignmentRun};
pub use retrieval::{
    csls_translate, nn_translate, precision_at_k, translate_from_coupling, EvalReport,
    RetrievalMethod, TranslationTable,
};
pub use similarity::{Metric, NormalizationScheme, SimilarityMatrix, WeightVector};
pub use sinkhorn::{sinkhorn_solve, Coupling, SinkhornConfig, SinkhornSolution};
