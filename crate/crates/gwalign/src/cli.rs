//! Command-line surface over the pipeline.
//!
//! Three subcommands: `align` runs the end-to-end alignment and writes
//! its artifacts to an output directory, `evaluate` scores an existing
//! translation table against a lexicon, and `gw-distance` computes the
//! pairwise distance matrix between several embedding files.
//!
//! Conventions shared by every subcommand:
//!
//! * stdout carries exactly one JSON document with a stable schema;
//!   stderr carries human diagnostics;
//! * exit 0 on success, 1 for usage/configuration errors, 2 for
//!   data/format errors, 3 for numerical failures of the solver;
//! * options resolve as flag > config-file entry > built-in default
//!   (the config file is flat `key=value` lines, `#` comments allowed).

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::gromov::{write_trace_csv, GwConfig};
use crate::ingestion::{
    load_embeddings, load_weight_file, BilingualLexicon, EmbeddingMatrix, LoadOptions,
    LoadSummary,
};
use crate::mapping::{write_map, write_map_text};
use crate::pipeline::{align, language_distance_matrix, AlignConfig, AlignmentRun};
use crate::retrieval::{precision_at_k, RetrievalMethod, TranslationTable};
use crate::similarity::NormalizationScheme;
use crate::sinkhorn::write_coupling_tsv;
use crate::{Error, Result};

/// Coupling entries below this are omitted from the sparse TSV dump.
const COUPLING_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(
    name = "gwalign",
    version,
    about = "Unsupervised word-embedding alignment via entropic Gromov-Wasserstein \
             optimal transport"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Align two embedding spaces; writes coupling, map, translation
    /// tables, solver trace, and a JSON run report.
    Align(AlignArgs),
    /// Score a translation-table TSV against a bilingual lexicon.
    Evaluate(EvaluateArgs),
    /// Pairwise Gromov-Wasserstein distances between embedding files.
    GwDistance(DistanceArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NormalizeArg {
    None,
    Mean,
    Median,
    Max,
}

impl NormalizeArg {
    fn to_scheme(self) -> Option<NormalizationScheme> {
        match self {
            Self::None => None,
            Self::Mean => Some(NormalizationScheme::Mean),
            Self::Median => Some(NormalizationScheme::Median),
            Self::Max => Some(NormalizationScheme::Max),
        }
    }
}

/// Only cosine is implemented; the flag exists so scripts can state their
/// assumption explicitly.
#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    Cosine,
}

#[derive(Debug, Args)]
struct AlignArgs {
    /// Source embeddings in fastText text format.
    #[arg(long)]
    src: PathBuf,
    /// Target embeddings in fastText text format.
    #[arg(long)]
    tgt: PathBuf,
    /// Bilingual lexicon (`<source> <target>` lines). Without it the
    /// identity lexicon over words shared by both vocabularies is used.
    #[arg(long)]
    dict: Option<PathBuf>,
    /// Flat key=value config file; explicit flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for all output artifacts.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Words per side fed to the GW solver.
    #[arg(long)]
    gw_vocab: Option<usize>,
    /// Entropy regularization strength. Pins the fallback strength too,
    /// unless --lambda-fallback is also given.
    #[arg(long)]
    lambda: Option<f64>,
    /// Regularization retried after an underflow of the primary strength.
    #[arg(long)]
    lambda_fallback: Option<f64>,
    /// Similarity-matrix normalization applied before the solve.
    #[arg(long, value_enum)]
    normalize: Option<NormalizeArg>,
    /// Fit the Procrustes map and extend retrieval to full vocabularies.
    #[arg(long, value_name = "BOOL")]
    fit_map: Option<bool>,
    /// Similarity metric for the intra-language matrices.
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    /// Translation candidates retrieved per source word.
    #[arg(long)]
    k: Option<usize>,
    /// Neighborhood size for the CSLS penalty terms.
    #[arg(long)]
    csls_neighborhood: Option<usize>,
    /// Comma-separated precision cutoffs, e.g. 1,5,10.
    #[arg(long, value_delimiter = ',')]
    eval_ks: Option<Vec<usize>>,
    /// Drop untranslatable words from the precision denominator.
    #[arg(long, action = ArgAction::SetTrue)]
    skip_empty: bool,
    /// Cap on words loaded from each embedding file.
    #[arg(long)]
    max_vocab: Option<usize>,
    /// Abort on malformed embedding rows instead of skipping them.
    #[arg(long, action = ArgAction::SetTrue)]
    strict: bool,
    /// Run the inner solver in log domain (slower, survives smaller
    /// lambda).
    #[arg(long, action = ArgAction::SetTrue)]
    log_domain: bool,
    #[arg(long)]
    max_outer_iters: Option<usize>,
    #[arg(long)]
    max_inner_iters: Option<usize>,
    #[arg(long)]
    outer_tol: Option<f64>,
    #[arg(long)]
    marginal_tol: Option<f64>,
    /// Dump every coupling entry instead of thresholding at 1e-9.
    #[arg(long, action = ArgAction::SetTrue)]
    dense: bool,
    /// `<word> <mass>` file overriding uniform source marginals.
    #[arg(long)]
    src_weights: Option<PathBuf>,
    /// `<word> <mass>` file overriding uniform target marginals.
    #[arg(long)]
    tgt_weights: Option<PathBuf>,
    /// Reserved; the algorithm is deterministic and ignores it.
    #[arg(long)]
    seed: Option<u64>,
    /// Bound on internal parallelism.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Translation table TSV (as written by `align`).
    #[arg(long)]
    table: PathBuf,
    /// Bilingual lexicon to score against.
    #[arg(long)]
    dict: PathBuf,
    /// Precision cutoff.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Drop untranslatable words from the denominator.
    #[arg(long, action = ArgAction::SetTrue)]
    skip_empty: bool,
}

#[derive(Debug, Args)]
struct DistanceArgs {
    /// Embedding files (at least two).
    #[arg(long, num_args = 2.., required = true)]
    embs: Vec<PathBuf>,
    /// Most-frequent words used per language.
    #[arg(long, default_value_t = 2000)]
    top_n: usize,
    /// Output CSV path.
    #[arg(long, default_value = "gw-distances.csv")]
    out: PathBuf,
    /// Multiply emitted values by this factor (e.g. 100 for readability).
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Entropy regularization strength (pins the fallback too unless
    /// --lambda-fallback is given).
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_fallback: Option<f64>,
    #[arg(long)]
    max_outer_iters: Option<usize>,
    #[arg(long)]
    max_inner_iters: Option<usize>,
    /// Abort on malformed embedding rows instead of skipping them.
    #[arg(long, action = ArgAction::SetTrue)]
    strict: bool,
    /// Bound on internal parallelism.
    #[arg(long)]
    threads: Option<usize>,
}

/// Entry point used by the binary. Parses arguments, dispatches, and
/// converts failures into the documented exit codes.
pub fn run() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Align(args) => cmd_align(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::GwDistance(args) => cmd_distance(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// Maps error classes onto the documented exit codes: 1 usage, 2 data,
/// 3 numerical. Stage tags are transparent.
fn exit_code_for(err: &Error) -> u8 {
    match err.root() {
        Error::InvalidConfig(_) => 1,
        Error::NumericalUnderflow { .. } | Error::UnderflowAtFallback { .. } => 3,
        _ => 2,
    }
}

/// Flat `key=value` config file with `#` comments and blank lines.
#[derive(Debug, Default)]
struct FileConfig(HashMap<String, String>);

const KNOWN_KEYS: &[&str] = &[
    "gw_vocab",
    "lambda",
    "lambda_fallback",
    "normalize",
    "fit_map",
    "k",
    "csls_neighborhood",
    "eval_ks",
    "skip_empty",
    "max_vocab",
    "strict",
    "log_domain",
    "max_outer_iters",
    "max_inner_iters",
    "outer_tol",
    "marginal_tol",
    "dense",
    "out_dir",
    "threads",
];

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)?;
        let mut map = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::InvalidConfig(format!(
                    "config line {}: expected key=value, found {raw:?}",
                    i + 1
                )));
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "config line {}: unknown key {key:?}",
                    i + 1
                )));
            }
            map.insert(key, value.trim().to_string());
        }
        Ok(Self(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|e| {
                Error::InvalidConfig(format!("config key {key}: cannot parse {raw:?}: {e}"))
            }),
        }
    }
}

/// `flag > file > default` for one option.
fn resolve<T>(flag: Option<T>, file: Result<Option<T>>, default: T) -> Result<T> {
    Ok(flag.or(file?).unwrap_or(default))
}

/// Combines the two lambda settings: a lone primary pins the fallback to
/// itself (so an explicit tiny lambda is not silently rescued), a lone
/// fallback keeps the default primary.
fn resolve_lambdas(primary: Option<f64>, fallback: Option<f64>) -> GwConfig {
    let mut gw = GwConfig::default();
    match (primary, fallback) {
        (None, None) => {}
        (Some(l), None) => gw = GwConfig::with_lambda(l),
        (None, Some(f)) => gw.lambda_fallback = f,
        (Some(l), Some(f)) => {
            gw.lambda_primary = l;
            gw.lambda_fallback = f;
        }
    }
    gw
}

fn parse_normalize(raw: &str) -> Result<Option<NormalizationScheme>> {
    if raw.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    NormalizationScheme::from_str(raw).map(Some)
}

/// Everything `cmd_align` resolved from flags, file, and defaults.
struct ResolvedAlign {
    cfg: AlignConfig,
    out_dir: PathBuf,
    load: LoadOptions,
    dense: bool,
    threads: Option<usize>,
}

fn resolve_align(args: &AlignArgs) -> Result<ResolvedAlign> {
    let file = FileConfig::load(args.config.as_deref())?;
    let defaults = AlignConfig::default();

    let mut gw = resolve_lambdas(
        args.lambda.or(file.get("lambda")?),
        args.lambda_fallback.or(file.get("lambda_fallback")?),
    );
    gw.max_outer_iters = resolve(
        args.max_outer_iters,
        file.get("max_outer_iters"),
        gw.max_outer_iters,
    )?;
    gw.outer_tol = resolve(args.outer_tol, file.get("outer_tol"), gw.outer_tol)?;
    gw.sinkhorn.max_inner_iters = resolve(
        args.max_inner_iters,
        file.get("max_inner_iters"),
        gw.sinkhorn.max_inner_iters,
    )?;
    gw.sinkhorn.marginal_tol = resolve(
        args.marginal_tol,
        file.get("marginal_tol"),
        gw.sinkhorn.marginal_tol,
    )?;
    gw.sinkhorn.log_domain = args.log_domain || file.get("log_domain")?.unwrap_or(false);

    let normalize = match (&args.normalize, file.0.get("normalize")) {
        (Some(flag), _) => flag.to_scheme(),
        (None, Some(raw)) => parse_normalize(raw)?,
        (None, None) => defaults.normalize,
    };

    let eval_ks = match (&args.eval_ks, file.0.get("eval_ks")) {
        (Some(flag), _) => flag.clone(),
        (None, Some(raw)) => raw
            .split(',')
            .map(|t| {
                t.trim().parse::<usize>().map_err(|e| {
                    Error::InvalidConfig(format!("config key eval_ks: bad entry {t:?}: {e}"))
                })
            })
            .collect::<Result<Vec<_>>>()?,
        (None, None) => defaults.eval_ks.clone(),
    };

    let src_weights = args.src_weights.as_ref().map(load_weight_file).transpose()?;
    let tgt_weights = args.tgt_weights.as_ref().map(load_weight_file).transpose()?;

    let cfg = AlignConfig {
        gw_vocab: resolve(args.gw_vocab, file.get("gw_vocab"), defaults.gw_vocab)?,
        normalize,
        gw,
        fit_map: resolve(args.fit_map, file.get("fit_map"), defaults.fit_map)?,
        translation_k: resolve(args.k, file.get("k"), defaults.translation_k)?,
        csls_neighborhood: resolve(
            args.csls_neighborhood,
            file.get("csls_neighborhood"),
            defaults.csls_neighborhood,
        )?,
        eval_ks,
        skip_empty: args.skip_empty || file.get("skip_empty")?.unwrap_or(false),
        src_weights,
        tgt_weights,
    };

    let load = LoadOptions {
        max_vocab: args.max_vocab.or(file.get("max_vocab")?),
        strict: args.strict || file.get("strict")?.unwrap_or(false),
        ..LoadOptions::default()
    };

    Ok(ResolvedAlign {
        cfg,
        out_dir: resolve(
            args.out_dir.clone(),
            file.get("out_dir"),
            PathBuf::from("gwalign-out"),
        )?,
        load,
        dense: args.dense || file.get("dense")?.unwrap_or(false),
        threads: args.threads.or(file.get("threads")?),
    })
}

fn configure_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // Fails when a global pool already exists (e.g. in tests); the
        // existing pool is then used as-is.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn report_load(label: &str, summary: &LoadSummary) {
    if summary.skipped_rows > 0 {
        eprintln!("note: {label}: skipped {} malformed rows", summary.skipped_rows);
    }
    if summary.skipped_duplicates > 0 {
        eprintln!(
            "note: {label}: skipped {} duplicate words",
            summary.skipped_duplicates
        );
    }
}

/// The identity lexicon over words both vocabularies share; `None` when
/// they share nothing (evaluation is then skipped instead of failing).
fn identity_lexicon(
    source: &EmbeddingMatrix,
    target: &EmbeddingMatrix,
) -> Option<BilingualLexicon> {
    let shared: Vec<&String> = source
        .vocab()
        .iter()
        .filter(|w| target.position(w).is_some())
        .collect();
    if shared.is_empty() {
        return None;
    }
    Some(BilingualLexicon::identity(shared.into_iter().cloned()))
}

fn path_json(path: Option<&Path>) -> serde_json::Value {
    match path {
        Some(p) => json!(p.display().to_string()),
        None => serde_json::Value::Null,
    }
}

fn cmd_align(args: AlignArgs) -> Result<()> {
    let resolved = resolve_align(&args)?;
    configure_threads(resolved.threads);

    let (source, src_summary) = load_embeddings(&args.src, &resolved.load)?;
    report_load("source", &src_summary);
    let (target, tgt_summary) = load_embeddings(&args.tgt, &resolved.load)?;
    report_load("target", &tgt_summary);

    let lexicon = match &args.dict {
        Some(path) => Some(BilingualLexicon::load(path)?),
        None => {
            let identity = identity_lexicon(&source, &target);
            if identity.is_none() {
                eprintln!(
                    "note: vocabularies share no words and no --dict was given; \
                     skipping evaluation"
                );
            }
            identity
        }
    };

    if resolved.cfg.translation_k > target.len() {
        eprintln!(
            "warning: --k {} exceeds the target vocabulary ({} words); clamping",
            resolved.cfg.translation_k,
            target.len()
        );
    }
    if resolved.cfg.fit_map
        && resolved.cfg.csls_neighborhood > source.len().min(target.len())
    {
        eprintln!(
            "warning: --csls-neighborhood {} exceeds a vocabulary size; clamping",
            resolved.cfg.csls_neighborhood
        );
    }

    let run = align(&source, &target, lexicon.as_ref(), &resolved.cfg)?;

    if run.src_weight_missing > 0 {
        eprintln!(
            "warning: {} source GW words missing from --src-weights (given zero mass)",
            run.src_weight_missing
        );
    }
    if run.tgt_weight_missing > 0 {
        eprintln!(
            "warning: {} target GW words missing from --tgt-weights (given zero mass)",
            run.tgt_weight_missing
        );
    }
    if !run.gw.converged {
        eprintln!("warning: outer loop hit its iteration budget before converging");
    }

    let report = write_align_outputs(&args, &resolved, &source, &target, &run)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report is serializable"));
    Ok(())
}

/// Writes every artifact of an align run into the output directory and
/// assembles the run report. The report always carries the same keys;
/// absent artifacts are `null`.
fn write_align_outputs(
    args: &AlignArgs,
    resolved: &ResolvedAlign,
    source: &EmbeddingMatrix,
    target: &EmbeddingMatrix,
    run: &AlignmentRun,
) -> Result<serde_json::Value> {
    let dir = &resolved.out_dir;
    fs::create_dir_all(dir)?;

    let coupling_path = dir.join("coupling.tsv");
    let threshold = if resolved.dense {
        None
    } else {
        Some(COUPLING_THRESHOLD)
    };
    write_coupling_tsv(
        BufWriter::new(File::create(&coupling_path)?),
        &run.gw.coupling,
        threshold,
    )?;

    let trace_path = dir.join("trace.csv");
    write_trace_csv(BufWriter::new(File::create(&trace_path)?), &run.gw.trace)?;

    let (map_json, map_bin, map_text) = match &run.map {
        Some(map) => {
            let (j, b) = write_map(map, dir.join("map"))?;
            let t = dir.join("map.txt");
            write_map_text(map, &t)?;
            (Some(j), Some(b), Some(t))
        }
        None => (None, None, None),
    };

    let coupling_table_path = dir.join("translations_coupling.tsv");
    run.coupling_table.write_tsv(&coupling_table_path)?;
    let nn_path = match &run.nn_table {
        Some(t) => {
            let p = dir.join("translations_nn.tsv");
            t.write_tsv(&p)?;
            Some(p)
        }
        None => None,
    };
    let csls_path = match &run.csls_table {
        Some(t) => {
            let p = dir.join("translations_csls.tsv");
            t.write_tsv(&p)?;
            Some(p)
        }
        None => None,
    };

    let mut config = serde_json::to_value(&run.config).expect("config is serializable");
    {
        let obj = config.as_object_mut().expect("config serializes to an object");
        obj.insert("metric".into(), json!("cosine"));
        obj.insert("max_vocab".into(), json!(resolved.load.max_vocab));
        obj.insert("strict".into(), json!(resolved.load.strict));
        obj.insert("dense".into(), json!(resolved.dense));
        obj.insert("threads".into(), json!(resolved.threads));
        obj.insert("seed".into(), json!(args.seed));
        obj.insert(
            "src_weights".into(),
            path_json(args.src_weights.as_deref()),
        );
        obj.insert(
            "tgt_weights".into(),
            path_json(args.tgt_weights.as_deref()),
        );
    }

    let last = run.gw.trace.last();
    let report_path = dir.join("report.json");
    let report = json!({
        "command": "align",
        "inputs": {
            "src": args.src.display().to_string(),
            "tgt": args.tgt.display().to_string(),
            "dict": path_json(args.dict.as_deref()),
        },
        "config": config,
        "vocab": {
            "source": source.len(),
            "target": target.len(),
            "source_gw": run.source_gw.len(),
            "target_gw": run.target_gw.len(),
        },
        "gw": {
            "lambda_used": run.gw.lambda_used,
            "converged": run.gw.converged,
            "gw_value": run.gw.gw_value,
            "outer_iterations": run.gw.trace.len(),
            "final_objective": last.map(|t| t.objective),
            "final_marginal_violation": last.map(|t| t.marginal_violation),
        },
        "metrics": run.metrics,
        "timings": run.timings,
        "outputs": {
            "report": report_path.display().to_string(),
            "coupling": coupling_path.display().to_string(),
            "trace": trace_path.display().to_string(),
            "map_json": path_json(map_json.as_deref()),
            "map_bin": path_json(map_bin.as_deref()),
            "map_text": path_json(map_text.as_deref()),
            "translations_coupling": coupling_table_path.display().to_string(),
            "translations_nn": path_json(nn_path.as_deref()),
            "translations_csls": path_json(csls_path.as_deref()),
        },
    });

    let mut w = BufWriter::new(File::create(&report_path)?);
    serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Error::Format {
        line: 1,
        detail: format!("cannot encode report: {e}"),
    })?;
    writeln!(w)?;
    w.flush()?;
    Ok(report)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    // The method tag is presentation-only; a table file does not record
    // how it was produced.
    let table = TranslationTable::read_tsv(&args.table, RetrievalMethod::NearestNeighbor)?;
    let lexicon = BilingualLexicon::load(&args.dict)?;
    let report = precision_at_k(&table, &lexicon, args.k, args.skip_empty)?;

    let out = json!({
        "command": "evaluate",
        "table": args.table.display().to_string(),
        "dict": args.dict.display().to_string(),
        "k": args.k,
        "skip_empty": args.skip_empty,
        "evaluable": report.evaluable,
        "correct": report.correct,
        "p_at_k": report.p_at_k,
        "coverage": report.coverage,
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("report is serializable"));
    Ok(())
}

fn cmd_distance(args: DistanceArgs) -> Result<()> {
    configure_threads(args.threads);
    if !args.scale.is_finite() || args.scale == 0.0 {
        return Err(Error::InvalidConfig(format!(
            "--scale must be finite and nonzero, got {}",
            args.scale
        )));
    }

    let load = LoadOptions {
        max_vocab: Some(args.top_n),
        strict: args.strict,
        ..LoadOptions::default()
    };
    let mut labels: Vec<String> = Vec::new();
    let mut embs: Vec<EmbeddingMatrix> = Vec::new();
    for path in &args.embs {
        let (emb, summary) = load_embeddings(path, &load)?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        report_load(&stem, &summary);
        // Disambiguate duplicate stems by position.
        let label = if labels.contains(&stem) {
            format!("{stem}-{}", labels.len() + 1)
        } else {
            stem
        };
        labels.push(label);
        embs.push(emb);
    }

    let mut gw = resolve_lambdas(args.lambda, args.lambda_fallback);
    if let Some(n) = args.max_outer_iters {
        gw.max_outer_iters = n;
    }
    if let Some(n) = args.max_inner_iters {
        gw.sinkhorn.max_inner_iters = n;
    }
    let matrix = language_distance_matrix(&embs, args.top_n, &gw)?;
    let scaled = matrix.mapv(|v| v * args.scale);

    let mut w = BufWriter::new(File::create(&args.out)?);
    writeln!(w, "language,{}", labels.join(","))?;
    for (i, row) in scaled.rows().into_iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{},{}", labels[i], cells.join(","))?;
    }
    w.flush()?;

    let rows: Vec<Vec<f64>> = scaled.rows().into_iter().map(|r| r.to_vec()).collect();
    let out = json!({
        "command": "gw-distance",
        "languages": labels,
        "top_n": args.top_n,
        "scale": args.scale,
        "lambda_primary": gw.lambda_primary,
        "lambda_fallback": gw.lambda_fallback,
        "out": args.out.display().to_string(),
        "matrix": rows,
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("report is serializable"));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn exit_codes_partition_the_error_classes() {
        assert_eq!(exit_code_for(&Error::InvalidConfig("x".into())), 1);
        assert_eq!(
            exit_code_for(&Error::EmptyInput("x".into())),
            2
        );
        assert_eq!(
            exit_code_for(&Error::Format {
                line: 3,
                detail: "x".into()
            }),
            2
        );
        assert_eq!(
            exit_code_for(&Error::NumericalUnderflow { lambda: 1e-9 }),
            3
        );
        assert_eq!(
            exit_code_for(&Error::UnderflowAtFallback {
                primary: 1e-9,
                fallback: 1e-6
            }),
            3
        );
        // Stage tags are transparent to the mapping.
        assert_eq!(
            exit_code_for(&Error::at_stage(
                "gromov-wasserstein",
                Error::NumericalUnderflow { lambda: 1e-9 }
            )),
            3
        );
        assert_eq!(
            exit_code_for(&Error::at_stage(
                "configure",
                Error::InvalidConfig("x".into())
            )),
            1
        );
    }

    #[test]
    fn config_file_fills_gaps_and_flags_win() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(
            &path,
            "# comment\n\ngw_vocab = 40\nlambda=2e-3\nk = 4\nskip_empty=true\n",
        )
        .unwrap();

        let args = AlignArgs::parse_from_many(&[
            "--src",
            "s.vec",
            "--tgt",
            "t.vec",
            "--config",
            path.to_str().unwrap(),
            "--k",
            "7",
        ]);
        let resolved = resolve_align(&args).unwrap();
        assert_eq!(resolved.cfg.gw_vocab, 40);
        assert_eq!(resolved.cfg.translation_k, 7, "flag must beat file");
        assert!(resolved.cfg.skip_empty);
        assert_eq!(resolved.cfg.gw.lambda_primary, 2e-3);
        assert_eq!(
            resolved.cfg.gw.lambda_fallback, 2e-3,
            "lone lambda pins the fallback"
        );
        assert_eq!(resolved.cfg.csls_neighborhood, 10, "default fills the rest");
    }

    #[test]
    fn config_file_rejects_unknown_keys_and_garbage() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("run.conf");

        fs::write(&path, "no_such_key=1\n").unwrap();
        let args = AlignArgs::parse_from_many(&[
            "--src", "s", "--tgt", "t", "--config", path.to_str().unwrap(),
        ]);
        assert!(matches!(
            resolve_align(&args),
            Err(Error::InvalidConfig(_))
        ));

        fs::write(&path, "just a line\n").unwrap();
        let args = AlignArgs::parse_from_many(&[
            "--src", "s", "--tgt", "t", "--config", path.to_str().unwrap(),
        ]);
        assert!(matches!(
            resolve_align(&args),
            Err(Error::InvalidConfig(_))
        ));

        fs::write(&path, "gw_vocab=elephant\n").unwrap();
        let args = AlignArgs::parse_from_many(&[
            "--src", "s", "--tgt", "t", "--config", path.to_str().unwrap(),
        ]);
        assert!(matches!(
            resolve_align(&args),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn lambda_resolution_covers_all_cases() {
        let d = GwConfig::default();
        let r = resolve_lambdas(None, None);
        assert_eq!(r.lambda_primary, d.lambda_primary);
        assert_eq!(r.lambda_fallback, d.lambda_fallback);

        let r = resolve_lambdas(Some(1e-12), None);
        assert_eq!(r.lambda_primary, 1e-12);
        assert_eq!(r.lambda_fallback, 1e-12);

        let r = resolve_lambdas(None, Some(1e-3));
        assert_eq!(r.lambda_primary, d.lambda_primary);
        assert_eq!(r.lambda_fallback, 1e-3);

        let r = resolve_lambdas(Some(2e-3), Some(5e-3));
        assert_eq!(r.lambda_primary, 2e-3);
        assert_eq!(r.lambda_fallback, 5e-3);
    }

    #[test]
    fn normalize_parsing_accepts_none_and_schemes() {
        assert_eq!(parse_normalize("none").unwrap(), None);
        assert_eq!(
            parse_normalize("mean").unwrap(),
            Some(NormalizationScheme::Mean)
        );
        assert_eq!(
            parse_normalize("median").unwrap(),
            Some(NormalizationScheme::Median)
        );
        assert!(parse_normalize("bogus").is_err());
    }

    impl AlignArgs {
        /// Test helper: parse from a flag list without the binary name.
        fn parse_from_many(flags: &[&str]) -> Self {
            let mut argv = vec!["gwalign", "align"];
            argv.extend_from_slice(flags);
            match Cli::parse_from(argv).command {
                Command::Align(args) => args,
                _ => unreachable!("always the align subcommand"),
            }
        }
    }
}
