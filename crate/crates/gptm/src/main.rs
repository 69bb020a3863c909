//! Batch command line: kernel construction, training, held-out evaluation,
//! parameter tuning, and corpus splitting.
//!
//! Exit codes: 0 success, 1 runtime/numerical failure, 2 usage/validation
//! failure. Flags override `--config key=value` files, which override
//! built-in defaults. All randomness flows from `--seed` through ChaCha8.

use clap::{Args, Parser, Subcommand};
use gptm::blocks;
use gptm::bow;
use gptm::checkpoint::{load_checkpoint, save_checkpoint, write_elbo_trace};
use gptm::matio;
use gptm::threads::ThreadPoolExecutor;
use gptm::tune;
use gptm_core::corpus::{split, Corpus};
use gptm_core::kernel::{
    build_knn_kernel, build_ml_kernel, labels_to_constraints, ConstraintSet, DiagonalChoice,
    KernelMatrix,
};
use gptm_core::predict::{
    gp_posterior, infer_test, knn_separability, perplexity_conditional, perplexity_joint,
};
use gptm_core::train::{train, TrainConfig, Variant};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gptm", version, about = "Kernel-aware correlated topic modeling")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a document kernel and write it as dense CSV.
    Kernel(KernelArgs),
    /// Train a model and write a checkpoint directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on held-out documents.
    Eval(EvalArgs),
    /// Cross-validated grid search over kernel parameters.
    Tune(TuneArgs),
    /// Split a corpus (and optionally its kernel/labels) into train/test.
    Split(SplitArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// key=value file; flags take precedence over it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// worker threads for E-steps and kernel rows (output is identical for
    /// any value)
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct KernelArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// nearest-neighbor kernel from document vectors
    #[arg(long, conflicts_with = "ml")]
    nn: bool,
    /// must-link kernel from constraints or labels
    #[arg(long)]
    ml: bool,
    /// sparse bag-of-words input (docword format)
    docword: PathBuf,
    /// output CSV path
    output: PathBuf,
    /// neighborhood size for --nn
    #[arg(short = 'k', long = "neighbors")]
    neighbors: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    /// explicit diagonal; omitted = Gershgorin automatic choice
    #[arg(long)]
    c: Option<f64>,
    /// must-link pairs, one "i j" per line (1-indexed)
    #[arg(long)]
    constraints: Option<PathBuf>,
    /// labels sidecar (one integer per line, negative = unlabeled)
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    allow_empty: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    docword: PathBuf,
    /// kernel CSV path, or the word "identity"
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(short = 'K', long)]
    topics: Option<usize>,
    /// full | si | ki | siki
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    em_tol: Option<f64>,
    #[arg(long)]
    estep_iters: Option<usize>,
    #[arg(long)]
    estep_tol: Option<f64>,
    #[arg(long)]
    allow_empty: bool,
    /// checkpoint output directory
    #[arg(long)]
    out: PathBuf,
    /// also export the training embedding (doc index, K coords, label)
    #[arg(long)]
    embed: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// held-out documents (docword format)
    #[arg(long)]
    test: PathBuf,
    /// precomputed kernel blocks
    #[arg(long)]
    kff: Option<PathBuf>,
    #[arg(long)]
    kstarf: Option<PathBuf>,
    #[arg(long)]
    kstarstar: Option<PathBuf>,
    /// identity | nn | ml (ignored when --kff/--kstarf/--kstarstar given)
    #[arg(long)]
    kernel: Option<String>,
    /// training corpus, needed to build nn blocks for fresh test documents
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(short = 'k', long = "neighbors")]
    neighbors: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    /// test-side must-link pairs (1-indexed within the test set)
    #[arg(long)]
    test_constraints: Option<PathBuf>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    em_tol: Option<f64>,
    #[arg(long)]
    estep_iters: Option<usize>,
    #[arg(long)]
    estep_tol: Option<f64>,
    /// test labels for the separability report
    #[arg(long)]
    labels: Option<PathBuf>,
    /// write the test embedding CSV
    #[arg(long)]
    embed: Option<PathBuf>,
    /// write the key=value report here (also printed to stdout)
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    allow_empty: bool,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    common: CommonArgs,
    docword: PathBuf,
    /// nn | ml
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(short = 'K', long)]
    topics: Option<usize>,
    /// comma-separated grids
    #[arg(long)]
    gammas: Option<String>,
    #[arg(long)]
    sigma2s: Option<String>,
    #[arg(long)]
    neighbors: Option<String>,
    #[arg(long)]
    cs: Option<String>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    allow_empty: bool,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    common: CommonArgs,
    docword: PathBuf,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// full-corpus kernel CSV; its train/test blocks are written alongside
    #[arg(long)]
    kernel: Option<PathBuf>,
    #[arg(long)]
    allow_empty: bool,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

// input-file problems are validation failures (exit 2); numerical or
// construction failures map to exit 1 at the call sites that produce them
impl From<gptm::IoFormatError> for CliError {
    fn from(e: gptm::IoFormatError) -> Self {
        CliError::Usage(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Kernel(args) => cmd_kernel(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Tune(args) => cmd_tune(args),
        Cmd::Split(args) => cmd_split(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

// ---------------------------------------------------------------------------
// config file and option resolution

struct ConfigFile(HashMap<String, String>);

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            for (idx, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    CliError::usage(format!("{}:{}: expected key=value", path.display(), idx + 1))
                })?;
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(ConfigFile(map))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| CliError::usage(format!("config key {key}: malformed value {raw:?}"))),
        }
    }
}

fn resolve<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

fn require<T>(flag: Option<T>, config: Option<T>, what: &str) -> Result<T, CliError> {
    flag.or(config).ok_or_else(|| CliError::usage(format!("{what} is required")))
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>, CliError> {
    raw.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| CliError::usage(format!("malformed {what} entry: {s:?}")))
        })
        .collect()
}

fn check_exists(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{what} not found: {}", path.display())))
    }
}

fn load_corpus(
    docword: &Path,
    vocab: Option<&Path>,
    allow_empty: bool,
) -> Result<Corpus, CliError> {
    check_exists(docword, "corpus file")?;
    let corpus = match vocab {
        Some(v) => {
            check_exists(v, "vocabulary file")?;
            bow::load_bow(docword, v, allow_empty)?
        }
        None => bow::load_bow_synthetic_vocab(docword, allow_empty)?,
    };
    if allow_empty {
        let empties = corpus.docs().iter().filter(|d| d.is_empty()).count();
        if empties > 0 {
            eprintln!("warning: {}: keeping {empties} empty document(s)", docword.display());
        }
    }
    Ok(corpus)
}

#[allow(clippy::too_many_arguments)]
fn train_config_from(
    topics: usize,
    seed: u64,
    variant: Variant,
    max_iters: Option<usize>,
    em_tol: Option<f64>,
    estep_iters: Option<usize>,
    estep_tol: Option<f64>,
) -> TrainConfig {
    let mut config = TrainConfig::new(topics, seed);
    if let Some(v) = max_iters {
        config.max_em_iters = v;
    }
    if let Some(v) = em_tol {
        config.em_rel_tol = v;
    }
    if let Some(v) = estep_iters {
        config.estep_max_iters = v;
    }
    if let Some(v) = estep_tol {
        config.estep_tol = v;
    }
    config.variant = variant;
    config
}

// ---------------------------------------------------------------------------
// kernel

fn cmd_kernel(args: KernelArgs) -> CliResult {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let threads = resolve(args.common.threads, cfg.get("threads")?, 1);
    let exec = ThreadPoolExecutor::new(threads);
    let gamma = resolve(args.gamma, cfg.get("gamma")?, 1.0);
    let diag = match args.c.or(cfg.get("c")?) {
        Some(c) => DiagonalChoice::Explicit(c),
        None => DiagonalChoice::Auto,
    };

    if !args.nn && !args.ml {
        return Err(CliError::usage("choose a kernel kind: --nn or --ml"));
    }

    let kernel = if args.nn {
        let corpus = load_corpus(&args.docword, None, args.allow_empty)?;
        let k = resolve(args.neighbors, cfg.get("neighbors")?, 10);
        let sigma2 = resolve(args.sigma2, cfg.get("sigma2")?, 1.0);
        build_knn_kernel(&corpus, k, gamma, sigma2, diag, &exec)
            .map_err(|e| CliError::runtime(e.to_string()))?
    } else {
        let corpus = load_corpus(&args.docword, None, args.allow_empty)?;
        let constraints = constraints_from_args(
            args.constraints.as_deref(),
            args.labels.as_deref(),
            corpus.num_docs(),
        )?;
        build_ml_kernel(&constraints, corpus.num_docs(), gamma, diag)
            .map_err(|e| CliError::runtime(e.to_string()))?
    };

    matio::write_matrix_csv(kernel.values(), &args.output)?;
    println!("kernel kind: {:?}", kernel.kind());
    println!("dimension: {}", kernel.dim());
    println!("chosen c: {}", kernel.params().c);
    println!("smallest eigenvalue estimate: {:.6e}", kernel.min_eigenvalue_estimate());
    Ok(())
}

fn constraints_from_args(
    constraints: Option<&Path>,
    labels: Option<&Path>,
    num_docs: usize,
) -> Result<ConstraintSet, CliError> {
    match (constraints, labels) {
        (Some(path), _) => {
            check_exists(path, "constraints file")?;
            Ok(matio::read_constraints(path)?)
        }
        (None, Some(path)) => {
            check_exists(path, "labels file")?;
            let labels = bow::load_labels(path, num_docs)?;
            Ok(labels_to_constraints(&labels))
        }
        (None, None) => Err(CliError::usage("--ml needs --constraints or --labels")),
    }
}

// ---------------------------------------------------------------------------
// train

fn load_kernel_arg(spec: &str, num_docs: usize) -> Result<KernelMatrix, CliError> {
    if spec == "identity" {
        return Ok(KernelMatrix::identity(num_docs));
    }
    let path = Path::new(spec);
    check_exists(path, "kernel file")?;
    let values = matio::read_matrix_csv(path)?;
    if values.rows() != values.cols() {
        return Err(CliError::usage(format!(
            "kernel file {} is {}x{}, expected square",
            path.display(),
            values.rows(),
            values.cols()
        )));
    }
    KernelMatrix::from_external(values, 3).map_err(|e| CliError::runtime(e.to_string()))
}

fn cmd_train(args: TrainArgs) -> CliResult {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let corpus = load_corpus(&args.docword, args.vocab.as_deref(), args.allow_empty)?;
    let topics = require(args.topics, cfg.get("topics")?, "--topics")?;
    let seed = resolve(args.common.seed, cfg.get("seed")?, 0);
    let threads = resolve(args.common.threads, cfg.get("threads")?, 1);
    let variant_name = resolve(args.variant, cfg.get("variant")?, "full".to_string());
    let variant = Variant::parse(&variant_name)
        .ok_or_else(|| CliError::usage(format!("unknown variant {variant_name:?}")))?;

    let kernel_spec = resolve(args.kernel, cfg.get("kernel")?, "identity".to_string());
    let kernel = load_kernel_arg(&kernel_spec, corpus.num_docs())?;
    if kernel.dim() != corpus.num_docs() {
        return Err(CliError::usage(format!(
            "kernel is {dim}x{dim} but corpus has {d} documents",
            dim = kernel.dim(),
            d = corpus.num_docs()
        )));
    }

    let config = train_config_from(
        topics,
        seed,
        variant,
        args.max_iters.or(cfg.get("max-iters")?),
        args.em_tol.or(cfg.get("em-tol")?),
        args.estep_iters.or(cfg.get("estep-iters")?),
        args.estep_tol.or(cfg.get("estep-tol")?),
    );
    let exec = ThreadPoolExecutor::new(threads);

    let result = train(&corpus, &kernel, &config, &exec)
        .map_err(|e| CliError::runtime(format!("training failed: {e}")))?;

    save_checkpoint(&args.out, &result, &config)?;
    write_elbo_trace(&result.elbo_trace, &args.out.join("elbo_trace.csv"))?;
    if result.line_search_failures > 0 {
        eprintln!(
            "note: {} E-step line searches hit the halving cap (kept current point)",
            result.line_search_failures
        );
    }

    if let Some(embed_path) = args.embed {
        let labels = match args.labels.as_deref() {
            Some(path) => Some(bow::load_labels(path, corpus.num_docs())?),
            None => None,
        };
        matio::write_embedding_csv(&result.model.f, labels.as_deref(), &embed_path)?;
    }

    println!("iterations: {}", result.iterations);
    println!("final elbo: {}", result.elbo_trace.last().unwrap());
    println!("checkpoint: {}", args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

fn cmd_eval(args: EvalArgs) -> CliResult {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    check_exists(&args.checkpoint, "checkpoint directory")?;
    check_exists(&args.checkpoint.join("meta.json"), "checkpoint meta.json")?;
    let loaded = load_checkpoint(&args.checkpoint)?;
    let model = loaded.model;
    let test = load_corpus(&args.test, None, args.allow_empty)?;
    if test.vocab_size() != model.vocab_size() {
        return Err(CliError::usage(format!(
            "test corpus has V={} but checkpoint was trained with V={}",
            test.vocab_size(),
            model.vocab_size()
        )));
    }
    let threads = resolve(args.common.threads, cfg.get("threads")?, 1);
    let exec = ThreadPoolExecutor::new(threads);

    let d = model.num_docs();
    let m = test.num_docs();

    // kernel blocks: precomputed files beat reconstruction
    let (k_ff, k_sf, k_ss) = match (&args.kff, &args.kstarf, &args.kstarstar) {
        (Some(ff), Some(sf), Some(ss)) => {
            check_exists(ff, "kff file")?;
            check_exists(sf, "kstarf file")?;
            check_exists(ss, "kstarstar file")?;
            (matio::read_matrix_csv(ff)?, matio::read_matrix_csv(sf)?, matio::read_matrix_csv(ss)?)
        }
        (None, None, None) => {
            let kind = resolve(args.kernel.clone(), cfg.get("kernel")?, "identity".to_string());
            match kind.as_str() {
                "identity" => {
                    let (sf, ss) = blocks::identity_blocks(d, m);
                    (gptm_core::mat::Mat::identity(d), sf, ss)
                }
                "nn" => {
                    let train_path = args
                        .train
                        .as_deref()
                        .ok_or_else(|| CliError::usage("--kernel nn needs --train"))?;
                    let train_corpus = load_corpus(train_path, None, args.allow_empty)?;
                    if train_corpus.num_docs() != d {
                        return Err(CliError::usage(format!(
                            "training corpus has {} documents but checkpoint has D={d}",
                            train_corpus.num_docs()
                        )));
                    }
                    let k = resolve(args.neighbors, cfg.get("neighbors")?, 10);
                    let gamma = resolve(args.gamma, cfg.get("gamma")?, 1.0);
                    let sigma2 = resolve(args.sigma2, cfg.get("sigma2")?, 1.0);
                    let diag = match args.c.or(cfg.get("c")?) {
                        Some(c) => DiagonalChoice::Explicit(c),
                        None => DiagonalChoice::Auto,
                    };
                    let kernel = build_knn_kernel(&train_corpus, k, gamma, sigma2, diag, &exec)
                        .map_err(|e| CliError::runtime(e.to_string()))?;
                    let (sf, ss) = blocks::nn_test_blocks(
                        &train_corpus,
                        &test,
                        k,
                        gamma,
                        sigma2,
                        kernel.params().c,
                    )
                    .map_err(|e| CliError::runtime(e.to_string()))?;
                    (kernel.values().clone(), sf, ss)
                }
                "ml" => {
                    let gamma = resolve(args.gamma, cfg.get("gamma")?, 1.0);
                    let c = require(args.c, cfg.get("c")?, "--c (ml evaluation)")?;
                    let test_constraints = match args.test_constraints.as_deref() {
                        Some(path) => {
                            check_exists(path, "test constraints file")?;
                            Some(matio::read_constraints(path)?)
                        }
                        None => None,
                    };
                    let (sf, ss) =
                        blocks::ml_test_blocks(test_constraints.as_ref(), d, m, gamma, c)
                            .map_err(|e| CliError::runtime(e.to_string()))?;
                    (gptm_core::mat::Mat::identity(d).scale(c), sf, ss)
                }
                other => return Err(CliError::usage(format!("unknown kernel kind {other:?}"))),
            }
        }
        _ => {
            return Err(CliError::usage(
                "provide all of --kff/--kstarf/--kstarstar or none of them",
            ))
        }
    };

    if k_ff.rows() != d || k_sf.rows() != m || k_sf.cols() != d || k_ss.rows() != m {
        return Err(CliError::usage("kernel block dimensions do not match checkpoint/test sizes"));
    }

    let config = train_config_from(
        model.n_topics(),
        resolve(args.common.seed, cfg.get("seed")?, loaded.meta.seed),
        model.variant,
        args.max_iters.or(cfg.get("max-iters")?),
        args.em_tol.or(cfg.get("em-tol")?),
        args.estep_iters.or(cfg.get("estep-iters")?),
        args.estep_tol.or(cfg.get("estep-tol")?),
    );

    let posterior = gp_posterior(&k_ff, &k_sf, &k_ss, &model.f, config.jitter)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let (f_star, state) = infer_test(&model, &test, &posterior, &config, &exec)
        .map_err(|e| CliError::runtime(e.to_string()))?;

    let perp_cond = perplexity_conditional(&model, &test, &f_star, &state)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let perp_joint = perplexity_joint(&model, &test, &f_star, &state, &posterior)
        .map_err(|e| CliError::runtime(e.to_string()))?;

    let mut report = vec![
        ("perplexity_conditional".to_string(), perp_cond.to_string()),
        ("perplexity_joint".to_string(), perp_joint.to_string()),
        ("test_docs".to_string(), m.to_string()),
        ("test_words".to_string(), test.total_words().to_string()),
    ];

    let labels = match args.labels.as_deref() {
        Some(path) => {
            check_exists(path, "labels file")?;
            Some(bow::load_labels(path, m)?)
        }
        None => None,
    };
    if let Some(labels) = &labels {
        let present: Vec<i64> = labels.iter().map(|l| l.unwrap_or(-1)).collect();
        let acc = knn_separability(&f_star, &present)
            .map_err(|e| CliError::runtime(e.to_string()))?;
        report.push(("knn_accuracy".to_string(), acc.to_string()));
    }
    if let Some(embed) = args.embed.as_deref() {
        matio::write_embedding_csv(&f_star, labels.as_deref(), embed)?;
    }

    for (k, v) in &report {
        println!("{k}={v}");
    }
    if let Some(path) = args.report.as_deref() {
        matio::write_report(&report, path)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// tune

fn cmd_tune(args: TuneArgs) -> CliResult {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let mut corpus = load_corpus(&args.docword, None, args.allow_empty)?;
    let topics = require(args.topics, cfg.get("topics")?, "--topics")?;
    let seed = resolve(args.common.seed, cfg.get("seed")?, 0);
    let threads = resolve(args.common.threads, cfg.get("threads")?, 1);
    let folds = resolve(args.folds, cfg.get("folds")?, 5);
    let kind = resolve(args.kind, cfg.get("kind")?, "nn".to_string());

    let mut config = train_config_from(topics, seed, Variant::Full, None, None, None, None);
    config.max_em_iters = resolve(args.max_iters, cfg.get("max-iters")?, 20);

    let exec = ThreadPoolExecutor::new(threads);
    let gammas: Vec<f64> =
        parse_list(&resolve(args.gammas, cfg.get("gammas")?, "1.0".to_string()), "gamma")?;

    let outcome = match kind.as_str() {
        "nn" => {
            let sigma2s: Vec<f64> = parse_list(
                &resolve(args.sigma2s, cfg.get("sigma2s")?, "1.0".to_string()),
                "sigma2",
            )?;
            let ks: Vec<usize> = parse_list(
                &resolve(args.neighbors, cfg.get("neighbors")?, "10".to_string()),
                "neighbors",
            )?;
            tune::tune_nn(&corpus, folds, &gammas, &sigma2s, &ks, &config, &exec)
        }
        "ml" => {
            let labels_path = args
                .labels
                .as_deref()
                .ok_or_else(|| CliError::usage("--kind ml needs --labels"))?;
            check_exists(labels_path, "labels file")?;
            let labels = bow::load_labels(labels_path, corpus.num_docs())?;
            corpus = corpus.with_labels(&labels);
            let cs: Vec<f64> =
                parse_list(&resolve(args.cs, cfg.get("cs")?, "2.0".to_string()), "c")?;
            tune::tune_ml(&corpus, folds, &gammas, &cs, &config, &exec)
        }
        other => return Err(CliError::usage(format!("unknown tune kind {other:?}"))),
    }
    .map_err(|e| CliError::runtime(e.to_string()))?;

    println!("folds: {}", outcome.folds);
    for cell in &outcome.cells {
        match &cell.outcome {
            Ok(p) => println!("[{}] mean_perplexity={p}", cell.params),
            Err(msg) => println!("[{}] invalid: {msg}", cell.params),
        }
    }
    match outcome.best {
        Some(idx) => println!("best: [{}]", outcome.cells[idx].params),
        None => return Err(CliError::runtime("no valid grid cell".to_string())),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// split

fn cmd_split(args: SplitArgs) -> CliResult {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let corpus = load_corpus(&args.docword, args.vocab.as_deref(), args.allow_empty)?;
    let fraction = resolve(args.fraction, cfg.get("fraction")?, 0.2);
    let seed = resolve(args.common.seed, cfg.get("seed")?, 0);

    let result = split(&corpus, fraction, seed).map_err(|e| CliError::usage(e.to_string()))?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.out_dir.display())))?;

    bow::save_docword(&result.train, &args.out_dir.join("train_docword.txt"))?;
    bow::save_docword(&result.test, &args.out_dir.join("test_docword.txt"))?;
    if args.vocab.is_some() {
        bow::save_vocab(&corpus, &args.out_dir.join("vocab.txt"))?;
    }
    matio::write_indices(&result.train_idx, &args.out_dir.join("train_indices.txt"))?;
    matio::write_indices(&result.test_idx, &args.out_dir.join("test_indices.txt"))?;

    if let Some(labels_path) = args.labels.as_deref() {
        check_exists(labels_path, "labels file")?;
        let labels = bow::load_labels(labels_path, corpus.num_docs())?;
        let pick = |idx: &[usize]| -> Vec<Option<i64>> { idx.iter().map(|&i| labels[i]).collect() };
        bow::save_labels(&pick(&result.train_idx), &args.out_dir.join("train_labels.txt"))?;
        bow::save_labels(&pick(&result.test_idx), &args.out_dir.join("test_labels.txt"))?;
    }

    if let Some(kernel_path) = args.kernel.as_deref() {
        check_exists(kernel_path, "kernel file")?;
        let full = matio::read_matrix_csv(kernel_path)?;
        if full.rows() != corpus.num_docs() || full.cols() != corpus.num_docs() {
            return Err(CliError::usage(format!(
                "kernel is {}x{} but corpus has {} documents",
                full.rows(),
                full.cols(),
                corpus.num_docs()
            )));
        }
        let (k_ff, k_sf, k_ss) =
            blocks::blocks_from_full_kernel(&full, &result.train_idx, &result.test_idx);
        matio::write_matrix_csv(&k_ff, &args.out_dir.join("kff.csv"))?;
        matio::write_matrix_csv(&k_sf, &args.out_dir.join("kstarf.csv"))?;
        matio::write_matrix_csv(&k_ss, &args.out_dir.join("kstarstar.csv"))?;
    }

    println!("train: {} documents", result.train.num_docs());
    println!("test: {} documents", result.test.num_docs());
    println!("output: {}", args.out_dir.display());
    Ok(())
}
