//! Command-line front end: `train`, `eval`, `gradcheck` and `analyze`.
//!
//! Reports go to stdout (JSON or CSV), progress and summaries to stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{angle_grid, descent_monte_carlo, norm_experiment};
use crate::error::{Error, Result};
use crate::eval::{evaluate, AnalogyDataset, SimilarityDataset};
use crate::gradcheck::{CheckMode, GradcheckRun, DEFAULT_EPSILON};
use crate::io::{Embeddings, Format, Side};
use crate::model::Real;
use crate::trainer::{train, LossLog, Mode, TimingReport, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "wordvec", version, about = "Negative-sampling word2vec: train, evaluate, check gradients")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train embeddings on a whitespace-tokenized corpus (one sentence per line).
    Train(TrainArgs),
    /// Score embeddings on similarity and analogy datasets.
    Eval(EvalArgs),
    /// Compare analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Diagnostics for the unnormalized CBOW update.
    Analyze(AnalyzeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

/// Hyperparameters shared by `train` and `analyze norms`.
#[derive(Clone, Debug, Args)]
pub struct TrainOptions {
    /// Training objective.
    #[arg(long, value_enum, default_value_t = Mode::CbowCorrect)]
    pub mode: Mode,
    /// Use the unnormalized CBOW source update (same as --mode cbow_faulty).
    #[arg(long)]
    pub faulty: bool,
    /// Embedding dimension.
    #[arg(long, default_value_t = 300)]
    pub dim: usize,
    /// Maximum context half-width; each position samples b in 1..=window.
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    /// Negative samples per positive pair.
    #[arg(long, default_value_t = 5)]
    pub negative: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    /// Initial learning rate [default: 0.075 for cbow_correct, 0.025 otherwise].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Final learning rate as a fraction of the initial one.
    #[arg(long, default_value_t = 1e-4)]
    pub lr_floor: f64,
    /// Discard words seen fewer times.
    #[arg(long, default_value_t = 10)]
    pub min_count: u64,
    /// Frequent-word subsampling threshold; 0 disables.
    #[arg(long, default_value_t = 1e-3)]
    pub sample: f64,
    /// Exponent applied to counts in the noise distribution.
    #[arg(long, default_value_t = 0.75)]
    pub noise_exponent: f64,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Tokens between loss-log points.
    #[arg(long, default_value_t = 1_000_000)]
    pub loss_interval: u64,
    /// Approximate σ with a lookup table instead of computing it exactly.
    #[arg(long)]
    pub sigmoid_table: bool,
    /// Sentences buffered between the reader and the workers.
    #[arg(long, default_value_t = 100_000)]
    pub buffer_sentences: usize,
}

impl TrainOptions {
    pub fn resolve_mode(&self) -> Result<Mode> {
        match (self.mode, self.faulty) {
            (Mode::Sg, true) => Err(Error::Config(
                "--faulty applies to CBOW only; skip-gram has no faulty variant".into(),
            )),
            (Mode::CbowCorrect, true) => Ok(Mode::CbowFaulty),
            (mode, _) => Ok(mode),
        }
    }

    pub fn to_config(&self) -> Result<TrainConfig> {
        let mode = self.resolve_mode()?;
        let config = TrainConfig {
            mode,
            dim: self.dim,
            c_max: self.window,
            negatives: self.negative,
            epochs: self.epochs,
            lr0: self.lr.unwrap_or(mode.default_lr()),
            lr_floor_fraction: self.lr_floor,
            min_count: self.min_count,
            subsample_threshold: (self.sample > 0.0).then_some(self.sample),
            noise_exponent: self.noise_exponent,
            threads: self.threads,
            seed: self.seed,
            loss_log_interval: self.loss_interval,
            sigmoid_table: self.sigmoid_table,
            buffer_sentences: self.buffer_sentences,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus file.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Where to write the (source) embeddings.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Which matrix goes to --output.
    #[arg(long, value_enum, default_value_t = Side::Source)]
    pub side: Side,
    /// Also write the target (output) matrix here.
    #[arg(long)]
    pub save_target: Option<PathBuf>,
    /// Loss curve as `tokens,loss` CSV.
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
    /// Also write the run manifest here (it is always printed to stdout).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
    #[command(flatten)]
    pub options: TrainOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub vocab_size: usize,
    pub tokens: u64,
}

/// Everything needed to repeat a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub corpus: PathBuf,
    pub output: PathBuf,
    pub format: Format,
    pub side: Side,
    pub precision: Precision,
    pub config: TrainConfig,
    pub seed: u64,
    pub corpus_stats: CorpusStats,
    pub timing: TimingReport,
    pub save_seconds: f64,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Embedding file.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Similarity dataset as NAME=PATH (repeatable).
    #[arg(long = "similarity", value_parser = parse_named)]
    pub similarity: Vec<(String, PathBuf)>,
    /// Analogy dataset as NAME=PATH (repeatable).
    #[arg(long = "analogy", value_parser = parse_named)]
    pub analogy: Vec<(String, PathBuf)>,
    /// Seed of the dev/test split.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Match words case-sensitively.
    #[arg(long)]
    pub case_sensitive: bool,
    /// Also write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn parse_named(s: &str) -> std::result::Result<(String, PathBuf), String> {
    if let Some((name, path)) = s.split_once('=') {
        if !name.is_empty() && !path.is_empty() {
            return Ok((name.to_owned(), PathBuf::from(path)));
        }
    }
    let path = PathBuf::from(s);
    match path.file_stem() {
        Some(stem) => Ok((stem.to_string_lossy().into_owned(), path)),
        None => Err(format!("expected NAME=PATH or a file path, got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value_t = CheckMode::Correct)]
    pub mode: CheckMode,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Embedding dimensions to cycle through.
    #[arg(long, value_delimiter = ',', default_value = "2,8")]
    pub dims: Vec<usize>,
    /// Context sizes C to cycle through.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub contexts: Vec<usize>,
    /// Negative counts k to cycle through.
    #[arg(long, value_delimiter = ',', default_value = "1,5,20")]
    pub negatives: Vec<usize>,
    /// Maximum allowed relative error per coordinate.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Print the full JSON report instead of a summary.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(subcommand)]
    pub what: Analysis,
}

#[derive(Debug, Subcommand)]
pub enum Analysis {
    /// Closed-form cosine between the faulty and true gradients over a (C, k) grid, as `C,k,cosine` CSV.
    AngleGrid {
        #[arg(long, default_value_t = 1)]
        c_min: u64,
        #[arg(long, default_value_t = 100)]
        c_max: u64,
        #[arg(long, default_value_t = 0)]
        k_min: u64,
        #[arg(long, default_value_t = 1000)]
        k_max: u64,
    },
    /// Monte Carlo check that the faulty update is still a descent direction.
    Descent {
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        c_min: usize,
        #[arg(long, default_value_t = 20)]
        c_max: usize,
        #[arg(long, default_value_t = 1)]
        k_min: usize,
        #[arg(long, default_value_t = 20)]
        k_max: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Mean embedding norms per (mode, window) as `mode,c_max,source_norm,target_norm` CSV.
    Norms {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10")]
        windows: Vec<usize>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "cbow_correct,cbow_faulty")]
        modes: Vec<Mode>,
        /// Use --lr for every mode instead of each mode's default.
        #[arg(long)]
        keep_lr: bool,
        #[command(flatten)]
        options: TrainOptions,
    },
    /// Re-emit a trainer loss log as `tokens,loss` CSV.
    LossCurve {
        #[arg(long)]
        log: PathBuf,
    },
}

/// Parse `argv` and run; errors are reported on stderr.
pub fn main_with_args<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(args) => run_train(&args).map(|m| {
            println!("{}", to_json(&m));
            ExitCode::SUCCESS
        }),
        Command::Eval(args) => run_eval(&args),
        Command::Gradcheck(args) => run_gradcheck(&args),
        Command::Analyze(args) => run_analyze(args.what),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Train, save and return the manifest (also written to `--manifest`).
pub fn run_train(args: &TrainArgs) -> Result<RunManifest> {
    let config = args.options.to_config()?;
    eprintln!("training {} on {}", config.mode, args.corpus.display());
    let (vocab, log, timing, save_seconds) = match args.precision {
        Precision::F32 => train_and_save::<f32>(args, &config)?,
        Precision::F64 => train_and_save::<f64>(args, &config)?,
    };
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        corpus: args.corpus.clone(),
        output: args.output.clone(),
        format: args.format,
        side: args.side,
        precision: args.precision,
        seed: config.seed,
        config,
        corpus_stats: vocab,
        timing,
        save_seconds,
        final_loss: log.last(),
    };
    if let Some(path) = &args.manifest {
        write_file(path, &to_json(&manifest))?;
    }
    Ok(manifest)
}

fn train_and_save<F: Real>(
    args: &TrainArgs,
    config: &TrainConfig,
) -> Result<(CorpusStats, LossLog, TimingReport, f64)> {
    let out = train::<F>(&args.corpus, config)?;
    let start = Instant::now();
    Embeddings::from_model(&out.model, &out.vocab, args.side).save(&args.output, args.format)?;
    if let Some(path) = &args.save_target {
        Embeddings::from_model(&out.model, &out.vocab, Side::Target).save(path, args.format)?;
    }
    if let Some(path) = &args.loss_log {
        out.loss_log.write_csv(path)?;
    }
    let stats = CorpusStats {
        vocab_size: out.vocab.len(),
        tokens: out.vocab.total_tokens(),
    };
    Ok((stats, out.loss_log, out.timing, start.elapsed().as_secs_f64()))
}

fn run_eval(args: &EvalArgs) -> Result<ExitCode> {
    let emb = Embeddings::load(&args.embeddings, args.format, true)?;
    let similarity = args
        .similarity
        .iter()
        .map(|(name, path)| Ok((name.clone(), SimilarityDataset::load(path)?)))
        .collect::<Result<Vec<_>>>()?;
    let analogy = args
        .analogy
        .iter()
        .map(|(name, path)| Ok((name.clone(), AnalogyDataset::load(path)?)))
        .collect::<Result<Vec<_>>>()?;
    if similarity.is_empty() && analogy.is_empty() {
        return Err(Error::Config("give at least one --similarity or --analogy dataset".into()));
    }
    let report = evaluate(&emb, &similarity, &analogy, args.split_seed, !args.case_sensitive);
    let json = to_json(&report);
    if let Some(path) = &args.report {
        write_file(path, &json)?;
    }
    println!("{json}");
    Ok(ExitCode::SUCCESS)
}

fn run_gradcheck(args: &GradcheckArgs) -> Result<ExitCode> {
    if args.trials == 0 || args.dims.is_empty() || args.contexts.is_empty() || args.negatives.is_empty() {
        return Err(Error::Config("gradcheck needs trials and non-empty dims/contexts/negatives".into()));
    }
    if args.dims.contains(&0) || args.contexts.contains(&0) {
        return Err(Error::Config("dims and contexts must be positive".into()));
    }
    if !(args.tol > 0.0 && args.epsilon > 0.0) {
        return Err(Error::Config("tolerance and epsilon must be positive".into()));
    }
    let summary = GradcheckRun {
        mode: args.mode,
        trials: args.trials,
        dims: args.dims.clone(),
        contexts: args.contexts.clone(),
        negatives: args.negatives.clone(),
        rel_tol: args.tol,
        epsilon: args.epsilon,
        seed: args.seed,
    }
    .run();
    if args.json {
        println!("{}", to_json(&summary));
    } else {
        let failed: Vec<_> = summary.trials.iter().filter(|t| !t.report.passed).collect();
        println!(
            "{}: {} / {} trials passed at rel_tol {:e} (max relative error {:.3e})",
            if summary.all_passed { "PASS" } else { "FAIL" },
            summary.trials.len() - failed.len(),
            summary.trials.len(),
            summary.rel_tol,
            summary.max_rel_error,
        );
        for t in failed.iter().take(5) {
            println!(
                "  d={} C={} k={}: error {:.3e} at {:?}",
                t.dim, t.context, t.negatives, t.report.max_rel_error, t.report.worst
            );
        }
    }
    Ok(if summary.all_passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn run_analyze(what: Analysis) -> Result<ExitCode> {
    match what {
        Analysis::AngleGrid { c_min, c_max, k_min, k_max } => {
            let grid = angle_grid((c_min, c_max), (k_min, k_max))?;
            print!("{}", grid.to_csv());
            let m = grid.minimum();
            eprintln!("minimum cosine {:.5} at C={} k={}", m.cosine, m.c, m.k);
            Ok(ExitCode::SUCCESS)
        }
        Analysis::Descent { trials, c_min, c_max, k_min, k_max, seed, json } => {
            if trials == 0 || c_min == 0 || c_min > c_max || k_min > k_max {
                return Err(Error::Config("need trials > 0, 1 <= c-min <= c-max, k-min <= k-max".into()));
            }
            let s = descent_monte_carlo(trials, (c_min, c_max), (k_min, k_max), seed);
            if json {
                println!("{}", to_json(&s));
            } else {
                println!(
                    "{}: {} / {} nonzero instances descend (min cosine {:.5}, max structural deviation {:.3e})",
                    if s.all_passed() { "PASS" } else { "FAIL" },
                    s.descent,
                    s.nonzero,
                    s.min_cosine,
                    s.max_structural_deviation,
                );
            }
            Ok(if s.all_passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Analysis::Norms { corpus, windows, modes, keep_lr, options } => {
            if windows.is_empty() || modes.is_empty() {
                return Err(Error::Config("need at least one window and one mode".into()));
            }
            let base = options.to_config()?;
            let report = norm_experiment(&corpus, &windows, &modes, &base, keep_lr)?;
            print!("{}", report.to_csv());
            Ok(ExitCode::SUCCESS)
        }
        Analysis::LossCurve { log } => {
            let log = LossLog::read_csv(&log)?;
            println!("tokens,loss");
            for p in &log.points {
                println!("{},{}", p.tokens, p.loss);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
