//! The `permpat` batch commands: `stats`, `select-k`, `mine` and
//! `simulate`.
//!
//! Every run writes its outputs plus a `manifest.json` into `--out-dir`.
//! The manifest echoes the configuration, the SHA-256 digest of each input
//! file, the seed, the tool version, the files written and the wall-clock
//! duration. A failed run still writes a manifest naming the stage that
//! failed. Exit codes: 0 success, 2 input or configuration error,
//! 3 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::engine::{fit, PatternClassifier};
use crate::error::{Error, Result};
use crate::evaluation::{
    average_pcp, error_curves_csv, error_rates, pattern_summary, pattern_summary_csv, pcp_csv,
    pcp_matrix, ErrorRates, DEFAULT_KL_SMOOTHING,
};
use crate::ingest::{
    filter_reputation, load_dataset_with, summary_stats, ColumnMapping, Dataset, Format,
    ReputationCriteria,
};
use crate::model::FitConfig;
use crate::selection::{instability, InstabilityReport, DEFAULT_REPETITIONS};
use crate::simulator::{marginal_probs, pcp_histogram, simulate_independent, DEFAULT_BINS};
use crate::derive_seed;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Mine permission request patterns from application datasets.
#[derive(Debug, Parser)]
#[command(name = "permpat", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Permission frequencies, price curve and rating tables.
    Stats {
        #[command(flatten)]
        common: Common,
        /// Rows in the permission frequency table.
        #[arg(long, default_value_t = 20)]
        top_n: usize,
    },
    /// Sweep K and report the instability of each.
    SelectK {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2)]
        k_min: usize,
        #[arg(long, default_value_t = 10)]
        k_max: usize,
        #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
        repetitions: usize,
        /// Annealing schedule as TOML (fields of the fit configuration).
        #[arg(long)]
        fit_config: Option<PathBuf>,
    },
    /// Fit K patterns on high-reputation applications and evaluate them on
    /// the held-out and low-reputation sets.
    Mine {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k: usize,
        /// Reputation thresholds as TOML.
        #[arg(long)]
        reputation: Option<PathBuf>,
        /// Overrides the held-out test size of the reputation thresholds.
        #[arg(long)]
        test_size: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_KL_SMOOTHING)]
        smoothing: f64,
        #[arg(long)]
        fit_config: Option<PathBuf>,
    },
    /// Compare pairwise conditional probabilities with an
    /// independent-requests simulation.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        /// Simulated applications; defaults to the input size.
        #[arg(long)]
        n: Option<usize>,
    },
}

#[derive(Debug, Args, Serialize)]
pub struct Common {
    #[arg(long)]
    pub input: PathBuf,
    /// Input format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Column mapping for inputs that do not use the default layout.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 1 makes every output bit-reproducible.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Stats { .. } => "stats",
            Command::SelectK { .. } => "select-k",
            Command::Mine { .. } => "mine",
            Command::Simulate { .. } => "simulate",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Stats { common, .. }
            | Command::SelectK { common, .. }
            | Command::Mine { common, .. }
            | Command::Simulate { common, .. } => common,
        }
    }

    fn echo(&self) -> Value {
        let common = serde_json::to_value(self.common()).unwrap_or(Value::Null);
        let specific = match self {
            Command::Stats { top_n, .. } => json!({ "top_n": top_n }),
            Command::SelectK {
                k_min,
                k_max,
                repetitions,
                fit_config,
                ..
            } => json!({
                "k_min": k_min,
                "k_max": k_max,
                "repetitions": repetitions,
                "fit_config": fit_config,
            }),
            Command::Mine {
                k,
                reputation,
                test_size,
                smoothing,
                fit_config,
                ..
            } => json!({
                "k": k,
                "reputation": reputation,
                "test_size": test_size,
                "smoothing": smoothing,
                "fit_config": fit_config,
            }),
            Command::Simulate { bins, n, .. } => json!({ "bins": bins, "n": n }),
        };
        json!({ "common": common, "command": specific })
    }
}

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one command run, written as `manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<String>,
    pub duration_seconds: f64,
    pub status: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    /// Command-specific results (selected K, failed K values, averages).
    pub results: Value,
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_INPUT
            } else {
                EXIT_OK
            }
        }
    }
}

pub fn run(cli: &Cli) -> i32 {
    let command = &cli.command;
    let common = command.common();
    let mut run = Run::new(command.name(), common.out_dir.clone());
    let outcome = match thread_pool(common.threads) {
        Ok(pool) => pool.install(|| execute(command, &mut run)),
        Err(e) => Err(e),
    };
    let code = match &outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("permpat {}: {e}", command.name());
            exit_code(e)
        }
    };
    match run.finish(command, outcome.err()) {
        Ok(path) => {
            if code == EXIT_OK {
                println!("wrote {}", path.display());
            }
            code
        }
        Err(e) => {
            eprintln!("permpat {}: cannot write manifest: {e}", command.name());
            if code == EXIT_OK {
                exit_code(&e)
            } else {
                code
            }
        }
    }
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))
}

/// Output bookkeeping shared by all commands.
struct Run {
    command: &'static str,
    out_dir: PathBuf,
    started: Instant,
    stage: String,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
    results: serde_json::Map<String, Value>,
}

impl Run {
    fn new(command: &'static str, out_dir: PathBuf) -> Self {
        Run {
            command,
            out_dir,
            started: Instant::now(),
            stage: "start".into(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            results: serde_json::Map::new(),
        }
    }

    fn stage(&mut self, name: &str) {
        self.stage = name.to_string();
    }

    fn record_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        let path = self.out_dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.write(name, &(text + "\n"))
    }

    fn result(&mut self, key: &str, value: impl Serialize) {
        self.results
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    fn finish(mut self, command: &Command, error: Option<Error>) -> Result<PathBuf> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            config: command.echo(),
            inputs: std::mem::take(&mut self.inputs),
            seed: command.common().seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: self.outputs.clone(),
            duration_seconds: self.started.elapsed().as_secs_f64(),
            status: if error.is_some() { "failed" } else { "ok" }.to_string(),
            failed_stage: error.as_ref().map(|_| self.stage.clone()),
            error: error.map(|e| e.to_string()),
            results: Value::Object(std::mem::take(&mut self.results)),
        };
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        let path = self.out_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

fn execute(command: &Command, run: &mut Run) -> Result<()> {
    match command {
        Command::Stats { common, top_n } => cmd_stats(common, *top_n, run),
        Command::SelectK {
            common,
            k_min,
            k_max,
            repetitions,
            fit_config,
        } => cmd_select_k(common, *k_min, *k_max, *repetitions, fit_config.as_deref(), run),
        Command::Mine {
            common,
            k,
            reputation,
            test_size,
            smoothing,
            fit_config,
        } => {
            let options = MineOptions {
                k: *k,
                reputation: reputation.as_deref(),
                test_size: *test_size,
                smoothing: *smoothing,
                fit_config: fit_config.as_deref(),
            };
            cmd_mine(common, &options, run)
        }
        Command::Simulate { common, bins, n } => cmd_simulate(common, *bins, *n, run),
    }
}

fn load(common: &Common, run: &mut Run) -> Result<Dataset> {
    run.stage("load");
    let format = common
        .format
        .or_else(|| Format::from_path(&common.input))
        .unwrap_or(Format::Csv);
    let mapping = match &common.mapping {
        Some(path) => {
            run.record_input(path)?;
            ColumnMapping::load(path)?
        }
        None => ColumnMapping::default(),
    };
    run.record_input(&common.input)?;
    let ds = load_dataset_with(&common.input, format, &mapping)?;
    run.result("applications", ds.len());
    run.result("permissions", ds.vocabulary().len());
    run.result("missing_ratings", ds.missing_ratings());
    Ok(ds)
}

fn fit_config(path: Option<&Path>, seed: u64, run: &mut Run) -> Result<FitConfig> {
    let config = match path {
        Some(p) => {
            run.record_input(p)?;
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str::<FitConfig>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => FitConfig::default(),
    };
    let config = config.with_seed(seed);
    config.validate()?;
    run.result("fit_config", &config);
    Ok(config)
}

/// Writes the frequency, price and rating tables of the dataset.
pub fn cmd_stats_files() -> [&'static str; 5] {
    [
        "permission_frequencies.csv",
        "price_curve.csv",
        "ratings.csv",
        "rating_histograms.csv",
        "summary.json",
    ]
}

fn cmd_stats(common: &Common, top_n: usize, run: &mut Run) -> Result<()> {
    let ds = load(common, run)?;
    run.stage("summarize");
    let stats = summary_stats(&ds, top_n);
    let [freq, price, ratings, hist, summary] = cmd_stats_files();
    run.write(freq, &stats.frequencies_csv()?)?;
    run.write(price, &stats.price_csv()?)?;
    run.write(ratings, &stats.ratings_csv()?)?;
    run.write(hist, &stats.histograms_csv()?)?;
    run.write_json(
        summary,
        &json!({
            "applications": stats.applications,
            "permissions": stats.permissions,
            "missing_ratings": stats.missing_ratings,
            "rated_applications": stats.ratings.len(),
            "top_permissions": stats.top_permissions,
        }),
    )
}

fn cmd_select_k(
    common: &Common,
    k_min: usize,
    k_max: usize,
    repetitions: usize,
    fit_path: Option<&Path>,
    run: &mut Run,
) -> Result<()> {
    let ds = load(common, run)?;
    run.stage("configure");
    let config = fit_config(fit_path, common.seed, run)?;
    let x = ds.matrix();
    if k_min == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if k_min > k_max {
        return Err(Error::Config(format!("k-min {k_min} exceeds k-max {k_max}")));
    }
    if k_max > x.cols() {
        return Err(Error::Config(format!(
            "k-max {k_max} exceeds the number of permissions D = {}",
            x.cols()
        )));
    }
    if repetitions == 0 {
        return Err(Error::Config("at least one repetition is required".into()));
    }

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for k in k_min..=k_max {
        run.stage(&format!("instability K={k}"));
        match instability(&x, k, repetitions, &config) {
            Ok(row) => rows.push(row),
            Err(e) => {
                eprintln!("permpat select-k: K = {k} failed: {e}");
                failures.push(json!({ "k": k, "error": e.to_string() }));
            }
        }
    }
    run.result("failed_k", &failures);
    run.stage("report");
    let report = InstabilityReport::from_rows(rows)
        .map_err(|_| Error::Numeric("every K in the range failed".into()))?;
    run.write("instability.csv", &report.to_csv()?)?;
    run.result("selected_k", report.selected_k);
    run.result(
        "median_instability",
        report
            .rows
            .iter()
            .map(|r| json!({ "k": r.k, "median": r.median, "std": r.std }))
            .collect::<Vec<_>>(),
    );
    Ok(())
}

struct MineOptions<'a> {
    k: usize,
    reputation: Option<&'a Path>,
    test_size: Option<usize>,
    smoothing: f64,
    fit_config: Option<&'a Path>,
}

#[derive(Serialize)]
struct SetEvaluation {
    applications: usize,
    mean_fn: f64,
    mean_fp: f64,
    mean_total: f64,
}

impl SetEvaluation {
    fn new(rates: &ErrorRates) -> Self {
        SetEvaluation {
            applications: rates.len(),
            mean_fn: rates.mean_fn,
            mean_fp: rates.mean_fp,
            mean_total: rates.mean_total(),
        }
    }
}

fn cmd_mine(common: &Common, options: &MineOptions<'_>, run: &mut Run) -> Result<()> {
    let ds = load(common, run)?;
    run.stage("configure");
    if options.k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let mut criteria = match options.reputation {
        Some(p) => {
            run.record_input(p)?;
            ReputationCriteria::load(p)?
        }
        None => ReputationCriteria::default(),
    };
    if let Some(t) = options.test_size {
        criteria.test_size = t;
    }
    criteria.seed = derive_seed(common.seed, 0);
    run.result("reputation", &criteria);
    let config = fit_config(options.fit_config, derive_seed(common.seed, 1), run)?;

    run.stage("filter");
    let split = filter_reputation(&ds, &criteria)?;
    run.result("train_size", split.train.len());
    run.result("test_high_size", split.test_high.len());
    run.result("test_low_size", split.test_low.len());
    if split.train.is_empty() {
        return Err(Error::Config("no high-reputation applications left for training".into()));
    }

    run.stage("fit");
    let train_x = split.train.matrix();
    let model = fit(&train_x, options.k, &config)?.sorted_by_frequency();
    run.write("model.json", &(model.to_json()? + "\n"))?;

    run.stage("evaluate");
    let classifier = PatternClassifier::from_factorization(&model);
    let train_rates = error_rates(&train_x, &model.z, &model.u)?;
    let high_x = split.test_high.matrix();
    let high_rates = error_rates(&high_x, &classifier.assign_all(&high_x)?, &model.u)?;
    let low_x = split.test_low.matrix();
    let low_rates = error_rates(&low_x, &classifier.assign_all(&low_x)?, &model.u)?;
    run.write(
        "error_curves.csv",
        &error_curves_csv(&[
            ("train", &train_rates),
            ("test_high", &high_rates),
            ("test_low", &low_rates),
        ])?,
    )?;

    let categories = split.train.categories();
    let summary = pattern_summary(
        &model.z,
        &model.u,
        ds.vocabulary(),
        Some(&categories),
        options.smoothing,
    )?;
    run.write("pattern_summary.csv", &pattern_summary_csv(&summary)?)?;

    let pcp = pcp_matrix(&ds.matrix());
    run.write("pcp.csv", &pcp_csv(&pcp, ds.vocabulary())?)?;

    run.write_json(
        "evaluation.json",
        &json!({
            "k": options.k,
            "epsilon": model.epsilon,
            "r": model.r,
            "log_likelihood": model.log_likelihood,
            "train": SetEvaluation::new(&train_rates),
            "test_high": SetEvaluation::new(&high_rates),
            "test_low": SetEvaluation::new(&low_rates),
            "average_pcp": average_pcp(&pcp),
            "patterns": summary,
        }),
    )?;
    run.result("log_likelihood", model.log_likelihood);
    Ok(())
}

fn cmd_simulate(common: &Common, bins: usize, n: Option<usize>, run: &mut Run) -> Result<()> {
    let ds = load(common, run)?;
    run.stage("simulate");
    let x = ds.matrix();
    let p = marginal_probs(&x)?;
    let n = n.unwrap_or(x.rows());
    let sim = simulate_independent(&p, n, derive_seed(common.seed, 0))?;

    run.stage("compare");
    let real_pcp = pcp_matrix(&x);
    let sim_pcp = pcp_matrix(&sim);
    let hist = pcp_histogram(&real_pcp.values, &sim_pcp.values, bins)?;
    run.write("pcp_histogram.csv", &hist.to_csv()?)?;
    let real_avg = average_pcp(&real_pcp);
    let sim_avg = average_pcp(&sim_pcp);
    run.write_json(
        "simulation.json",
        &json!({
            "applications_real": x.rows(),
            "applications_simulated": n,
            "average_pcp_real": real_avg,
            "average_pcp_simulated": sim_avg,
        }),
    )?;
    run.result("average_pcp_real", real_avg.value);
    run.result("average_pcp_simulated", sim_avg.value);
    Ok(())
}
