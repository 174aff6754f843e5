//! Command implementations behind the `fencenet` binary.
//!
//! Every command writes its fully resolved configuration beside its outputs;
//! feeding that file back through `--config` reproduces the run.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use fencenet::dataset::{prepare_samples, synth_generate, Dataset, Preprocessing, SynthConfig};
use fencenet::evaluation::{
    ablation_table, predict_dataset, run_ablation_suite, run_cv_pi, run_random_split,
    write_predictions_csv, EvaluationReport, Experiment, SuiteConfig, Variant, VideoPrediction,
};
use fencenet::models::{presets, Model, ModelConfig};
use fencenet::rng::derive_seed;
use fencenet::training::{train, TrainConfig, TrainLog, TRAIN_LOG_FILE};
use fencenet::{Error, Result};

pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const PREPROCESSING_FILE: &str = "preprocessing.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const CONFUSION_CSV: &str = "confusion.csv";
pub const PREDICTIONS_CSV: &str = "predictions.csv";

/// Process exit status for an error: 3 for shape or compatibility problems,
/// 4 for numerical failures, 2 for everything else (input, config, io).
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Dimension(_) => 3,
        Error::Numerical(_) => 4,
        _ => 2,
    }
}

/// One train or cross-validation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    /// Named bundled model config, used when neither `model` nor
    /// `model_config` is set.
    pub preset: Option<String>,
    /// Path to a model config JSON file.
    pub model_config: Option<PathBuf>,
    /// Inline model config; takes precedence over `model_config` and `preset`.
    pub model: Option<ModelConfig>,
    /// Ablation row to derive from the base model and preprocessing. Cleared
    /// once applied; `label` keeps its name.
    pub variant: Option<Variant>,
    pub label: Option<String>,
    pub preprocessing: Preprocessing,
    pub train: TrainConfig,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest: None,
            preset: None,
            model_config: None,
            model: None,
            variant: None,
            label: None,
            preprocessing: Preprocessing::default(),
            train: TrainConfig::default(),
            out: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("config not found: {} ({e})", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Expand every default: inline model, variant applied, seeds filled in.
    pub fn resolve(mut self) -> Result<Self> {
        let manifest = self
            .manifest
            .as_ref()
            .ok_or_else(|| Error::Config("no manifest given".into()))?;
        if !manifest.is_file() {
            return Err(Error::Input(format!("manifest not found: {}", manifest.display())));
        }
        let channels = self.preprocessing.channels();
        let model = match (self.model.take(), self.model_config.take()) {
            (Some(m), _) => m,
            (None, Some(path)) => {
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    Error::Input(format!("model config not found: {} ({e})", path.display()))
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            (None, None) => presets::by_name(self.preset.as_deref().unwrap_or("fencenet"), channels)?,
        };
        let (model, preprocessing) = match self.variant.take() {
            Some(v) => {
                self.label.get_or_insert_with(|| v.name().to_string());
                v.apply(model, self.preprocessing.clone())?
            }
            None => (model, self.preprocessing.clone()),
        };
        let model = model.with_input_channels(preprocessing.channels());
        model.validate()?;
        self.train.validate()?;
        self.train.seed = self.seed;
        self.label
            .get_or_insert_with(|| self.preset.clone().unwrap_or_else(|| format!("{:?}", model.kind).to_lowercase()));
        self.model = Some(model);
        self.preprocessing = preprocessing;
        Ok(self)
    }

    fn experiment(&self) -> Experiment {
        Experiment {
            model: self.model.clone().expect("resolved config has a model"),
            train: self.train.clone(),
            preprocessing: self.preprocessing.clone(),
            seed: self.seed,
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(RUN_CONFIG_FILE), self)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Load a manifest and refuse an empty one.
pub fn load_nonempty(path: &Path) -> Result<Dataset> {
    let dataset = Dataset::load_manifest(path)?;
    if dataset.is_empty() {
        return Err(Error::Input(format!("manifest {} contains no videos", path.display())));
    }
    Ok(dataset)
}

pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub log: TrainLog,
}

/// Train one model on every video of the manifest.
pub fn cmd_train(config: RunConfig) -> Result<TrainOutcome> {
    let config = config.resolve()?;
    let dataset = load_nonempty(config.manifest.as_deref().expect("resolved"))?;
    let out = &config.out;
    let checkpoint = out.join(CHECKPOINT_DIR);
    std::fs::create_dir_all(&checkpoint)?;
    config.write(out)?;

    let experiment = config.experiment();
    let model_cfg = experiment.resolved_model(&dataset);
    let windows = prepare_samples(
        &dataset,
        &config.preprocessing,
        derive_seed(config.seed, "train-data"),
        model_cfg.input_length,
    )?;
    let model: Model = Model::build(&model_cfg, derive_seed(config.seed, "init"))?;
    let (model, log) = train(model, &windows, &config.train)?;
    model.save_checkpoint(&checkpoint)?;
    write_json(&checkpoint.join(PREPROCESSING_FILE), &config.preprocessing)?;
    log.write_jsonl(&checkpoint.join(TRAIN_LOG_FILE))?;
    Ok(TrainOutcome { checkpoint, log })
}

/// Write a report as JSON, text table, confusion CSV and predictions CSV.
pub fn write_report(report: &EvaluationReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    report.write_json(&dir.join(REPORT_JSON))?;
    std::fs::write(dir.join(REPORT_TXT), report.to_table())?;
    report.write_confusion_csv(&dir.join(CONFUSION_CSV))?;
    report.write_predictions_csv(&dir.join(PREDICTIONS_CSV))
}

/// Leave-one-fencer-out cross validation, or a single stratified random
/// split when `random_split` holds the test fraction.
pub fn cmd_crossval(config: RunConfig, jobs: usize, random_split: Option<f64>) -> Result<EvaluationReport> {
    let config = config.resolve()?;
    let dataset = load_nonempty(config.manifest.as_deref().expect("resolved"))?;
    std::fs::create_dir_all(&config.out)?;
    config.write(&config.out)?;
    let label = config.label.clone().unwrap_or_default();
    let experiment = config.experiment();
    let report = match random_split {
        Some(fraction) => run_random_split(&dataset, fraction, &experiment, &label)?,
        None => run_cv_pi(&dataset, &experiment, &label, jobs)?,
    };
    write_report(&report, &config.out)?;
    Ok(report)
}

/// Classify every video of `manifest` with a saved checkpoint; writes
/// `predictions.csv` into `out`.
pub fn cmd_predict(checkpoint: &Path, manifest: &Path, out: &Path, seed: u64) -> Result<Vec<VideoPrediction>> {
    let model: Model = Model::load_checkpoint(checkpoint)?;
    let prep_path = checkpoint.join(PREPROCESSING_FILE);
    let preprocessing: Preprocessing = match std::fs::read_to_string(&prep_path) {
        Ok(text) => serde_json::from_str(&text)?,
        Err(_) => Preprocessing::default(),
    };
    let dataset = load_nonempty(manifest)?;
    let (predictions, _) = predict_dataset(&model, &dataset, &preprocessing, seed)?;
    std::fs::create_dir_all(out)?;
    write_predictions_csv(&predictions, &out.join(PREDICTIONS_CSV))?;
    Ok(predictions)
}

/// Write a synthetic manifest; returns the number of videos.
pub fn cmd_synth(config: &SynthConfig, seed: u64, out: &Path) -> Result<usize> {
    if config.num_fencers == 0 || config.reps_per_action == 0 {
        return Err(Error::Config("synthetic dataset needs at least one fencer and repetition".into()));
    }
    let dataset = synth_generate(config, seed);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let file = std::fs::File::create(out)?;
    let mut writer = std::io::BufWriter::new(file);
    dataset.write_manifest(&mut writer)?;
    std::io::Write::flush(&mut writer)?;
    Ok(dataset.len())
}

/// Cross-validate each variant of the suite; per-variant reports go to
/// `out/<variant>/`, the summary table to `out/ablation.{json,txt}`.
pub fn cmd_ablation(manifest: &Path, suite: &SuiteConfig, out: &Path, jobs: usize) -> Result<String> {
    let dataset = load_nonempty(manifest)?;
    std::fs::create_dir_all(out)?;
    write_json(&out.join("suite_config.json"), suite)?;
    let (rows, reports) = run_ablation_suite(&dataset, suite, jobs)?;
    for report in &reports {
        write_report(report, &out.join(&report.label))?;
    }
    write_json(&out.join("ablation.json"), &rows)?;
    let table = ablation_table(&rows);
    std::fs::write(out.join("ablation.txt"), &table)?;
    Ok(table)
}

#[derive(Debug, Parser)]
#[command(name = "fencenet", version, about = "Fencing footwork classification with temporal convolutional networks")]
pub struct Cli {
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model on a whole manifest and save a checkpoint.
    Train(RunArgs),
    /// Leave-one-fencer-out cross validation (or one random split).
    Crossval(CrossvalArgs),
    /// Classify the videos of a manifest with a checkpoint.
    Predict(PredictArgs),
    /// Generate a synthetic manifest.
    Synth(SynthArgs),
    /// Cross-validate a list of ablation variants.
    Ablation(AblationArgs),
}

/// Flags override the fields of `--config`.
#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// One of the bundled model configs.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn to_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.manifest {
            cfg.manifest = Some(m.clone());
        }
        if let Some(p) = &self.preset {
            cfg.preset = Some(p.clone());
            cfg.model = None;
            cfg.model_config = None;
        }
        if let Some(p) = &self.model_config {
            cfg.model_config = Some(p.clone());
            cfg.model = None;
        }
        if let Some(v) = &self.variant {
            cfg.variant = Some(v.parse()?);
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.train.batch_size = b;
        }
        if let Some(lr) = self.lr {
            cfg.train.learning_rate = lr;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Folds trained concurrently; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Hold out this fraction of every (fencer, action) group instead of
    /// leaving one fencer out.
    #[arg(long)]
    pub random_split: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Directory holding `model.json` and `model.params`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Seed for random window sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output manifest path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub fencers: u32,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    /// Pixel noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Suite config JSON; defaults to the full-size models.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated variant names (default: all).
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
    /// Use the desk-scale model presets.
    #[arg(long)]
    pub small: bool,
    /// Epochs per fold for every variant.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

impl AblationArgs {
    pub fn to_suite(&self) -> Result<SuiteConfig> {
        let mut suite = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::Input(format!("config not found: {} ({e})", path.display()))
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => SuiteConfig::full(0),
        };
        if self.small {
            let channels = suite.preprocessing.channels();
            suite.fencenet = presets::fencenet_small(channels);
            suite.bifencenet = presets::bifencenet_small(channels);
        }
        if let Some(names) = &self.variants {
            suite.variants = names.iter().map(|n| n.parse()).collect::<Result<_>>()?;
        }
        if let Some(e) = self.epochs {
            suite.train.epochs = e;
            suite.bifencenet_train.epochs = e;
        }
        if let Some(s) = self.seed {
            suite.seed = s;
        }
        suite.train.validate()?;
        suite.bifencenet_train.validate()?;
        Ok(suite)
    }
}

/// Run a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Train(args) => {
            let outcome = cmd_train(args.to_config()?)?;
            let last = outcome.log.epochs.last().expect("at least one epoch");
            println!(
                "trained {} epochs, loss {:.4}, train accuracy {:.1}%, checkpoint {}",
                last.epoch,
                last.mean_loss,
                100.0 * last.train_accuracy,
                outcome.checkpoint.display()
            );
        }
        Command::Crossval(args) => {
            let report = cmd_crossval(args.run.to_config()?, args.jobs, args.random_split)?;
            print!("{}", report.to_table());
        }
        Command::Predict(args) => {
            let predictions = cmd_predict(&args.checkpoint, &args.manifest, &args.out, args.seed)?;
            let correct = predictions.iter().filter(|p| p.is_correct()).count();
            println!(
                "{} videos, {} match their manifest label ({:.1}%)",
                predictions.len(),
                correct,
                100.0 * correct as f64 / predictions.len() as f64
            );
        }
        Command::Synth(args) => {
            let cfg = SynthConfig {
                num_fencers: args.fencers,
                reps_per_action: args.reps,
                noise_std: args.noise,
                ..SynthConfig::default()
            };
            let n = cmd_synth(&cfg, args.seed, &args.out)?;
            println!("wrote {n} videos to {}", args.out.display());
        }
        Command::Ablation(args) => {
            let suite = args.to_suite()?;
            print!("{}", cmd_ablation(&args.manifest, &suite, &args.out, args.jobs)?);
        }
    }
    Ok(())
}
