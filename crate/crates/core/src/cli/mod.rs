//! Command-line front end and the experiment runners behind it.

pub mod experiment;
pub mod pipeline;
pub mod report;
pub mod search;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use experiment::{run_experiment, run_on_dataset, ExperimentOutcome, ExperimentSpec};
pub use pipeline::{
    fuse_directories, run_pipeline, run_pipeline_on, PipelineConfig, PipelineOutcome,
};
pub use report::{PipelineSummary, ReportRow, RowKind};
pub use search::{sample_weights, search_weights, SearchConfig, SearchOutcome};

use crate::dataio::{synth_corpus, Manifest, SynthSpec};
use crate::fusion::{FitSplit, FusionConfig};
use crate::{Error, Result};

pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MAX_STAGES: usize = 5;

#[derive(Debug, Parser)]
#[command(
    name = "affect-fusion",
    version,
    about = "Multitask CCC regression and multistage SVR fusion"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one experiment from a TOML spec.
    Run(RunArgs),
    /// Random search over the multitask loss weights.
    SearchWeights(SearchArgs),
    /// Multistage late fusion of saved prediction directories.
    Fuse(FuseArgs),
    /// Unimodal, bimodal, late and multistage fusion in one go.
    Pipeline(PipelineArgs),
    /// Write a synthetic corpus with a manifest.
    Synth(SynthArgs),
    /// Print a report file as a table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Overrides the manifest named in the spec.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 1.0)]
    pub weight_max: f64,
    /// Fix gamma to 1.0 in random trials.
    #[arg(long)]
    pub pin_gamma: bool,
    /// Constrain gamma = 1 - alpha - beta.
    #[arg(long)]
    pub comparator: bool,
}

#[derive(Args, Debug)]
pub struct FusionArgs {
    /// Number of fusion stages.
    #[arg(long, default_value_t = MAX_STAGES)]
    pub stages: usize,
    /// Fit the fusion SVRs on dev labels. Leaks labels into dev scores.
    #[arg(long)]
    pub fit_on_dev: bool,
    #[arg(long, value_enum, default_value_t = KernelArg::Rbf)]
    pub kernel: KernelArg,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KernelArg {
    Linear,
    Rbf,
}

impl FusionArgs {
    fn apply(&self, mut cfg: FusionConfig) -> Result<FusionConfig> {
        if self.stages == 0 || self.stages > MAX_STAGES {
            return Err(Error::Config(format!(
                "--stages must be in 1..={MAX_STAGES}"
            )));
        }
        if self.fit_on_dev {
            cfg.fit_split = FitSplit::Dev;
        }
        if let KernelArg::Linear = self.kernel {
            cfg.kernel = crate::fusion::FusionKernel::Linear;
        }
        if let Some(c) = self.c {
            cfg.c = c;
        }
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Experiment directories holding `pred_train.csv` and `pred_dev.csv`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Optional pipeline config in TOML.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Default,
    TwoModality,
    LinearMap,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    pub preset: Preset,
    /// Generator settings in TOML; replaces the preset.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A report CSV, or a directory containing one.
    pub path: PathBuf,
}

fn report_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(REPORT_FILE)
    } else {
        p.to_path_buf()
    }
}

fn load_spec(args: &RunArgs) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::read(&args.spec)?;
    if let Some(m) = &args.manifest {
        spec.manifest = m.clone();
    }
    Ok(spec)
}

/// Runs one parsed command, writing human-readable output to stdout.
pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let spec = load_spec(&args)?;
            let row = run_experiment(&spec, args.seed, args.out.as_deref())?;
            print!("{}", report::format_table(&[row]));
        }
        Command::SearchWeights(args) => {
            let spec = load_spec(&args.run)?;
            let cfg = SearchConfig {
                n_trials: args.trials,
                weight_max: args.weight_max,
                pin_gamma: args.pin_gamma,
                comparator: args.comparator,
            };
            let manifest = Manifest::read(&spec.manifest)?;
            spec.validate_against(&manifest)?;
            let dataset = manifest.load_dataset()?;
            let seed = args.run.seed.unwrap_or(spec.seed);
            let out = search_weights(&dataset, &spec, &cfg, seed)?;
            if let Some(dir) = args.run.out.as_deref().or(spec.out_dir.as_deref()) {
                let exp_dir = dir.join(&spec.id);
                let best_spec = ExperimentSpec {
                    weights: out.best_weights,
                    ..spec.clone()
                };
                experiment::persist(&exp_dir, &best_spec, &dataset, &out.best)?;
                let trials = exp_dir.join("trials.csv");
                std::fs::write(&trials, report::rows_csv_string(&out.trials)?)
                    .map_err(|e| Error::io(&trials, e))?;
                report::append_rows(&dir.join(REPORT_FILE), &out.trials)?;
                report::append_rows(&dir.join(REPORT_FILE), std::slice::from_ref(&out.best.row))?;
            }
            print!("{}", report::format_table(&out.trials));
            let w = out.best_weights;
            println!(
                "best trial {}: alpha {} beta {} gamma {}",
                out.best_index, w.alpha, w.beta, w.gamma
            );
        }
        Command::Fuse(args) => {
            let cfg = FusionConfig {
                seed: args.seed,
                ..args.fusion.apply(FusionConfig::default())?
            };
            let (_, rows) = fuse_directories(
                &args.manifest,
                &args.inputs,
                args.fusion.stages,
                &cfg,
                args.out.as_deref(),
            )?;
            print!("{}", report::format_table(&rows));
        }
        Command::Pipeline(args) => {
            let mut cfg = match &args.spec {
                Some(p) => PipelineConfig::read(p)?,
                None => PipelineConfig::default(),
            };
            cfg.fusion = args.fusion.apply(cfg.fusion)?;
            cfg.stages = args.fusion.stages;
            let out = run_pipeline(&args.manifest, &cfg, args.seed, Some(&args.out))?;
            print!("{}", report::format_table(&out.rows));
            println!(
                "summary written to {}",
                args.out.join(SUMMARY_FILE).display()
            );
        }
        Command::Synth(args) => {
            let spec = match &args.spec {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    toml::from_str(&text)
                        .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
                }
                None => match args.preset {
                    Preset::Default => SynthSpec::default(),
                    Preset::TwoModality => SynthSpec::two_modality(),
                    Preset::LinearMap => SynthSpec::linear_map(),
                },
            };
            let dataset = synth_corpus(args.seed, &spec)?;
            dataset.write_corpus(&args.out)?;
            println!(
                "wrote {} feature sets to {}",
                dataset.feature_sets.len(),
                args.out.display()
            );
        }
        Command::Report(args) => {
            let rows = report::read_rows(&report_path(&args.path))?;
            print!("{}", report::format_table(&rows));
        }
    }
    Ok(())
}
