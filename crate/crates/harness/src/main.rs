use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use spectral_harness::audit::audit;
use spectral_harness::config::{ConstantsSpec, ExperimentConfig};
use spectral_harness::experiments::{scree_thresholds, Setting};
use spectral_harness::plot::scree_svg;
use spectral_harness::runner::{self, RunOutcome};
use spectral_harness::{Experiment, HarnessError};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CHECK: u8 = 3;

/// Monte Carlo evaluation of sample covariance spectra and scree-plot
/// selection rules.
#[derive(Parser)]
#[command(name = "spectral-screener", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV and JSON summary.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Exit with status 3 if any acceptance check fails.
        #[arg(long)]
        assert: bool,
    },
    /// Calibrate constants on the configured model and persist them under the run id.
    Calibrate {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Re-evaluate every flag and frequency of a finished run.
    Audit {
        /// Trial CSV written by `run`.
        csv: PathBuf,
        /// Summary JSON; defaults to the CSV path with a .json extension.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Render a scree plot as SVG.
    Plot {
        /// Draw one trial of this configuration and mark its thresholds.
        #[command(flatten)]
        config: OptionalConfigArgs,
        /// Trial index whose draw is plotted.
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Plot these eigenvalues instead of a simulated draw.
        #[arg(long, value_delimiter = ',', conflicts_with = "config")]
        values: Option<Vec<f64>>,
        /// Extra threshold line, `label=value`; repeatable.
        #[arg(long = "threshold")]
        thresholds: Vec<String>,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    m_list: Option<Vec<usize>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Output directory.
    #[arg(long, env = "SPECTRAL_SCREENER_OUT")]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    run_id: Option<String>,
    /// Constants reference such as `calibrated:<run-id>`.
    #[arg(long)]
    constants: Option<String>,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct OptionalConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

impl Overrides {
    fn apply(self, mut cfg: ExperimentConfig) -> Result<ExperimentConfig, HarnessError> {
        if let Some(e) = self.experiment {
            cfg.experiment = e.parse()?;
        }
        if let Some(v) = self.n_list {
            cfg.n_list = v;
        }
        if let Some(v) = self.m_list {
            cfg.m_list = v;
        }
        if let Some(v) = self.reps {
            cfg.reps = v;
        }
        if let Some(v) = self.base_seed {
            cfg.base_seed = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.out {
            cfg.output_dir = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = Some(v);
        }
        if let Some(v) = self.run_id {
            cfg.run_id = Some(v);
        }
        if let Some(v) = self.constants {
            cfg.constants = ConstantsSpec::Reference(v);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load(path: &PathBuf, overrides: Overrides) -> Result<ExperimentConfig, HarnessError> {
    overrides.apply(ExperimentConfig::load(path)?)
}

fn report(outcome: &RunOutcome) {
    println!("wrote {}", outcome.csv_path.display());
    println!("wrote {}", outcome.summary_path.display());
    if let Some((path, _)) = &outcome.calibration {
        println!("wrote {}", path.display());
    }
    for w in &outcome.summary.warnings {
        println!("warning: {w}");
    }
    for c in &outcome.summary.checks {
        println!("{} {}: observed {} (required {})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.observed, c.requirement);
    }
}

fn parse_threshold(spec: &str) -> anyhow::Result<(String, f64)> {
    let (label, value) = spec.rsplit_once('=').with_context(|| format!("threshold `{spec}` must look like label=value"))?;
    Ok((label.to_string(), value.parse().with_context(|| format!("threshold value in `{spec}`"))?))
}

fn execute(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Run { config, assert } => {
            let cfg = load(&config.config, config.overrides)?;
            let outcome = runner::run(&cfg)?;
            report(&outcome);
            if assert && !outcome.summary.all_checks_pass() {
                return Ok(EXIT_CHECK);
            }
        }
        Command::Calibrate { config } => {
            let mut cfg = ExperimentConfig::load(&config.config)?;
            cfg.experiment = Experiment::Calibrate;
            let mut overrides = config.overrides;
            if overrides.experiment.take().is_some() {
                bail!(HarnessError::Config("calibrate does not take --experiment".into()));
            }
            let cfg = overrides.apply(cfg)?;
            let outcome = runner::run(&cfg)?;
            report(&outcome);
            if let Some((_, file)) = &outcome.calibration {
                let c = &file.constants;
                println!("c1 = {}, C = {}, c3 = {}", c.c1, c.c, c.c3.unwrap_or(0.0));
            }
        }
        Command::Audit { csv, summary } => {
            let summary = summary.unwrap_or_else(|| csv.with_extension("json"));
            let result = audit(&csv, &summary)?;
            println!("{} rows, {} flags and {} frequencies checked", result.rows, result.flags_checked, result.frequencies_checked);
            for m in &result.mismatches {
                println!("MISMATCH {m}");
            }
            if !result.consistent() {
                return Ok(EXIT_CHECK);
            }
        }
        Command::Plot { config, trial, values, thresholds, output } => {
            let mut lines = thresholds.iter().map(|t| parse_threshold(t)).collect::<anyhow::Result<Vec<_>>>()?;
            let eigenvalues = match (values, config.config) {
                (Some(v), _) => v,
                (None, Some(path)) => {
                    let cfg = load(&path, config.overrides)?;
                    let consts = cfg.resolve_constants()?;
                    let (n, dim) = *cfg.settings().first().context("configuration has no settings")?;
                    let setting = Setting::new(&cfg, &consts, n.max(2), dim)?;
                    let (values, mut derived) = scree_thresholds(&setting, cfg.base_seed.wrapping_add(trial))?;
                    derived.append(&mut lines);
                    lines = derived;
                    values
                }
                (None, None) => bail!(HarnessError::Config("plot needs --values or --config".into())),
            };
            let svg = scree_svg(&eigenvalues, &lines)?;
            std::fs::write(&output, svg).with_context(|| format!("writing {}", output.display()))?;
            println!("wrote {}", output.display());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            let config = err.downcast_ref::<HarnessError>().is_some_and(HarnessError::is_config);
            ExitCode::from(if config { EXIT_CONFIG } else { EXIT_FAILURE })
        }
    }
}
