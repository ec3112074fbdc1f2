//! Runs an experiment over its settings and writes the CSV and summary.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spectral_screener::estimate::ConstantsConfig;

use crate::calibrate::{self, CalibrationFile, CalibrationSample, CALIBRATION_LABEL};
use crate::config::{Experiment, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::experiments::{self, Check, Setting};
use crate::stats::{frequency, median, upper_quantile, SlopeFit};
use crate::table::{self, FlagSpec, TrialRecord};

pub const SUMMARY_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub dim: usize,
    pub trials: usize,
    /// Mean of each flag column.
    pub frequencies: BTreeMap<String, f64>,
    pub medians: BTreeMap<String, Option<f64>>,
    /// Empirical 0.95 quantile (order statistic) of each numeric column.
    pub upper_95: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: u32,
    pub experiment: Experiment,
    pub run_id: String,
    pub config: ExperimentConfig,
    pub constants: ConstantsConfig,
    /// Present when the constants came from, or were produced by, calibration.
    pub calibration_label: Option<String>,
    pub flags: Vec<FlagSpec>,
    pub groups: Vec<GroupSummary>,
    pub slopes: BTreeMap<String, SlopeFit>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl Summary {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
    pub summary: Summary,
    pub records: Vec<TrialRecord>,
    pub calibration: Option<(PathBuf, CalibrationFile)>,
}

pub fn csv_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join(format!("{}-{}.csv", cfg.experiment.tag(), cfg.run_id()))
}

pub fn summary_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join(format!("{}-{}.json", cfg.experiment.tag(), cfg.run_id()))
}

/// Runs every trial, writes `<experiment>-<run_id>.csv` and `.json` into the
/// output directory, plus `calibration-<run_id>.json` for calibration runs.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let consts = cfg.resolve_constants()?;
    if cfg.experiment == Experiment::Calibrate {
        for &n in &cfg.n_list {
            calibrate::check_reps(cfg.reps, n)?;
        }
    }
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| HarnessError::io(&cfg.output_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Invalid(format!("worker pool: {e}")))?;
    let specs = experiments::flag_specs(cfg.experiment);
    // the approximation experiment is deterministic: one record per grid
    let reps = if cfg.experiment == Experiment::FpcaApprox { 1 } else { cfg.reps };

    let mut records = Vec::new();
    // warning kind (text before the first colon) -> (trials, first message)
    let mut warnings: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (n, dim) in cfg.settings() {
        let setting = Setting::new(cfg, &consts, n, dim)?;
        let results: Vec<Result<_>> = pool.install(|| {
            (0..reps)
                .into_par_iter()
                .map(|t| {
                    let seed = cfg.base_seed.wrapping_add(t as u64);
                    let m = setting.trial(seed)?;
                    Ok((TrialRecord::new(t, seed, n, setting.dim, m.row, &specs)?, m.warnings))
                })
                .collect()
        });
        for r in results {
            let (rec, w) = r?;
            records.push(rec);
            let kinds: BTreeSet<&str> = w.iter().map(|m| m.split(':').next().unwrap_or(m)).collect();
            for kind in kinds {
                let first = w.iter().find(|m| m.starts_with(kind)).cloned().unwrap_or_default();
                warnings.entry(kind.to_string()).or_insert((0, first)).0 += 1;
            }
        }
    }

    let mut slopes = BTreeMap::new();
    for (name, fit) in experiments::slopes(cfg.experiment, &records) {
        match fit {
            Ok(f) => {
                slopes.insert(name, f);
            }
            Err(e) => {
                warnings.insert(format!("slope {name}"), (1, format!("slope {name}: {e}")));
            }
        }
    }
    let fits: Vec<(String, SlopeFit)> = slopes.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let checks = experiments::checks(cfg.experiment, &records, &fits);

    let run_id = cfg.run_id();
    let calibration = if cfg.experiment == Experiment::Calibrate {
        let entries = experiments::groups(&records)
            .into_iter()
            .map(|((n, dim), recs)| {
                let samples: Vec<CalibrationSample> = recs.iter().map(|r| calibration_sample(r)).collect::<Result<_>>()?;
                calibrate::calibrate_samples(&samples, n, dim)
            })
            .collect::<Result<Vec<_>>>()?;
        let file = CalibrationFile {
            schema: SUMMARY_SCHEMA,
            run_id: run_id.clone(),
            label: CALIBRATION_LABEL.into(),
            regime: cfg.regime,
            constants: calibrate::aggregate(&consts, &entries, &run_id)?,
            entries,
        };
        let path = CalibrationFile::path(&cfg.output_dir, &run_id);
        file.save(&path)?;
        Some((path, file))
    } else {
        None
    };

    let calibrated_source = matches!(consts.source, spectral_screener::estimate::ConstantSource::Calibrated(_));
    let summary = Summary {
        schema: SUMMARY_SCHEMA,
        experiment: cfg.experiment,
        run_id,
        config: cfg.clone(),
        constants: calibration.as_ref().map(|(_, f)| f.constants.clone()).unwrap_or_else(|| consts.clone()),
        calibration_label: (calibrated_source || calibration.is_some()).then(|| CALIBRATION_LABEL.to_string()),
        groups: group_summaries(&records, &specs),
        flags: specs,
        slopes,
        checks,
        warnings: warnings.into_values().map(|(count, first)| format!("{first} [{count} of {} records]", records.len())).collect(),
    };

    let csv_path = csv_path(cfg);
    table::write_csv(&csv_path, cfg.experiment.tag(), &records)?;
    let summary_path = summary_path(cfg);
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(&summary_path, text).map_err(|e| HarnessError::io(&summary_path, e))?;
    Ok(RunOutcome { csv_path, summary_path, summary, records, calibration })
}

/// Runs a calibration with the given configuration and returns the constants.
pub fn calibrate(cfg: &ExperimentConfig) -> Result<ConstantsConfig> {
    let cfg = ExperimentConfig { experiment: Experiment::Calibrate, ..cfg.clone() };
    let outcome = run(&cfg)?;
    Ok(outcome.calibration.expect("calibration run writes a calibration file").1.constants)
}

fn calibration_sample(r: &TrialRecord) -> Result<CalibrationSample> {
    let get = |name: &str| r.fields.float_value(name).ok_or_else(|| HarnessError::Invalid(format!("calibration record lacks `{name}`")));
    Ok(CalibrationSample {
        trace_ratio: get("trace_ratio")?,
        op_err: get("op_err")?,
        op_scale: get("op_scale")?,
        rate_scale: get("rate_scale")?,
    })
}

fn group_summaries(records: &[TrialRecord], specs: &[FlagSpec]) -> Vec<GroupSummary> {
    experiments::groups(records)
        .into_iter()
        .map(|((n, dim), recs)| {
            let frequencies = specs
                .iter()
                .map(|s| (s.name().to_string(), frequency(recs.iter().map(|r| r.flag(s.name()).unwrap_or(false)))))
                .collect();
            let mut medians = BTreeMap::new();
            let mut upper_95 = BTreeMap::new();
            for (name, value) in recs[0].fields.cells() {
                if !matches!(value, table::Value::Float(_) | table::Value::Int(_)) {
                    continue;
                }
                let values: Vec<f64> = recs.iter().filter_map(|r| r.fields.float_value(name)).collect();
                medians.insert(name.clone(), median(&values));
                upper_95.insert(name.clone(), upper_quantile(&values, 0.95).ok());
            }
            GroupSummary { n, dim, trials: recs.len(), frequencies, medians, upper_95 }
        })
        .collect()
}
