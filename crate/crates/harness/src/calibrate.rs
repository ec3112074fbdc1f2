//! Quantile calibration of the absolute constants against a model with
//! known covariance.
//!
//! For each sample size `n` the trace constant is set from the `1 - 5/n`
//! empirical quantile of the relative trace error, the master constant `C`
//! from the same quantile of the operator-norm error over the noise level of
//! the configured regime, and `c3` from the operator-norm error over the rate
//! `||Sigma|| max{sqrt(x), x}`, `x = r_e ln(pn)/n`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spectral_screener::estimate::{ConstantSource, ConstantsConfig, Regime};

use crate::error::{HarnessError, Result};
use crate::stats::upper_quantile;

/// Label carried by every calibration artifact.
pub const CALIBRATION_LABEL: &str = "quantile calibration (stand-in for cross-validation)";

/// Expected number of trials beyond the quantile that calibration insists on.
pub const MIN_TAIL_TRIALS: f64 = 20.0;

/// Per-trial inputs to calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    pub trace_ratio: f64,
    pub op_err: f64,
    /// Regime noise level evaluated with `C = 1`.
    pub op_scale: f64,
    pub rate_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub n: usize,
    pub dim: usize,
    pub reps: usize,
    pub level: f64,
    pub c1: f64,
    pub c: f64,
    pub c3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub schema: u32,
    pub run_id: String,
    pub label: String,
    pub regime: Regime,
    /// Largest constant over all entries.
    pub constants: ConstantsConfig,
    pub entries: Vec<CalibrationEntry>,
}

impl CalibrationFile {
    pub fn path(dir: &Path, run_id: &str) -> PathBuf {
        dir.join(format!("calibration-{run_id}.json"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
    }
}

/// `1 - 5/n`, the probability level of the concentration inequalities.
pub fn target_level(n: usize) -> f64 {
    1.0 - 5.0 / n as f64
}

/// Smallest trial count with `MIN_TAIL_TRIALS` expected exceedances of the
/// `1 - 5/n` quantile.
pub fn min_reps(n: usize) -> usize {
    (MIN_TAIL_TRIALS * n as f64 / 5.0).ceil() as usize
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// Constants at an arbitrary quantile level; no trial-count requirement.
pub fn calibrate_at_level(samples: &[CalibrationSample], n: usize, dim: usize, level: f64) -> Result<CalibrationEntry> {
    if n < 2 {
        return Err(HarnessError::Invalid(format!("calibration needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    let root_log = (nf.ln() / nf).sqrt();
    let q = |f: &dyn Fn(&CalibrationSample) -> f64| upper_quantile(&samples.iter().map(f).collect::<Vec<_>>(), level);
    let c1 = q(&|s| s.trace_ratio)? / (4.0 * root_log);
    let c = q(&|s| ratio(s.op_err, s.op_scale))?;
    let c3 = (q(&|s| ratio(s.op_err, s.rate_scale))? - 1.0 - c1).max(0.0);
    Ok(CalibrationEntry { n, dim, reps: samples.len(), level, c1, c, c3 })
}

/// Constants at the `1 - 5/n` level, rejecting runs too short to resolve it.
pub fn calibrate_samples(samples: &[CalibrationSample], n: usize, dim: usize) -> Result<CalibrationEntry> {
    check_reps(samples.len(), n)?;
    calibrate_at_level(samples, n, dim, target_level(n))
}

pub fn check_reps(reps: usize, n: usize) -> Result<()> {
    if n <= 5 {
        return Err(HarnessError::Config(format!("calibration needs n > 5 for a positive 1 - 5/n level, got n = {n}")));
    }
    let needed = min_reps(n);
    if reps < needed {
        return Err(HarnessError::Config(format!(
            "calibration at n = {n} needs at least {needed} reps to place {MIN_TAIL_TRIALS} expected trials beyond the 1 - 5/n quantile, got {reps}"
        )));
    }
    Ok(())
}

/// `base` with `c1`, `C` and `c3` replaced by their maxima over `entries`.
pub fn aggregate(base: &ConstantsConfig, entries: &[CalibrationEntry], run_id: &str) -> Result<ConstantsConfig> {
    if entries.is_empty() {
        return Err(HarnessError::Invalid("no calibration entries".into()));
    }
    let max = |f: fn(&CalibrationEntry) -> f64| entries.iter().map(f).fold(0.0, f64::max);
    let constants = ConstantsConfig {
        c1: max(|e| e.c1),
        c: max(|e| e.c),
        c3: Some(max(|e| e.c3)),
        source: ConstantSource::Calibrated(run_id.to_string()),
        ..base.clone()
    };
    constants.validate()?;
    Ok(constants)
}
