//! Small summary statistics used by reports and calibration.

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn slope_fit(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(HarnessError::Invalid(format!("{} sizes but {} values", xs.len(), ys.len())));
    }
    if xs.len() < 3 {
        return Err(HarnessError::Invalid(format!("slope fit needs at least 3 points, got {}", xs.len())));
    }
    if let Some(v) = xs.iter().chain(ys).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(HarnessError::Invalid(format!("slope fit needs positive finite values, got {v}")));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(HarnessError::Invalid("slope fit needs at least two distinct sizes".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(SlopeFit { slope, intercept, r2 })
}

/// The `ceil(level * N)`-th order statistic (1-based, clamped to `1..=N`).
pub fn upper_quantile(values: &[f64], level: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(HarnessError::Invalid("quantile of an empty sample".into()));
    }
    if !(level > 0.0 && level <= 1.0) {
        return Err(HarnessError::Invalid(format!("quantile level must lie in (0, 1], got {level}")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(HarnessError::Invalid("quantile of a sample containing NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((level * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 { sorted[mid] } else { 0.5 * (sorted[mid - 1] + sorted[mid]) })
}

/// Fraction of `true` entries; computed as `count / len` so audits can
/// reproduce it exactly.
pub fn frequency(flags: impl IntoIterator<Item = bool>) -> f64 {
    let (hits, total) = flags.into_iter().fold((0usize, 0usize), |(h, t), f| (h + f as usize, t + 1));
    if total == 0 {
        f64::NAN
    } else {
        hits as f64 / total as f64
    }
}
