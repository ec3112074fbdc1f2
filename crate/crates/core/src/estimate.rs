//! Sample covariance, effective-rank noise levels and calibration constants.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SymmetricMatrix};
use crate::models::{PopulationModel, SampleMatrix};

/// Which noise level to use: `eta_1` (polynomial growth of `p`) or `eta_2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(try_from = "u8", into = "u8")]
pub enum Regime {
    One,
    #[default]
    Two,
}

impl Regime {
    pub fn index(self) -> u8 {
        match self {
            Regime::One => 1,
            Regime::Two => 2,
        }
    }
}

impl TryFrom<u8> for Regime {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        match v {
            1 => Ok(Regime::One),
            2 => Ok(Regime::Two),
            other => Err(format!("regime must be 1 or 2, got {other}")),
        }
    }
}

impl From<Regime> for u8 {
    fn from(r: Regime) -> u8 {
        r.index()
    }
}

/// Where a set of constants came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", content = "run_id", rename_all = "snake_case")]
pub enum ConstantSource {
    #[default]
    Default,
    Calibrated(String),
}

/// Absolute constants that the bounds leave unspecified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstantsConfig {
    /// Master constant in the noise levels.
    pub c: f64,
    /// Sub-Gaussian moment constant (pi/2 for Gaussian data).
    pub c0: f64,
    /// Trace-concentration constant; drives `epsilon1`.
    pub c1: f64,
    /// `C_1` for regime 1.
    pub c1_regime: f64,
    /// `C_2` for regime 2.
    pub c2_regime: f64,
    /// Operator-norm constant used only by the regime-1 side condition.
    pub c3: Option<f64>,
    /// Jump-threshold constant for polynomial decay; `None` derives it from the model.
    pub c4l: Option<f64>,
    /// Growth exponent in `p <= n^gamma` for class 1 membership.
    pub gamma: f64,
    pub source: ConstantSource,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            c0: std::f64::consts::FRAC_PI_2,
            c1: 0.5,
            c1_regime: 0.9,
            c2_regime: 1.0,
            c3: None,
            c4l: None,
            gamma: 2.0,
            source: ConstantSource::Default,
        }
    }
}

impl ConstantsConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("c0", self.c0), ("gamma", self.gamma)];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        // c1 = 0 and c = 0 are what calibration returns for an exact oracle
        for (name, v) in [("c", self.c), ("c1", self.c1)] {
            if !(v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be nonnegative, got {v}")));
            }
        }
        for (name, v) in [("c1_regime", self.c1_regime), ("c2_regime", self.c2_regime)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }

    /// `C_j` for the given regime.
    pub fn regime_constant(&self, regime: Regime) -> f64 {
        match regime {
            Regime::One => self.c1_regime,
            Regime::Two => self.c2_regime,
        }
    }
}

/// Descending eigenvalues of a sample covariance together with its trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSpectrum {
    pub values: Vec<f64>,
    pub trace: f64,
}

impl EmpiricalSpectrum {
    pub fn of(sigma_n: &SymmetricMatrix) -> Result<Self> {
        Ok(Self { values: linalg::eigvalsh(sigma_n)?, trace: linalg::trace(sigma_n) })
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        let trace = values.iter().sum();
        Self { values, trace }
    }

    pub fn operator_norm(&self) -> f64 {
        linalg::spectral_radius(&self.values)
    }

    pub fn effective_rank(&self) -> Result<f64> {
        linalg::effective_rank_from_parts(self.trace, self.operator_norm())
    }
}

/// `Sigma_n = n^-1 sum (X_i - Xbar)(X_i - Xbar)'`, divisor `n`.
pub fn sample_covariance(data: &SampleMatrix) -> Result<SymmetricMatrix> {
    let n = data.n();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    centered_gram(data.rows(), n as f64)
}

/// `(Y - 1 Ybar')' (Y - 1 Ybar') / divisor` for observations stored as rows.
pub(crate) fn centered_gram(rows: ArrayView2<'_, f64>, divisor: f64) -> Result<SymmetricMatrix> {
    if rows.nrows() < 2 {
        return Err(Error::TooFewSamples(rows.nrows()));
    }
    let mean = rows.mean_axis(Axis(0)).expect("at least two rows");
    let centered = &rows - &mean;
    SymmetricMatrix::symmetrize(centered.t().dot(&centered) / divisor)
}

fn log_ratio(numerator: f64, n: usize) -> f64 {
    numerator.ln() / n as f64
}

/// Noise level from a norm and a trace (`||S|| r_e(S) = tr(S)`).
fn eta_from_parts(norm: f64, trace: f64, n: usize, p: usize, regime: Regime, consts: &ConstantsConfig) -> Result<f64> {
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let re = linalg::effective_rank_from_parts(trace, norm)?;
    Ok(match regime {
        Regime::One => consts.c * norm * (re * log_ratio((p * n) as f64, n)).sqrt(),
        Regime::Two => consts.c * norm * re * log_ratio(n as f64, n).sqrt(),
    })
}

/// `eta_j` evaluated on the population covariance.
///
/// A zero population matrix has zero noise level.
pub fn eta_theoretical(model: &PopulationModel, n: usize, p: usize, regime: Regime, consts: &ConstantsConfig) -> Result<f64> {
    if model.trace() <= 0.0 {
        return Ok(0.0);
    }
    eta_from_parts(model.operator_norm(), model.trace(), n, p, regime, consts)
}

/// Plug-in noise level `eta~_j` computed from `Sigma_n`.
pub fn eta_empirical(sigma_n: &SymmetricMatrix, n: usize, p: usize, regime: Regime, consts: &ConstantsConfig) -> Result<f64> {
    eta_from_spectrum(&EmpiricalSpectrum::of(sigma_n)?, n, p, regime, consts)
}

pub fn eta_from_spectrum(spectrum: &EmpiricalSpectrum, n: usize, p: usize, regime: Regime, consts: &ConstantsConfig) -> Result<f64> {
    eta_from_parts(spectrum.operator_norm(), spectrum.trace, n, p, regime, consts)
}

/// `epsilon1 = 4 c1 sqrt(ln n / n)`; rejected once it reaches 1.
pub fn epsilon1(n: usize, consts: &ConstantsConfig) -> Result<f64> {
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let value = 4.0 * consts.c1 * log_ratio(n as f64, n).sqrt();
    if value >= 1.0 {
        return Err(Error::SampleTooSmall { value });
    }
    Ok(value)
}

/// Membership of the population covariance in the reduced effective-rank
/// class of the given regime, with the implicit constant set to 1.
pub fn class_membership(model: &PopulationModel, n: usize, p: usize, epsilon: f64, regime: Regime, gamma: f64) -> Result<bool> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let re = model.effective_rank()?;
    let nf = n as f64;
    Ok(match regime {
        Regime::One => re <= epsilon * nf / ((p * n) as f64).ln() && (p as f64) <= nf.powf(gamma),
        Regime::Two => re <= epsilon * (nf / nf.ln()).sqrt(),
    })
}

/// `|tr(Sigma_n) - tr(Sigma)| / tr(Sigma)`.
pub fn trace_relative_error(sigma_n: &SymmetricMatrix, model: &PopulationModel) -> Result<f64> {
    let tr = model.trace();
    if tr <= 0.0 {
        return Err(Error::Degenerate("population trace must be positive".into()));
    }
    Ok((linalg::trace(sigma_n) - tr).abs() / tr)
}

/// `|r_e(Sigma_n) / r_e(Sigma) - 1|`.
pub fn effrank_relative_error(sigma_n: &SymmetricMatrix, model: &PopulationModel) -> Result<f64> {
    effrank_relative_error_from(&EmpiricalSpectrum::of(sigma_n)?, model)
}

pub fn effrank_relative_error_from(spectrum: &EmpiricalSpectrum, model: &PopulationModel) -> Result<f64> {
    Ok((spectrum.effective_rank()? / model.effective_rank()? - 1.0).abs())
}

/// Right-hand sides of the concentration inequalities, evaluated on the population model.
pub mod bounds {
    use super::*;

    fn root_log(n: usize) -> f64 {
        log_ratio(n as f64, n).sqrt()
    }

    /// `4 c1 sqrt(ln n / n) tr(Sigma)`.
    pub fn trace(model: &PopulationModel, n: usize, c1: f64) -> f64 {
        4.0 * c1 * root_log(n) * model.trace()
    }

    /// `2 c1 ||Sigma|| r_e(Sigma) sqrt(ln n / n)`.
    pub fn frobenius(model: &PopulationModel, n: usize, c1: f64) -> f64 {
        2.0 * c1 * model.trace() * root_log(n)
    }

    /// `||Sigma|| max{sqrt(r_e ln(pn)/n), r_e ln(pn)/n}` without its constant.
    pub fn operator_rate(model: &PopulationModel, n: usize, p: usize) -> Result<f64> {
        let re = model.effective_rank()?;
        let x = re * log_ratio((p * n) as f64, n);
        Ok(model.operator_norm() * x.sqrt().max(x))
    }

    /// `(tr(Sigma)/p) 2 c1 sqrt(ln n / n)`: per-coordinate eigenvalue error scale.
    pub fn scaled_eigenvalue(model: &PopulationModel, n: usize, p: usize, c1: f64) -> f64 {
        model.trace() / p as f64 * 2.0 * c1 * root_log(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Basis, PolyDecayParams};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn consts(c: f64, c1: f64) -> ConstantsConfig {
        ConstantsConfig { c, c1, ..Default::default() }
    }

    #[test]
    fn sample_covariance_hand_examples() {
        let x = SampleMatrix::new(array![[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        let s = sample_covariance(&x).unwrap();
        assert_eq!(s.view(), array![[1.0, 0.0], [0.0, 0.0]]);

        let same = SampleMatrix::new(array![[2.0, 3.0], [2.0, 3.0], [2.0, 3.0]]).unwrap();
        assert_eq!(sample_covariance(&same).unwrap().max_abs(), 0.0);

        let x = SampleMatrix::new(array![[1.0, 1.0], [0.0, 0.0], [-1.0, -1.0]]).unwrap();
        let s = sample_covariance(&x).unwrap();
        for v in s.view().iter() {
            assert_abs_diff_eq!(*v, 2.0 / 3.0, epsilon = 1e-15);
        }

        let one = SampleMatrix::new(array![[1.0, 2.0]]).unwrap();
        assert_eq!(sample_covariance(&one), Err(Error::TooFewSamples(1)));
    }

    #[test]
    fn eta_theoretical_examples() {
        // ||Sigma|| = 1, r_e = 4
        let model = PopulationModel::from_spectrum(vec![1.0; 4], Basis::Standard).unwrap();
        let eta = eta_theoretical(&model, 100, 4, Regime::Two, &consts(1.0, 0.5)).unwrap();
        assert_abs_diff_eq!(eta, 0.858_386_410_515_738_9, epsilon = 1e-12);

        let rank_one = PopulationModel::from_spectrum(vec![2.0, 0.0, 0.0], Basis::Standard).unwrap();
        let eta = eta_theoretical(&rank_one, 50, 3, Regime::Two, &consts(1.5, 0.5)).unwrap();
        assert_abs_diff_eq!(eta, 1.5 * 2.0 * (50f64.ln() / 50.0).sqrt(), epsilon = 1e-14);

        let single = PopulationModel::from_spectrum(vec![3.0], Basis::Standard).unwrap();
        let eta1 = eta_theoretical(&single, 80, 1, Regime::One, &consts(1.0, 0.5)).unwrap();
        assert_abs_diff_eq!(eta1, 3.0 * (80f64.ln() / 80.0).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn eta_empirical_examples() {
        // ||S|| = 2, r_e = 3: spectrum (2, 2, 2)
        let s = SymmetricMatrix::diagonal(&[2.0, 2.0, 2.0]).unwrap();
        let eta = eta_empirical(&s, 400, 3, Regime::Two, &consts(1.0, 0.5)).unwrap();
        assert_abs_diff_eq!(eta, 0.734_324_049_204_245, epsilon = 1e-12);

        let model = PopulationModel::poly_decay(PolyDecayParams::power_law(10, 1.0, 2.0, 3.0)).unwrap();
        for regime in [Regime::One, Regime::Two] {
            let a = eta_empirical(model.sigma(), 300, 10, regime, &consts(0.7, 0.5)).unwrap();
            let b = eta_theoretical(&model, 300, 10, regime, &consts(0.7, 0.5)).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            let scaled = eta_empirical(&model.sigma().scaled(3.0), 300, 10, regime, &consts(0.7, 0.5)).unwrap();
            assert_abs_diff_eq!(scaled, 3.0 * a, epsilon = 1e-12);
        }

        let zero = SymmetricMatrix::zeros(3).unwrap();
        assert!(matches!(eta_empirical(&zero, 10, 3, Regime::Two, &consts(1.0, 0.5)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn epsilon1_examples() {
        assert_abs_diff_eq!(epsilon1(10_000, &consts(1.0, 0.5)).unwrap(), 0.060_697_085_175_405_85, epsilon = 1e-14);
        match epsilon1(100, &consts(1.0, 2.0)) {
            Err(Error::SampleTooSmall { value }) => assert_abs_diff_eq!(value, 1.716_772_821_031_477_8, epsilon = 1e-12),
            other => panic!("expected SampleTooSmall, got {other:?}"),
        }
        assert_eq!(epsilon1(100, &consts(1.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn class_membership_examples() {
        let two = PopulationModel::from_spectrum(vec![1.0, 1.0], Basis::Standard).unwrap();
        assert!(class_membership(&two, 10_000, 2, 0.5, Regime::Two, 2.0).unwrap());
        // threshold 0.5 sqrt(1e4 / ln 1e4) = 16.4753
        let seventeen = PopulationModel::from_spectrum(vec![1.0; 17], Basis::Standard).unwrap();
        assert!(!class_membership(&seventeen, 10_000, 17, 0.5, Regime::Two, 2.0).unwrap());
        let sixteen = PopulationModel::from_spectrum(vec![1.0; 16], Basis::Standard).unwrap();
        assert!(class_membership(&sixteen, 10_000, 16, 0.5, Regime::Two, 2.0).unwrap());

        assert!(!class_membership(&two, 10_000, 2, 1e-9, Regime::Two, 2.0).unwrap());

        for n in [3usize, 10, 50] {
            let id = PopulationModel::from_spectrum(vec![1.0; n], Basis::Standard).unwrap();
            assert!(!class_membership(&id, n, n, 0.999, Regime::Two, 2.0).unwrap());
        }
        assert!(class_membership(&two, 10_000, 2, 1.5, Regime::Two, 2.0).is_err());
    }

    #[test]
    fn class_one_respects_dimension_growth() {
        let two = PopulationModel::from_spectrum(vec![1.0, 1.0], Basis::Standard).unwrap();
        assert!(class_membership(&two, 1000, 2, 0.5, Regime::One, 2.0).unwrap());
        // p > n^gamma excludes the model even with tiny effective rank
        let wide = PopulationModel::from_spectrum(
            std::iter::once(1.0).chain(std::iter::repeat(0.0).take(200)).collect(),
            Basis::Standard,
        )
        .unwrap();
        assert!(!class_membership(&wide, 10, 201, 0.9, Regime::One, 2.0).unwrap());
        assert!(class_membership(&wide, 10, 201, 0.9, Regime::One, 3.0).unwrap());
    }

    #[test]
    fn relative_errors() {
        let model = PopulationModel::poly_decay(PolyDecayParams::power_law(8, 1.0, 2.0, 3.0)).unwrap();
        assert_eq!(trace_relative_error(model.sigma(), &model).unwrap(), 0.0);
        assert_abs_diff_eq!(effrank_relative_error(model.sigma(), &model).unwrap(), 0.0, epsilon = 1e-14);
        let doubled = model.sigma().scaled(2.0);
        assert_abs_diff_eq!(trace_relative_error(&doubled, &model).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(effrank_relative_error(&doubled, &model).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn constants_roundtrip_and_validation() {
        let c = ConstantsConfig { c4l: Some(2.5), source: ConstantSource::Calibrated("run-7".into()), ..Default::default() };
        assert!(c.validate().is_ok());
        let bad = ConstantsConfig { c1_regime: 1.2, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(Regime::try_from(3u8).is_err());
        assert_eq!(u8::from(Regime::One), 1);
    }
}
