//! Scree-plot decision rules: jump detection, eigenvalue selection and
//! eigenvector gap certification.
//!
//! Every rule has two entry points. The `*_from` variants take an already
//! decomposed [`EmpiricalSpectrum`] so that a trial decomposes `Sigma_n` once
//! and feeds the same eigenvalues to every rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{self, ConstantsConfig, EmpiricalSpectrum, Regime};
use crate::linalg::{self, SpectralDecomposition, SymmetricMatrix};
use crate::models::{PolyDecayParams, PopulationModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpRule {
    MinimalJump,
    PolyJump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpDecision {
    pub s_hat: usize,
    pub threshold: f64,
    /// Plug-in noise level the threshold was built from.
    pub eta: f64,
    pub regime: Regime,
    pub rule: JumpRule,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    EigenvalueK,
    GapCertified,
    CombinedKev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Number of leading eigenvalues above the selection threshold.
    pub k: usize,
    pub alpha: f64,
    pub rule: SelectionRule,
    /// 1-based indices of eigenvectors whose error is certified below `alpha`.
    pub certified_vectors: Vec<usize>,
    pub threshold: f64,
    pub eta: f64,
}

fn check_descending(values: &[f64]) -> Result<()> {
    for (i, w) in values.windows(2).enumerate() {
        if w[1] > w[0] || w[0].is_nan() || w[1].is_nan() {
            return Err(Error::Unsorted(i + 1));
        }
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

/// `max{k : lambda_k >= tau}` for a descending vector, 0 if no entry qualifies.
pub fn scree_count(eigenvalues: &[f64], tau: f64) -> Result<usize> {
    check_descending(eigenvalues)?;
    Ok(eigenvalues.partition_point(|&v| v >= tau))
}

/// Jump detection at threshold `2 eta~_j`.
pub fn detect_minimal_jump(sigma_n: &SymmetricMatrix, n: usize, p: usize, regime: Regime, consts: &ConstantsConfig) -> Result<JumpDecision> {
    detect_minimal_jump_from(&EmpiricalSpectrum::of(sigma_n)?, n, p, regime, consts)
}

pub fn detect_minimal_jump_from(
    spectrum: &EmpiricalSpectrum,
    n: usize,
    p: usize,
    regime: Regime,
    consts: &ConstantsConfig,
) -> Result<JumpDecision> {
    let eta = estimate::eta_from_spectrum(spectrum, n, p, regime, consts)?;
    let threshold = 2.0 * eta;
    let mut warnings = Vec::new();
    if regime == Regime::One {
        if let Some(w) = regime_one_side_condition(spectrum, n, p, consts)? {
            warnings.push(w);
        }
    }
    Ok(JumpDecision {
        s_hat: scree_count(&spectrum.values, threshold)?,
        threshold,
        eta,
        regime,
        rule: JumpRule::MinimalJump,
        warnings,
    })
}

/// `(1 + c1 + c3) sqrt(eps) < 0.19`, with `eps = r_e(Sigma_n) ln(pn) / n` the
/// smallest class-1 level containing the plug-in covariance.
fn regime_one_side_condition(spectrum: &EmpiricalSpectrum, n: usize, p: usize, consts: &ConstantsConfig) -> Result<Option<String>> {
    let Some(c3) = consts.c3 else { return Ok(None) };
    let eps = spectrum.effective_rank()? * ((p * n) as f64).ln() / n as f64;
    let lhs = (1.0 + consts.c1 + c3) * eps.sqrt();
    Ok((lhs >= 0.19).then(|| format!("regime-1 side condition fails: (1 + c1 + c3) sqrt(eps) = {lhs:.4} >= 0.19")))
}

/// The `C_4` constant in use: configured, or derived from the lower envelope.
pub fn resolve_c4l(poly: &PolyDecayParams, consts: &ConstantsConfig) -> f64 {
    consts.c4l.unwrap_or_else(|| poly.c4l_lower_envelope())
}

/// Jump detection under polynomial decay at `(C_4 eta~_2)^(beta1/beta3)`.
pub fn detect_poly_jump(sigma_n: &SymmetricMatrix, n: usize, p: usize, poly: &PolyDecayParams, consts: &ConstantsConfig) -> Result<JumpDecision> {
    detect_poly_jump_from(&EmpiricalSpectrum::of(sigma_n)?, n, p, poly, consts)
}

pub fn detect_poly_jump_from(
    spectrum: &EmpiricalSpectrum,
    n: usize,
    p: usize,
    poly: &PolyDecayParams,
    consts: &ConstantsConfig,
) -> Result<JumpDecision> {
    poly.validate_exponents()?;
    let eta = estimate::eta_from_spectrum(spectrum, n, p, Regime::Two, consts)?;
    let threshold = poly_threshold(resolve_c4l(poly, consts) * eta, poly.beta1, poly.beta3)?;
    Ok(JumpDecision {
        s_hat: scree_count(&spectrum.values, threshold)?,
        threshold,
        eta,
        regime: Regime::Two,
        rule: JumpRule::PolyJump,
        warnings: Vec::new(),
    })
}

/// `x^(beta1/beta3)` for the scaled noise level `x = C_4 eta`.
pub fn poly_threshold(scaled_eta: f64, beta1: f64, beta3: f64) -> Result<f64> {
    if !(scaled_eta > 0.0) || !scaled_eta.is_finite() {
        return Err(Error::InvalidParameter(format!("scaled noise level must be positive and finite, got {scaled_eta}")));
    }
    Ok(scaled_eta.powf(beta1 / beta3))
}

fn inflated_eta(eta: f64, n: usize, regime: Regime, consts: &ConstantsConfig) -> Result<f64> {
    let eps1 = estimate::epsilon1(n, consts)?;
    Ok(eta / (consts.regime_constant(regime) * (1.0 - eps1)))
}

/// Eigenvalue selection: `K~_j` at `eta~_j (1 + 1/alpha) / (C_j (1 - eps1))`.
pub fn select_eigenvalues(
    sigma_n: &SymmetricMatrix,
    n: usize,
    p: usize,
    regime: Regime,
    alpha: f64,
    consts: &ConstantsConfig,
) -> Result<SelectionResult> {
    select_eigenvalues_from(&EmpiricalSpectrum::of(sigma_n)?, n, p, regime, alpha, consts)
}

pub fn select_eigenvalues_from(
    spectrum: &EmpiricalSpectrum,
    n: usize,
    p: usize,
    regime: Regime,
    alpha: f64,
    consts: &ConstantsConfig,
) -> Result<SelectionResult> {
    check_alpha(alpha)?;
    let eta = estimate::eta_from_spectrum(spectrum, n, p, regime, consts)?;
    let threshold = inflated_eta(eta, n, regime, consts)? * (1.0 + 1.0 / alpha);
    Ok(SelectionResult {
        k: scree_count(&spectrum.values, threshold)?,
        alpha,
        rule: SelectionRule::EigenvalueK,
        certified_vectors: Vec::new(),
        threshold,
        eta,
    })
}

/// Indices `k` (1-based) with `min(l_{k-1} - l_k, l_k - l_{k+1}) >= threshold`,
/// taking `l_0 = +inf` and `l_{p+1} = 0`.
pub fn gap_certified(eigenvalues: &[f64], threshold: f64) -> Result<Vec<usize>> {
    check_descending(eigenvalues)?;
    let p = eigenvalues.len();
    Ok((0..p)
        .filter(|&i| {
            let upper = if i == 0 { f64::INFINITY } else { eigenvalues[i - 1] - eigenvalues[i] };
            let lower = eigenvalues[i] - if i + 1 == p { 0.0 } else { eigenvalues[i + 1] };
            upper.min(lower) >= threshold
        })
        .map(|i| i + 1)
        .collect())
}

/// Eigenvector certification by spectral gaps at `eta~_j (2 + 3/alpha) / (C_j (1 - eps1))`.
pub fn certify_eigenvectors(
    decomp: &SpectralDecomposition,
    n: usize,
    p: usize,
    regime: Regime,
    alpha: f64,
    consts: &ConstantsConfig,
) -> Result<SelectionResult> {
    certify_eigenvectors_from(&EmpiricalSpectrum::from_values(decomp.values().to_vec()), n, p, regime, alpha, consts)
}

pub fn certify_eigenvectors_from(
    spectrum: &EmpiricalSpectrum,
    n: usize,
    p: usize,
    regime: Regime,
    alpha: f64,
    consts: &ConstantsConfig,
) -> Result<SelectionResult> {
    check_alpha(alpha)?;
    let eta = estimate::eta_from_spectrum(spectrum, n, p, regime, consts)?;
    let threshold = inflated_eta(eta, n, regime, consts)? * (2.0 + 3.0 / alpha);
    let certified_vectors = gap_certified(&spectrum.values, threshold)?;
    Ok(SelectionResult {
        k: certified_vectors.len(),
        alpha,
        rule: SelectionRule::GapCertified,
        certified_vectors,
        threshold,
        eta,
    })
}

/// `C1 [3 eta / ((1 - eps1) C3 alpha)]^(beta1/beta3) + eta / (1 - eps1)`.
pub fn combined_noise_level(eta: f64, eps1: f64, alpha: f64, c1l: f64, c3l: f64, beta1: f64, beta3: f64) -> f64 {
    let inner = 3.0 * eta / ((1.0 - eps1) * c3l * alpha);
    c1l * inner.powf(beta1 / beta3) + eta / (1.0 - eps1)
}

/// Combined selector under polynomial decay; certifies every vector up to `K~_ev`.
pub fn select_combined_poly(
    sigma_n: &SymmetricMatrix,
    n: usize,
    p: usize,
    poly: &PolyDecayParams,
    alpha: f64,
    consts: &ConstantsConfig,
) -> Result<SelectionResult> {
    select_combined_poly_from(&EmpiricalSpectrum::of(sigma_n)?, n, p, poly, alpha, consts)
}

pub fn select_combined_poly_from(
    spectrum: &EmpiricalSpectrum,
    n: usize,
    p: usize,
    poly: &PolyDecayParams,
    alpha: f64,
    consts: &ConstantsConfig,
) -> Result<SelectionResult> {
    check_alpha(alpha)?;
    poly.validate_exponents()?;
    let eta = estimate::eta_from_spectrum(spectrum, n, p, Regime::Two, consts)?;
    let eps1 = estimate::epsilon1(n, consts)?;
    let threshold = combined_noise_level(eta, eps1, alpha, poly.c1l, poly.c3l, poly.beta1, poly.beta3);
    let k = scree_count(&spectrum.values, threshold)?;
    Ok(SelectionResult {
        k,
        alpha,
        rule: SelectionRule::CombinedKev,
        certified_vectors: (1..=k).collect(),
        threshold,
        eta,
    })
}

/// `eta/gap + 6 eta^2/gap^2`, the gap measured to every other eigenvalue of
/// the true spectrum; a repeated eigenvalue gives `+inf`.
pub fn eigenvector_error_bound(model: &PopulationModel, k: usize, eta_min: f64) -> Result<f64> {
    let spectrum = model.true_spectrum();
    if k == 0 || k > spectrum.len() {
        return Err(Error::InvalidParameter(format!("index {k} outside 1..={}", spectrum.len())));
    }
    let i = k - 1;
    let gap = spectrum
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, l)| (l - spectrum[i]).abs())
        .fold(f64::INFINITY, f64::min);
    Ok(error_bound_for_gap(gap, eta_min))
}

pub fn error_bound_for_gap(gap: f64, eta: f64) -> f64 {
    if eta == 0.0 {
        return 0.0;
    }
    if gap <= 0.0 {
        return f64::INFINITY;
    }
    let r = eta / gap;
    r + 6.0 * r * r
}

/// `max_k |l_hat_k - l_k|`, never larger than `||Sigma_n - Sigma||_2`.
pub fn max_eigenvalue_deviation(estimated: &[f64], truth: &[f64]) -> f64 {
    estimated.iter().zip(truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// `||Sigma_n - Sigma||_2`.
pub fn operator_deviation(sigma_n: &SymmetricMatrix, sigma: &SymmetricMatrix) -> Result<f64> {
    linalg::operator_norm(&sigma_n.sub(sigma)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Basis, EigenvalueRule};
    use approx::assert_abs_diff_eq;

    fn consts(c: f64, c1: f64) -> ConstantsConfig {
        ConstantsConfig { c, c1, ..Default::default() }
    }

    #[test]
    fn scree_count_examples() {
        let l = [10.0, 5.0, 0.1, 0.05];
        assert_eq!(scree_count(&l, 1.0).unwrap(), 2);
        assert_eq!(scree_count(&l, 11.0).unwrap(), 0);
        assert_eq!(scree_count(&l, 0.0).unwrap(), 4);
        assert_eq!(scree_count(&l, 5.0).unwrap(), 2);
        assert_eq!(scree_count(&[], 1.0).unwrap(), 0);
        assert_eq!(scree_count(&[1.0, 2.0], 0.5), Err(Error::Unsorted(1)));
    }

    #[test]
    fn minimal_jump_on_rank_one() {
        // p = 4, n chosen so that 2 eta~_2 = 2 C sqrt(ln n / n) = 0.5
        let s = SymmetricMatrix::diagonal(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let n = 1000;
        let c = 0.25 / (((n as f64).ln() / n as f64).sqrt());
        let d = detect_minimal_jump(&s, n, 4, Regime::Two, &consts(c, 0.5)).unwrap();
        assert_abs_diff_eq!(d.threshold, 0.5, epsilon = 1e-12);
        assert_eq!(d.s_hat, 1);
        assert_eq!(d.rule, JumpRule::MinimalJump);

        let flat = SymmetricMatrix::diagonal(&[1.0; 4]).unwrap();
        let d = detect_minimal_jump(&flat, 10, 4, Regime::Two, &consts(1.0, 0.5)).unwrap();
        assert!(d.threshold > 1.0);
        assert_eq!(d.s_hat, 0);
    }

    #[test]
    fn regime_one_warns_only_with_c3() {
        let s = SymmetricMatrix::diagonal(&[1.0, 0.5, 0.2]).unwrap();
        let d = detect_minimal_jump(&s, 50, 3, Regime::One, &consts(1.0, 0.5)).unwrap();
        assert!(d.warnings.is_empty());
        let with_c3 = ConstantsConfig { c3: Some(1.0), ..consts(1.0, 0.5) };
        let d = detect_minimal_jump(&s, 50, 3, Regime::One, &with_c3).unwrap();
        assert_eq!(d.warnings.len(), 1);
    }

    #[test]
    fn poly_threshold_is_two_thirds_power() {
        let poly = PolyDecayParams::power_law(6, 1.0, 2.0, 3.0);
        let s = PopulationModel::poly_decay(poly.clone()).unwrap();
        let c = ConstantsConfig { c4l: Some(2.0), ..consts(0.5, 0.5) };
        let d = detect_poly_jump(s.sigma(), 400, 6, &poly, &c).unwrap();
        assert_abs_diff_eq!(d.threshold, (2.0 * d.eta).powf(2.0 / 3.0), epsilon = 1e-14);
        assert_eq!(d.s_hat, scree_count(s.true_spectrum(), d.threshold).unwrap());

        let mut last = f64::INFINITY;
        for eta in [1.0, 0.1, 1e-3, 1e-6] {
            let t = poly_threshold(eta, 2.0, 3.0).unwrap();
            assert!(t < last);
            last = t;
        }
        assert!(poly_threshold(0.0, 2.0, 3.0).is_err());
    }

    #[test]
    fn eigenvalue_selection_example() {
        // eta~_2 = 0.1 needs C = 0.1 / (tr sqrt(ln n / n)) and eps1 = 0.05
        let l = vec![3.0, 1.0, 0.2, 0.01];
        let n = 10_000usize;
        let root = ((n as f64).ln() / n as f64).sqrt();
        let tr: f64 = l.iter().sum();
        let c1 = 0.05 / (4.0 * root);
        let spec = EmpiricalSpectrum::from_values(l);
        let r = select_eigenvalues_from(&spec, n, 4, Regime::Two, 0.5, &consts(0.1 / (tr * root), c1)).unwrap();
        assert_abs_diff_eq!(r.eta, 0.1, epsilon = 1e-14);
        assert_abs_diff_eq!(r.threshold, 0.315_789_473_684_210_5, epsilon = 1e-12);
        assert_eq!(r.k, 2);

        let tiny = select_eigenvalues_from(&spec, n, 4, Regime::Two, 1.0, &consts(1e-9, c1)).unwrap();
        assert_eq!(tiny.k, 4);
    }

    #[test]
    fn selection_rejects_large_epsilon1() {
        let spec = EmpiricalSpectrum::from_values(vec![1.0, 0.5]);
        let r = select_eigenvalues_from(&spec, 100, 2, Regime::Two, 0.5, &consts(1.0, 2.0));
        assert!(matches!(r, Err(Error::SampleTooSmall { .. })));
    }

    #[test]
    fn gap_certification_examples() {
        assert_eq!(gap_certified(&[10.0, 6.0, 5.9, 1.0], 2.5).unwrap(), vec![1]);
        assert!(gap_certified(&[2.0, 2.0, 2.0], 1e-12).unwrap().is_empty());
        // only the lower gap binds at k = 1
        assert_eq!(gap_certified(&[100.0, 99.0], 0.5).unwrap(), vec![1, 2]);
        assert_eq!(gap_certified(&[100.0, 99.0], 2.0).unwrap(), Vec::<usize>::new());
        assert_eq!(gap_certified(&[5.0], 5.0).unwrap(), vec![1]);
    }

    #[test]
    fn certify_from_decomposition() {
        let s = SymmetricMatrix::diagonal(&[10.0, 6.0, 5.9, 1.0]).unwrap();
        let d = linalg::eigh(&s).unwrap();
        let n = 10_000;
        let r = certify_eigenvectors(&d, n, 4, Regime::Two, 0.5, &consts(1e-4, 0.0)).unwrap();
        // threshold 22.9 * 1e-4 * 0.0303 * 8 is tiny: every gap >= 0.1 clears it
        assert!(r.threshold < 0.1);
        assert_eq!(r.certified_vectors, vec![1, 2, 3, 4]);
        assert_eq!(r.k, 4);
    }

    #[test]
    fn combined_noise_level_example() {
        let v = combined_noise_level(0.001, 0.0, 1.0, 1.0, 1.0, 2.0, 3.0);
        assert_abs_diff_eq!(v, 0.021_800_838_230_519_04, epsilon = 1e-13);
        assert!(combined_noise_level(1e-12, 0.0, 0.5, 1.0, 1.0, 2.0, 3.0) < 1e-7);
    }

    #[test]
    fn combined_selector_certifies_prefix() {
        let poly = PolyDecayParams::fitted(10, EigenvalueRule::Power { scale: 1.0, exponent: 2.0 }, 2.0, 2.0, 3.0);
        let m = PopulationModel::poly_decay(poly.clone()).unwrap();
        let r = select_combined_poly(m.sigma(), 10_000, 10, &poly, 0.5, &consts(1e-3, 0.5)).unwrap();
        assert_eq!(r.certified_vectors, (1..=r.k).collect::<Vec<_>>());
        assert!(r.k > 0);
        let tiny = select_combined_poly(m.sigma(), 10_000, 10, &poly, 0.5, &consts(1e-12, 0.5)).unwrap();
        assert_eq!(tiny.k, 10);
    }

    #[test]
    fn eigenvector_error_bound_examples() {
        let m = PopulationModel::from_spectrum(vec![3.0, 1.0, 0.5], Basis::Standard).unwrap();
        assert_abs_diff_eq!(eigenvector_error_bound(&m, 2, 0.1).unwrap(), 0.44, epsilon = 1e-14);
        assert_eq!(eigenvector_error_bound(&m, 2, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(error_bound_for_gap(0.3, 0.3), 7.0, epsilon = 1e-14);
        let tied = PopulationModel::from_spectrum(vec![1.0, 1.0], Basis::Standard).unwrap();
        assert_eq!(eigenvector_error_bound(&tied, 1, 0.1).unwrap(), f64::INFINITY);
        assert!(eigenvector_error_bound(&m, 4, 0.1).is_err());
    }
}
