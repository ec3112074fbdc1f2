use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::{CovarianceOperator, DesignGrid, FROBENIUS_MOMENT_CONSTANT};
use crate::error::{Error, Result};
use crate::estimate::{self, ConstantsConfig, EmpiricalSpectrum, Regime};
use crate::linalg::{self, SymmetricMatrix};
use crate::screen::{self, JumpDecision, JumpRule, SelectionResult, SelectionRule};

/// `K = m^-1 {K(t_i, t_j)}`.
pub fn discretize(op: &CovarianceOperator, grid: &DesignGrid) -> Result<SymmetricMatrix> {
    let m = grid.m() as f64;
    let t = grid.points();
    SymmetricMatrix::from_fn(grid.m(), |i, j| op.kernel(t[i], t[j]) / m)
}

/// `Sigma = K + m^-1 sigma^2 I`.
pub fn population_covariance(op: &CovarianceOperator, grid: &DesignGrid, noise_var: f64) -> Result<SymmetricMatrix> {
    Ok(discretize(op, grid)?.shifted(noise_var / grid.m() as f64))
}

/// `m^-1/2 (phi_k(t_1), ..., phi_k(t_m))'`.
pub fn phi_vector(op: &CovarianceOperator, k: usize, grid: &DesignGrid) -> Result<Array1<f64>> {
    if k == 0 {
        return Err(Error::InvalidParameter("eigenfunction index is 1-based".into()));
    }
    let scale = (grid.m() as f64).sqrt().recip();
    Ok(grid.points().iter().map(|&t| scale * op.phi(k, t)).collect())
}

/// `max_{k1, k2 <= depth} |phi_k1' phi_k2 - delta_k1k2|` and the smallest
/// `c7l` with `|phi_k1' phi_k2 - delta| <= c7l max(k1, k2)^gamma1 / m`.
pub fn gram_deviation(op: &CovarianceOperator, grid: &DesignGrid, depth: usize) -> Result<(f64, f64)> {
    let phis = (1..=depth).map(|k| phi_vector(op, k, grid)).collect::<Result<Vec<_>>>()?;
    let m = grid.m() as f64;
    let gamma1 = op.constants().gamma1;
    let mut worst: f64 = 0.0;
    let mut c7l: f64 = 0.0;
    for (i, a) in phis.iter().enumerate() {
        for (j, b) in phis.iter().enumerate().skip(i) {
            let delta = if i == j { 1.0 } else { 0.0 };
            let dev = (a.dot(b) - delta).abs();
            worst = worst.max(dev);
            c7l = c7l.max(dev * m / ((j + 1) as f64).powf(gamma1));
        }
    }
    Ok((worst, c7l))
}

/// Deviations of the discretized operator from its continuum eigenstructure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximationReport {
    pub m: usize,
    pub depth: usize,
    /// `max_{k <= depth} |lambda_k(K) - rho_k|`.
    pub eigenvalue_deviation: f64,
    /// `|tr K - rho0|`.
    pub trace_deviation: f64,
    /// Number of eigenvectors compared: `min(depth, floor(m^(1/(beta1 + gamma1))))`.
    pub eigenvector_depth: usize,
    /// Sign-aligned `||psi_k - phi_k||` for `k <= eigenvector_depth`.
    pub eigenvector_deviations: Vec<f64>,
    /// `max_{k1, k2 <= depth} |phi_k1' phi_k2 - delta|`.
    pub gram_deviation: f64,
    /// `c8l m^((1 - beta1)/(beta1 + gamma1))`.
    pub eigenvalue_bound: f64,
    /// Per-`k` envelope with the additive term `7 c7l m^((1 - beta1)/(beta1 + gamma1))`.
    pub eigenvector_envelope_rate: Vec<f64>,
    /// Per-`k` envelope with the additive term `7 c7l N^(1 + gamma1) / m`, `N = ceil(m^(1/(beta1 + gamma1)))`.
    pub eigenvector_envelope_depth: Vec<f64>,
    /// `m^((1 - beta1)/(beta1 + gamma1)) <= 1/(12 c7l)`.
    pub validity_holds: bool,
    pub warnings: Vec<String>,
}

impl ApproximationReport {
    pub fn max_eigenvector_deviation(&self) -> f64 {
        self.eigenvector_deviations.iter().copied().fold(0.0, f64::max)
    }
}

pub fn approximation_report(op: &CovarianceOperator, grid: &DesignGrid, depth: usize) -> Result<ApproximationReport> {
    let m = grid.m();
    if depth == 0 || depth > m {
        return Err(Error::InvalidParameter(format!("depth {depth} must lie in 1..={m}")));
    }
    let k_mat = discretize(op, grid)?;
    let decomp = linalg::eigh(&k_mat)?;
    let rho = op.spectrum(depth + 1);
    let eigenvalue_deviation = (0..depth).map(|i| (decomp.values()[i] - rho[i]).abs()).fold(0.0, f64::max);
    let trace_deviation = (linalg::trace(&k_mat) - op.rho0()).abs();

    let c = *op.constants();
    let rate = op.approximation_rate(m);
    let eigenvalue_bound = op.c8l() * rate;
    let eigenvector_depth = depth.min(op.resolvable_depth(m));
    let n_ceil = (m as f64).powf(1.0 / (c.beta1 + c.gamma1)).ceil();
    let mut eigenvector_deviations = Vec::with_capacity(eigenvector_depth);
    let mut eigenvector_envelope_rate = Vec::with_capacity(eigenvector_depth);
    let mut eigenvector_envelope_depth = Vec::with_capacity(eigenvector_depth);
    for k in 1..=eigenvector_depth {
        let phi = phi_vector(op, k, grid)?;
        eigenvector_deviations.push(linalg::aligned_distance(decomp.vector(k - 1), phi.view())?);
        let gap = operator_gap(&rho, k);
        let head = screen::error_bound_for_gap(gap, eigenvalue_bound);
        eigenvector_envelope_rate.push(head + 7.0 * c.c7l * rate);
        eigenvector_envelope_depth.push(head + 7.0 * c.c7l * n_ceil.powf(1.0 + c.gamma1) / m as f64);
    }

    let validity_holds = rate <= 1.0 / (12.0 * c.c7l);
    let mut warnings = Vec::new();
    if !validity_holds {
        warnings.push(format!("grid too coarse for the approximation bounds: m^rate = {rate:.4} > 1/(12 c7l) = {:.4}", 1.0 / (12.0 * c.c7l)));
    }
    Ok(ApproximationReport {
        m,
        depth,
        eigenvalue_deviation,
        trace_deviation,
        eigenvector_depth,
        eigenvector_deviations,
        gram_deviation: gram_deviation(op, grid, depth)?.0,
        eigenvalue_bound,
        eigenvector_envelope_rate,
        eigenvector_envelope_depth,
        validity_holds,
        warnings,
    })
}

/// Distance from `rho_k` to the rest of the operator spectrum; `rho` must
/// extend at least one index past `k`.
fn operator_gap(rho: &[f64], k: usize) -> f64 {
    let below = rho[k - 1] - rho[k];
    if k == 1 {
        below
    } else {
        below.min(rho[k - 2] - rho[k - 1])
    }
}

/// Jump detection on the discretized problem at `(C_4 eta~_2)^(beta1/beta3)`,
/// `C_4 = 3 c1l^(beta3/beta1) / c3l` unless configured.
pub fn detect_operator_jump(
    sigma_n: &SymmetricMatrix,
    n: usize,
    op: &CovarianceOperator,
    grid: &DesignGrid,
    consts: &ConstantsConfig,
) -> Result<JumpDecision> {
    detect_operator_jump_from(&EmpiricalSpectrum::of(sigma_n)?, n, op, grid, consts)
}

pub fn detect_operator_jump_from(
    spectrum: &EmpiricalSpectrum,
    n: usize,
    op: &CovarianceOperator,
    grid: &DesignGrid,
    consts: &ConstantsConfig,
) -> Result<JumpDecision> {
    let c = op.constants();
    let eta = estimate::eta_from_spectrum(spectrum, n, grid.m(), Regime::Two, consts)?;
    let c4l = consts.c4l.unwrap_or_else(|| op.c4l());
    let threshold = screen::poly_threshold(c4l * eta, c.beta1, c.beta3)?;
    Ok(JumpDecision {
        s_hat: screen::scree_count(&spectrum.values, threshold)?,
        threshold,
        eta,
        regime: Regime::Two,
        rule: JumpRule::PolyJump,
        warnings: Vec::new(),
    })
}

/// Whether the population quantities admit a detectable jump after `s`:
/// `(upper, lower)` halves of the two-sided condition on `rho_s`, `rho_{s+1}`.
#[allow(clippy::too_many_arguments)]
pub fn operator_jump_condition(
    op: &CovarianceOperator,
    s: usize,
    m: usize,
    noise_var: f64,
    eta2: f64,
    eps1: f64,
    c4l: f64,
) -> (bool, bool) {
    let c = op.constants();
    let e = c.beta1 / c.beta3;
    let slack = op.c8l() * op.approximation_rate(m) + noise_var / m as f64 + eta2;
    let upper = op.rho(s) >= (c4l * (1.0 + eps1) * eta2).powf(e) + slack;
    let lower = op.rho(s + 1) < (c4l * (1.0 - eps1) * eta2).powf(e) - slack;
    (upper, lower)
}

/// `eta_f = C_10 (eta2 + m^((1 - beta1)/(beta1 + gamma1)))` with
/// `C_10 = max(sigma^2/m + c2 rho0, c8l)`.
pub fn eta_functional(op: &CovarianceOperator, m: usize, noise_var: f64, eta2: f64) -> f64 {
    let c10 = (noise_var / m as f64 + FROBENIUS_MOMENT_CONSTANT * op.rho0()).max(op.c8l());
    c10 * (eta2 + op.approximation_rate(m))
}

/// `eta_op = c1l (3 eta_f / (c3l alpha))^(beta1/beta3) + eta_f`.
pub fn eta_operator(op: &CovarianceOperator, eta_f: f64, alpha: f64) -> f64 {
    let c = op.constants();
    c.c1l * (3.0 * eta_f / (c.c3l * alpha)).powf(c.beta1 / c.beta3) + eta_f
}

/// Operator-level selection: `K_op` leading eigenvalues above `eta_op`, with
/// eigenvectors certified up to `min(K_op, floor(m^(1/(beta1 + gamma1))))`.
pub fn select_operator_eigen(
    sigma_n: &SymmetricMatrix,
    n: usize,
    op: &CovarianceOperator,
    grid: &DesignGrid,
    noise_var: f64,
    alpha: f64,
    consts: &ConstantsConfig,
) -> Result<SelectionResult> {
    select_operator_eigen_from(&EmpiricalSpectrum::of(sigma_n)?, n, op, grid, noise_var, alpha, consts)
}

pub fn select_operator_eigen_from(
    spectrum: &EmpiricalSpectrum,
    n: usize,
    op: &CovarianceOperator,
    grid: &DesignGrid,
    noise_var: f64,
    alpha: f64,
    consts: &ConstantsConfig,
) -> Result<SelectionResult> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let m = grid.m();
    let eta = estimate::eta_from_spectrum(spectrum, n, m, Regime::Two, consts)?;
    let threshold = eta_operator(op, eta_functional(op, m, noise_var, eta), alpha);
    let k = screen::scree_count(&spectrum.values, threshold)?;
    Ok(SelectionResult {
        k,
        alpha,
        rule: SelectionRule::CombinedKev,
        certified_vectors: (1..=k.min(op.resolvable_depth(m))).collect(),
        threshold,
        eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn discretize_two_points() {
        let grid = DesignGrid::new(vec![1.0 / 3.0, 2.0 / 3.0], 1.5).unwrap();
        let k = discretize(&CovarianceOperator::brownian_motion(), &grid).unwrap();
        assert_abs_diff_eq!(k.get(0, 0), 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k.get(0, 1), 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k.get(1, 1), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn top_eigenvalue_matches_closed_form() {
        // independent route: eigendecompose a fine discretization
        let grid = DesignGrid::midpoint(2000).unwrap();
        let k = discretize(&CovarianceOperator::brownian_motion(), &grid).unwrap();
        let values = linalg::eigvalsh(&k).unwrap();
        assert_abs_diff_eq!(values[0], 0.405_284_734_569_351, epsilon = 1e-6);
    }

    #[test]
    fn trace_on_right_endpoint_style_grid() {
        // t_j = j/m is not an interior grid, so sum the kernel diagonal directly
        for m in [10usize, 100, 1000] {
            let tr: f64 = (1..=m).map(|j| j as f64 / m as f64).sum::<f64>() / m as f64;
            assert_abs_diff_eq!(tr, (m as f64 + 1.0) / (2.0 * m as f64), epsilon = 1e-14);
            assert!((tr - 0.5).abs() <= CovarianceOperator::brownian_motion().constants().c9l / m as f64);
        }
    }

    #[test]
    fn discretized_matrices_are_psd() {
        let grid = DesignGrid::offset(40, 0.25).unwrap();
        for op in [
            CovarianceOperator::brownian_motion(),
            CovarianceOperator::brownian_bridge(),
            CovarianceOperator::planted_jump(3, 1e-3).unwrap(),
        ] {
            let values = linalg::eigvalsh(&discretize(&op, &grid).unwrap()).unwrap();
            assert!(values.iter().all(|&v| v > -1e-12));
        }
    }

    #[test]
    fn spectrum_shift_by_noise() {
        let grid = DesignGrid::midpoint(30).unwrap();
        let op = CovarianceOperator::brownian_bridge();
        let k = linalg::eigh(&discretize(&op, &grid).unwrap()).unwrap();
        let s = linalg::eigh(&population_covariance(&op, &grid, 0.6).unwrap()).unwrap();
        for (a, b) in k.values().iter().zip(s.values()) {
            assert_abs_diff_eq!(b - a, 0.02, epsilon = 1e-12);
        }
        for i in 0..5 {
            assert!(linalg::aligned_distance(s.vector(i), k.vector(i)).unwrap() < 1e-8);
        }
    }

    #[test]
    fn phi_vectors_are_nearly_orthonormal() {
        let grid = DesignGrid::offset(200, 0.25).unwrap();
        let op = CovarianceOperator::brownian_motion();
        let (dev, c7l) = gram_deviation(&op, &grid, 10).unwrap();
        assert!(dev < 0.05 && dev > 0.0);
        assert!(c7l * 10.0 / 200.0 >= dev);
        assert!(phi_vector(&op, 0, &grid).is_err());
    }

    #[test]
    fn effective_rank_envelope() {
        let op = CovarianceOperator::brownian_motion();
        for m in [64usize, 256] {
            let grid = DesignGrid::midpoint(m).unwrap();
            let k = discretize(&op, &grid).unwrap();
            let (_, c7l) = gram_deviation(&op, &grid, op.resolvable_depth(m)).unwrap();
            let fitted = op.with_c7l(c7l.max(1e-3));
            let denom = op.rho(1) - fitted.c8l() * fitted.approximation_rate(m);
            if denom > 0.0 {
                let bound = (op.rho0() + op.constants().c9l / m as f64) / denom;
                assert!(linalg::effective_rank(&k).unwrap() <= bound);
            }
        }
    }

    #[test]
    fn report_on_offset_grid() {
        let op = CovarianceOperator::brownian_motion();
        let grid = DesignGrid::offset(64, 0.25).unwrap();
        let r = approximation_report(&op, &grid, 10).unwrap();
        assert_eq!(r.eigenvector_depth, 4);
        assert!(r.eigenvalue_deviation > 0.0 && r.eigenvalue_deviation < r.eigenvalue_bound);
        assert!(r.trace_deviation > 0.0 && r.trace_deviation <= op.constants().c9l / 64.0);
        assert!(r.max_eigenvector_deviation() < 0.1);
        for (d, env) in r.eigenvector_deviations.iter().zip(&r.eigenvector_envelope_rate) {
            assert!(d <= env);
        }
        assert!(approximation_report(&op, &grid, 65).is_err());
    }

    #[test]
    fn validity_warning() {
        let op = CovarianceOperator::brownian_motion();
        let r = approximation_report(&op, &DesignGrid::midpoint(16).unwrap(), 4).unwrap();
        assert!(!r.validity_holds);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn operator_thresholds() {
        let op = CovarianceOperator::brownian_motion();
        let consts = ConstantsConfig { c: 1.0, c1: 0.5, ..Default::default() };
        let grid = DesignGrid::midpoint(50).unwrap();
        let k = discretize(&op, &grid).unwrap();
        let d = detect_operator_jump(&k, 10_000, &op, &grid, &consts).unwrap();
        assert_abs_diff_eq!(d.threshold, (op.c4l() * d.eta).powf(2.0 / 3.0), epsilon = 1e-14);
        let fixed = ConstantsConfig { c4l: Some(1.0), ..consts.clone() };
        let d2 = detect_operator_jump(&k, 10_000, &op, &grid, &fixed).unwrap();
        assert_abs_diff_eq!(d2.threshold, d.eta.powf(2.0 / 3.0), epsilon = 1e-14);

        let sel = select_operator_eigen(&k, 10_000, &op, &grid, 0.0, 0.5, &consts).unwrap();
        let eta_f = eta_functional(&op, 50, 0.0, sel.eta);
        assert_abs_diff_eq!(sel.threshold, eta_operator(&op, eta_f, 0.5), epsilon = 1e-14);
        assert!(sel.certified_vectors.len() <= op.resolvable_depth(50));
        let sharp = op.with_c7l(0.0);
        assert_abs_diff_eq!(eta_functional(&sharp, 1000, 0.0, 0.0), FROBENIUS_MOMENT_CONSTANT * 0.5 * 0.1, epsilon = 1e-12);
    }

    #[test]
    fn jump_condition_on_planted_operator() {
        let op = CovarianceOperator::planted_jump(4, 1e-4).unwrap();
        // the grid approximation term c8l m^-1/3 alone exceeds rho_4 at m = 500
        assert!(op.c8l() * op.approximation_rate(500) > op.rho(4));
        assert_eq!(operator_jump_condition(&op, 4, 500, 0.0, 1e-9, 0.0, 1.0), (false, false));
        // with an exact grid constant and a huge m both halves can hold
        let sharp = op.with_c7l(0.0);
        let (upper, _) = operator_jump_condition(&sharp, 4, 1 << 40, 0.0, 1e-12, 0.0, 1.0);
        assert!(upper);
    }
}
