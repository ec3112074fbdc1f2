//! Ground-truth covariance models with known spectra and seeded samplers.

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SymmetricMatrix};

/// Seeded generator used by every sampler.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Haar-distributed `p x p` orthonormal matrix.
///
/// QR of a standard normal matrix with the `R` diagonal made positive.
pub fn random_orthonormal(p: usize, seed: u64) -> Result<Array2<f64>> {
    let mut rng = rng_from_seed(seed);
    let z = Array2::from_shape_simple_fn((p, p), || rng.sample::<f64, _>(StandardNormal));
    linalg::orthonormalize_columns(&z)
}

/// Eigenbasis of a population model.
#[derive(Debug, Clone, PartialEq)]
pub enum Basis {
    /// Coordinate axes; `Sigma` is diagonal.
    Standard,
    /// Orthonormal columns.
    Dense(Array2<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorParams {
    pub p: usize,
    /// `lambda_1 > ... > lambda_R > 0`.
    pub strengths: Vec<f64>,
    /// `sigma^2`.
    pub noise_var: f64,
    pub loading_seed: u64,
}

impl FactorParams {
    pub fn factors(&self) -> usize {
        self.strengths.len()
    }

    fn validate(&self) -> Result<()> {
        let r = self.factors();
        if r == 0 || r >= self.p {
            return Err(Error::InvalidParameter(format!("factor count {r} must lie in [1, p) with p = {}", self.p)));
        }
        if self.strengths.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidParameter("factor strengths must be positive".into()));
        }
        if self.strengths.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidParameter("factor strengths must be strictly decreasing".into()));
        }
        if !(self.noise_var >= 0.0) {
            return Err(Error::InvalidParameter("noise variance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// How the eigenvalues of a polynomial-decay model are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum EigenvalueRule {
    /// `lambda_k = scale * k^(-exponent)`.
    Power { scale: f64, exponent: f64 },
    /// Power law up to `jump_after`, then multiplied by `factor`.
    Planted { scale: f64, exponent: f64, jump_after: usize, factor: f64 },
    /// Explicit descending values.
    Explicit { values: Vec<f64> },
}

impl EigenvalueRule {
    pub fn spectrum(&self, p: usize) -> Result<Vec<f64>> {
        match self {
            EigenvalueRule::Power { scale, exponent } => {
                Ok((1..=p).map(|k| scale * (k as f64).powf(-exponent)).collect())
            }
            EigenvalueRule::Planted { scale, exponent, jump_after, factor } => Ok((1..=p)
                .map(|k| {
                    let base = scale * (k as f64).powf(-exponent);
                    if k > *jump_after {
                        base * factor
                    } else {
                        base
                    }
                })
                .collect()),
            EigenvalueRule::Explicit { values } => {
                if values.len() != p {
                    return Err(Error::Dimension(format!("{} explicit eigenvalues for p = {p}", values.len())));
                }
                if let Some(i) = values.windows(2).position(|w| w[0] < w[1]) {
                    return Err(Error::Unsorted(i + 1));
                }
                Ok(values.clone())
            }
        }
    }
}

/// Decay exponents and constants of a polynomially decaying spectrum:
/// `c2l k^-beta2 <= lambda_k <= c1l k^-beta1` and nearest distinct
/// eigenvalue at distance `>= c3l k^-beta3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyDecayParams {
    pub p: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub c1l: f64,
    pub c2l: f64,
    pub c3l: f64,
    pub rule: EigenvalueRule,
    /// `None` keeps the coordinate basis.
    #[serde(default)]
    pub basis_seed: Option<u64>,
}

impl PolyDecayParams {
    /// `lambda_k = scale * k^-beta` with the tightest constants for
    /// `beta1 = beta2 = beta` and the given `beta3`.
    pub fn power_law(p: usize, scale: f64, beta: f64, beta3: f64) -> Self {
        let rule = EigenvalueRule::Power { scale, exponent: beta };
        Self::fitted(p, rule, beta, beta, beta3)
    }

    /// Uses the tightest constants the generated spectrum admits.
    pub fn fitted(p: usize, rule: EigenvalueRule, beta1: f64, beta2: f64, beta3: f64) -> Self {
        let spectrum = rule.spectrum(p).unwrap_or_default();
        let (c1l, c2l, c3l) = tightest_constants(&spectrum, beta1, beta2, beta3);
        Self { p, beta1, beta2, beta3, c1l, c2l, c3l, rule, basis_seed: None }
    }

    pub fn validate_exponents(&self) -> Result<()> {
        if !(self.beta1 > 1.0 && self.beta2 >= self.beta1 && self.beta3 > self.beta2) {
            return Err(Error::InvalidParameter(format!(
                "need beta3 > beta2 >= beta1 > 1, got ({}, {}, {})",
                self.beta1, self.beta2, self.beta3
            )));
        }
        if !(self.c1l > 0.0 && self.c2l > 0.0 && self.c3l > 0.0) {
            return Err(Error::InvalidParameter("decay constants must be positive".into()));
        }
        if self.p == 0 {
            return Err(Error::InvalidParameter("p must be positive".into()));
        }
        Ok(())
    }

    /// Checks both decay inequalities, reporting the first violated index (1-based).
    pub fn check_spectrum(&self, spectrum: &[f64]) -> Result<()> {
        for (i, &lam) in spectrum.iter().enumerate() {
            let k = (i + 1) as f64;
            if lam > self.c1l * k.powf(-self.beta1) || lam < self.c2l * k.powf(-self.beta2) {
                return Err(Error::DecayViolation { bound: "the eigenvalue envelope", index: i + 1 });
            }
            if min_gap(spectrum, i) < self.c3l * k.powf(-self.beta3) {
                return Err(Error::DecayViolation { bound: "the eigenvalue gap bound", index: i + 1 });
            }
        }
        Ok(())
    }

    /// Jump constant `3 c1l^(beta3/beta1) / c2l` from the lower envelope.
    pub fn c4l_lower_envelope(&self) -> f64 {
        3.0 * self.c1l.powf(self.beta3 / self.beta1) / self.c2l
    }

    /// Variant with the gap constant in the denominator, `3 c1l^(beta3/beta1) / c3l`.
    pub fn c4l_gap(&self) -> f64 {
        3.0 * self.c1l.powf(self.beta3 / self.beta1) / self.c3l
    }
}

/// Distance from `spectrum[i]` to the nearest distinct eigenvalue (`+inf` if none).
pub fn min_gap(spectrum: &[f64], i: usize) -> f64 {
    let lam = spectrum[i];
    spectrum
        .iter()
        .filter(|&&other| other != lam)
        .map(|other| (other - lam).abs())
        .fold(f64::INFINITY, f64::min)
}

fn tightest_constants(spectrum: &[f64], beta1: f64, beta2: f64, beta3: f64) -> (f64, f64, f64) {
    let mut c1: f64 = 0.0;
    let mut c2 = f64::INFINITY;
    let mut c3 = f64::INFINITY;
    for (i, &lam) in spectrum.iter().enumerate() {
        let k = (i + 1) as f64;
        c1 = c1.max(lam * k.powf(beta1));
        c2 = c2.min(lam * k.powf(beta2));
        c3 = c3.min(min_gap(spectrum, i) * k.powf(beta3));
    }
    if !c3.is_finite() {
        // a single eigenvalue has no gap constraint
        c3 = c1;
    }
    (c1, c2, c3)
}

/// Which construction produced a [`PopulationModel`].
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Explicit,
    Factor(FactorParams),
    PolyDecay(PolyDecayParams),
}

/// A population covariance matrix with its known eigenstructure.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationModel {
    kind: ModelKind,
    sigma: SymmetricMatrix,
    spectrum: Vec<f64>,
    basis: Basis,
}

impl PopulationModel {
    /// Wraps an arbitrary PSD matrix, computing its eigenstructure.
    pub fn explicit(sigma: SymmetricMatrix) -> Result<Self> {
        let decomp = linalg::eigh(&sigma)?;
        let scale = decomp.values().first().map(|v| v.abs()).unwrap_or(0.0);
        if let Some(&min) = decomp.values().last() {
            if min < -1e-10 * scale.max(1.0) {
                return Err(Error::InvalidParameter(format!("covariance is not PSD (min eigenvalue {min:e})")));
            }
        }
        let spectrum = decomp.values().iter().map(|v| v.max(0.0)).collect();
        let basis = Basis::Dense(decomp.vectors().clone());
        Ok(Self { kind: ModelKind::Explicit, sigma, spectrum, basis })
    }

    /// `Sigma = V diag(spectrum) V'` for a descending nonnegative spectrum.
    pub fn from_spectrum(spectrum: Vec<f64>, basis: Basis) -> Result<Self> {
        if spectrum.is_empty() {
            return Err(Error::Dimension("empty spectrum".into()));
        }
        if let Some(i) = spectrum.windows(2).position(|w| w[0] < w[1]) {
            return Err(Error::Unsorted(i + 1));
        }
        if spectrum.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidParameter("eigenvalues must be nonnegative".into()));
        }
        let p = spectrum.len();
        let sigma = match &basis {
            Basis::Standard => SymmetricMatrix::diagonal(&spectrum)?,
            Basis::Dense(v) => {
                if v.dim() != (p, p) {
                    return Err(Error::Dimension(format!("basis {:?} for p = {p}", v.dim())));
                }
                let scaled = v * &Array1::from(spectrum.clone());
                SymmetricMatrix::symmetrize(scaled.dot(&v.t()))?
            }
        };
        Ok(Self { kind: ModelKind::Explicit, sigma, spectrum, basis })
    }

    /// Scaled factor model `Sigma / p = sum_r lambda_r xi_r xi_r' + (sigma^2 / p) I`.
    ///
    /// The stored matrix is already divided by `p`.
    pub fn factor(params: FactorParams) -> Result<Self> {
        params.validate()?;
        let p = params.p;
        let floor = params.noise_var / p as f64;
        let mut spectrum = vec![floor; p];
        for (slot, strength) in spectrum.iter_mut().zip(&params.strengths) {
            *slot += strength;
        }
        let basis = Basis::Dense(random_orthonormal(p, params.loading_seed)?);
        let mut model = Self::from_spectrum(spectrum, basis)?;
        model.kind = ModelKind::Factor(params);
        Ok(model)
    }

    /// Polynomially decaying spectrum, rejected unless both decay bounds hold.
    pub fn poly_decay(params: PolyDecayParams) -> Result<Self> {
        params.validate_exponents()?;
        let spectrum = params.rule.spectrum(params.p)?;
        params.check_spectrum(&spectrum)?;
        let basis = match params.basis_seed {
            Some(seed) => Basis::Dense(random_orthonormal(params.p, seed)?),
            None => Basis::Standard,
        };
        let mut model = Self::from_spectrum(spectrum, basis)?;
        model.kind = ModelKind::PolyDecay(params);
        Ok(model)
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn sigma(&self) -> &SymmetricMatrix {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.spectrum.len()
    }

    /// Descending population eigenvalues.
    pub fn true_spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    /// Population eigenvector paired with `true_spectrum()[k]` (0-based).
    pub fn eigenvector(&self, k: usize) -> Array1<f64> {
        match &self.basis {
            Basis::Standard => {
                let mut e = Array1::zeros(self.dim());
                e[k] = 1.0;
                e
            }
            Basis::Dense(v) => v.column(k).to_owned(),
        }
    }

    pub fn trace(&self) -> f64 {
        self.spectrum.iter().sum()
    }

    pub fn operator_norm(&self) -> f64 {
        self.spectrum.first().copied().unwrap_or(0.0)
    }

    pub fn effective_rank(&self) -> Result<f64> {
        linalg::effective_rank_from_parts(self.trace(), self.operator_norm())
    }

    /// Maps independent unit-scale coordinates `z` (rows) to observations
    /// `V diag(sqrt(lambda)) z`.
    fn color(&self, mut z: Array2<f64>) -> Array2<f64> {
        let roots: Array1<f64> = self.spectrum.iter().map(|v| v.max(0.0).sqrt()).collect();
        z *= &roots;
        match &self.basis {
            Basis::Standard => z,
            Basis::Dense(v) => z.dot(&v.t()),
        }
    }
}

/// `n` observations of a `p`-vector, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    rows: Array2<f64>,
}

impl SampleMatrix {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("sample has non-finite entries".into()));
        }
        if rows.ncols() == 0 {
            return Err(Error::Dimension("sample has zero columns".into()));
        }
        Ok(Self { rows })
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn p(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn into_rows(self) -> Array2<f64> {
        self.rows
    }
}

/// Law of the independent components before rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentLaw {
    Rademacher,
    Uniform,
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    Ok(())
}

/// `n` i.i.d. draws from `N(0, Sigma)`.
pub fn sample_gaussian(model: &PopulationModel, n: usize, seed: u64) -> Result<SampleMatrix> {
    check_n(n)?;
    let mut rng = rng_from_seed(seed);
    let z = Array2::from_shape_simple_fn((n, model.dim()), || rng.sample::<f64, _>(StandardNormal));
    SampleMatrix::new(model.color(z))
}

/// Independent unit-variance components scaled by `sqrt(lambda_j)`, then rotated
/// into the model's eigenbasis.
pub fn sample_subgaussian_rotated(
    model: &PopulationModel,
    n: usize,
    seed: u64,
    law: ComponentLaw,
) -> Result<SampleMatrix> {
    check_n(n)?;
    let mut rng = rng_from_seed(seed);
    let half_width = 3.0_f64.sqrt();
    let z = Array2::from_shape_simple_fn((n, model.dim()), || match law {
        ComponentLaw::Rademacher => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        ComponentLaw::Uniform => rng.random_range(-half_width..half_width),
    });
    SampleMatrix::new(model.color(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn empirical_cov(x: &SampleMatrix) -> Array2<f64> {
        let n = x.n() as f64;
        let rows = x.rows();
        let mean = rows.mean_axis(ndarray::Axis(0)).unwrap();
        let centered = &rows - &mean;
        centered.t().dot(&centered) / n
    }

    #[test]
    fn factor_spectrum_and_effective_rank() {
        let params = FactorParams { p: 100, strengths: vec![2.0, 1.0], noise_var: 1.0, loading_seed: 7 };
        let model = PopulationModel::factor(params).unwrap();
        let spec = model.true_spectrum();
        assert_abs_diff_eq!(spec[0], 2.01, epsilon = 1e-12);
        assert_abs_diff_eq!(spec[1], 1.01, epsilon = 1e-12);
        assert_abs_diff_eq!(spec[2], 0.01, epsilon = 1e-12);
        // independent route: decompose the assembled matrix
        let d = linalg::eigh(model.sigma()).unwrap();
        for (a, b) in d.values().iter().zip(spec) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
        let re = linalg::effective_rank(model.sigma()).unwrap();
        assert_abs_diff_eq!(re, 4.0 / 2.01, epsilon = 1e-9);
        assert_abs_diff_eq!(re, 1.990_05, epsilon = 1e-5);
    }

    #[test]
    fn factor_rank_one_and_trace() {
        let one = FactorParams { p: 5, strengths: vec![1.0], noise_var: 0.0, loading_seed: 1 };
        let m = PopulationModel::factor(one).unwrap();
        assert_abs_diff_eq!(linalg::effective_rank(m.sigma()).unwrap(), 1.0, epsilon = 1e-9);

        let three = FactorParams { p: 10, strengths: vec![3.0, 2.0, 1.0], noise_var: 0.0, loading_seed: 2 };
        let m = PopulationModel::factor(three).unwrap();
        assert_abs_diff_eq!(linalg::trace(m.sigma()), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn factor_rejects_too_many_factors() {
        let bad = FactorParams { p: 2, strengths: vec![2.0, 1.0], noise_var: 1.0, loading_seed: 0 };
        assert!(PopulationModel::factor(bad).is_err());
        let unsorted = FactorParams { p: 5, strengths: vec![1.0, 2.0], noise_var: 1.0, loading_seed: 0 };
        assert!(PopulationModel::factor(unsorted).is_err());
    }

    #[test]
    fn random_orthonormal_is_orthonormal_and_seeded() {
        let q = random_orthonormal(30, 11).unwrap();
        let g = q.t().dot(&q);
        for ((i, j), v) in g.indexed_iter() {
            assert_abs_diff_eq!(*v, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-13);
        }
        assert_eq!(q, random_orthonormal(30, 11).unwrap());
        assert_ne!(q, random_orthonormal(30, 12).unwrap());
    }

    /// Brute-force scan of both decay inequalities, independent of `check_spectrum`.
    fn scan_first_violation(spec: &[f64], c1: f64, b1: f64, c2: f64, b2: f64, c3: f64, b3: f64) -> Option<usize> {
        for k in 1..=spec.len() {
            let lam = spec[k - 1];
            let kf = k as f64;
            let mut gap = f64::INFINITY;
            for (j, &other) in spec.iter().enumerate() {
                if j + 1 != k && other != lam {
                    gap = gap.min((other - lam).abs());
                }
            }
            if lam > c1 * kf.powf(-b1) || lam < c2 * kf.powf(-b2) || gap < c3 * kf.powf(-b3) {
                return Some(k);
            }
        }
        None
    }

    fn inverse_square(p: usize, c3l: f64, beta3: f64) -> PolyDecayParams {
        PolyDecayParams {
            p,
            beta1: 2.0,
            beta2: 2.0,
            beta3,
            c1l: 1.0,
            c2l: 1.0,
            c3l,
            rule: EigenvalueRule::Power { scale: 1.0, exponent: 2.0 },
            basis_seed: None,
        }
    }

    #[test]
    fn inverse_square_gap_constant() {
        let spec: Vec<f64> = (1..=50).map(|k| (k as f64).powi(-2)).collect();
        // the gap at k = 1 is 3/4, so the gap constant 1 already fails there
        assert_eq!(scan_first_violation(&spec, 1.0, 2.0, 1.0, 2.0, 1.0, 3.0), Some(1));
        assert_eq!(scan_first_violation(&spec, 1.0, 2.0, 1.0, 2.0, 0.75, 3.0), None);

        assert!(matches!(
            PolyDecayParams::check_spectrum(&inverse_square(50, 1.0, 3.0), &spec),
            Err(Error::DecayViolation { index: 1, .. })
        ));
        assert!(PopulationModel::poly_decay(inverse_square(50, 0.75, 3.0)).is_ok());

        // beta3 = 2 is not a valid exponent (needs beta3 > beta2)
        assert!(PopulationModel::poly_decay(inverse_square(50, 1.0, 2.0)).is_err());
        // the gap scan alone also rejects it, first at k = 1 (then k = 2: 5/36 < 1/4)
        let spec2 = inverse_square(50, 1.0, 2.0);
        assert!(matches!(spec2.check_spectrum(&spec), Err(Error::DecayViolation { index: 1, .. })));
        assert_abs_diff_eq!(spec[1] - spec[2], 5.0 / 36.0, epsilon = 1e-15);
    }

    #[test]
    fn fitted_constants_are_tight() {
        let params = PolyDecayParams::power_law(50, 1.0, 2.0, 3.0);
        assert_abs_diff_eq!(params.c1l, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(params.c2l, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(params.c3l, 0.75, epsilon = 1e-12);
        assert!(PopulationModel::poly_decay(params).is_ok());
    }

    #[test]
    fn poly_decay_with_one_dimension() {
        let params = PolyDecayParams::power_law(1, 0.5, 2.0, 3.0);
        let model = PopulationModel::poly_decay(params).unwrap();
        assert_eq!(model.true_spectrum(), &[0.5]);
    }

    #[test]
    fn rotated_poly_decay_matches_spectrum() {
        let mut params = PolyDecayParams::power_law(20, 1.0, 2.0, 3.0);
        params.basis_seed = Some(3);
        let model = PopulationModel::poly_decay(params).unwrap();
        let d = linalg::eigh(model.sigma()).unwrap();
        for (a, b) in d.values().iter().zip(model.true_spectrum()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn gaussian_zero_covariance_gives_zero_rows() {
        let model = PopulationModel::from_spectrum(vec![0.0; 3], Basis::Standard).unwrap();
        let x = sample_gaussian(&model, 5, 1).unwrap();
        assert!(x.rows().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_identity_large_n() {
        let model = PopulationModel::from_spectrum(vec![1.0; 4], Basis::Standard).unwrap();
        let x = sample_gaussian(&model, 100_000, 2024).unwrap();
        let cov = empirical_cov(&x);
        for ((i, j), v) in cov.indexed_iter() {
            assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 0.02, "({i},{j}) = {v}");
        }
    }

    #[test]
    fn samplers_are_deterministic_per_seed() {
        let model = PopulationModel::poly_decay(PolyDecayParams::power_law(6, 1.0, 2.0, 3.0)).unwrap();
        assert_eq!(sample_gaussian(&model, 10, 5).unwrap(), sample_gaussian(&model, 10, 5).unwrap());
        assert_ne!(sample_gaussian(&model, 10, 5).unwrap(), sample_gaussian(&model, 10, 6).unwrap());
        let a = sample_subgaussian_rotated(&model, 10, 5, ComponentLaw::Uniform).unwrap();
        assert_eq!(a, sample_subgaussian_rotated(&model, 10, 5, ComponentLaw::Uniform).unwrap());
    }

    #[test]
    fn rademacher_identity_entries_are_signs() {
        let model = PopulationModel::from_spectrum(vec![1.0, 1.0], Basis::Standard).unwrap();
        let x = sample_subgaussian_rotated(&model, 50, 3, ComponentLaw::Rademacher).unwrap();
        assert!(x.rows().iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn uniform_components_stay_in_range() {
        let spec = vec![4.0, 1.0, 0.25];
        let model = PopulationModel::from_spectrum(spec.clone(), Basis::Standard).unwrap();
        let x = sample_subgaussian_rotated(&model, 2000, 9, ComponentLaw::Uniform).unwrap();
        for (j, lam) in spec.iter().enumerate() {
            let bound = (3.0 * lam).sqrt();
            assert!(x.rows().column(j).iter().all(|v| v.abs() <= bound));
        }
    }

    #[test]
    fn rotated_subgaussian_covariance_converges() {
        let sigma = SymmetricMatrix::from_array(ndarray::array![[2.0, 0.5, 0.0], [0.5, 1.0, 0.3], [0.0, 0.3, 0.5]]).unwrap();
        let model = PopulationModel::explicit(sigma.clone()).unwrap();
        for law in [ComponentLaw::Rademacher, ComponentLaw::Uniform] {
            let x = sample_subgaussian_rotated(&model, 100_000, 77, law).unwrap();
            let cov = empirical_cov(&x);
            for ((i, j), v) in cov.indexed_iter() {
                assert!((v - sigma.get(i, j)).abs() < 0.02, "{law:?} ({i},{j}) = {v}");
            }
        }
    }

    #[test]
    fn covariance_error_shrinks_with_n() {
        let model = PopulationModel::poly_decay(PolyDecayParams::power_law(5, 1.0, 2.0, 3.0)).unwrap();
        let err = |n: usize| {
            let x = sample_gaussian(&model, n, 31).unwrap();
            let cov = empirical_cov(&x);
            (&cov - &model.sigma().view()).iter().fold(0.0_f64, |m, v| m.max(v.abs()))
        };
        let small = err(1_000);
        let large = err(64_000);
        // n^(-1/2) predicts a factor of 8
        assert!(large < small / 3.0, "{small} -> {large}");
    }

    #[test]
    fn too_few_samples() {
        let model = PopulationModel::from_spectrum(vec![1.0], Basis::Standard).unwrap();
        assert_eq!(sample_gaussian(&model, 1, 0), Err(Error::TooFewSamples(1)));
    }
}
