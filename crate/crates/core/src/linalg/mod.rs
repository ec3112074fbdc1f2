//! Dense symmetric linear algebra: eigendecomposition, norms, effective rank.

mod jacobi;
mod matrix;
mod tridiagonal;

use ndarray::{Array1, Array2, ArrayView1};

pub use matrix::SymmetricMatrix;

use crate::error::{Error, Result};

/// Relative reconstruction tolerance guaranteed by [`eigh`].
pub const RECONSTRUCTION_TOL: f64 = 1e-10;

/// Largest dimension routed to the Jacobi solver by [`EigenSolver::Auto`].
pub const JACOBI_MAX_DIM: usize = 128;

/// Choice of symmetric eigensolver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenSolver {
    /// Cyclic Jacobi rotations.
    Jacobi,
    /// Householder tridiagonalization plus implicit QL.
    HouseholderQl,
    /// Jacobi up to [`JACOBI_MAX_DIM`], Householder-QL above.
    #[default]
    Auto,
}

impl EigenSolver {
    fn resolve(self, dim: usize) -> Self {
        match self {
            EigenSolver::Auto if dim <= JACOBI_MAX_DIM => EigenSolver::Jacobi,
            EigenSolver::Auto => EigenSolver::HouseholderQl,
            other => other,
        }
    }
}

/// Eigenvalues in descending order with their orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    values: Vec<f64>,
    /// Column `k` is the eigenvector of `values[k]`.
    vectors: Array2<f64>,
}

impl SpectralDecomposition {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    /// Eigenvector paired with the `k`-th largest eigenvalue (0-based).
    pub fn vector(&self, k: usize) -> ArrayView1<'_, f64> {
        self.vectors.column(k)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V diag(lambda) V'`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.vectors * &Array1::from(self.values.clone());
        scaled.dot(&self.vectors.t())
    }

    /// `max |V'V - I|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let gram = self.vectors.t().dot(&self.vectors);
        let mut worst: f64 = 0.0;
        for ((i, j), g) in gram.indexed_iter() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
        worst
    }

    /// `||V diag(lambda) V' - M||_F / ||M||_F` (absolute when `M = 0`).
    pub fn relative_residual(&self, m: &SymmetricMatrix) -> f64 {
        let diff = self.reconstruct() - m.view();
        let num = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
        let den = frobenius_norm(m);
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }
}

/// Full symmetric eigendecomposition with eigenvalues sorted descending.
///
/// The sort is stable, so tied eigenvalues keep the solver's output order.
pub fn eigh(m: &SymmetricMatrix) -> Result<SpectralDecomposition> {
    eigh_with(m, EigenSolver::Auto)
}

pub fn eigh_with(m: &SymmetricMatrix, solver: EigenSolver) -> Result<SpectralDecomposition> {
    let p = m.dim();
    let (values, rows) = solve(m, solver, true)?;
    let rows = rows.expect("vectors requested");
    let order = descending_order(&values);
    let mut vectors = Array2::zeros((p, p));
    for (col, &src) in order.iter().enumerate() {
        for i in 0..p {
            vectors[[i, col]] = rows[src * p + i];
        }
    }
    let values = order.iter().map(|&k| values[k]).collect();
    Ok(SpectralDecomposition { values, vectors })
}

/// Eigenvalues only, sorted descending.
pub fn eigvalsh(m: &SymmetricMatrix) -> Result<Vec<f64>> {
    eigvalsh_with(m, EigenSolver::Auto)
}

pub fn eigvalsh_with(m: &SymmetricMatrix, solver: EigenSolver) -> Result<Vec<f64>> {
    let (values, _) = solve(m, solver, false)?;
    let order = descending_order(&values);
    Ok(order.iter().map(|&k| values[k]).collect())
}

fn solve(m: &SymmetricMatrix, solver: EigenSolver, want_vectors: bool) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let p = m.dim();
    let flat: Vec<f64> = m.view().iter().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("matrix has non-finite entries".into()));
    }
    match solver.resolve(p) {
        EigenSolver::Jacobi => {
            let mut a = flat;
            jacobi::jacobi(&mut a, p, want_vectors)
        }
        _ => tridiagonal::householder_ql(&flat, p, want_vectors),
    }
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

/// Spectral norm: the largest absolute eigenvalue.
pub fn operator_norm(m: &SymmetricMatrix) -> Result<f64> {
    if m.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let values = eigvalsh(m)?;
    Ok(spectral_radius(&values))
}

/// Largest absolute value of an already computed spectrum.
pub fn spectral_radius(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn frobenius_norm(m: &SymmetricMatrix) -> f64 {
    m.view().iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn trace(m: &SymmetricMatrix) -> f64 {
    m.diag().iter().sum()
}

/// `trace(M) / ||M||_2` for a positive semi-definite `M`.
pub fn effective_rank(m: &SymmetricMatrix) -> Result<f64> {
    let tr = trace(m);
    let norm = operator_norm(m)?;
    effective_rank_from_parts(tr, norm)
}

/// Effective rank from a trace and an operator norm computed elsewhere.
pub fn effective_rank_from_parts(trace: f64, operator_norm: f64) -> Result<f64> {
    if trace <= 0.0 || operator_norm <= 0.0 {
        return Err(Error::Degenerate(format!(
            "effective rank needs positive trace and norm (trace {trace}, norm {operator_norm})"
        )));
    }
    Ok(trace / operator_norm)
}

/// Q factor of a thin QR decomposition with positive `R` diagonal.
///
/// Modified Gram-Schmidt applied twice, which keeps `Q'Q = I` to rounding
/// for well-conditioned input. Fails on (numerically) dependent columns.
pub fn orthonormalize_columns(a: &Array2<f64>) -> Result<Array2<f64>> {
    let (rows, cols) = a.dim();
    if cols > rows {
        return Err(Error::Dimension(format!("cannot orthonormalize {cols} columns in R^{rows}")));
    }
    let mut q = a.clone();
    for k in 0..cols {
        let original = a.column(k).dot(&a.column(k)).sqrt();
        for _pass in 0..2 {
            for j in 0..k {
                let proj = q.column(j).dot(&q.column(k));
                let qj = q.column(j).to_owned();
                q.column_mut(k).scaled_add(-proj, &qj);
            }
        }
        let norm = q.column(k).dot(&q.column(k)).sqrt();
        if norm <= 1e-12 * original.max(f64::MIN_POSITIVE) {
            return Err(Error::Degenerate(format!("column {k} is linearly dependent")));
        }
        q.column_mut(k).mapv_inplace(|x| x / norm);
    }
    Ok(q)
}

/// Flips `estimated` so that its inner product with `reference` is nonnegative.
///
/// An exactly zero inner product leaves `estimated` unchanged.
pub fn align_sign(estimated: ArrayView1<'_, f64>, reference: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if estimated.len() != reference.len() {
        return Err(Error::Dimension(format!("{} vs {}", estimated.len(), reference.len())));
    }
    if estimated.dot(&reference) < 0.0 {
        Ok(estimated.mapv(|x| -x))
    } else {
        Ok(estimated.to_owned())
    }
}

/// Euclidean distance between `estimated` (sign-aligned to `reference`) and `reference`.
pub fn aligned_distance(estimated: ArrayView1<'_, f64>, reference: ArrayView1<'_, f64>) -> Result<f64> {
    let aligned = align_sign(estimated, reference)?;
    Ok((&aligned - &reference).mapv(|x| x * x).sum().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(p: usize, seed: u64) -> SymmetricMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let upper: Vec<f64> = (0..p * p).map(|_| rng.random_range(-1.0..1.0)).collect();
        SymmetricMatrix::from_fn(p, |i, j| upper[i * p + j]).unwrap()
    }

    #[test]
    fn diagonal_input_yields_identity_vectors() {
        let m = SymmetricMatrix::diagonal(&[1.0, 3.0]).unwrap();
        let d = eigh(&m).unwrap();
        assert_eq!(d.values(), &[3.0, 1.0]);
        assert_abs_diff_eq!(d.vector(0)[1].abs(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.vector(1)[0].abs(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let d = eigh(&SymmetricMatrix::identity(4).unwrap()).unwrap();
        assert_eq!(d.values(), &[1.0; 4]);
    }

    #[test]
    fn two_by_two_hand_solution() {
        // characteristic polynomial (2 - x)^2 - 1 has roots 3 and 1
        let m = SymmetricMatrix::from_array(array![[2.0, 1.0], [1.0, 2.0]]).unwrap();
        for solver in [EigenSolver::Jacobi, EigenSolver::HouseholderQl] {
            let d = eigh_with(&m, solver).unwrap();
            assert_abs_diff_eq!(d.values()[0], 3.0, epsilon = 1e-14);
            assert_abs_diff_eq!(d.values()[1], 1.0, epsilon = 1e-14);
            let r = std::f64::consts::FRAC_1_SQRT_2;
            assert_abs_diff_eq!(d.vector(0)[0].abs(), r, epsilon = 1e-14);
            assert_abs_diff_eq!(d.vector(0)[0] * d.vector(0)[1], 0.5, epsilon = 1e-14);
            assert_abs_diff_eq!(d.vector(1)[0] * d.vector(1)[1], -0.5, epsilon = 1e-14);
            assert!(d.relative_residual(&m) < 1e-14);
        }
        assert_abs_diff_eq!(operator_norm(&m).unwrap(), 3.0, epsilon = 1e-14);
    }

    #[test]
    fn solvers_agree_on_random_input() {
        for (p, seed) in [(1, 1), (2, 2), (7, 3), (40, 4), (150, 5)] {
            let m = random_symmetric(p, seed);
            let jac = eigh_with(&m, EigenSolver::Jacobi).unwrap();
            let ql = eigh_with(&m, EigenSolver::HouseholderQl).unwrap();
            for (a, b) in jac.values().iter().zip(ql.values()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-11);
            }
            for d in [&jac, &ql] {
                assert!(d.relative_residual(&m) <= RECONSTRUCTION_TOL, "p={p}");
                assert!(d.orthogonality_defect() <= RECONSTRUCTION_TOL, "p={p}");
            }
            let values_only = eigvalsh_with(&m, EigenSolver::HouseholderQl).unwrap();
            for (a, b) in values_only.iter().zip(ql.values()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn ties_keep_solver_order() {
        let m = SymmetricMatrix::diagonal(&[2.0, 5.0, 2.0]).unwrap();
        let d = eigh_with(&m, EigenSolver::Jacobi).unwrap();
        assert_eq!(d.values(), &[5.0, 2.0, 2.0]);
        assert_eq!(d.vector(1)[0], 1.0);
        assert_eq!(d.vector(2)[2], 1.0);
    }

    #[test]
    fn norms_and_trace() {
        let m = SymmetricMatrix::diagonal(&[4.0, 3.0]).unwrap();
        assert_abs_diff_eq!(operator_norm(&m).unwrap(), 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(frobenius_norm(&m), 5.0, epsilon = 1e-15);
        assert_eq!(trace(&m), 7.0);

        let z = SymmetricMatrix::zeros(3).unwrap();
        assert_eq!((operator_norm(&z).unwrap(), frobenius_norm(&z), trace(&z)), (0.0, 0.0, 0.0));
    }

    #[test]
    fn effective_rank_examples() {
        assert_abs_diff_eq!(effective_rank(&SymmetricMatrix::identity(6).unwrap()).unwrap(), 6.0, epsilon = 1e-12);
        let d = SymmetricMatrix::diagonal(&[4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_abs_diff_eq!(effective_rank(&d).unwrap(), 2.5, epsilon = 1e-14);

        let u = [0.6, 0.0, 0.8];
        let rank_one = SymmetricMatrix::from_fn(3, |i, j| u[i] * u[j]).unwrap();
        assert_abs_diff_eq!(effective_rank(&rank_one).unwrap(), 1.0, epsilon = 1e-12);

        assert!(matches!(effective_rank(&SymmetricMatrix::zeros(2).unwrap()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn align_sign_examples() {
        let reference = array![1.0, 0.0];
        let flipped = align_sign(array![-1.0, 0.0].view(), reference.view()).unwrap();
        assert_eq!(flipped, array![1.0, 0.0]);
        let same = align_sign(array![1.0, 0.0].view(), reference.view()).unwrap();
        assert_eq!(same, array![1.0, 0.0]);
        let tie = align_sign(array![0.0, 1.0].view(), reference.view()).unwrap();
        assert_eq!(tie, array![0.0, 1.0]);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let m = SymmetricMatrix::diagonal(&[1.0, f64::NAN]).unwrap();
        assert!(eigh(&m).is_err());
    }
}
