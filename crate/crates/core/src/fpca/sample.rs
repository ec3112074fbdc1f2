use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{CovarianceOperator, DesignGrid, OperatorKind};
use crate::error::{Error, Result};
use crate::estimate;
use crate::linalg::SymmetricMatrix;

/// Relative tail-trace target for Karhunen-Loeve truncation.
pub const KL_TAIL_TARGET: f64 = 1e-6;
/// Truncation depth cap, as a multiple of the grid size.
pub const KL_DEPTH_FACTOR: usize = 10;

/// How latent trajectories are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectorySampler {
    /// Exact sampler when the operator has one, otherwise truncated expansion.
    #[default]
    Auto,
    KarhunenLoeve,
    /// Gaussian increments on the grid (plus a finite expansion for planted operators).
    Exact,
}

/// `n` noisy trajectories observed on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    grid: DesignGrid,
    observations: Array2<f64>,
    noise_var: f64,
    mean: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    m: usize,
    points: Vec<f64>,
    mesh_constant: f64,
    noise_var: f64,
    mean: Vec<f64>,
}

impl FunctionalSample {
    pub fn new(grid: DesignGrid, observations: Array2<f64>, noise_var: f64, mean: Vec<f64>) -> Result<Self> {
        let m = grid.m();
        if observations.ncols() != m || mean.len() != m {
            return Err(Error::Dimension(format!(
                "grid has {m} points, observations {} columns, mean {} entries",
                observations.ncols(),
                mean.len()
            )));
        }
        if observations.iter().chain(mean.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("functional sample has non-finite entries".into()));
        }
        if !(noise_var >= 0.0) {
            return Err(Error::InvalidParameter(format!("noise variance must be nonnegative, got {noise_var}")));
        }
        Ok(Self { grid, observations, noise_var, mean })
    }

    pub fn n(&self) -> usize {
        self.observations.nrows()
    }

    pub fn grid(&self) -> &DesignGrid {
        &self.grid
    }

    pub fn observations(&self) -> ArrayView2<'_, f64> {
        self.observations.view()
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Path of the JSON sidecar paired with a CSV file.
    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("json")
    }

    /// Writes the observations as CSV (header row holds the grid points) and
    /// the grid, noise variance and mean into the JSON sidecar.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        w.write_record(self.grid.points().iter().map(|t| t.to_string()))?;
        for row in self.observations.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        let sidecar = Sidecar {
            m: self.grid.m(),
            points: self.grid.points().to_vec(),
            mesh_constant: self.grid.mesh_constant(),
            noise_var: self.noise_var,
            mean: self.mean.clone(),
        };
        serde_json::to_writer_pretty(BufWriter::new(File::create(Self::sidecar_path(path))?), &sidecar)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let sidecar: Sidecar = serde_json::from_reader(BufReader::new(File::open(Self::sidecar_path(path))?))?;
        if sidecar.points.len() != sidecar.m {
            return Err(Error::Format(format!("sidecar lists {} points for m = {}", sidecar.points.len(), sidecar.m)));
        }
        let grid = DesignGrid::new(sidecar.points, sidecar.mesh_constant)?;
        let mut reader = csv::Reader::from_reader(BufReader::new(File::open(path)?));
        let header: Vec<f64> = reader.headers()?.iter().map(parse_cell).collect::<Result<_>>()?;
        if header.len() != grid.m() || header.iter().zip(grid.points()).any(|(a, b)| a != b) {
            return Err(Error::Format("CSV header does not match the sidecar grid".into()));
        }
        let mut values = Vec::new();
        let mut n = 0;
        for record in reader.records() {
            let record = record?;
            for cell in record.iter() {
                values.push(parse_cell(cell)?);
            }
            n += 1;
        }
        let observations = Array2::from_shape_vec((n, grid.m()), values).map_err(|e| Error::Format(e.to_string()))?;
        Self::new(grid, observations, sidecar.noise_var, sidecar.mean)
    }
}

fn parse_cell(cell: &str) -> Result<f64> {
    cell.trim().parse().map_err(|_| Error::Format(format!("not a number: {cell:?}")))
}

/// `Sigma_n = (nm)^-1 sum_i (Y_i - Ybar)(Y_i - Ybar)'`.
pub fn scaled_sample_covariance(sample: &FunctionalSample) -> Result<SymmetricMatrix> {
    let divisor = (sample.n() * sample.grid.m()) as f64;
    estimate::centered_gram(sample.observations(), divisor)
}

/// Smallest depth whose tail trace drops below `KL_TAIL_TARGET * rho0`,
/// capped at `KL_DEPTH_FACTOR * m`.
pub fn kl_truncation_depth(op: &CovarianceOperator, m: usize) -> Result<usize> {
    let target = KL_TAIL_TARGET * op.rho0();
    let cap = KL_DEPTH_FACTOR * m;
    let mut tail = op.rho0();
    for k in 1..=cap {
        tail -= op.rho(k);
        if tail < target {
            return Ok(k);
        }
    }
    Err(Error::Truncation { depth: cap, tail: tail.max(0.0) })
}

/// Simulates `Y_i(t_j) = mu(t_j) + X_i(t_j) + E_ij` with the default sampler.
pub fn simulate_trajectories(
    op: &CovarianceOperator,
    mu: &dyn Fn(f64) -> f64,
    noise_var: f64,
    n: usize,
    grid: &DesignGrid,
    seed: u64,
) -> Result<FunctionalSample> {
    simulate_trajectories_with(op, mu, noise_var, n, grid, seed, TrajectorySampler::Auto)
}

/// Trajectory `i` draws from ChaCha stream `i` of `seed`, so each trajectory
/// is reproducible on its own.
pub fn simulate_trajectories_with(
    op: &CovarianceOperator,
    mu: &dyn Fn(f64) -> f64,
    noise_var: f64,
    n: usize,
    grid: &DesignGrid,
    seed: u64,
    sampler: TrajectorySampler,
) -> Result<FunctionalSample> {
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise variance must be nonnegative, got {noise_var}")));
    }
    let m = grid.m();
    let mean: Vec<f64> = grid.points().iter().map(|&t| mu(t)).collect();
    let mut observations = Array2::zeros((n, m));
    let noise_sd = noise_var.sqrt();
    let kl = match sampler {
        TrajectorySampler::KarhunenLoeve => Some(kl_basis(op, grid, kl_truncation_depth(op, m)?)),
        _ => None,
    };
    let finite_part = match op.kind() {
        OperatorKind::PlantedJump { jump_after, factor } if kl.is_none() => {
            let mut basis = kl_basis(op, grid, jump_after);
            basis *= (1.0 - factor).sqrt();
            Some(basis)
        }
        _ => None,
    };
    let mut scores = Vec::new();
    for (i, mut row) in observations.rows_mut().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let row = row.as_slice_mut().expect("standard layout");
        match &kl {
            Some(basis) => add_expansion(row, basis, &mut scores, &mut rng),
            None => {
                let scale = match op.kind() {
                    OperatorKind::PlantedJump { factor, .. } => factor.sqrt(),
                    _ => 1.0,
                };
                brownian_path(row, grid.points(), op.kind(), scale, &mut rng);
                if let Some(basis) = &finite_part {
                    add_expansion(row, basis, &mut scores, &mut rng);
                }
            }
        }
        for (y, mu) in row.iter_mut().zip(&mean) {
            *y += mu;
            if noise_sd > 0.0 {
                *y += noise_sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    FunctionalSample::new(grid.clone(), observations, noise_var, mean)
}

/// Rows `sqrt(rho_k) phi_k(t_j)` for `k = 1..=depth`.
fn kl_basis(op: &CovarianceOperator, grid: &DesignGrid, depth: usize) -> Array2<f64> {
    Array2::from_shape_fn((depth, grid.m()), |(k, j)| op.rho(k + 1).sqrt() * op.phi(k + 1, grid.points()[j]))
}

fn add_expansion(row: &mut [f64], basis: &Array2<f64>, scores: &mut Vec<f64>, rng: &mut ChaCha8Rng) {
    scores.clear();
    scores.extend((0..basis.nrows()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    for (z, b) in scores.iter().zip(basis.rows()) {
        for (y, v) in row.iter_mut().zip(b) {
            *y += z * v;
        }
    }
}

/// Writes `scale * W(t_j)` (or the bridge `W(t_j) - t_j W(1)`) into `row`.
fn brownian_path(row: &mut [f64], points: &[f64], kind: OperatorKind, scale: f64, rng: &mut ChaCha8Rng) {
    let mut w = 0.0;
    let mut last = 0.0;
    for (y, &t) in row.iter_mut().zip(points) {
        w += (t - last).sqrt() * rng.sample::<f64, _>(StandardNormal);
        last = t;
        *y = w;
    }
    if kind == OperatorKind::BrownianBridge {
        let w1 = w + (1.0 - last).sqrt() * rng.sample::<f64, _>(StandardNormal);
        for (y, &t) in row.iter_mut().zip(points) {
            *y -= t * w1;
        }
    }
    if scale != 1.0 {
        row.iter_mut().for_each(|y| *y *= scale);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpca::discretize;
    use approx::assert_abs_diff_eq;

    fn zero(_: f64) -> f64 {
        0.0
    }

    #[test]
    fn brownian_endpoint_variance() {
        let grid = DesignGrid::new(vec![0.5, 0.999], 1000.0).unwrap();
        let s = simulate_trajectories(&CovarianceOperator::brownian_motion(), &zero, 0.0, 100_000, &grid, 11).unwrap();
        let col = s.observations().column(1).to_owned();
        let var = col.mapv(|v| v * v).mean().unwrap() - col.mean().unwrap().powi(2);
        assert!((var - 0.999).abs() < 0.02, "{var}");
    }

    #[test]
    fn constant_mean_shifts_observations() {
        let grid = DesignGrid::midpoint(5).unwrap();
        let s = simulate_trajectories(&CovarianceOperator::brownian_bridge(), &|_| 3.0, 0.1, 20_000, &grid, 2).unwrap();
        for j in 0..5 {
            let mean = s.observations().column(j).mean().unwrap();
            assert!((mean - 3.0).abs() < 0.02, "{mean}");
        }
        assert_eq!(s.mean(), &[3.0; 5]);
    }

    #[test]
    fn seeded_and_stream_separated() {
        let grid = DesignGrid::midpoint(8).unwrap();
        let op = CovarianceOperator::brownian_motion();
        let a = simulate_trajectories(&op, &zero, 0.5, 10, &grid, 5).unwrap();
        let b = simulate_trajectories(&op, &zero, 0.5, 10, &grid, 5).unwrap();
        assert_eq!(a, b);
        let longer = simulate_trajectories(&op, &zero, 0.5, 12, &grid, 5).unwrap();
        assert_eq!(longer.observations().slice(ndarray::s![..10, ..]), a.observations());
        let c = simulate_trajectories(&op, &zero, 0.5, 10, &grid, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn samplers_match_population_covariance() {
        let grid = DesignGrid::midpoint(6).unwrap();
        let n = 60_000;
        let sigma2 = 0.3;
        for (op, sampler) in [
            (CovarianceOperator::brownian_bridge(), TrajectorySampler::Exact),
            (CovarianceOperator::planted_jump(2, 0.05).unwrap(), TrajectorySampler::Exact),
            (CovarianceOperator::planted_jump(2, 1e-4).unwrap(), TrajectorySampler::KarhunenLoeve),
        ] {
            let s = simulate_trajectories_with(&op, &zero, sigma2, n, &grid, 9, sampler).unwrap();
            let sigma_n = scaled_sample_covariance(&s).unwrap();
            let target = discretize(&op, &grid).unwrap().shifted(sigma2 / 6.0);
            let err = sigma_n.sub(&target).unwrap().max_abs();
            assert!(err < 0.01, "{op:?} {sampler:?}: {err}");
        }
    }

    #[test]
    fn brownian_truncation_hits_the_cap() {
        let op = CovarianceOperator::brownian_motion();
        match kl_truncation_depth(&op, 50) {
            Err(Error::Truncation { depth, tail }) => {
                assert_eq!(depth, 500);
                assert!(tail > KL_TAIL_TARGET * 0.5);
            }
            other => panic!("{other:?}"),
        }
        let grid = DesignGrid::midpoint(50).unwrap();
        let r = simulate_trajectories_with(&op, &zero, 0.0, 4, &grid, 0, TrajectorySampler::KarhunenLoeve);
        assert!(matches!(r, Err(Error::Truncation { .. })));
        let planted = CovarianceOperator::planted_jump(4, 1e-4).unwrap();
        assert!(kl_truncation_depth(&planted, 50).unwrap() < 500);
    }

    #[test]
    fn scaled_covariance_matches_row_covariance() {
        let grid = DesignGrid::midpoint(4).unwrap();
        let s = simulate_trajectories(&CovarianceOperator::brownian_motion(), &zero, 0.2, 30, &grid, 1).unwrap();
        let direct = scaled_sample_covariance(&s).unwrap();
        let rows = crate::models::SampleMatrix::new(s.observations().to_owned()).unwrap();
        let via_rows = estimate::sample_covariance(&rows).unwrap().scaled(0.25);
        assert!(direct.sub(&via_rows).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn symmetric_pair_gives_rank_one() {
        let grid = DesignGrid::midpoint(3).unwrap();
        let obs = ndarray::array![[1.0, 2.0, 3.0], [-1.0, -2.0, -3.0]];
        let s = FunctionalSample::new(grid, obs, 0.0, vec![0.0; 3]).unwrap();
        let c = scaled_sample_covariance(&s).unwrap();
        let values = crate::linalg::eigvalsh(&c).unwrap();
        assert_abs_diff_eq!(values[0], 14.0 / 3.0, epsilon = 1e-12);
        assert!(values[1].abs() < 1e-12 && values[2].abs() < 1e-12);
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sample.csv");
        let grid = DesignGrid::offset(7, 0.25).unwrap();
        let s = simulate_trajectories(&CovarianceOperator::brownian_motion(), &|t| t * t, 0.4, 9, &grid, 3).unwrap();
        s.write_csv(&path).unwrap();
        let back = FunctionalSample::read_csv(&path).unwrap();
        assert_eq!(back, s);
        assert!(FunctionalSample::sidecar_path(&path).exists());
    }

    #[test]
    fn rejects_bad_inputs() {
        let grid = DesignGrid::midpoint(3).unwrap();
        let op = CovarianceOperator::brownian_motion();
        assert_eq!(simulate_trajectories(&op, &zero, 0.0, 1, &grid, 0), Err(Error::TooFewSamples(1)));
        assert!(simulate_trajectories(&op, &zero, -1.0, 5, &grid, 0).is_err());
        assert!(FunctionalSample::new(grid, Array2::zeros((2, 2)), 0.0, vec![0.0; 3]).is_err());
    }
}
