//! Functional PCA on a fixed design: covariance operators with closed-form
//! eigenstructure, design grids, trajectory simulation and the operator-level
//! selection rules.

mod analysis;
mod sample;

pub use analysis::*;
pub use sample::*;

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `c2 = e + int_0^inf exp(-min(t, 16 sqrt t) / 64) dt = e + 64 + 96 e^-4`,
/// the Frobenius-moment constant that enters `C_10`.
pub const FROBENIUS_MOMENT_CONSTANT: f64 = 68.476_583_161_777_53;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorKind {
    BrownianMotion,
    BrownianBridge,
    /// Brownian-motion eigenfunctions; eigenvalues beyond `jump_after` are
    /// multiplied by `factor`.
    PlantedJump { jump_after: usize, factor: f64 },
}

/// Decay exponents and constants of an operator spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorConstants {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub gamma1: f64,
    pub c1l: f64,
    pub c2l: f64,
    pub c3l: f64,
    /// `sup_k sup_t |phi_k(t)|`.
    pub c5l: f64,
    /// `sup_t |phi_k'(t)| <= c6l k^gamma1`.
    pub c6l: f64,
    /// Gram-deviation constant: `|phi_k1' phi_k2 - delta| <= c7l max(k1, k2)^gamma1 / m`.
    pub c7l: f64,
    /// Trace-deviation constant: `|tr K - rho0| <= c9l / m`.
    pub c9l: f64,
}

/// A covariance operator on `[0, 1]` with known Mercer expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceOperator {
    kind: OperatorKind,
    constants: OperatorConstants,
}

const PI2: f64 = PI * PI;

impl CovarianceOperator {
    pub fn brownian_motion() -> Self {
        Self::with_kind(OperatorKind::BrownianMotion)
    }

    pub fn brownian_bridge() -> Self {
        Self::with_kind(OperatorKind::BrownianBridge)
    }

    pub fn planted_jump(jump_after: usize, factor: f64) -> Result<Self> {
        if jump_after == 0 {
            return Err(Error::InvalidParameter("planted jump needs jump_after >= 1".into()));
        }
        if !(factor > 0.0 && factor < 1.0) {
            return Err(Error::InvalidParameter(format!("planted factor must lie in (0, 1), got {factor}")));
        }
        Ok(Self::with_kind(OperatorKind::PlantedJump { jump_after, factor }))
    }

    pub fn from_kind(kind: OperatorKind) -> Result<Self> {
        match kind {
            OperatorKind::PlantedJump { jump_after, factor } => Self::planted_jump(jump_after, factor),
            other => Ok(Self::with_kind(other)),
        }
    }

    fn with_kind(kind: OperatorKind) -> Self {
        let mut op = Self {
            kind,
            constants: OperatorConstants {
                beta1: 2.0,
                beta2: 2.0,
                beta3: 3.0,
                gamma1: 1.0,
                c1l: 0.0,
                c2l: 0.0,
                c3l: 0.0,
                c5l: SQRT_2,
                c6l: SQRT_2 * PI,
                c7l: 0.0,
                c9l: 0.0,
            },
        };
        let (c1l, c2l, c3l) = op.tight_decay_constants();
        op.constants.c1l = c1l;
        op.constants.c2l = c2l;
        op.constants.c3l = c3l;
        // placeholder until a grid-specific fit replaces it through `with_c7l`
        op.constants.c7l = 2.0 * op.constants.c5l * op.constants.c6l;
        op.constants.c9l = op.diagonal_variation();
        op
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn constants(&self) -> &OperatorConstants {
        &self.constants
    }

    /// Replaces the Gram-deviation constant, typically with a fitted value.
    pub fn with_c7l(mut self, c7l: f64) -> Self {
        self.constants.c7l = c7l;
        self
    }

    pub fn with_c9l(mut self, c9l: f64) -> Self {
        self.constants.c9l = c9l;
        self
    }

    fn frequency(&self, k: usize) -> f64 {
        match self.kind {
            OperatorKind::BrownianBridge => k as f64 * PI,
            _ => (k as f64 - 0.5) * PI,
        }
    }

    /// `rho_k` for `k >= 1`.
    pub fn rho(&self, k: usize) -> f64 {
        assert!(k >= 1, "eigenvalue index is 1-based");
        let w = self.frequency(k);
        let base = 1.0 / (w * w);
        match self.kind {
            OperatorKind::PlantedJump { jump_after, factor } if k > jump_after => factor * base,
            _ => base,
        }
    }

    /// `rho_1, ..., rho_depth`.
    pub fn spectrum(&self, depth: usize) -> Vec<f64> {
        (1..=depth).map(|k| self.rho(k)).collect()
    }

    /// `phi_k(t)` for `k >= 1`.
    pub fn phi(&self, k: usize, t: f64) -> f64 {
        assert!(k >= 1, "eigenfunction index is 1-based");
        SQRT_2 * (self.frequency(k) * t).sin()
    }

    pub fn kernel(&self, s: f64, t: f64) -> f64 {
        match self.kind {
            OperatorKind::BrownianMotion => s.min(t),
            OperatorKind::BrownianBridge => s.min(t) - s * t,
            OperatorKind::PlantedJump { jump_after, factor } => {
                let head: f64 = (1..=jump_after).map(|k| self.rho(k) * (self.phi(k, s) * self.phi(k, t))).sum();
                factor * s.min(t) + (1.0 - factor) * head
            }
        }
    }

    /// `rho0 = sum_k rho_k = int_0^1 K(t, t) dt`.
    pub fn rho0(&self) -> f64 {
        match self.kind {
            OperatorKind::BrownianMotion => 0.5,
            OperatorKind::BrownianBridge => 1.0 / 6.0,
            OperatorKind::PlantedJump { jump_after, factor } => {
                factor * 0.5 + (1.0 - factor) * (1..=jump_after).map(|k| self.rho(k)).sum::<f64>()
            }
        }
    }

    /// `sum_{k > depth} rho_k`.
    pub fn tail_mass(&self, depth: usize) -> f64 {
        (self.rho0() - (1..=depth).map(|k| self.rho(k)).sum::<f64>()).max(0.0)
    }

    /// `C_8 = c5l^2 c1l / (beta1 - 1) + c1l + 13 c7l rho0`.
    pub fn c8l(&self) -> f64 {
        self.c8l_with(self.rho0())
    }

    /// `C_8` with an explicit value in the slot of `rho0`.
    pub fn c8l_with(&self, lambda0: f64) -> f64 {
        let c = &self.constants;
        c.c5l * c.c5l * c.c1l / (c.beta1 - 1.0) + c.c1l + 13.0 * c.c7l * lambda0
    }

    /// `3 c1l^(beta3/beta1) / c3l`, the jump constant for operators.
    pub fn c4l(&self) -> f64 {
        let c = &self.constants;
        3.0 * c.c1l.powf(c.beta3 / c.beta1) / c.c3l
    }

    /// `m^((1 - beta1)/(beta1 + gamma1))`.
    pub fn approximation_rate(&self, m: usize) -> f64 {
        let c = &self.constants;
        (m as f64).powf((1.0 - c.beta1) / (c.beta1 + c.gamma1))
    }

    /// Largest integer `N` with `N^(beta1 + gamma1) <= m`.
    pub fn resolvable_depth(&self, m: usize) -> usize {
        let e = self.constants.beta1 + self.constants.gamma1;
        let mut n = (m as f64).powf(1.0 / e).floor() as usize;
        while ((n + 1) as f64).powf(e) <= m as f64 {
            n += 1;
        }
        while n > 0 && (n as f64).powf(e) > m as f64 {
            n -= 1;
        }
        n
    }

    /// `(sup k^beta1 rho_k, inf k^beta2 rho_k, inf k^beta3 gap_k)` including the
    /// limits as `k -> inf`.
    fn tight_decay_constants(&self) -> (f64, f64, f64) {
        let c = self.constants;
        let (tail_scale, head) = match self.kind {
            OperatorKind::PlantedJump { jump_after, factor } => (factor, jump_after + 64),
            _ => (1.0, 64),
        };
        // k^2 rho_k -> 1/pi^2 and k^3 (rho_k - rho_{k+1}) -> 2/pi^2
        let mut c1: f64 = 0.0;
        let mut c2 = tail_scale / PI2;
        let mut c3 = tail_scale * 2.0 / PI2;
        for k in 1..=head {
            let kf = k as f64;
            let rho = self.rho(k);
            c1 = c1.max(rho * kf.powf(c.beta1));
            c2 = c2.min(rho * kf.powf(c.beta2));
            let below = rho - self.rho(k + 1);
            let gap = if k == 1 { below } else { below.min(self.rho(k - 1) - rho) };
            c3 = c3.min(gap * kf.powf(c.beta3));
        }
        (c1, c2, c3)
    }

    /// Total variation of `t -> K(t, t)` on `[0, 1]`.
    fn diagonal_variation(&self) -> f64 {
        match self.kind {
            OperatorKind::BrownianMotion => 1.0,
            OperatorKind::BrownianBridge => 0.5,
            // 2 sin^2((k - 1/2) pi t) rises and falls 2k - 1 times by 1
            OperatorKind::PlantedJump { jump_after, factor } => {
                factor + (1.0 - factor) * (1..=jump_after).map(|k| self.rho(k) * 2.0 * (2 * k - 1) as f64).sum::<f64>()
            }
        }
    }
}

/// Fixed design points `0 < t_1 < ... < t_m < 1` with mesh constant `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignGrid {
    points: Vec<f64>,
    mesh_constant: f64,
}

impl DesignGrid {
    /// `t_j = (j - 1/2)/m`, mesh constant 2.
    pub fn midpoint(m: usize) -> Result<Self> {
        Self::offset(m, 0.5)
    }

    /// `t_j = (j - shift)/m` for `shift` in `(0, 1)`; mesh constant
    /// `1/min(shift, 1 - shift)`.
    pub fn offset(m: usize, shift: f64) -> Result<Self> {
        if !(shift > 0.0 && shift < 1.0) {
            return Err(Error::InvalidParameter(format!("grid shift must lie in (0, 1), got {shift}")));
        }
        if m == 0 {
            return Err(Error::InvalidParameter("grid needs at least one point".into()));
        }
        let points = (1..=m).map(|j| (j as f64 - shift) / m as f64).collect();
        Self::new(points, 1.0 / shift.min(1.0 - shift))
    }

    /// Validates spacing, including the boundary gaps to 0 and 1.
    pub fn new(points: Vec<f64>, mesh_constant: f64) -> Result<Self> {
        let grid = Self { points, mesh_constant };
        grid.check_mesh()?;
        Ok(grid)
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn mesh_constant(&self) -> f64 {
        self.mesh_constant
    }

    fn spacings(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(0.0)
            .chain(self.points.iter().copied())
            .zip(self.points.iter().copied().chain(std::iter::once(1.0)))
            .map(|(a, b)| b - a)
    }

    /// Smallest `M` for which the grid satisfies the mesh condition.
    pub fn tightest_mesh_constant(&self) -> f64 {
        let m = self.m() as f64;
        let (lo, hi) = self.spacings().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
        (1.0 / (m * lo)).max(m * hi)
    }

    pub fn check_mesh(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidParameter("grid needs at least one point".into()));
        }
        if self.points.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(Error::InvalidParameter("grid points must lie strictly inside (0, 1)".into()));
        }
        if self.spacings().any(|d| d <= 0.0) {
            return Err(Error::InvalidParameter("grid points must be strictly increasing".into()));
        }
        let needed = self.tightest_mesh_constant();
        // relative slack for the rounding in (j - shift)/m
        if needed > self.mesh_constant * (1.0 + 1e-9) {
            return Err(Error::InvalidParameter(format!(
                "grid needs mesh constant {needed}, configured {}",
                self.mesh_constant
            )));
        }
        Ok(())
    }
}
