//! Experiment configuration: a single JSON document, optionally overridden
//! from the command line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use spectral_screener::estimate::{ConstantSource, ConstantsConfig, Regime};
use spectral_screener::fpca::{population_covariance, CovarianceOperator, DesignGrid, OperatorKind};
use spectral_screener::models::{ComponentLaw, EigenvalueRule, FactorParams, PolyDecayParams, PopulationModel};

use crate::calibrate::CalibrationFile;
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    NormBounds,
    TraceBound,
    EffRankBound,
    JumpMinimal,
    JumpPoly,
    EigenvalueSelect,
    EigenvectorCertify,
    CombinedPoly,
    FpcaApprox,
    FpcaJump,
    FpcaSelect,
    Calibrate,
}

impl Experiment {
    pub const ALL: [Experiment; 12] = [
        Experiment::NormBounds,
        Experiment::TraceBound,
        Experiment::EffRankBound,
        Experiment::JumpMinimal,
        Experiment::JumpPoly,
        Experiment::EigenvalueSelect,
        Experiment::EigenvectorCertify,
        Experiment::CombinedPoly,
        Experiment::FpcaApprox,
        Experiment::FpcaJump,
        Experiment::FpcaSelect,
        Experiment::Calibrate,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Experiment::NormBounds => "norm_bounds",
            Experiment::TraceBound => "trace_bound",
            Experiment::EffRankBound => "eff_rank_bound",
            Experiment::JumpMinimal => "jump_minimal",
            Experiment::JumpPoly => "jump_poly",
            Experiment::EigenvalueSelect => "eigenvalue_select",
            Experiment::EigenvectorCertify => "eigenvector_certify",
            Experiment::CombinedPoly => "combined_poly",
            Experiment::FpcaApprox => "fpca_approx",
            Experiment::FpcaJump => "fpca_jump",
            Experiment::FpcaSelect => "fpca_select",
            Experiment::Calibrate => "calibrate",
        }
    }

    pub fn is_functional(self) -> bool {
        matches!(self, Experiment::FpcaApprox | Experiment::FpcaJump | Experiment::FpcaSelect)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Experiment {
    type Err = HarnessError;

    /// Accepts the snake_case tag or the CamelCase name.
    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.tag() == s || format!("{e:?}") == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment tag `{s}`")))
    }
}

/// Population model to sample from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Factor {
        p: usize,
        strengths: Vec<f64>,
        noise_var: f64,
        #[serde(default)]
        loading_seed: u64,
    },
    /// Decay constants left out are fitted as the tightest values for the spectrum.
    Poly {
        p: usize,
        rule: EigenvalueRule,
        beta1: f64,
        beta2: f64,
        beta3: f64,
        #[serde(default)]
        c1l: Option<f64>,
        #[serde(default)]
        c2l: Option<f64>,
        #[serde(default)]
        c3l: Option<f64>,
        #[serde(default)]
        basis_seed: Option<u64>,
    },
    /// Covariance operator observed on a grid of size taken from `m_list`.
    /// `grid_shift` picks offset grids `(j - 1 + shift)/m`; absent means midpoints.
    Operator {
        operator: OperatorKind,
        #[serde(default)]
        noise_var: f64,
        #[serde(default)]
        grid_shift: Option<f64>,
        #[serde(default)]
        c7l: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    #[default]
    Gaussian,
    Rademacher,
    Uniform,
}

impl Distribution {
    pub fn component_law(self) -> Option<ComponentLaw> {
        match self {
            Distribution::Gaussian => None,
            Distribution::Rademacher => Some(ComponentLaw::Rademacher),
            Distribution::Uniform => Some(ComponentLaw::Uniform),
        }
    }
}

/// Inline constants or a reference `calibrated:<run-id>` to a calibration file
/// in the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstantsSpec {
    Reference(String),
    Inline(ConstantsConfig),
}

impl Default for ConstantsSpec {
    fn default() -> Self {
        ConstantsSpec::Inline(ConstantsConfig::default())
    }
}

pub const CALIBRATED_PREFIX: &str = "calibrated:";

fn default_alpha() -> f64 {
    0.3
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_depth() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: ModelSpec,
    #[serde(default)]
    pub n_list: Vec<usize>,
    /// Grid sizes for operator models.
    #[serde(default)]
    pub m_list: Vec<usize>,
    pub reps: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub regime: Regime,
    #[serde(default)]
    pub distribution: Distribution,
    #[serde(default)]
    pub constants: ConstantsSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses every available core.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Number of leading eigenpairs compared in the functional approximation runs.
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default)]
    pub run_id: Option<String>,
    /// Index of the jump when the model does not imply it.
    #[serde(default)]
    pub true_jump: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn run_id(&self) -> String {
        self.run_id.clone().unwrap_or_else(|| format!("seed{}", self.base_seed))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.n_list.is_empty() && self.experiment != Experiment::FpcaApprox {
            return bad("n_list must not be empty".into());
        }
        if let Some(&n) = self.n_list.iter().find(|&&n| n < 2) {
            return bad(format!("sample sizes must be at least 2, got {n}"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if let Some(id) = &self.run_id {
            if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return bad(format!("run_id `{id}` must be nonempty and use only [A-Za-z0-9_-]"));
            }
        }
        let is_operator = matches!(self.model, ModelSpec::Operator { .. });
        if self.experiment.is_functional() && !is_operator {
            return bad(format!("{} needs an operator model", self.experiment));
        }
        if is_operator {
            if self.m_list.is_empty() {
                return bad("operator models need a nonempty m_list".into());
            }
            if !self.experiment.is_functional() && self.experiment != Experiment::Calibrate {
                return bad(format!("{} needs a matrix model", self.experiment));
            }
        } else if !self.m_list.is_empty() {
            return bad("m_list only applies to operator models".into());
        }
        if matches!(self.experiment, Experiment::JumpPoly | Experiment::CombinedPoly) && !matches!(self.model, ModelSpec::Poly { .. }) {
            return bad(format!("{} needs a poly model", self.experiment));
        }
        if matches!(self.experiment, Experiment::JumpMinimal | Experiment::JumpPoly | Experiment::FpcaJump) && self.jump_index().is_none() {
            return bad(format!("{} needs `true_jump` or a model with a planted jump", self.experiment));
        }
        if let ConstantsSpec::Reference(r) = &self.constants {
            if !r.starts_with(CALIBRATED_PREFIX) || r.len() == CALIBRATED_PREFIX.len() {
                return bad(format!("constants reference `{r}` must look like `calibrated:<run-id>`"));
            }
        }
        Ok(())
    }

    /// True index of the last eigenvalue before the jump.
    pub fn jump_index(&self) -> Option<usize> {
        self.true_jump.or(match &self.model {
            ModelSpec::Factor { strengths, .. } => Some(strengths.len()),
            ModelSpec::Poly { rule: EigenvalueRule::Planted { jump_after, .. }, .. } => Some(*jump_after),
            ModelSpec::Operator { operator: OperatorKind::PlantedJump { jump_after, .. }, .. } => Some(*jump_after),
            _ => None,
        })
    }

    /// Inline constants, or the aggregate constants of a calibration run
    /// stored in `output_dir`.
    pub fn resolve_constants(&self) -> Result<ConstantsConfig> {
        let consts = match &self.constants {
            ConstantsSpec::Inline(c) => c.clone(),
            ConstantsSpec::Reference(r) => {
                let id = r.strip_prefix(CALIBRATED_PREFIX).ok_or_else(|| HarnessError::Config(format!("bad constants reference `{r}`")))?;
                let path = CalibrationFile::path(&self.output_dir, id);
                let file = CalibrationFile::load(&path)
                    .map_err(|e| HarnessError::Config(format!("cannot load calibration `{id}`: {e}")))?;
                let mut c = file.constants;
                c.source = ConstantSource::Calibrated(id.to_string());
                c
            }
        };
        consts.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(consts)
    }

    /// Each `(n, dim)` combination the experiment visits, in report order.
    /// The approximation experiment has no sample and reports `n = 0`.
    pub fn settings(&self) -> Vec<(usize, usize)> {
        match &self.model {
            ModelSpec::Operator { .. } if self.experiment == Experiment::FpcaApprox => self.m_list.iter().map(|&m| (0, m)).collect(),
            ModelSpec::Operator { .. } => self.m_list.iter().flat_map(|&m| self.n_list.iter().map(move |&n| (n, m))).collect(),
            ModelSpec::Factor { p, .. } | ModelSpec::Poly { p, .. } => self.n_list.iter().map(|&n| (n, *p)).collect(),
        }
    }
}

/// A configured model instantiated at one dimension.
#[derive(Debug, Clone)]
pub enum Problem {
    Matrix { model: PopulationModel, poly: Option<PolyDecayParams> },
    Operator { op: CovarianceOperator, grid: DesignGrid, noise_var: f64, population: PopulationModel },
}

impl Problem {
    /// Population covariance with its eigenstructure (`K + sigma^2/m I` for operators).
    pub fn population(&self) -> &PopulationModel {
        match self {
            Problem::Matrix { model, .. } => model,
            Problem::Operator { population, .. } => population,
        }
    }

    pub fn dim(&self) -> usize {
        self.population().dim()
    }
}

impl ModelSpec {
    /// `dim` is the grid size for operator models and ignored otherwise.
    pub fn instantiate(&self, dim: usize) -> Result<Problem> {
        Ok(match self {
            ModelSpec::Factor { p, strengths, noise_var, loading_seed } => Problem::Matrix {
                model: PopulationModel::factor(FactorParams {
                    p: *p,
                    strengths: strengths.clone(),
                    noise_var: *noise_var,
                    loading_seed: *loading_seed,
                })?,
                poly: None,
            },
            ModelSpec::Poly { p, rule, beta1, beta2, beta3, c1l, c2l, c3l, basis_seed } => {
                let mut params = PolyDecayParams::fitted(*p, rule.clone(), *beta1, *beta2, *beta3);
                if let Some(v) = c1l {
                    params.c1l = *v;
                }
                if let Some(v) = c2l {
                    params.c2l = *v;
                }
                if let Some(v) = c3l {
                    params.c3l = *v;
                }
                params.basis_seed = *basis_seed;
                Problem::Matrix { model: PopulationModel::poly_decay(params.clone())?, poly: Some(params) }
            }
            ModelSpec::Operator { operator, noise_var, grid_shift, c7l } => {
                let grid = match grid_shift {
                    Some(shift) => DesignGrid::offset(dim, *shift)?,
                    None => DesignGrid::midpoint(dim)?,
                };
                let mut op = CovarianceOperator::from_kind(*operator)?;
                if let Some(c) = c7l {
                    op = op.with_c7l(*c);
                }
                let population = PopulationModel::explicit(population_covariance(&op, &grid, *noise_var)?)?;
                Problem::Operator { op, grid, noise_var: *noise_var, population }
            }
        })
    }
}
