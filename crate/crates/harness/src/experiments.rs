//! Per-trial measurements for every experiment, the flags evaluated on them
//! and the acceptance checks applied to the collected records.

use ndarray::Axis;
use spectral_screener::estimate::{self, bounds, ConstantsConfig, EmpiricalSpectrum};
use spectral_screener::fpca::{self, approximation_report, gram_deviation, phi_vector, FunctionalSample};
use spectral_screener::linalg::{self, SymmetricMatrix};
use spectral_screener::models::{sample_gaussian, sample_subgaussian_rotated, PopulationModel, SampleMatrix};
use spectral_screener::screen;

use crate::config::{Experiment, ExperimentConfig, ModelSpec, Problem};
use crate::error::{HarnessError, Result};
use crate::stats::{frequency, median, slope_fit, SlopeFit};
use crate::table::{Cmp, FlagSpec, Row, TrialRecord};

fn root_log(n: usize) -> f64 {
    let n = n as f64;
    (n.ln() / n).sqrt()
}

fn list(indices: &[usize]) -> String {
    indices.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";")
}

/// One draw of data from a problem.
pub enum Draw {
    Matrix(SampleMatrix),
    Functional(FunctionalSample),
}

impl Draw {
    pub fn new(problem: &Problem, cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<Self> {
        Ok(match problem {
            Problem::Matrix { model, .. } => Draw::Matrix(match cfg.distribution.component_law() {
                None => sample_gaussian(model, n, seed)?,
                Some(law) => sample_subgaussian_rotated(model, n, seed, law)?,
            }),
            Problem::Operator { op, grid, noise_var, .. } => {
                Draw::Functional(fpca::simulate_trajectories(op, &|_| 0.0, *noise_var, n, grid, seed)?)
            }
        })
    }

    pub fn covariance(&self) -> Result<SymmetricMatrix> {
        Ok(match self {
            Draw::Matrix(s) => estimate::sample_covariance(s)?,
            Draw::Functional(s) => fpca::scaled_sample_covariance(s)?,
        })
    }

    /// Eigenvalues of the sample covariance. When `n < dim` they come from the
    /// `n x n` Gram matrix of the centered rows, padded with zeros.
    pub fn spectrum(&self) -> Result<EmpiricalSpectrum> {
        let (rows, divisor) = match self {
            Draw::Matrix(s) => (s.rows(), s.n() as f64),
            Draw::Functional(s) => (s.observations(), (s.n() * s.grid().m()) as f64),
        };
        let (n, dim) = rows.dim();
        if n >= dim {
            return Ok(EmpiricalSpectrum::of(&self.covariance()?)?);
        }
        let mean = rows.mean_axis(Axis(0)).expect("at least two rows");
        let centered = &rows - &mean;
        let gram = SymmetricMatrix::symmetrize(centered.dot(&centered.t()) / divisor)?;
        let mut values = linalg::eigvalsh(&gram)?;
        values.resize(dim, 0.0);
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(EmpiricalSpectrum { values, trace: linalg::trace(&gram) })
    }
}

/// Everything a trial needs that does not depend on the random draw.
pub struct Setting<'a> {
    pub cfg: &'a ExperimentConfig,
    pub consts: &'a ConstantsConfig,
    pub n: usize,
    pub dim: usize,
    pub problem: Problem,
    /// Noise level used for the eigenvector perturbation bound.
    eta_min: f64,
    /// Per-index eigenvector perturbation bounds at `eta_min`.
    perturbation_bounds: Vec<f64>,
}

/// Outcome of one trial before flags are attached.
pub struct Measurement {
    pub row: Row,
    pub warnings: Vec<String>,
}

impl From<Row> for Measurement {
    fn from(row: Row) -> Self {
        Measurement { row, warnings: Vec::new() }
    }
}

impl<'a> Setting<'a> {
    pub fn new(cfg: &'a ExperimentConfig, consts: &'a ConstantsConfig, n: usize, dim: usize) -> Result<Self> {
        let explicit_c7l = matches!(cfg.model, ModelSpec::Operator { c7l: Some(_), .. });
        let problem = fit_grid_constant(cfg.model.instantiate(dim)?, explicit_c7l)?;
        let dim = problem.dim();
        let (eta_min, perturbation_bounds) = if cfg.experiment == Experiment::EigenvectorCertify {
            let model = problem.population();
            let eta = estimate::eta_theoretical(model, n, dim, cfg.regime, consts)?;
            let bounds = (1..=dim).map(|k| screen::eigenvector_error_bound(model, k, eta)).collect::<spectral_screener::Result<_>>()?;
            (eta, bounds)
        } else {
            (f64::NAN, Vec::new())
        };
        Ok(Self { cfg, consts, n, dim, problem, eta_min, perturbation_bounds })
    }

    fn model(&self) -> &PopulationModel {
        self.problem.population()
    }

    fn jump_index(&self) -> usize {
        self.cfg.jump_index().expect("validated config has a jump index")
    }

    /// Runs one trial with the given seed.
    pub fn trial(&self, seed: u64) -> Result<Measurement> {
        match self.cfg.experiment {
            Experiment::NormBounds => self.norm_bounds(seed),
            Experiment::TraceBound => self.trace_bound(seed),
            Experiment::EffRankBound => self.eff_rank_bound(seed),
            Experiment::JumpMinimal | Experiment::JumpPoly | Experiment::FpcaJump => self.jump(seed),
            Experiment::EigenvalueSelect => self.eigenvalue_select(seed),
            Experiment::EigenvectorCertify => self.eigenvector_certify(seed),
            Experiment::CombinedPoly => self.combined_poly(seed),
            Experiment::FpcaApprox => self.fpca_approx(),
            Experiment::FpcaSelect => self.fpca_select(seed),
            Experiment::Calibrate => self.calibration_sample(seed),
        }
    }

    fn draw(&self, seed: u64) -> Result<Draw> {
        Draw::new(&self.problem, self.cfg, self.n, seed)
    }

    fn norm_bounds(&self, seed: u64) -> Result<Measurement> {
        let model = self.model();
        let (n, p, c) = (self.n, self.dim, self.consts);
        let sigma_n = self.draw(seed)?.covariance()?;
        let diff = sigma_n.sub(model.sigma())?;
        let op_err = linalg::operator_norm(&diff)?;
        let values = linalg::eigvalsh(&sigma_n)?;
        let max_eig_dev = screen::max_eigenvalue_deviation(&values, model.true_spectrum());
        let rate = bounds::operator_rate(model, n, p)?;
        Ok(Row::new()
            .float("fro_err", linalg::frobenius_norm(&diff))
            .float("fro_bound", bounds::frobenius(model, n, c.c1))
            .float("op_err", op_err)
            .float("op_bound", (1.0 + c.c1 + c.c3.unwrap_or(0.0)) * rate)
            .float("eta", estimate::eta_theoretical(model, n, p, self.cfg.regime, c)?)
            .float("max_eig_dev", max_eig_dev)
            // Weyl holds exactly; the slack covers rounding in the two eigensolves
            .float("weyl_bound", op_err + 1e-12 * model.operator_norm().max(values[0].abs()))
            .into())
    }

    fn trace_bound(&self, seed: u64) -> Result<Measurement> {
        let sigma_n = self.draw(seed)?.covariance()?;
        Ok(Row::new()
            .float("trace_err", estimate::trace_relative_error(&sigma_n, self.model())?)
            .float("trace_bound", 4.0 * self.consts.c1 * root_log(self.n))
            .into())
    }

    fn eff_rank_bound(&self, seed: u64) -> Result<Measurement> {
        let model = self.model();
        let (n, p, c) = (self.n, self.dim as f64, self.consts);
        let spectrum = self.draw(seed)?.spectrum()?;
        let nf = n as f64;
        let l = nf.ln() / nf;
        let a1 = 2.0 * c.c1 * (l + l.sqrt());
        let x = model.effective_rank()? * (p * nf).ln() / nf;
        let a2 = (c.c1 + c.c3.unwrap_or(0.0) + 1.0) * x.sqrt().max(x);
        let bound = if a2 < 1.0 { (a1 + a2) / (1.0 - a2) } else { f64::INFINITY };
        Ok(Row::new()
            .float("effrank_err", estimate::effrank_relative_error_from(&spectrum, model)?)
            .float("effrank_bound", bound)
            .into())
    }

    fn jump(&self, seed: u64) -> Result<Measurement> {
        let s = self.jump_index();
        let spectrum = self.draw(seed)?.spectrum()?;
        let (decision, c4l) = match (&self.problem, self.cfg.experiment) {
            (Problem::Operator { op, grid, .. }, _) => {
                let c4l = self.consts.c4l.unwrap_or_else(|| op.c4l());
                (fpca::detect_operator_jump_from(&spectrum, self.n, op, grid, self.consts)?, c4l)
            }
            (Problem::Matrix { poly: Some(poly), .. }, Experiment::JumpPoly) => {
                let c4l = screen::resolve_c4l(poly, self.consts);
                (screen::detect_poly_jump_from(&spectrum, self.n, self.dim, poly, self.consts)?, c4l)
            }
            _ => (screen::detect_minimal_jump_from(&spectrum, self.n, self.dim, self.cfg.regime, self.consts)?, f64::NAN),
        };
        let at = |k: usize| if k >= 1 && k <= spectrum.values.len() { spectrum.values[k - 1] } else { f64::NAN };
        let mut row = Row::new()
            .int("s_hat", decision.s_hat)
            .int("s_true", s)
            .float("threshold", decision.threshold)
            .float("eta", decision.eta)
            .float("lambda_hat_s", at(s))
            .float("lambda_hat_s_next", at(s + 1));
        if let Problem::Operator { op, grid, noise_var, .. } = &self.problem {
            let eps1 = estimate::epsilon1(self.n, self.consts)?;
            let (upper, lower) = fpca::operator_jump_condition(op, s, grid.m(), *noise_var, decision.eta, eps1, c4l);
            row = row.float("c4l", c4l).boolean("condition_upper", upper).boolean("condition_lower", lower);
        } else if self.cfg.experiment == Experiment::JumpPoly {
            row = row.float("c4l", c4l);
        }
        Ok(Measurement { row, warnings: decision.warnings })
    }

    fn eigenvalue_select(&self, seed: u64) -> Result<Measurement> {
        let spectrum = self.draw(seed)?.spectrum()?;
        let sel = screen::select_eigenvalues_from(&spectrum, self.n, self.dim, self.cfg.regime, self.cfg.alpha, self.consts)?;
        let truth = self.model().true_spectrum();
        let max_rel_err = (0..sel.k).map(|i| (spectrum.values[i] / truth[i] - 1.0).abs()).fold(0.0, f64::max);
        Ok(Row::new()
            .int("k_selected", sel.k)
            .float("threshold", sel.threshold)
            .float("eta", sel.eta)
            .float("max_rel_err", max_rel_err)
            .float("alpha", sel.alpha)
            .into())
    }

    fn eigenvector_certify(&self, seed: u64) -> Result<Measurement> {
        let model = self.model();
        let sigma_n = self.draw(seed)?.covariance()?;
        let decomp = linalg::eigh(&sigma_n)?;
        let spectrum = EmpiricalSpectrum { values: decomp.values().to_vec(), trace: linalg::trace(&sigma_n) };
        let cert = screen::certify_eigenvectors_from(&spectrum, self.n, self.dim, self.cfg.regime, self.cfg.alpha, self.consts)?;
        let errors = (1..=self.dim)
            .map(|k| linalg::aligned_distance(decomp.vector(k - 1), model.eigenvector(k - 1).view()))
            .collect::<spectral_screener::Result<Vec<_>>>()?;
        let max_cert_err = cert.certified_vectors.iter().map(|&k| errors[k - 1]).fold(0.0, f64::max);
        let margin = errors.iter().zip(&self.perturbation_bounds).map(|(e, b)| b - e).fold(f64::INFINITY, f64::min);
        Ok(Row::new()
            .int("k_certified", cert.k)
            .text("certified", list(&cert.certified_vectors))
            .float("threshold", cert.threshold)
            .float("max_cert_err", max_cert_err)
            .float("alpha", cert.alpha)
            .float("op_err", screen::operator_deviation(&sigma_n, model.sigma())?)
            .float("eta_min", self.eta_min)
            .float("perturbation_margin", margin)
            .into())
    }

    fn combined_poly(&self, seed: u64) -> Result<Measurement> {
        let Problem::Matrix { model, poly: Some(poly) } = &self.problem else {
            return Err(HarnessError::Config("combined selection needs a poly model".into()));
        };
        let sigma_n = self.draw(seed)?.covariance()?;
        let decomp = linalg::eigh(&sigma_n)?;
        let spectrum = EmpiricalSpectrum { values: decomp.values().to_vec(), trace: linalg::trace(&sigma_n) };
        let sel = screen::select_combined_poly_from(&spectrum, self.n, self.dim, poly, self.cfg.alpha, self.consts)?;
        let truth = model.true_spectrum();
        let mut max_vec_err = 0.0_f64;
        let mut max_rel_err = 0.0_f64;
        for k in 1..=sel.k {
            max_vec_err = max_vec_err.max(linalg::aligned_distance(decomp.vector(k - 1), model.eigenvector(k - 1).view())?);
            max_rel_err = max_rel_err.max((spectrum.values[k - 1] / truth[k - 1] - 1.0).abs());
        }
        Ok(Row::new()
            .int("k_ev", sel.k)
            .float("threshold", sel.threshold)
            .float("eta", sel.eta)
            .float("max_vec_err", max_vec_err)
            .float("max_rel_err", max_rel_err)
            .float("alpha", sel.alpha)
            .float("alpha_third", sel.alpha / 3.0)
            .into())
    }

    fn fpca_approx(&self) -> Result<Measurement> {
        let Problem::Operator { op, grid, .. } = &self.problem else {
            return Err(HarnessError::Config("approximation needs an operator model".into()));
        };
        let report = approximation_report(op, grid, self.cfg.depth)?;
        Ok(Measurement {
            row: Row::new()
                .int("depth", report.depth)
                .float("eigenvalue_deviation", report.eigenvalue_deviation)
                .float("eigenvalue_bound", report.eigenvalue_bound)
                .float("trace_deviation", report.trace_deviation)
                .float("gram_deviation", report.gram_deviation)
                .float("max_eigenvector_deviation", report.max_eigenvector_deviation())
                .float("c7l", op.constants().c7l)
                .boolean("validity_holds", report.validity_holds),
            warnings: report.warnings,
        })
    }

    fn fpca_select(&self, seed: u64) -> Result<Measurement> {
        let Problem::Operator { op, grid, noise_var, .. } = &self.problem else {
            return Err(HarnessError::Config("operator selection needs an operator model".into()));
        };
        let sigma_n = self.draw(seed)?.covariance()?;
        let spectrum = EmpiricalSpectrum::of(&sigma_n)?;
        let sel = fpca::select_operator_eigen_from(&spectrum, self.n, op, grid, *noise_var, self.cfg.alpha, self.consts)?;
        let mut max_cert_err = 0.0_f64;
        if !sel.certified_vectors.is_empty() {
            let decomp = linalg::eigh(&sigma_n)?;
            for &k in &sel.certified_vectors {
                let phi = phi_vector(op, k, grid)?;
                max_cert_err = max_cert_err.max(linalg::aligned_distance(decomp.vector(k - 1), phi.view())?);
            }
        }
        Ok(Row::new()
            .int("k_op", sel.k)
            .int("certified_count", sel.certified_vectors.len())
            .int("count_cap", op.resolvable_depth(grid.m()))
            .float("threshold", sel.threshold)
            .float("eta", sel.eta)
            .float("lambda_hat_1", spectrum.values[0])
            .float("max_cert_err", max_cert_err)
            .float("alpha", sel.alpha)
            .into())
    }

    fn calibration_sample(&self, seed: u64) -> Result<Measurement> {
        let model = self.model();
        let (n, p) = (self.n, self.dim);
        let sigma_n = self.draw(seed)?.covariance()?;
        let op_err = screen::operator_deviation(&sigma_n, model.sigma())?;
        let unit = ConstantsConfig { c: 1.0, ..self.consts.clone() };
        let op_scale = estimate::eta_theoretical(model, n, p, self.cfg.regime, &unit)?;
        let rate_scale = bounds::operator_rate(model, n, p)?;
        Ok(Row::new()
            .float("trace_ratio", estimate::trace_relative_error(&sigma_n, model)?)
            .float("op_err", op_err)
            .float("op_scale", op_scale)
            .float("rate_scale", rate_scale)
            .into())
    }
}

/// Flags recorded for an experiment, in evaluation order.
pub fn flag_specs(experiment: Experiment) -> Vec<FlagSpec> {
    use Cmp::*;
    match experiment {
        Experiment::NormBounds => vec![
            FlagSpec::compare("fro_ok", "fro_err", Le, "fro_bound"),
            FlagSpec::compare("op_ok", "op_err", Le, "op_bound"),
            FlagSpec::compare("eta_ok", "op_err", Le, "eta"),
            FlagSpec::compare("weyl_ok", "max_eig_dev", Le, "weyl_bound"),
        ],
        Experiment::TraceBound => vec![FlagSpec::compare("trace_ok", "trace_err", Le, "trace_bound")],
        Experiment::EffRankBound => vec![FlagSpec::compare("effrank_ok", "effrank_err", Le, "effrank_bound")],
        Experiment::JumpMinimal | Experiment::JumpPoly | Experiment::FpcaJump => {
            vec![FlagSpec::compare("jump_ok", "s_hat", Eq, "s_true")]
        }
        Experiment::EigenvalueSelect => vec![FlagSpec::compare("select_ok", "max_rel_err", Le, "alpha")],
        Experiment::EigenvectorCertify => vec![
            FlagSpec::compare("cert_ok", "max_cert_err", Le, "alpha"),
            FlagSpec::compare("norm_event", "op_err", Le, "eta_min"),
            FlagSpec::compare_literal("perturbation_ok", "perturbation_margin", Ge, 0.0).given("norm_event"),
        ],
        Experiment::CombinedPoly => vec![
            FlagSpec::compare("vec_ok", "max_vec_err", Le, "alpha"),
            FlagSpec::compare("val_ok", "max_rel_err", Le, "alpha_third"),
            FlagSpec::all("combined_ok", &["vec_ok", "val_ok"]),
        ],
        Experiment::FpcaApprox => vec![FlagSpec::compare("eigenvalue_bound_ok", "eigenvalue_deviation", Le, "eigenvalue_bound")],
        Experiment::FpcaSelect => vec![
            FlagSpec::compare("cert_ok", "max_cert_err", Le, "alpha"),
            FlagSpec::compare("count_ok", "certified_count", Le, "count_cap"),
        ],
        Experiment::Calibrate => Vec::new(),
    }
}

/// A pass/fail statement about the whole run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub requirement: String,
    pub passed: bool,
}

impl Check {
    fn at_least(name: String, observed: f64, target: f64) -> Self {
        Check { name, observed, requirement: format!(">= {target}"), passed: observed >= target }
    }

    fn within(name: String, observed: f64, lo: f64, hi: f64) -> Self {
        Check { name, observed, requirement: format!("in [{lo}, {hi}]"), passed: observed >= lo && observed <= hi }
    }
}

/// Records grouped by `(n, dim)` in first-appearance order.
pub fn groups(records: &[TrialRecord]) -> Vec<((usize, usize), Vec<&TrialRecord>)> {
    let mut out: Vec<((usize, usize), Vec<&TrialRecord>)> = Vec::new();
    for r in records {
        match out.iter_mut().find(|(key, _)| *key == (r.n, r.dim)) {
            Some((_, v)) => v.push(r),
            None => out.push(((r.n, r.dim), vec![r])),
        }
    }
    out
}

fn flag_frequency(recs: &[&TrialRecord], flag: &str) -> f64 {
    frequency(recs.iter().map(|r| r.flag(flag).unwrap_or(false)))
}

fn column_median(recs: &[&TrialRecord], column: &str) -> Option<f64> {
    let values: Vec<f64> = recs.iter().filter_map(|r| r.fields.float_value(column)).collect();
    median(&values)
}

/// Log-log fits of a column's per-group median against the group size
/// (`n`, or `m` for the approximation experiment).
pub fn slopes(experiment: Experiment, records: &[TrialRecord]) -> Vec<(String, Result<SlopeFit>)> {
    let (columns, by_dim): (&[&str], bool) = match experiment {
        Experiment::NormBounds => (&["op_err", "fro_err"], false),
        Experiment::FpcaApprox => (&["eigenvalue_deviation", "trace_deviation", "gram_deviation"], true),
        _ => return Vec::new(),
    };
    let grouped = groups(records);
    if grouped.len() < 3 {
        return Vec::new();
    }
    columns
        .iter()
        .map(|&col| {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for ((n, dim), recs) in &grouped {
                xs.push(if by_dim { *dim } else { *n } as f64);
                ys.push(column_median(recs, col).unwrap_or(f64::NAN));
            }
            let axis = if by_dim { "m" } else { "n" };
            (format!("{col}_vs_{axis}"), slope_fit(&xs, &ys))
        })
        .collect()
}

/// Acceptance checks for a finished run.
pub fn checks(experiment: Experiment, records: &[TrialRecord], fits: &[(String, SlopeFit)]) -> Vec<Check> {
    let mut out = Vec::new();
    let fit = |name: &str| fits.iter().find(|(k, _)| k == name).map(|(_, f)| *f);
    for ((n, dim), recs) in groups(records) {
        let nf = n as f64;
        let tag = format!("n={n},dim={dim}");
        let freq = |flag: &str| flag_frequency(&recs, flag);
        match experiment {
            Experiment::NormBounds => out.push(Check::at_least(format!("weyl_ok frequency ({tag})"), freq("weyl_ok"), 1.0)),
            Experiment::TraceBound => {
                out.push(Check::at_least(format!("trace_ok frequency ({tag})"), freq("trace_ok"), 1.0 - 5.0 / nf - 0.02))
            }
            Experiment::EffRankBound => {
                out.push(Check::at_least(format!("effrank_ok frequency ({tag})"), freq("effrank_ok"), 1.0 - 11.0 / nf - 0.02))
            }
            Experiment::JumpMinimal | Experiment::JumpPoly | Experiment::FpcaJump => {
                out.push(Check::at_least(format!("jump_ok frequency ({tag})"), freq("jump_ok"), 0.90))
            }
            Experiment::EigenvalueSelect => out.push(Check::at_least(format!("select_ok frequency ({tag})"), freq("select_ok"), 0.95)),
            Experiment::EigenvectorCertify => {
                out.push(Check::at_least(format!("cert_ok frequency ({tag})"), freq("cert_ok"), 0.95));
                out.push(Check::at_least(
                    format!("perturbation_ok frequency ({tag}; norm event in {:.3} of trials)", freq("norm_event")),
                    freq("perturbation_ok"),
                    1.0,
                ));
            }
            Experiment::CombinedPoly => out.push(Check::at_least(format!("combined_ok frequency ({tag})"), freq("combined_ok"), 0.95)),
            Experiment::FpcaSelect => {
                out.push(Check::at_least(format!("cert_ok frequency ({tag})"), freq("cert_ok"), 0.95));
                out.push(Check::at_least(format!("count_ok frequency ({tag})"), freq("count_ok"), 1.0));
            }
            Experiment::FpcaApprox | Experiment::Calibrate => {}
        }
    }
    match experiment {
        Experiment::NormBounds => {
            if let Some(f) = fit("op_err_vs_n") {
                out.push(Check::within("op_err median slope vs n".into(), f.slope, -0.65, -0.35));
            }
        }
        Experiment::FpcaApprox => {
            if let Some(f) = fit("eigenvalue_deviation_vs_m") {
                out.push(Check { name: "eigenvalue deviation slope vs m".into(), observed: f.slope, requirement: "<= -0.25".into(), passed: f.slope <= -0.25 });
                out.push(Check::at_least("eigenvalue deviation fit r2".into(), f.r2, 0.9));
            }
            if let Some(f) = fit("trace_deviation_vs_m") {
                out.push(Check::within("trace deviation slope vs m".into(), f.slope, -1.1, -0.9));
            }
            if let Some(f) = fit("gram_deviation_vs_m") {
                out.push(Check::within("gram deviation slope vs m".into(), f.slope, -1.2, -0.8));
            }
        }
        _ => {}
    }
    out
}

/// Fits `c7l` from the grid when the configuration leaves it open.
pub fn fit_grid_constant(problem: Problem, explicit: bool) -> Result<Problem> {
    match problem {
        Problem::Operator { op, grid, noise_var, population } if !explicit => {
            let depth = op.resolvable_depth(grid.m()).max(1);
            let (_, fitted) = gram_deviation(&op, &grid, depth)?;
            Ok(Problem::Operator { op: op.with_c7l(fitted), grid, noise_var, population })
        }
        other => Ok(other),
    }
}


/// Sample eigenvalues of one trial with the data-driven thresholds that
/// apply to the model, for scree plots. Thresholds that are not positive and
/// finite are left out.
pub fn scree_thresholds(setting: &Setting<'_>, seed: u64) -> Result<(Vec<f64>, Vec<(String, f64)>)> {
    let spectrum = setting.draw(seed)?.spectrum()?;
    let (n, p, cfg, c) = (setting.n, setting.dim, setting.cfg, setting.consts);
    let mut lines = Vec::new();
    match &setting.problem {
        Problem::Matrix { poly, .. } => {
            lines.push(("minimal jump".to_string(), screen::detect_minimal_jump_from(&spectrum, n, p, cfg.regime, c)?.threshold));
            lines.push(("eigenvalue selection".to_string(), screen::select_eigenvalues_from(&spectrum, n, p, cfg.regime, cfg.alpha, c)?.threshold));
            lines.push(("gap certification".to_string(), screen::certify_eigenvectors_from(&spectrum, n, p, cfg.regime, cfg.alpha, c)?.threshold));
            if let Some(poly) = poly {
                lines.push(("polynomial jump".to_string(), screen::detect_poly_jump_from(&spectrum, n, p, poly, c)?.threshold));
                lines.push(("combined selection".to_string(), screen::select_combined_poly_from(&spectrum, n, p, poly, cfg.alpha, c)?.threshold));
            }
        }
        Problem::Operator { op, grid, noise_var, .. } => {
            lines.push(("operator jump".to_string(), fpca::detect_operator_jump_from(&spectrum, n, op, grid, c)?.threshold));
            lines.push((
                "operator selection".to_string(),
                fpca::select_operator_eigen_from(&spectrum, n, op, grid, *noise_var, cfg.alpha, c)?.threshold,
            ));
        }
    }
    lines.retain(|(_, t)| *t > 0.0 && t.is_finite());
    Ok((spectrum.values, lines))
}
