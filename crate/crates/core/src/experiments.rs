//! Named experiment drivers. Each binds estimators to a parameter grid and
//! returns report rows in a fixed order.
//!
//! Random streams: experiment `e`, grid cell `c` use cell id `(e << 16) | c`.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::{default_test_functions, RunConfig, TestFunctionSpec};
use crate::constants::{GradientRate, HarnackForm};
use crate::error::{ConfigError, EstimateError, ExperimentError};
use crate::fields::FieldSpec;
use crate::galerkin::{Integrator, SimConfig};
use crate::mc::{
    directional_derivative_check, estimate_exp_moment, estimate_hitting, estimate_ptf_times,
    gradient_grid, log_harnack_grid, log_log_slope, run_samples, strong_feller_probe, tangent_residuals,
    McSettings, TestFunction,
};
use crate::noise::{fill_standard_normals, q_norm};
use crate::params;
use crate::report::InequalityReport;
use crate::spectral::{bilinear_b, SpectralField};

/// Experiment names in run order.
pub const EXPERIMENTS: [&str; 9] = [
    "bilinear",
    "energy",
    "exp-moment",
    "log-harnack",
    "gradient",
    "convergence",
    "irreducibility",
    "mixing",
    "strong-feller",
];

fn cell(experiment: u64, local: u64) -> u64 {
    (experiment << 16) | local
}

fn exp_id(name: &str) -> u64 {
    EXPERIMENTS.iter().position(|e| *e == name).expect("known experiment") as u64 + 1
}

fn mc(cfg: &RunConfig, name: &str, local: u64, samples: usize) -> McSettings {
    McSettings::new(samples, cfg.seed, cell(exp_id(name), local))
}

/// Shared row parameters.
fn base_params(cfg: &RunConfig, n: usize) -> Map<String, Value> {
    let mut p = params! {
        "nu" => cfg.nu,
        "m" => cfg.m,
        "dt" => cfg.dt,
        "seed" => cfg.seed,
        "n" => n,
    };
    p.insert("noise".into(), serde_json::to_value(&cfg.noise).expect("noise serializes"));
    p
}

fn merged(mut row: InequalityReport, base: &Map<String, Value>) -> InequalityReport {
    for (k, v) in base {
        row.params.entry(k.clone()).or_insert_with(|| v.clone());
    }
    row
}

/// Two-sided agreement as one row: `|a − b| ≤ 0 + 3·SE`.
fn agreement_row(
    experiment: &str,
    params: Map<String, Value>,
    a: f64,
    a_se: f64,
    b: f64,
    b_se: f64,
) -> InequalityReport {
    InequalityReport::new(experiment, params, (a - b).abs(), a_se.hypot(b_se), 0.0, 0.0)
        .with_param("a", a)
        .with_param("b", b)
}

fn build_field(key: &str, f: &FieldSpec, m: usize) -> Result<SpectralField, ConfigError> {
    f.build(m).map_err(|e| ConfigError::invalid(key, e))
}

fn build_fn(key: &str, f: &TestFunctionSpec, m: usize) -> Result<TestFunction, ConfigError> {
    f.build(m).map_err(|e| ConfigError::invalid(key, e))
}

fn check_times(cfg: &RunConfig, key: &str, times: &[f64]) -> Result<(), ConfigError> {
    if times.is_empty() {
        return Err(ConfigError::invalid(key, "must not be empty"));
    }
    for &t in times {
        cfg.check_time(key, t)?;
    }
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ConfigError::invalid(key, "must be strictly increasing"));
    }
    Ok(())
}

fn check_samples(key: &str, n: usize, need: usize) -> Result<(), ConfigError> {
    if n < need {
        return Err(ConfigError::invalid(key, format!("needs at least {need}, got {n}")));
    }
    Ok(())
}

fn check_fns(cfg: &RunConfig, key: &str, fs: &[TestFunctionSpec]) -> Result<(), ConfigError> {
    if fs.is_empty() {
        return Err(ConfigError::invalid(key, "must not be empty"));
    }
    fs.iter().try_for_each(|f| cfg.check_test_function(key, f))
}

/// Runs one named experiment.
pub fn run_experiment(name: &str, cfg: &RunConfig) -> Result<Vec<InequalityReport>, ExperimentError> {
    match name {
        "bilinear" => run_bilinear(cfg),
        "energy" => run_energy(cfg),
        "exp-moment" => run_exp_moment(cfg),
        "log-harnack" => run_log_harnack(cfg),
        "gradient" => run_gradient(cfg),
        "convergence" => run_convergence(cfg),
        "irreducibility" => run_irreducibility(cfg),
        "mixing" => run_mixing(cfg),
        "strong-feller" => run_strong_feller(cfg),
        other => Err(ExperimentError::Unknown {
            name: other.to_string(),
            choices: EXPERIMENTS.join(", ") + ", all",
        }),
    }
}

// ---------------------------------------------------------------- bilinear

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BilinearSettings {
    pub pairs: usize,
    pub m: usize,
}

impl Default for BilinearSettings {
    fn default() -> Self {
        Self { pairs: 10_000, m: 64 }
    }
}

impl BilinearSettings {
    pub(crate) fn validate(&self) -> Result<(), ConfigError> {
        check_samples("bilinear.pairs", self.pairs, 1)?;
        if self.m == 0 {
            return Err(ConfigError::invalid("bilinear.m", "must be at least 1"));
        }
        Ok(())
    }
}

/// Zero-mean field with coefficients `(ξ + iη)/(k√2)`.
pub fn random_decaying_field<R: Rng + ?Sized>(m: usize, rng: &mut R) -> SpectralField {
    let mut z = vec![Complex64::new(0.0, 0.0); m];
    fill_standard_normals(rng, &mut z);
    for (i, c) in z.iter_mut().enumerate() {
        *c /= (i + 1) as f64 * std::f64::consts::SQRT_2;
    }
    SpectralField::from_coeffs(z, 0.0)
}

/// `‖B(x,y)‖² / (π‖x‖²_V‖y‖²_V)`, 0 when either field vanishes.
pub fn product_ratio(x: &SpectralField, y: &SpectralField) -> Result<f64, EstimateError> {
    let denom = std::f64::consts::PI * x.v_norm_sq()? * y.v_norm_sq()?;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(bilinear_b(x, y)?.l2_norm_sq() / denom)
}

/// `max_j x(θ_j)² / (π‖x‖²_V)` on a `4m`-point grid, 0 for the zero field.
pub fn pointwise_ratio(x: &SpectralField) -> Result<f64, EstimateError> {
    let v = x.v_norm_sq()?;
    if v == 0.0 {
        return Ok(0.0);
    }
    let samples = x.eval_physical(4 * x.m())?;
    let peak = samples.iter().map(|s| s * s).fold(0.0, f64::max);
    Ok(peak / (std::f64::consts::PI * v))
}

fn run_bilinear(cfg: &RunConfig) -> Result<Vec<InequalityReport>, ExperimentError> {
    const NAME: &str = "bilinear";
    let s = &cfg.bilinear;
    let n = cfg.samples_or(s.pairs);
    let m = s.m;
    let mcs = mc(cfg, NAME, 0, n);
    let base = params! {"m" => m, "seed" => cfg.seed, "n" => n};
    let mut rows = Vec::with_capacity(n + 2);

    let sin1 = SpectralField::sin_mode(m, 1, 1.0);
    let analytic = product_ratio(&sin1, &sin1)?;
    rows.push(InequalityReport::new(
        NAME,
        params! {"pair" => "sin*sin", "bound" => "product", "expected" => 1.0 / (4.0 * std::f64::consts::PI.powi(2))},
        analytic,
        0.0,
        1.0,
        0.0,
    ));

    let ratios: Vec<(f64, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = mcs.rng(i);
            let x = random_decaying_field(m, &mut rng);
            let y = random_decaying_field(m, &mut rng);
            Ok((product_ratio(&x, &y)?, pointwise_ratio(&x)?, pointwise_ratio(&y)?))
        })
        .collect::<Result<_, EstimateError>>()?;
    for (i, r) in ratios.iter().enumerate() {
        rows.push(InequalityReport::new(
            NAME,
            params! {"pair" => i, "bound" => "product"},
            r.0,
            0.0,
            1.0,
            0.0,
        ));
    }
    let worst = ratios.iter().map(|r| r.1.max(r.2)).fold(0.0, f64::max);
    rows.push(InequalityReport::new(
        NAME,
        params! {"pair" => "max over all fields", "bound" => "pointwise", "fields" => 2 * n},
        worst,
        0.0,
        1.0,
        0.0,
    ));
    Ok(rows.into_iter().map(|r| merged(r, &base)).collect())
}

// ---------------------------------------------------------------- energy

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergySettings {
    /// Horizon; the top-level `t_end` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    pub samples: usize,
    pub x0: FieldSpec,
}

impl Default for EnergySettings {
    fn default() -> Self {
        Self {
            t_end: None,
            samples: 10_000,
            x0: FieldSpec::zero(),
        }
    }
}

impl EnergySettings {
    pub(crate) fn validate(&self, cfg: &RunConfig) -> Result<(), ConfigError> {
        if let Some(t) = self.t_end {
            cfg.check_time("energy.t_end", t)?;
        }
        check_samples("energy.samples", self.samples, 2)?;
        cfg.check_field("energy.x0", &self.x0, cfg.m)
    }
}

/// Per-path `‖X_T‖² + 2ν∫‖X‖²_V` at steps `dt` and `dt/2` on one Brownian path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyPair {
    pub coarse: f64,
    pub fine: f64,
}

impl EnergyPair {
    /// Richardson value `2·fine − coarse`.
    pub fn extrapolated(&self) -> f64 {
        2.0 * self.fine - self.coarse
    }
}

/// Energy functionals for `mc.samples` paths from `x0`; the coarse run is
/// driven by `(z₁ + z₂)/√2` where `z₁, z₂` drive the two fine half-steps.
pub fn energy_pairs(
    x0: &SpectralField,
    t_end: f64,
    sim: &SimConfig,
    q: &crate::noise::NoiseSpec,
    mcs: &McSettings,
) -> Result<Vec<EnergyPair>, EstimateError> {
    let steps = sim.steps_to(t_end)?;
    let fine_cfg = sim.with_dt(sim.dt / 2.0);
    let m = sim.m;
    let nu = sim.nu;
    Ok(run_samples(mcs, |rng, _| {
        let mut coarse = Integrator::new(x0, sim, q)?;
        let mut fine = Integrator::new(x0, &fine_cfg, q)?;
        let mut z1 = vec![Complex64::new(0.0, 0.0); m];
        let mut z2 = z1.clone();
        let mut zc = z1.clone();
        for _ in 0..steps {
            fill_standard_normals(rng, &mut z1);
            fill_standard_normals(rng, &mut z2);
            fine.advance(&z1)?;
            fine.advance(&z2)?;
            for ((c, a), b) in zc.iter_mut().zip(&z1).zip(&z2) {
                *c = (a + b) * std::f64::consts::FRAC_1_SQRT_2;
            }
            coarse.advance(&zc)?;
        }
        let value = |p: &Integrator| p.state().l2_norm_sq() + 2.0 * nu * p.v_integral();
        Ok(EnergyPair {
            coarse: value(&coarse),
            fine: value(&fine),
        })
    })?)
}

fn run_energy(cfg: &RunConfig) -> Result<Vec<InequalityReport>, ExperimentError> {
    const NAME: &str = "energy";
    let s = &cfg.energy;
    let n = cfg.samples_or(s.samples);
    let t_end = s.t_end.unwrap_or(cfg.t_end);
    let sim = cfg.sim();
    let q = cfg.noise()?;
    let x0 = build_field("energy.x0", &s.x0, cfg.m)?;
    let pairs = energy_pairs(&x0, t_end, &sim, &q, &mc(cfg, NAME, 0, n))?;
    let x0_sq = x0.l2_norm_sq();
    let target = q.hs_norm_sq() * t_end;
    let est = |f: &dyn Fn(&EnergyPair) -> f64| {
        crate::mc::MCEstimate::from_samples(&pairs.iter().map(f).collect::<Vec<_>>())
    };
    let coarse = est(&|p| p.coarse);
    let fine = est(&|p| p.fine);
    let extra = est(&|p| p.extrapolated());
    let base = merged(
        InequalityReport::new(NAME, params! {"t_end" => t_end, "x0" => s.x0.to_string()}, 0.0, 0.0, 0.0, 0.0),
        &base_params(cfg, n),
    )
    .params;
    let rows = vec![
        InequalityReport::new(
            NAME,
            params! {"step" => cfg.dt, "form" => "bound"},
            coarse.mean - x0_sq,
            coarse.std_error,
            target,
            0.0,
        ),
        InequalityReport::new(
            NAME,
            params! {"step" => cfg.dt / 2.0, "form" => "bound"},
            fine.mean - x0_sq,
            fine.std_error,
            target,
            0.0,
        ),
        agreement_row(
            NAME,
            params! {"step" => "extrapolated", "form" => "identity"},
            extra.mean - x0_sq,
            extra.std_error,
            target,
            0.0,
        ),
    ];
    Ok(rows.into_iter().map(|r| merged(r, &base)).collect())
}

// ---------------------------------------------------------------- exp-moment

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpMomentSettings {
    pub t: f64,
    pub samples: usize,
    pub x0: FieldSpec,
}

impl Default for ExpMomentSettings {
    fn default() -> Self {
        Self {
            t: 0.25,
            samples: 100_000,
            x0: FieldSpec::zero(),
        }
    }
}

impl ExpMomentSettings {
    pub(crate) fn validate(&self, cfg: &RunConfig) -> Result<(), ConfigError> {
        cfg.check_time("exp_moment.t", self.t)?;
        check_samples("exp_moment.samples", self.samples, 2)?;
        cfg.check_field("exp_moment.x0", &self.x0, cfg.m)
    }
}

fn run_exp_moment(cfg: &RunConfig) -> Result<Vec<InequalityReport>, ExperimentError> {
    const NAME: &str = "exp-moment";
    let s = &cfg.exp_moment;
    let n = cfg.samples_or(s.samples);
    let x0 = build_field("exp_moment.x0", &s.x0, cfg.m)?;
    let est = estimate_exp_moment(&x0, s.t, &cfg.sim(), &cfg.noise()?, &mc(cfg, NAME, 0, n))?;
    let row = est
        .report(NAME, s.t)
        .with_param("x0", s.x0.to_string())
        .with_param("heavy_tail", est.heavy_tail);
    Ok(vec![merged(row, &base_params(cfg, n))])
}

// ---------------------------------------------------------------- log-harnack

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogHarnackSettings {
    pub times: Vec<f64>,
    pub x: FieldSpec,
    pub ys: Vec<FieldSpec>,
    pub samples: usize,
    pub test_functions: Vec<TestFunctionSpec>,
}

impl Default for LogHarnackSettings {
    fn default() -> Self {
        Self {
            times: vec![0.1, 0.25, 0.5, 1.0],
            x: FieldSpec::zero(),
            ys: vec![FieldSpec::zero(), FieldSpec::sin(0.05), FieldSpec::sin(0.1), FieldSpec::sin(0.2)],
            samples: 100_000,
            test_functions: default_test_functions(),
        }
    }
}

impl LogHarnackSettings {
    pub(crate) fn validate(&self, cfg: &RunConfig) -> Result<(), ConfigError> {
        check_times(cfg, "log_harnack.times", &self.times)?;
        if self.times.iter().any(|&t| t <= 0.0) {
            return Err(ConfigError::invalid("log_harnack.times", "must be positive"));
        }
        cfg.check_field("log_harnack.x", &self.x, cfg.m)?;
        if self.ys.is_empty() {
            return Err(ConfigError::invalid("log_harnack.ys", "must not be empty"));
        }
        for y in &self.ys {
            cfg.check_field("log_harnack.ys", y, cfg.m)?;
        }
        check_samples("log_harnack.samples", self.samples, 2)?;
        check_fns(cfg, "log_harnack.test_functions", &self.test_functions)
    }
}

fn run_log_harnack(cfg: &RunConfig) -> Result<Vec<InequalityReport>, ExperimentError> {
    const NAME: &str = "log-harnack";
    let s = &cfg.log_harnack;
    let n = cfg.samples_or(s.samples);
    let q = cfg.noise()?;
    let x = build_field("log_harnack.x", &s.x, cfg.m)?;
    let fs = s
        .test_functions
        .iter()
        .map(|f| build_fn("log_harnack.test_functions", f, cfg.m))
        .collect::<Result<Vec<_>, _>>()?;
    let mut ys = Vec::new();
    let mut y_specs = Vec::new();
    for spec in &s.ys {
        let y = build_field("log_harnack.ys", spec, cfg.m)?;
        if !q_norm(&(&x - &y), &q)?.is_finite() {
            log::warn!("log-harnack: skipping y = {spec}: intrinsic distance to x is infinite");
            continue;
        }
        ys.push(y);
        y_specs.push(spec);
    }
    let cells = log_harnack_grid(&fs, &x, &ys, &s.times, &cfg.sim(), &q, &mc(cfg, NAME, 0, n))?;
    let base = base_params(cfg, n);
    let mut rows = Vec::with_capacity(2 * cells.len());
    for c in &cells {
        for form in [HarnackForm::Full, HarnackForm::HalfRate] {
            let row = c
                .report(NAME, form)
                .with_param("x", s.x.to_string())
                .with_param("y", y_specs[c.y_index].to_string())
                .with_param("f", s.test_functions[c.f_index].label())
                .with_param("q_distance_sq", c.q_distance_sq);
            rows.push(merged(row, &base));
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------- gradient

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientSettings {
    pub times: Vec<f64>,
    pub xs: Vec<FieldSpec>,
    pub samples: usize,
    pub test_functions: Vec<TestFunctionSpec>,
    /// Direction for the finite-difference and residual checks.
    pub direction: FieldSpec,
    pub fd_t: f64,
    pub fd_eps: f64,
    pub fd_samples: usize,
    pub residual_eps: Vec<f64>,
}

impl Default for GradientSettings {
    fn default() -> Self {
        Self {
            times: vec![0.0, 0.1, 0.25, 0.5],
            xs: vec![FieldSpec::zero(), FieldSpec::sin(0.2)],
            samples: 10_000,
            test_functions: default_test_functions(),
            direction: FieldSpec::sin(1.0),
            fd_t: 0.25,
            fd_eps: 1e-4,
            fd_samples: 10_000,
            residual_eps: vec![1e-2, 1e-3, 1e-4],
        }
    }
}

impl GradientSettings {
    pub(crate) fn validate(&self, cfg: &RunConfig) -> Result<(), ConfigError> {
        check_times(cfg, "gradient.times", &self.times)?;
        if self.xs.is_empty() {
            return Err(ConfigError::invalid("gradient.xs", "must not be empty"));
        }
        for x in &self.xs {
            cfg.check_field("gradient.xs", x, cfg.m)?;
        }
        check_samples("gradient.samples", self.samples, 2)?;
        check_fns(cfg, "gradient.test_functions", &self.test_functions)?;
        cfg.check_field("gradient.direction", &self.direction, cfg.m)?;
        cfg.check_time("gradient.fd_t", self.fd_t)?;
        if !(self.fd_eps > 0.0) {
            return Err(ConfigError::invalid("gradient.fd_eps", "must be positive"));
        }
        check_samples("gradient.fd_samples", self.fd_samples, 2)?;
        if self.residual_eps.len() < 2 || self.residual_eps.iter().any(|e| !(*e > 0.0)) {
            return Err(ConfigError::invalid("gradient.residual_eps", "needs at least two positive values"));
        }
        Ok(())
    }
}

/// Accepted range of the log-log slope of finite-difference residuals.
pub const RESIDUAL_SLOPE_TOLERANCE: f64 = 0.1;

fn run_gradient(cfg: &RunConfig) -> Result<Vec<InequalityReport>, ExperimentError> {
    const NAME: &str = "gradient";
    let s = &cfg.gradient;
    let n = cfg.samples_or(s.samples);
    let n_fd = cfg.samples_or(s.fd_samples);
    let sim = cfg.sim();
    let q = cfg.noise()?;
    let fs = s
        .test_functions
        .iter()
        .map(|f| build_fn("gradient.test_functions", f, cfg.m))
        .collect::<Result<Vec<_>, _>>()?;
    let h = build_field("gradient.direction", &s.direction, cfg.m)?;
    let mut rows = Vec::new();
    for (xi, x_spec) in s.xs.iter().enumerate() {
        let x = build_field("gradient.xs", x_spec, cfg.m)?;
        let local = xi as u64 * 16;
        let grid = gradient_grid(&fs, &x, &s.times, &sim, &q, &mc(cfg, NAME, local, n))?;
        let base = merged(
            InequalityReport::new(NAME, params! {"x" => x_spec.to_string()}, 0.0, 0.0, 0.0, 0.0),
            &base_params(cfg, n),
        )
        .params;
        for c in &grid.cells {
            for (rate, variant) in [(GradientRate::InverseSquare, "primary"), (GradientRate::Inverse, "alternate")] {
                let row = c
                    .report(NAME, rate)
                    .with_param("bound", "gradient")
                    .with_param("variant", variant)
                    .with_param("f", s.test_functions[c.f_index].label());
                rows.push(merged(row, &base));
            }
        }
        for tn in &grid.tangent_norms {
            for (rate, variant) in [(GradientRate::InverseSquare, "primary"), (GradientRate::Inverse, "alternate")] {
                let row = tn.report(NAME, rate).with_param("variant", variant).with_param("h", "sin(1t)/sqrt(pi)");
                rows.push(merged(row, &base));
            }
        }
        let fd_base = merged(InequalityReport::new(NAME, Map::new(), 0.0, 0.0, 0.0, 0.0), &base).params;
        let mut fd_base = fd_base;
        fd_base.insert("n".into(), json!(n_fd));
        for (k, f) in fs.iter().enumerate() {
            let chk = directional_derivative_check(
                f,
                &x,
                &h,
                s.fd_t,
                s.fd_eps,
                &sim,
                &q,
                &mc(cfg, NAME, local + 1 + k as u64, n_fd),
            )?;
            let row = agreement_row(
                NAME,
                params! {
                    "bound" => "tangent_vs_finite_difference",
                    "t" => s.fd_t,
                    "eps" => s.fd_eps,
                    "h" => s.direction.to_string(),
                    "f" => s.test_functions[k].label(),
                },
                chk.tangent.mean,
                chk.tangent.std_error,
                chk.finite_difference.mean,
                chk.finite_difference.std_error,
            );
            rows.push(merged(row, &fd_base));
        }
        let residuals = tangent_residuals(&x, &h, s.fd_t, &s.residual_eps, &sim, &q, &mc(cfg, NAME, local + 15, 1))?;
        let slope = log_log_slope(&s.residual_eps, &residuals);
        let row = InequalityReport::new(
            NAME,
            params! {
                "bound" => "residual_order",
                "t" => s.fd_t,
                "eps" => s.residual_eps.clone(),
                "residuals" => residuals,
                "slope" => slope,
                "h" => s.direction.to_string(),
            },
            (slope - 1.0).abs(),
            0.0,
            RESIDUAL_SLOPE_TOLERANCE,
            0.0,
        );
        rows.push(merged(row, &base));
    }
    Ok(rows)
}

// ---------------------------------------------------------------- convergence

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSettings {
    pub ms: Vec<usize>,
    /// Reference truncation; `2·max(ms)` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    pub samples: usize,
    pub x0: FieldSpec,
    pub test_function: TestFunctionSpec,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        Self {
            ms: vec![8, 16, 32],
            reference: None,
            t_end: None,
            samples: 1_000,
            x0: FieldSpec::sin(1.0),
            test_function: TestFunctionSpec::gauss(FieldSpec::zero(), 1.0, 1.0),
        }
    }
}

impl ConvergenceSettings {
    pub fn reference_m(&self) -> usize {
        self.reference.unwrap_or(2 * self.ms.iter().copied().max().unwrap_or(1))
    }

    pub(crate) fn validate(&self, cfg: &RunConfig) -> Result<(), ConfigError> {
        if self.ms.is_empty() || self.ms[0] == 0 || self.ms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::invalid("convergence.ms", "must be positive and strictly increasing"));
        }
        let r = self.reference_m();
        if r < *self.ms.last().expect("nonempty") {
            return Err(ConfigError::invalid("convergence.reference", "must be at least max(ms)"));
        }
        if let Some(t) = self.t_end {
            cfg.check_time("convergence.t_end", t)?;
        }
        check_samples("convergence.samples", self.samples, 2)?;
        cfg.check_field("convergence.x0", &self.x0, self.ms[0])?;
        for &m in &self.ms {
            self.test_function
                .build(m)
                .map_err(|e| ConfigError::invalid("convergence.test_function", e))?;
        }
        Ok(())
    }
}

/// Median with a distribution-free standard error from the order statistics
/// `n/2 ± √n/2`.
pub fn median_with_se(xs: &[f64]) -> (f64, f64) {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let q = |p: f64| v[((p * (n - 1) as f64).round() as usize).min(n - 1)];
    let med = q(0.5);
    let half = (n as f64).sqrt() / 2.0;
    let lo = v[((n as f64 / 2.0 - half).floor().max(0.0) as usize).min(n - 1)];
    let hi = v[((n as f64 / 2.0 + half).ceil() as usize).min(n - 1)];
    (med, (hi - lo) / 2.0)
}

pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v[((p * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)]
}

fn run_convergence(cfg: &RunConfig) -> Result<Vec<InequalityReport>, ExperimentError> {
    const NAME: &str = "convergence";
    let s = &cfg.convergence;
    let n = cfg.samples_or(s.samples);
    let t_end = s.t_end.unwrap_or(cfg.t_end);
    let r = s.reference_m();
    let q = cfg.noise.at(r)?;
    let mut levels: Vec<usize> = s.ms.clone();
    if *levels.last().expect("nonempty") != r {
        levels.push(r);
    }
    let sims: Vec<SimConfig> = levels.iter().map(|&m| cfg.sim().with_m(m)).collect();
    let starts = levels
        .iter()
        .map(|&m| build_field("convergence.x0", &s.x0, m))
        .collect::<Result<Vec<_>, _>>()?;
    let fs = levels
        .iter()
        .map(|&m| build_fn("convergence.test_function", &s.test_function, m))
        .collect::<Result<Vec<_>, _>>()?;
    let steps = sims[0].steps_to(t_end)?;
    let nl = levels.len();
    let per_sample = run_samples(&mc(cfg, NAME, 0, n), |rng, _| {
        let mut paths = starts
            .iter()
            .zip(&sims)
            .map(|(x, c)| Integrator::new(x, c, &q))
            .collect::<Result<Vec<_>, _>>()?;
        let mut z = vec![Complex64::new(0.0, 0.0); r];
        for _ in 0..steps {
            fill_standard_normals(rng, &mut z);
            for p in paths.iter_mut() {
                p.advance(&z)?;
            }
        }
        let reference = paths[nl - 1].state();
        let f_ref = fs[nl - 1].eval(reference.coeffs());
        let mut out = Vec::with_capacity(2 * nl);
        for (p, f) in paths.iter().zip(&fs) {
            let x = p.state();
            out.push((&x.embed(r) - &reference).l2_norm());
            out.push(f.eval(x.coeffs()) - f_ref);
        }
        Ok(out)
    })?;
    let base = merged(
        InequalityReport::new(
            NAME,
            params! {"t_end" => t_end, "reference" => r, "x0" => s.x0.to_string(), "f" => s.test_function.label()},
            0.0,
            0.0,
            0.0,
            0.0,
        ),
        &base_params(cfg, n),
    )
    .params;
    let mut rows = Vec::new();
    let mut prev_gap = (f64::INFINITY, 0.0);
    let mut prev_pf = (f64::INFINITY, 0.0);
    for (i, &m) in s.ms.iter().enumerate() {
        let gaps: Vec<f64> = per_sample.iter().map(|v| v[2 * i]).collect();
        let diffs: Vec<f64> = per_sample.iter().map(|v| v[2 * i + 1]).collect();
        let (med, med_se) = median_with_se(&gaps);
        let row = InequalityReport::new(NAME, params! {"level" => m, "quantity" => "median_gap"}, med, med_se, prev_gap.0, prev_gap.1)
            .with_param("p90_gap", quantile(&gaps, 0.9))
            .with_param("m", m);
        rows.push(merged(row, &base));
        prev_gap = (med, med_se);
        let d = crate::mc::MCEstimate::from_samples(&diffs);
        let row = InequalityReport::new(
            NAME,
            params! {"level" => m, "quantity" => "semigroup_gap"},
            d.mean.abs(),
            d.std_error,
            prev_pf.0,
            prev_pf.1,
        )
        .with_param("m", m);
        rows.push(merged(row, &base));
        prev_pf = (d.mean.abs(), d.std_error);
    }
    Ok(rows)
}

// ---------------------------------------------------------------- irreducibility

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrreducibilitySettings {
    pub target: FieldSpec,
    pub radius: f64,
    pub y0: FieldSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    pub samples: usize,
}

impl Default for IrreducibilitySettings {
    fn default() -> Self {
        Self {
            target: FieldSpec::zero(),
            radius: 1.0,
            y0: FieldSpec::sin(1.0),
            t: None,
            samples: 10_000,
        }
    }
}

impl IrreducibilitySettings {
    pub(crate) fn validate(&self, cfg: &RunConfig) -> Result<(), ConfigError> {
        cfg.check_field("irreducibility.target", &self.target, cfg.m)?;
        cfg.check_field("irreducibility.y0", &self.y0, cfg.m)?;
        if !(self.radius > 0.0) {
            return Err(ConfigError::invalid("irreducibility.radius", "must be positive"));
        }
        if let Some(t) = self.t {
            cfg.check_time("irreducibility.t", t)?;
        }
        check_samples("irreducibility.samples", self.samples, 1)
    }
}

fn run_irreducibility(cfg: &RunConfig) -> Result<Vec<InequalityReport>, ExperimentError> {
    const NAME: &str = "irreducibility";
    let s = &cfg.irreducibility;
    let n = cfg.samples_or(s.samples);
    let t = s.t.unwrap_or(cfg.t_end);
    let target = build_field("irreducibility.target", &s.target, cfg.m)?;
    let y0 = build_field("irreducibility.y0", &s.y0, cfg.m)?;
    let h = estimate_hitting(&target, s.radius, &y0, t, &cfg.sim(), &cfg.noise()?, &mc(cfg, NAME, 0, n))?;
    let row = InequalityReport::strict(
        NAME,
        params! {
            "t" => t,
            "radius" => s.radius,
            "target" => s.target.to_string(),
            "y0" => s.y0.to_string(),
            "hits" => h.hits,
            "frequency" => h.frequency.mean,
            "wilson_upper" => h.upper,
            "wilson_z" => crate::mc::WILSON_Z,
        },
        0.0,
        0.0,
        h.lower,
        0.0,
    );
    Ok(vec![merged(row, &base_params(cfg, n))])
}

// ---------------------------------------------------------------- mixing

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixingSettings {
    pub x: FieldSpec,
    pub y: FieldSpec,
    pub times: Vec<f64>,
    pub samples: usize,
    pub test_function: TestFunctionSpec,
    pub average_start: f64,
    pub average_end: f64,
    pub batches: usize,
}

impl Default for MixingSettings {
    fn default() -> Self {
        Self {
            x: FieldSpec::zero(),
            y: FieldSpec::sin(0.5),
            times: vec![0.5, 1.0, 2.0, 4.0],
            samples: 10_000,
            test_function: TestFunctionSpec::gauss(FieldSpec::zero(), 1.0, 1.0),
            average_start: 10.0,
            average_end: 50.0,
            batches: 20,
        }
    }
}

impl MixingSettings {
    pub(crate) fn validate(&self, cfg: &RunConfig) -> Result<(), ConfigError> {
        cfg.check_field("mixing.x", &self.x, cfg.m)?;
        cfg.check_field("mixing.y", &self.y, cfg.m)?;
        check_times(cfg, "mixing.times", &self.times)?;
        check_samples("mixing.samples", self.samples, 2)?;
        cfg.check_test_function("mixing.test_function", &self.test_function)?;
        cfg.check_time("mixing.average_start", self.average_start)?;
        cfg.check_time("mixing.average_end", self.average_end)?;
        if self.average_end <= self.average_start {
            return Err(ConfigError::invalid("mixing.average_end", "must exceed average_start"));
        }
        let steps = ((self.average_end - self.average_start) / cfg.dt).round() as usize;
        if self.batches < 2 || steps < self.batches {
            return Err(ConfigError::invalid("mixing.batches", "need at least 2 and at most one per step"));
        }
        Ok(())
    }
}

/// Time average of `f` along one path over `[start, end)` with a batch-means
/// standard error.
pub fn time_average(
    f: &TestFunction,
    x: &SpectralField,
    start: f64,
    end: f64,
    batches: usize,
    sim: &SimConfig,
    q: &crate::noise::NoiseSpec,
    mcs: &McSettings,
) -> Result<crate::mc::MCEstimate, EstimateError> {
    let s0 = sim.steps_to(start)?;
    let s1 = sim.steps_to(end)?;
    let mut rng = mcs.rng(0);
    let mut path = Integrator::new(x, sim, q)?;
    let mut z = vec![Complex64::new(0.0, 0.0); sim.m];
    for _ in 0..s0 {
        path.advance_with(&mut rng, &mut z)?;
    }
    let len = s1 - s0;
    let per_batch = len / batches;
    let mut means = Vec::with_capacity(batches);
    let mut acc = 0.0;
    let mut count = 0;
    for i in 0..batches * per_batch {
        acc += f.eval(path.coeffs());
        count += 1;
        path.advance_with(&mut rng, &mut z)?;
        if (i + 1) % per_batch == 0 {
            means.push(acc / count as f64);
            acc = 0.0;
            count = 0;
        }
    }
    Ok(crate::mc::MCEstimate::from_samples(&means))
}

fn run_mixing(cfg: &RunConfig) -> Result<Vec<InequalityReport>, ExperimentError> {
    const NAME: &str = "mixing";
    let s = &cfg.mixing;
    let n = cfg.samples_or(s.samples);
    let sim = cfg.sim();
    let q = cfg.noise()?;
    let x = build_field("mixing.x", &s.x, cfg.m)?;
    let y = build_field("mixing.y", &s.y, cfg.m)?;
    let f = build_fn("mixing.test_function", &s.test_function, cfg.m)?;
    let px = estimate_ptf_times(&f, &x, &s.times, &sim, &q, &mc(cfg, NAME, 0, n))?;
    let py = estimate_ptf_times(&f, &y, &s.times, &sim, &q, &mc(cfg, NAME, 1, n))?;
    let base = merged(
        InequalityReport::new(
            NAME,
            params! {"x" => s.x.to_string(), "y" => s.y.to_string(), "f" => s.test_function.label()},
            0.0,
            0.0,
            0.0,
            0.0,
        ),
        &base_params(cfg, n),
    )
    .params;
    let mut rows = Vec::new();
    let mut prev = (s.test_function.amplitude(), 0.0);
    for (j, &t) in s.times.iter().enumerate() {
        let d = (px[j].mean - py[j].mean).abs();
        let se = px[j].std_error.hypot(py[j].std_error);
        let row = InequalityReport::new(NAME, params! {"t" => t, "check" => "decreasing"}, d, se, prev.0, prev.1)
            .with_param("p_x", px[j].mean)
            .with_param("p_y", py[j].mean);
        rows.push(merged(row, &base));
        prev = (d, se);
    }
    let last = s.times.len() - 1;
    let t_last = s.times[last];
    rows.push(merged(
        agreement_row(
            NAME,
            params! {"t" => t_last, "check" => "two_point_agreement"},
            px[last].mean,
            px[last].std_error,
            py[last].mean,
            py[last].std_error,
        ),
        &base,
    ));
    let avg = time_average(&f, &x, s.average_start, s.average_end, s.batches, &sim, &q, &mc(cfg, NAME, 2, 1))?;
    rows.push(merged(
        agreement_row(
            NAME,
            params! {
                "t" => t_last,
                "check" => "time_average",
                "average_start" => s.average_start,
                "average_end" => s.average_end,
                "batches" => s.batches,
            },
            avg.mean,
            avg.std_error,
            px[last].mean,
            px[last].std_error,
        ),
        &base,
    ));
    Ok(rows)
}

// ---------------------------------------------------------------- strong-feller

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrongFellerSettings {
    pub x: FieldSpec,
    pub direction: FieldSpec,
    pub levels: usize,
    pub t: f64,
    pub samples: usize,
    pub test_function: TestFunctionSpec,
}

impl Default for StrongFellerSettings {
    fn default() -> Self {
        Self {
            x: FieldSpec::zero(),
            direction: FieldSpec::sin(0.2),
            levels: 4,
            t: 0.25,
            samples: 10_000,
            test_function: TestFunctionSpec::sigmoid(FieldSpec::sin(1.0), 1.0, 0.25),
        }
    }
}

impl StrongFellerSettings {
    pub(crate) fn validate(&self, cfg: &RunConfig) -> Result<(), ConfigError> {
        cfg.check_field("strong_feller.x", &self.x, cfg.m)?;
        cfg.check_field("strong_feller.direction", &self.direction, cfg.m)?;
        if self.levels == 0 {
            return Err(ConfigError::invalid("strong_feller.levels", "must be at least 1"));
        }
        cfg.check_time("strong_feller.t", self.t)?;
        check_samples("strong_feller.samples", self.samples, 2)?;
        cfg.check_test_function("strong_feller.test_function", &self.test_function)
    }
}

fn run_strong_feller(cfg: &RunConfig) -> Result<Vec<InequalityReport>, ExperimentError> {
    const NAME: &str = "strong-feller";
    let s = &cfg.strong_feller;
    let n = cfg.samples_or(s.samples);
    let x = build_field("strong_feller.x", &s.x, cfg.m)?;
    let h = build_field("strong_feller.direction", &s.direction, cfg.m)?;
    let f = build_fn("strong_feller.test_function", &s.test_function, cfg.m)?;
    let q = cfg.noise()?;
    let levels = strong_feller_probe(&f, &x, &h, s.levels, s.t, &cfg.sim(), &q, &mc(cfg, NAME, 0, n))?;
    let base = merged(
        InequalityReport::new(
            NAME,
            params! {
                "t" => s.t,
                "x" => s.x.to_string(),
                "direction" => s.direction.to_string(),
                "f" => s.test_function.label(),
                "q_to_v_constant" => q.q_to_v_constant(),
            },
            0.0,
            0.0,
            0.0,
            0.0,
        ),
        &base_params(cfg, n),
    )
    .params;
    let mut rows = Vec::new();
    let mut prev = (s.test_function.amplitude(), 0.0);
    for (k, lvl) in levels.iter().enumerate() {
        let d = lvl.difference.mean.abs();
        let row = InequalityReport::new(
            NAME,
            params! {"level" => k, "q_distance" => lvl.q_distance},
            d,
            lvl.difference.std_error,
            prev.0,
            prev.1,
        );
        rows.push(merged(row, &base));
        prev = (d, lvl.difference.std_error);
    }
    Ok(rows)
}
