//! Monte-Carlo estimation of `P_t f`, the two sides of the log-Harnack and
//! gradient inequalities, exponential moments and hitting frequencies.
//!
//! Sample `i` of an estimate draws its noise from a ChaCha stream keyed by
//! `(seed, cell, i)`, so results do not depend on how samples are spread over
//! threads. Reductions run over sample-ordered vectors.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::constants::{
    exp_moment_bound, exp_moment_rate, gradient_factor, log_harnack_constant, GradientRate, HarnackForm,
};
use crate::error::{EstimateError, SimError};
use crate::galerkin::{advance_pair, Integrator, SimConfig, TangentBundle};
use crate::noise::{admissible, fill_standard_normals, q_norm, NoiseSpec};
use crate::params;
use crate::report::InequalityReport;
use crate::spectral::{dot_re, sum_sq, SpectralField};

/// Sample count and random-stream identity of one estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McSettings {
    pub samples: usize,
    pub seed: u64,
    pub cell: u64,
}

impl McSettings {
    pub fn new(samples: usize, seed: u64, cell: u64) -> Self {
        Self { samples, seed, cell }
    }

    /// Generator for sample `i`.
    pub fn rng(&self, sample: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((self.cell << 32) | sample as u64);
        rng
    }

    pub fn with_cell(self, cell: u64) -> Self {
        Self { cell, ..self }
    }

    fn require(&self, need: usize) -> Result<(), EstimateError> {
        if self.samples < need {
            return Err(EstimateError::TooFewSamples {
                need,
                got: self.samples,
            });
        }
        Ok(())
    }
}

/// Sample mean with its standard error `sd / √n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl MCEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        assert!(n > 0, "empty sample");
        // shifted by the first sample: constant samples give exactly zero spread
        let shift = xs[0];
        let mean_d = xs.iter().map(|v| v - shift).sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = xs.iter().map(|v| (v - shift - mean_d).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean: shift + mean_d,
            std_error,
            n,
        }
    }

    pub fn sample_variance(&self) -> f64 {
        self.std_error * self.std_error * self.n as f64
    }

    /// `log(mean) + var/(2n·mean²)` with delta-method error `se / mean`.
    pub fn log_of_mean(&self) -> (f64, f64) {
        let bias = self.sample_variance() / (2.0 * self.n as f64 * self.mean * self.mean);
        (self.mean.ln() + bias, self.std_error / self.mean)
    }
}

/// Runs `f` for every sample index in parallel and returns results in index order.
pub fn run_samples<T, F>(mc: &McSettings, f: F) -> Result<Vec<T>, SimError>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> Result<T, SimError> + Sync + Send,
{
    (0..mc.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = mc.rng(i);
            f(&mut rng, i)
        })
        .collect()
}

/// Integrates every start under one noise path, calling `observe(j, paths)`
/// when the step count reaches `marks[j]` (nondecreasing).
pub fn drive_coupled<R, F>(
    starts: &[SpectralField],
    marks: &[usize],
    cfg: &SimConfig,
    q: &NoiseSpec,
    rng: &mut R,
    mut observe: F,
) -> Result<(), SimError>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &[Integrator]),
{
    assert!(marks.windows(2).all(|w| w[0] <= w[1]), "marks must be nondecreasing");
    let mut paths = starts
        .iter()
        .map(|s| Integrator::new(s, cfg, q))
        .collect::<Result<Vec<_>, _>>()?;
    let mut z = vec![Complex64::new(0.0, 0.0); cfg.m];
    let mut step = 0;
    for (j, &mark) in marks.iter().enumerate() {
        while step < mark {
            fill_standard_normals(rng, &mut z);
            advance_all(&mut paths, &z)?;
            step += 1;
        }
        observe(j, &paths);
    }
    Ok(())
}

/// Advances every path with the same normals, two per transform pair.
pub fn advance_all(paths: &mut [Integrator], z: &[Complex64]) -> Result<(), SimError> {
    let mut pairs = paths.chunks_exact_mut(2);
    for pair in &mut pairs {
        let (a, b) = pair.split_at_mut(1);
        advance_pair(&mut a[0], z, &mut b[0], z)?;
    }
    for p in pairs.into_remainder() {
        p.advance(z)?;
    }
    Ok(())
}

/// Step indices of `times`, which must be nondecreasing and on the grid.
pub fn marks_for(times: &[f64], cfg: &SimConfig) -> Result<Vec<usize>, SimError> {
    let marks = times.iter().map(|&t| cfg.steps_to(t)).collect::<Result<Vec<_>, _>>()?;
    if marks.windows(2).any(|w| w[0] > w[1]) {
        return Err(SimError::InvalidConfig {
            key: "times",
            reason: "must be nondecreasing".into(),
        });
    }
    Ok(marks)
}

fn check_field(x: &SpectralField, m: usize) -> Result<(), EstimateError> {
    if !x.is_zero_mean() {
        return Err(crate::error::SpectralError::NonZeroMean(x.mean()).into());
    }
    if x.m() != m {
        return Err(crate::error::SpectralError::TruncationMismatch { left: x.m(), right: m }.into());
    }
    Ok(())
}

fn check_admissible(cfg: &SimConfig, q: &NoiseSpec) -> Result<(), EstimateError> {
    if !admissible(cfg.nu, q) {
        return Err(EstimateError::Inadmissible {
            nu_cubed: cfg.nu.powi(3),
            threshold: q.admissibility_threshold(),
        });
    }
    Ok(())
}

/// Bounded `C¹` test functions with values in `[1, 1 + c]`.
#[derive(Clone, Debug, PartialEq)]
pub enum TestFunction {
    /// `1 + c·exp(−‖x − a‖²/s²)`; `s = ∞` gives the constant `1 + c`.
    GaussBump {
        center: SpectralField,
        amplitude: f64,
        scale: f64,
    },
    /// `1 + c·σ(⟨x, h⟩/s)` with the logistic `σ`.
    SigmoidRay {
        direction: SpectralField,
        amplitude: f64,
        scale: f64,
    },
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl TestFunction {
    pub fn gauss_bump(center: SpectralField, amplitude: f64, scale: f64) -> Result<Self, EstimateError> {
        Self::check(amplitude, scale, true)?;
        Ok(TestFunction::GaussBump {
            center,
            amplitude,
            scale,
        })
    }

    pub fn sigmoid_ray(direction: SpectralField, amplitude: f64, scale: f64) -> Result<Self, EstimateError> {
        Self::check(amplitude, scale, false)?;
        Ok(TestFunction::SigmoidRay {
            direction,
            amplitude,
            scale,
        })
    }

    /// The constant `1 + c` on `H_m`.
    pub fn constant(m: usize, c: f64) -> Self {
        TestFunction::GaussBump {
            center: SpectralField::zeros(m),
            amplitude: c,
            scale: f64::INFINITY,
        }
    }

    fn check(amplitude: f64, scale: f64, allow_infinite_scale: bool) -> Result<(), EstimateError> {
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(EstimateError::InvalidInput(format!("amplitude must be positive, got {amplitude}")));
        }
        if !(scale > 0.0) || (scale.is_infinite() && !allow_infinite_scale) || scale.is_nan() {
            return Err(EstimateError::InvalidInput(format!("scale must be positive, got {scale}")));
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        match self {
            TestFunction::GaussBump { center, .. } => center.m(),
            TestFunction::SigmoidRay { direction, .. } => direction.m(),
        }
    }

    pub fn amplitude(&self) -> f64 {
        match self {
            TestFunction::GaussBump { amplitude, .. } | TestFunction::SigmoidRay { amplitude, .. } => *amplitude,
        }
    }

    /// Same function with the amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            TestFunction::GaussBump { amplitude, .. } | TestFunction::SigmoidRay { amplitude, .. } => {
                *amplitude *= factor
            }
        }
        out
    }

    /// `(f(x), w)` where `Df(x) = w·(x − a)` or `w·h`.
    fn value_and_weight(&self, x: &[Complex64]) -> (f64, f64) {
        match self {
            TestFunction::GaussBump {
                center,
                amplitude,
                scale,
            } => {
                if scale.is_infinite() {
                    return (1.0 + amplitude, 0.0);
                }
                let d2: f64 = 2.0
                    * x.iter()
                        .zip(center.coeffs())
                        .map(|(a, b)| (a - b).norm_sqr())
                        .sum::<f64>();
                let s2 = scale * scale;
                let e = (-d2 / s2).exp();
                (1.0 + amplitude * e, -2.0 * amplitude / s2 * e)
            }
            TestFunction::SigmoidRay {
                direction,
                amplitude,
                scale,
            } => {
                let sg = sigmoid(2.0 * dot_re(x, direction.coeffs()) / scale);
                (1.0 + amplitude * sg, amplitude / scale * sg * (1.0 - sg))
            }
        }
    }

    pub fn eval(&self, x: &[Complex64]) -> f64 {
        self.value_and_weight(x).0
    }

    pub fn eval_field(&self, x: &SpectralField) -> f64 {
        self.eval(x.coeffs())
    }

    /// `Df(x)` as an element of `H_m`.
    pub fn gradient(&self, x: &SpectralField) -> SpectralField {
        let (_, w) = self.value_and_weight(x.coeffs());
        match self {
            TestFunction::GaussBump { center, .. } => (x - center).scale(w),
            TestFunction::SigmoidRay { direction, .. } => direction.scale(w),
        }
    }

    /// `⟨Df(x), d⟩` for several `d` at once, written to `out`; returns `‖Q Df(x)‖²`.
    fn directional_derivatives(&self, x: &[Complex64], dirs: &TangentBundle, q: &[f64], out: &mut [f64]) -> f64 {
        let (_, w) = self.value_and_weight(x);
        let mut base = vec![Complex64::new(0.0, 0.0); x.len()];
        match self {
            TestFunction::GaussBump { center, .. } => {
                if w != 0.0 {
                    for ((b, xi), ci) in base.iter_mut().zip(x).zip(center.coeffs()) {
                        *b = xi - ci;
                    }
                }
            }
            TestFunction::SigmoidRay { direction, .. } => base.copy_from_slice(direction.coeffs()),
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o = w * 2.0 * dot_re(&base, dirs.direction(j));
        }
        let q_sq: f64 = base.iter().zip(q).map(|(b, qk)| qk * qk * b.norm_sqr()).sum();
        w * w * 2.0 * q_sq
    }
}

/// `P_t f(x)` over `mc.samples` independent paths.
pub fn estimate_ptf(
    f: &TestFunction,
    x: &SpectralField,
    t: f64,
    cfg: &SimConfig,
    q: &NoiseSpec,
    mc: &McSettings,
) -> Result<MCEstimate, EstimateError> {
    check_field(x, cfg.m)?;
    mc.require(1)?;
    let steps = cfg.steps_to(t)?;
    let values = run_samples(mc, |rng, _| {
        let mut out = 0.0;
        drive_coupled(std::slice::from_ref(x), &[steps], cfg, q, rng, |_, p| {
            out = f.eval(p[0].coeffs())
        })?;
        Ok(out)
    })?;
    Ok(MCEstimate::from_samples(&values))
}

/// `P_t f(x)` at several nondecreasing times on the same paths.
pub fn estimate_ptf_times(
    f: &TestFunction,
    x: &SpectralField,
    times: &[f64],
    cfg: &SimConfig,
    q: &NoiseSpec,
    mc: &McSettings,
) -> Result<Vec<MCEstimate>, EstimateError> {
    check_field(x, cfg.m)?;
    mc.require(1)?;
    let marks = marks_for(times, cfg)?;
    let values = run_samples(mc, |rng, _| {
        let mut out = vec![0.0; marks.len()];
        drive_coupled(std::slice::from_ref(x), &marks, cfg, q, rng, |j, p| {
            out[j] = f.eval(p[0].coeffs())
        })?;
        Ok(out)
    })?;
    Ok((0..marks.len())
        .map(|j| MCEstimate::from_samples(&values.iter().map(|v| v[j]).collect::<Vec<_>>()))
        .collect())
}

/// Both sides of the log-Harnack inequality for one `(t, y, f)` tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct LogHarnackCell {
    pub t: f64,
    pub y_index: usize,
    pub f_index: usize,
    /// `P_t log f(x)`
    pub log_f_at_x: MCEstimate,
    /// `P_t f(y)`
    pub f_at_y: MCEstimate,
    pub q_distance_sq: f64,
    pub radius_sq: f64,
    pub hs_sq: f64,
    pub nu: f64,
}

impl LogHarnackCell {
    pub fn constant(&self, form: HarnackForm) -> f64 {
        log_harnack_constant(form, self.t, self.nu, self.hs_sq, self.q_distance_sq, self.radius_sq)
    }

    /// Row `P_t log f(x) ≤ log P_t f(y) + C`, tagged with the constant and
    /// the tightness ratio `margin / C`.
    pub fn report(&self, experiment: &str, form: HarnackForm) -> InequalityReport {
        let (log_mean, log_se) = self.f_at_y.log_of_mean();
        let c = self.constant(form);
        let r = InequalityReport::new(
            experiment,
            params! {"t" => self.t, "constant_form" => form.label()},
            self.log_f_at_x.mean,
            self.log_f_at_x.std_error,
            log_mean + c,
            log_se,
        );
        let tight = if c > 0.0 { r.margin / c } else { f64::NAN };
        r.with_param("constant", c)
            .with_param("tightness", if tight.is_finite() { serde_json::json!(tight) } else { serde_json::Value::Null })
    }
}

/// Log-Harnack cells for every `(t, y, f)` with `x` fixed; paths from `x`
/// and every `y` share one noise path per sample (synchronous coupling).
pub fn log_harnack_grid(
    fs: &[TestFunction],
    x: &SpectralField,
    ys: &[SpectralField],
    times: &[f64],
    cfg: &SimConfig,
    q: &NoiseSpec,
    mc: &McSettings,
) -> Result<Vec<LogHarnackCell>, EstimateError> {
    check_admissible(cfg, q)?;
    check_field(x, cfg.m)?;
    mc.require(2)?;
    let mut distances = Vec::with_capacity(ys.len());
    for y in ys {
        check_field(y, cfg.m)?;
        let d = q_norm(&(x - y), q)?;
        if !d.is_finite() {
            return Err(EstimateError::InfiniteQNorm);
        }
        distances.push(d * d);
    }
    let marks = marks_for(times, cfg)?;
    // path 0 is x; y equal to x reuses it
    let mut starts = vec![x.clone()];
    let mut path_of_y = Vec::with_capacity(ys.len());
    for y in ys {
        if y == x {
            path_of_y.push(0);
        } else {
            path_of_y.push(starts.len());
            starts.push(y.clone());
        }
    }
    let (nt, np, nf) = (times.len(), starts.len(), fs.len());
    let per_sample = run_samples(mc, |rng, _| {
        let mut vals = vec![0.0; nt * np * nf];
        drive_coupled(&starts, &marks, cfg, q, rng, |j, paths| {
            for (p, path) in paths.iter().enumerate() {
                for (k, f) in fs.iter().enumerate() {
                    vals[(j * np + p) * nf + k] = f.eval(path.coeffs());
                }
            }
        })?;
        Ok(vals)
    })?;
    let column = |idx: usize, log: bool| -> MCEstimate {
        let xs: Vec<f64> = per_sample
            .iter()
            .map(|v| if log { v[idx].ln() } else { v[idx] })
            .collect();
        MCEstimate::from_samples(&xs)
    };
    let hs_sq = q.hs_norm_sq();
    let x_sq = x.l2_norm_sq();
    let mut cells = Vec::new();
    for (j, &t) in times.iter().enumerate() {
        for (yi, y) in ys.iter().enumerate() {
            for k in 0..nf {
                cells.push(LogHarnackCell {
                    t,
                    y_index: yi,
                    f_index: k,
                    log_f_at_x: column(j * np * nf + k, true),
                    f_at_y: column((j * np + path_of_y[yi]) * nf + k, false),
                    q_distance_sq: distances[yi],
                    radius_sq: x_sq.max(y.l2_norm_sq()),
                    hs_sq,
                    nu: cfg.nu,
                });
            }
        }
    }
    Ok(cells)
}

/// Single-tuple log-Harnack check with the full constant.
pub fn estimate_log_harnack(
    f: &TestFunction,
    x: &SpectralField,
    y: &SpectralField,
    t: f64,
    cfg: &SimConfig,
    q: &NoiseSpec,
    mc: &McSettings,
) -> Result<InequalityReport, EstimateError> {
    let cells = log_harnack_grid(std::slice::from_ref(f), x, std::slice::from_ref(y), &[t], cfg, q, mc)?;
    Ok(cells[0].report("log-harnack", HarnackForm::Full))
}

/// Gradient of `P_t f` at `x` assembled from tangent processes, with the
/// right side of the gradient inequality.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientCell {
    pub t: f64,
    pub f_index: usize,
    /// Components of `D P_t f(x)` in [`TangentBundle::real_basis`].
    pub gradient: Vec<f64>,
    /// `‖Q D P_t f(x)‖²` and its jackknife standard error.
    pub left: f64,
    pub left_se: f64,
    /// `P_t ‖Q Df‖² (x)`
    pub q_df_sq: MCEstimate,
    pub x_norm_sq: f64,
    pub hs_sq: f64,
    pub nu: f64,
}

impl GradientCell {
    pub fn report(&self, experiment: &str, rate: GradientRate) -> InequalityReport {
        let factor = gradient_factor(rate, self.nu, self.x_norm_sq, self.t, self.hs_sq);
        InequalityReport::new(
            experiment,
            params! {"t" => self.t, "rate" => rate.label(), "factor" => factor},
            self.left,
            self.left_se,
            self.q_df_sq.mean * factor,
            self.q_df_sq.std_error * factor,
        )
    }
}

/// `E ‖D_h X_t‖²_V` for the sine-type mode-1 direction (`‖h‖_V = 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct TangentNorm {
    pub t: f64,
    pub v_norm_sq: MCEstimate,
    pub x_norm_sq: f64,
    pub hs_sq: f64,
    pub nu: f64,
}

impl TangentNorm {
    pub fn report(&self, experiment: &str, rate: GradientRate) -> InequalityReport {
        let factor = gradient_factor(rate, self.nu, self.x_norm_sq, self.t, self.hs_sq);
        InequalityReport::new(
            experiment,
            params! {"t" => self.t, "rate" => rate.label(), "bound" => "tangent_v_norm"},
            self.v_norm_sq.mean,
            self.v_norm_sq.std_error,
            factor,
            0.0,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientGrid {
    pub cells: Vec<GradientCell>,
    pub tangent_norms: Vec<TangentNorm>,
}

/// Index of the sine-type mode-1 direction in the real basis.
const SIN1: usize = 1;

/// Gradient cells for every `(t, f)`; each sample carries `2m` tangents along
/// its base path.
pub fn gradient_grid(
    fs: &[TestFunction],
    x: &SpectralField,
    times: &[f64],
    cfg: &SimConfig,
    q: &NoiseSpec,
    mc: &McSettings,
) -> Result<GradientGrid, EstimateError> {
    check_field(x, cfg.m)?;
    mc.require(2)?;
    if q.m() < cfg.m {
        return Err(SimError::NoiseMismatch { noise: q.m(), field: cfg.m }.into());
    }
    let marks = marks_for(times, cfg)?;
    let m = cfg.m;
    let nd = 2 * m;
    let (nt, nf) = (times.len(), fs.len());
    // per (t, f): nd gradient components then ‖Q Df‖²; then one tangent norm per t
    let stride = nd + 1;
    let basis = TangentBundle::real_basis(m);
    let q_amp = &q.amplitudes()[..m];
    let per_sample = run_samples(mc, |rng, _| {
        let mut vals = vec![0.0; nt * nf * stride + nt];
        let mut base = Integrator::new(x, cfg, q)?;
        let mut bundle = TangentBundle::new(&basis, cfg)?;
        let mut z = vec![Complex64::new(0.0, 0.0); m];
        let mut step = 0;
        for (j, &mark) in marks.iter().enumerate() {
            while step < mark {
                bundle.advance(base.coeffs());
                base.advance_with(rng, &mut z)?;
                step += 1;
            }
            for (k, f) in fs.iter().enumerate() {
                let off = (j * nf + k) * stride;
                let (g, rest) = vals[off..off + stride].split_at_mut(nd);
                rest[0] = f.directional_derivatives(base.coeffs(), &bundle, q_amp, g);
            }
            let d = bundle.direction(SIN1);
            vals[nt * nf * stride + j] = crate::spectral::v_norm_sq_unchecked(d);
        }
        Ok(vals)
    })?;

    // ‖Q g‖² in the real basis: direction 2i and 2i+1 both carry q_{i+1}
    let weights: Vec<f64> = (0..nd).map(|j| q_amp[j / 2] * q_amp[j / 2]).collect();
    let n = per_sample.len();
    let nf64 = n as f64;
    let x_norm_sq = x.l2_norm_sq();
    let hs_sq = q.hs_norm_sq();
    let mut cells = Vec::with_capacity(nt * nf);
    for (j, &t) in times.iter().enumerate() {
        for k in 0..nf {
            let off = (j * nf + k) * stride;
            let mut sum = vec![0.0; nd];
            for v in &per_sample {
                for (s, g) in sum.iter_mut().zip(&v[off..off + nd]) {
                    *s += g;
                }
            }
            let gbar: Vec<f64> = sum.iter().map(|s| s / nf64).collect();
            let left: f64 = gbar.iter().zip(&weights).map(|(g, w)| w * g * g).sum();
            // jackknife over leave-one-out means
            let loo: Vec<f64> = per_sample
                .iter()
                .map(|v| {
                    sum.iter()
                        .zip(&v[off..off + nd])
                        .zip(&weights)
                        .map(|((s, g), w)| {
                            let gi = (s - g) / (nf64 - 1.0);
                            w * gi * gi
                        })
                        .sum::<f64>()
                })
                .collect();
            let loo_mean = loo.iter().sum::<f64>() / nf64;
            let left_se = ((nf64 - 1.0) / nf64 * loo.iter().map(|v| (v - loo_mean).powi(2)).sum::<f64>()).sqrt();
            let qdf: Vec<f64> = per_sample.iter().map(|v| v[off + nd]).collect();
            cells.push(GradientCell {
                t,
                f_index: k,
                gradient: gbar,
                left,
                left_se,
                q_df_sq: MCEstimate::from_samples(&qdf),
                x_norm_sq,
                hs_sq,
                nu: cfg.nu,
            });
        }
    }
    let tangent_norms = times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let xs: Vec<f64> = per_sample.iter().map(|v| v[nt * nf * stride + j]).collect();
            TangentNorm {
                t,
                v_norm_sq: MCEstimate::from_samples(&xs),
                x_norm_sq,
                hs_sq,
                nu: cfg.nu,
            }
        })
        .collect();
    Ok(GradientGrid { cells, tangent_norms })
}

/// Single `(t, f)` gradient check with rate `2π/ν²`.
pub fn estimate_gradient_bound(
    f: &TestFunction,
    x: &SpectralField,
    t: f64,
    cfg: &SimConfig,
    q: &NoiseSpec,
    mc: &McSettings,
) -> Result<InequalityReport, EstimateError> {
    let grid = gradient_grid(std::slice::from_ref(f), x, &[t], cfg, q, mc)?;
    Ok(grid.cells[0].report("gradient", GradientRate::InverseSquare))
}

/// Tangent directional derivative `E⟨Df(X_t), D_h X_t⟩` against the central
/// difference `E[f(X_t^{x+εh}) − f(X_t^{x−εh})]/(2ε)` on common noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectionalCheck {
    pub tangent: MCEstimate,
    pub finite_difference: MCEstimate,
}

impl DirectionalCheck {
    /// `|fd − tangent| ≤ 3·√(se_fd² + se_tan²)`.
    pub fn agrees(&self) -> bool {
        let tol = crate::report::SE_TOLERANCE * self.tangent.std_error.hypot(self.finite_difference.std_error);
        (self.tangent.mean - self.finite_difference.mean).abs() <= tol
    }
}

#[allow(clippy::too_many_arguments)]
pub fn directional_derivative_check(
    f: &TestFunction,
    x: &SpectralField,
    h: &SpectralField,
    t: f64,
    eps: f64,
    cfg: &SimConfig,
    q: &NoiseSpec,
    mc: &McSettings,
) -> Result<DirectionalCheck, EstimateError> {
    check_field(x, cfg.m)?;
    check_field(h, cfg.m)?;
    mc.require(2)?;
    let steps = cfg.steps_to(t)?;
    let plus = x + &h.scale(eps);
    let minus = x - &h.scale(eps);
    let pairs = run_samples(mc, |rng, _| {
        let mut base = Integrator::new(x, cfg, q)?;
        let mut up = Integrator::new(&plus, cfg, q)?;
        let mut down = Integrator::new(&minus, cfg, q)?;
        let mut bundle = TangentBundle::new(std::slice::from_ref(h), cfg)?;
        let mut z = vec![Complex64::new(0.0, 0.0); cfg.m];
        for _ in 0..steps {
            bundle.advance(base.coeffs());
            fill_standard_normals(rng, &mut z);
            base.advance(&z)?;
            up.advance(&z)?;
            down.advance(&z)?;
        }
        let mut g = [0.0];
        f.directional_derivatives(base.coeffs(), &bundle, &q.amplitudes()[..cfg.m], &mut g);
        let fd = (f.eval(up.coeffs()) - f.eval(down.coeffs())) / (2.0 * eps);
        Ok((g[0], fd))
    })?;
    let tan: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let fd: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok(DirectionalCheck {
        tangent: MCEstimate::from_samples(&tan),
        finite_difference: MCEstimate::from_samples(&fd),
    })
}

/// Pathwise residuals `‖(X_t^{x+εh} − X_t^x)/ε − D_h X_t‖` for each `ε`, on
/// the noise path of sample 0 of `mc`.
pub fn tangent_residuals(
    x: &SpectralField,
    h: &SpectralField,
    t: f64,
    eps: &[f64],
    cfg: &SimConfig,
    q: &NoiseSpec,
    mc: &McSettings,
) -> Result<Vec<f64>, EstimateError> {
    check_field(x, cfg.m)?;
    check_field(h, cfg.m)?;
    let steps = cfg.steps_to(t)?;
    let mut rng = mc.rng(0);
    let mut base = Integrator::new(x, cfg, q)?;
    let mut perturbed = eps
        .iter()
        .map(|&e| Integrator::new(&(x + &h.scale(e)), cfg, q))
        .collect::<Result<Vec<_>, _>>()?;
    let mut bundle = TangentBundle::new(std::slice::from_ref(h), cfg)?;
    let mut z = vec![Complex64::new(0.0, 0.0); cfg.m];
    for _ in 0..steps {
        bundle.advance(base.coeffs());
        fill_standard_normals(&mut rng, &mut z);
        base.advance(&z)?;
        for p in perturbed.iter_mut() {
            p.advance(&z)?;
        }
    }
    let d = bundle.direction(0);
    Ok(eps
        .iter()
        .zip(&perturbed)
        .map(|(&e, p)| {
            let r: Vec<Complex64> = p
                .coeffs()
                .iter()
                .zip(base.coeffs())
                .zip(d)
                .map(|((a, b), dk)| (a - b) / e - dk)
                .collect();
            (2.0 * sum_sq(&r)).sqrt()
        })
        .collect())
}

/// Least-squares slope of `log10 y` against `log10 x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.log10()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Exponential-moment estimate with its closed-form bound.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpMomentEstimate {
    pub lambda: f64,
    pub left: MCEstimate,
    pub right: f64,
    /// Largest sampled exponent `λ(‖X_t‖² + ν∫‖X‖²_V)`.
    pub max_exponent: f64,
    /// Relative standard error above 20%.
    pub heavy_tail: bool,
}

impl ExpMomentEstimate {
    pub fn report(&self, experiment: &str, t: f64) -> InequalityReport {
        InequalityReport::new(
            experiment,
            params! {"t" => t, "lambda" => self.lambda, "max_exponent" => self.max_exponent},
            self.left.mean,
            self.left.std_error,
            self.right,
            0.0,
        )
    }
}

/// `E exp[λ*(‖X_t‖² + ν∫_0^t ‖X_s‖²_V ds)]` with `λ* = ν/(2‖A^{-1/2}Q‖²)`.
pub fn estimate_exp_moment(
    x: &SpectralField,
    t: f64,
    cfg: &SimConfig,
    q: &NoiseSpec,
    mc: &McSettings,
) -> Result<ExpMomentEstimate, EstimateError> {
    let op = q.truncate(cfg.m).a_minus_half_op_norm();
    if op == 0.0 {
        return Err(EstimateError::DegenerateNoise);
    }
    estimate_exp_moment_with_rate(x, t, exp_moment_rate(cfg.nu, op), cfg, q, mc)
}

/// As [`estimate_exp_moment`] with an explicit rate `λ`.
pub fn estimate_exp_moment_with_rate(
    x: &SpectralField,
    t: f64,
    lambda: f64,
    cfg: &SimConfig,
    q: &NoiseSpec,
    mc: &McSettings,
) -> Result<ExpMomentEstimate, EstimateError> {
    check_field(x, cfg.m)?;
    mc.require(1)?;
    let steps = cfg.steps_to(t)?;
    let exponents = run_samples(mc, |rng, _| {
        let mut e = 0.0;
        drive_coupled(std::slice::from_ref(x), &[steps], cfg, q, rng, |_, p| {
            let path = &p[0];
            e = lambda * (2.0 * sum_sq(path.coeffs()) + cfg.nu * path.v_integral());
        })?;
        Ok(e)
    })?;
    let values: Vec<f64> = exponents.iter().map(|e| e.exp()).collect();
    let left = MCEstimate::from_samples(&values);
    let max_exponent = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let heavy_tail = left.std_error > 0.2 * left.mean;
    if heavy_tail {
        log::warn!(
            "exponential moment at t = {t}: relative standard error {:.1}% exceeds 20%; use more samples or a shorter horizon",
            100.0 * left.std_error / left.mean
        );
    }
    let q_m = q.truncate(cfg.m);
    Ok(ExpMomentEstimate {
        lambda,
        left,
        right: exp_moment_bound(lambda, x.l2_norm_sq(), q_m.hs_norm_sq(), t),
        max_exponent,
        heavy_tail,
    })
}

/// Wilson score interval for `hits` successes out of `n` at `z` standard errors.
pub fn wilson_interval(hits: usize, n: usize, z: f64) -> (f64, f64) {
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Wilson interval width used for hitting frequencies.
pub const WILSON_Z: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HittingEstimate {
    pub frequency: MCEstimate,
    pub hits: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Frequency of `‖X_t^{y0} − target‖_V < r`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_hitting(
    target: &SpectralField,
    r: f64,
    y0: &SpectralField,
    t: f64,
    cfg: &SimConfig,
    q: &NoiseSpec,
    mc: &McSettings,
) -> Result<HittingEstimate, EstimateError> {
    check_field(target, cfg.m)?;
    check_field(y0, cfg.m)?;
    if !(r > 0.0) {
        return Err(EstimateError::InvalidInput(format!("radius must be positive, got {r}")));
    }
    mc.require(1)?;
    let steps = cfg.steps_to(t)?;
    let hits = run_samples(mc, |rng, _| {
        let mut hit = false;
        drive_coupled(std::slice::from_ref(y0), &[steps], cfg, q, rng, |_, p| {
            let d: Vec<Complex64> = p[0].coeffs().iter().zip(target.coeffs()).map(|(a, b)| a - b).collect();
            hit = crate::spectral::v_norm_sq_unchecked(&d).sqrt() < r;
        })?;
        Ok(if hit { 1.0 } else { 0.0 })
    })?;
    let count = hits.iter().filter(|&&h| h > 0.0).count();
    let (lower, upper) = wilson_interval(count, hits.len(), WILSON_Z);
    Ok(HittingEstimate {
        frequency: MCEstimate::from_samples(&hits),
        hits: count,
        lower,
        upper,
    })
}

/// One level of the strong-Feller probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FellerLevel {
    pub q_distance: f64,
    /// `P_t f(y_k) − P_t f(x)` on common noise.
    pub difference: MCEstimate,
}

/// `P_t f(y_k) − P_t f(x)` for `y_k = x + 2^{−k} h`, `k = 0..levels`.
#[allow(clippy::too_many_arguments)]
pub fn strong_feller_probe(
    f: &TestFunction,
    x: &SpectralField,
    h: &SpectralField,
    levels: usize,
    t: f64,
    cfg: &SimConfig,
    q: &NoiseSpec,
    mc: &McSettings,
) -> Result<Vec<FellerLevel>, EstimateError> {
    check_field(x, cfg.m)?;
    check_field(h, cfg.m)?;
    mc.require(2)?;
    let steps = cfg.steps_to(t)?;
    let mut starts = vec![x.clone()];
    let mut distances = Vec::with_capacity(levels);
    for k in 0..levels {
        let d = h.scale(0.5f64.powi(k as i32));
        distances.push(q_norm(&d, q)?);
        starts.push(x + &d);
    }
    let diffs = run_samples(mc, |rng, _| {
        let mut out = vec![0.0; levels];
        drive_coupled(&starts, &[steps], cfg, q, rng, |_, p| {
            let fx = f.eval(p[0].coeffs());
            for (o, path) in out.iter_mut().zip(&p[1..]) {
                *o = f.eval(path.coeffs()) - fx;
            }
        })?;
        Ok(out)
    })?;
    Ok((0..levels)
        .map(|k| {
            let xs: Vec<f64> = diffs.iter().map(|v| v[k]).collect();
            FellerLevel {
                q_distance: distances[k],
                difference: MCEstimate::from_samples(&xs),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn estimate_statistics() {
        let e = MCEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert_relative_eq!(e.std_error, (5.0f64 / 3.0 / 4.0).sqrt());
        assert_eq!(MCEstimate::from_samples(&[7.0]).std_error, 0.0);
        let (l, se) = e.log_of_mean();
        assert_relative_eq!(l, 2.5f64.ln() + (5.0 / 3.0) / (2.0 * 4.0 * 6.25));
        assert_relative_eq!(se, e.std_error / 2.5);
    }

    #[test]
    fn wilson_examples() {
        let (lo, hi) = wilson_interval(0, 100, 3.0);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
        let (lo, hi) = wilson_interval(100, 100, 3.0);
        assert!(lo > 0.9);
        assert!(hi > 1.0 - 1e-12);
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
    }

    #[test]
    fn streams_are_distinct_and_repeatable() {
        let mc = McSettings::new(4, 42, 3);
        let a: u64 = mc.rng(0).random();
        let b: u64 = mc.rng(1).random();
        let c: u64 = mc.with_cell(4).rng(0).random();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, mc.rng(0).random::<u64>());
    }

    #[test]
    fn test_function_gradients_match_differences() {
        let m = 5;
        let x = &SpectralField::sin_mode(m, 1, 0.3) + &SpectralField::cos_mode(m, 2, 0.2);
        let h = &SpectralField::cos_mode(m, 1, 1.0) + &SpectralField::sin_mode(m, 4, 0.5);
        let fs = [
            TestFunction::gauss_bump(SpectralField::sin_mode(m, 1, 0.1), 1.0, 1.0).unwrap(),
            TestFunction::sigmoid_ray(SpectralField::sin_mode(m, 1, 1.0), 1.0, 0.25).unwrap(),
        ];
        for f in &fs {
            let eps = 1e-6;
            let fd = (f.eval_field(&(&x + &h.scale(eps))) - f.eval_field(&(&x - &h.scale(eps)))) / (2.0 * eps);
            let an = f.gradient(&x).inner(&h);
            assert!((fd - an).abs() < 1e-8, "{fd} vs {an}");
            let v = f.eval_field(&x);
            assert!((1.0..=2.0).contains(&v));
        }
        let c = TestFunction::constant(m, 0.5);
        assert_eq!(c.eval_field(&x), 1.5);
        assert_eq!(c.gradient(&x).l2_norm(), 0.0);
        assert!(TestFunction::sigmoid_ray(SpectralField::zeros(m), 1.0, f64::INFINITY).is_err());
        assert!(TestFunction::gauss_bump(SpectralField::zeros(m), -1.0, 1.0).is_err());
    }
}
