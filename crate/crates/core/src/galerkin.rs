//! Time integration of the Galerkin system
//! `dX = −(ν A X + π_m B(X)) dt + Q_m dW` on `H_m`, its tangent process, and the
//! discrete adjoint of the tangent map.
//!
//! Both schemes treat `ν A` implicitly through a diagonal factor and the
//! quadratic term explicitly:
//!
//! ```text
//! semi-implicit:  X⁺ = (I + ν dt A)^{-1} (X − dt B_m(X) + Q ΔW)
//! exponential:    X⁺ = e^{−ν dt A}      (X − dt B_m(X) + Q ΔW)
//! ```
//!
//! The tangent step is the exact derivative of the discrete map, so
//! finite differences of coupled paths converge to it at first order in ε.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::convolution::{differentiate_scaled, Convolver};
use crate::error::SimError;
use crate::noise::{fill_standard_normals, NoiseSpec};
use crate::spectral::{nonlinear_projected, sum_sq, v_norm_sq_unchecked, SpectralField};

/// Paths whose `L²` norm exceeds this are reported as diverged.
pub const DIVERGENCE_GUARD: f64 = 1e6;

const GRID_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    SemiImplicit,
    Exponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub nu: f64,
    pub m: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub scheme: Scheme,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            nu: 2.0,
            m: 32,
            dt: 1e-3,
            t_end: 0.5,
            seed: 42,
            scheme: Scheme::SemiImplicit,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(SimError::InvalidConfig {
                key: "nu",
                reason: format!("must be positive, got {}", self.nu),
            });
        }
        if self.m == 0 {
            return Err(SimError::InvalidConfig {
                key: "m",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::InvalidConfig {
                key: "dt",
                reason: format!("must be positive, got {}", self.dt),
            });
        }
        if !(self.t_end > 0.0) {
            return Err(SimError::InvalidConfig {
                key: "t_end",
                reason: format!("must be positive, got {}", self.t_end),
            });
        }
        self.steps_to(self.t_end).map(|_| ())
    }

    /// Number of steps to reach `t`, which must lie on the `dt` grid.
    pub fn steps_to(&self, t: f64) -> Result<usize, SimError> {
        steps_on_grid(t, self.dt)
    }

    pub fn with_t_end(&self, t_end: f64) -> Self {
        Self {
            t_end,
            ..self.clone()
        }
    }

    pub fn with_m(&self, m: usize) -> Self {
        Self { m, ..self.clone() }
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        Self { dt, ..self.clone() }
    }
}

pub fn steps_on_grid(t: f64, dt: f64) -> Result<usize, SimError> {
    let n = (t / dt).round();
    if t < 0.0 || (n * dt - t).abs() > GRID_TOL * t.max(1.0) {
        return Err(SimError::OffGrid { time: t, dt });
    }
    Ok(n as usize)
}

/// Time-indexed path `X_{t_n}` with the left-endpoint integral of `‖X_s‖²_V`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
    pub v_integral: Vec<f64>,
}

impl Trajectory {
    pub fn terminal(&self) -> &SpectralField {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Tangent process `D_h X_{t_n}` along a frozen base path.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentPath {
    pub direction: SpectralField,
    pub states: Vec<SpectralField>,
}

/// `−ν A x − π_m B(x, x)`.
pub fn drift(x: &SpectralField, nu: f64, m: usize) -> Result<SpectralField, SimError> {
    if !x.is_zero_mean() {
        return Err(crate::error::SpectralError::NonZeroMean(x.mean()).into());
    }
    let x = if x.m() >= m { x.project(m)? } else { x.embed(m) };
    let mut b = vec![Complex64::new(0.0, 0.0); m];
    nonlinear_projected(x.coeffs(), &mut b);
    let coeffs = x
        .coeffs()
        .iter()
        .zip(&b)
        .enumerate()
        .map(|(i, (c, bk))| {
            let k2 = ((i + 1) * (i + 1)) as f64;
            -c * (nu * k2) - bk
        })
        .collect();
    Ok(SpectralField::from_coeffs(coeffs, 0.0))
}

/// Per-mode linear factor of one step.
fn damping(scheme: Scheme, nu: f64, dt: f64, m: usize) -> Vec<f64> {
    (1..=m)
        .map(|k| {
            let a = nu * dt * (k * k) as f64;
            match scheme {
                Scheme::SemiImplicit => 1.0 / (1.0 + a),
                Scheme::Exponential => (-a).exp(),
            }
        })
        .collect()
}

/// Streaming integrator for one path. Noise enters as standard complex normals
/// so that several integrators (different truncations, step sizes or initial
/// data) can share one Brownian path.
#[derive(Clone, Debug)]
pub struct Integrator {
    dt: f64,
    damp: Vec<f64>,
    noise_scale: Vec<f64>,
    state: Vec<Complex64>,
    nonlinear: Vec<Complex64>,
    conv: Convolver,
    with_nonlinearity: bool,
    step: usize,
    v_integral: f64,
}

impl Integrator {
    pub fn new(x0: &SpectralField, cfg: &SimConfig, q: &NoiseSpec) -> Result<Self, SimError> {
        let m = cfg.m;
        if !x0.is_zero_mean() {
            return Err(crate::error::SpectralError::NonZeroMean(x0.mean()).into());
        }
        if x0.m() != m {
            return Err(crate::error::SpectralError::TruncationMismatch {
                left: x0.m(),
                right: m,
            }
            .into());
        }
        if q.m() < m {
            return Err(SimError::NoiseMismatch {
                noise: q.m(),
                field: m,
            });
        }
        let s = (cfg.dt / 2.0).sqrt();
        Ok(Self {
            dt: cfg.dt,
            damp: damping(cfg.scheme, cfg.nu, cfg.dt, m),
            noise_scale: q.amplitudes()[..m].iter().map(|v| v * s).collect(),
            state: x0.coeffs().to_vec(),
            nonlinear: vec![Complex64::new(0.0, 0.0); m],
            conv: Convolver::new(m),
            with_nonlinearity: true,
            step: 0,
            v_integral: 0.0,
        })
    }

    /// Drops the quadratic term (linear test problems).
    pub fn without_nonlinearity(mut self) -> Self {
        self.with_nonlinearity = false;
        self
    }

    pub fn m(&self) -> usize {
        self.state.len()
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.state
    }

    pub fn state(&self) -> SpectralField {
        SpectralField::from_coeffs(self.state.clone(), 0.0)
    }

    /// Left-endpoint approximation of `∫_0^t ‖X_s‖²_V ds`.
    pub fn v_integral(&self) -> f64 {
        self.v_integral
    }

    /// One step driven by standard normals `z` (only the first `m` are used).
    pub fn advance(&mut self, z: &[Complex64]) -> Result<(), SimError> {
        debug_assert!(z.len() >= self.m());
        self.advance_inner(Some(z))
    }

    /// One step with the noise switched off.
    pub fn advance_deterministic(&mut self) -> Result<(), SimError> {
        self.advance_inner(None)
    }

    fn advance_inner(&mut self, z: Option<&[Complex64]>) -> Result<(), SimError> {
        if self.with_nonlinearity {
            self.conv.square(&self.state, &mut self.nonlinear);
            differentiate_scaled(&mut self.nonlinear, 0.5);
        }
        self.finish(z)
    }

    /// Applies the update once `self.nonlinear` holds `π_m B(X)`.
    fn finish(&mut self, z: Option<&[Complex64]>) -> Result<(), SimError> {
        self.v_integral += self.dt * v_norm_sq_unchecked(&self.state);
        let dt = self.dt;
        for (k, x) in self.state.iter_mut().enumerate() {
            let mut y = *x;
            if self.with_nonlinearity {
                y -= self.nonlinear[k] * dt;
            }
            if let Some(z) = z {
                y += z[k] * self.noise_scale[k];
            }
            *x = y * self.damp[k];
        }
        self.step += 1;
        let norm_sq = 2.0 * sum_sq(&self.state);
        if !(norm_sq <= DIVERGENCE_GUARD * DIVERGENCE_GUARD) {
            return Err(SimError::Diverged {
                step: self.step,
                time: self.time(),
                norm: norm_sq.sqrt(),
            });
        }
        Ok(())
    }

    /// Draws the normals from `rng` and advances.
    pub fn advance_with<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        z: &mut [Complex64],
    ) -> Result<(), SimError> {
        fill_standard_normals(rng, z);
        self.advance(z)
    }
}

/// Advances two integrators of equal truncation in one packed transform pair.
/// `za`/`zb` are their standard normals (pass the same slice for synchronous
/// coupling). Results agree with separate [`Integrator::advance`] calls up to
/// rounding, not bitwise.
pub fn advance_pair(
    a: &mut Integrator,
    za: &[Complex64],
    b: &mut Integrator,
    zb: &[Complex64],
) -> Result<(), SimError> {
    assert_eq!(a.m(), b.m(), "paired integrators need equal truncation");
    if a.with_nonlinearity && b.with_nonlinearity {
        a.conv.square_pair(&a.state, &b.state, &mut a.nonlinear, &mut b.nonlinear);
        differentiate_scaled(&mut a.nonlinear, 0.5);
        differentiate_scaled(&mut b.nonlinear, 0.5);
        a.finish(Some(za))?;
        b.finish(Some(zb))
    } else {
        a.advance(za)?;
        b.advance(zb)
    }
}

/// Tangent processes for several directions along one base path, advanced
/// step by step with the base so the path need not be stored.
#[derive(Clone, Debug)]
pub struct TangentBundle {
    m: usize,
    dt: f64,
    damp: Vec<f64>,
    dirs: Vec<Complex64>,
    conv: Convolver,
    s1: Vec<Complex64>,
    s2: Vec<Complex64>,
}

impl TangentBundle {
    /// Starts the tangents at `directions` (each of truncation `cfg.m`).
    pub fn new(directions: &[SpectralField], cfg: &SimConfig) -> Result<Self, SimError> {
        let m = cfg.m;
        let mut dirs = Vec::with_capacity(directions.len() * m);
        for h in directions {
            check_direction(h, m)?;
            dirs.extend_from_slice(h.coeffs());
        }
        Ok(Self {
            m,
            dt: cfg.dt,
            damp: damping(cfg.scheme, cfg.nu, cfg.dt, m),
            dirs,
            conv: Convolver::new(m),
            s1: vec![Complex64::new(0.0, 0.0); m],
            s2: vec![Complex64::new(0.0, 0.0); m],
        })
    }

    /// The orthonormal real basis of `H_m`: for each `k`, the cosine-type
    /// direction (`x_k = 1/√2`) followed by the sine-type one (`x_k = i/√2`).
    pub fn real_basis(m: usize) -> Vec<SpectralField> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut out = Vec::with_capacity(2 * m);
        for k in 0..m {
            for c in [Complex64::new(s, 0.0), Complex64::new(0.0, s)] {
                let mut f = SpectralField::zeros(m);
                f.coeffs_mut()[k] = c;
                out.push(f);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.dirs.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    /// Coefficients of tangent `j`.
    pub fn direction(&self, j: usize) -> &[Complex64] {
        &self.dirs[j * self.m..(j + 1) * self.m]
    }

    /// One tangent step along base state `x_n` (the state *before* the base step).
    pub fn advance(&mut self, x_n: &[Complex64]) {
        let m = self.m;
        let dt = self.dt;
        self.conv.set_base(x_n);
        let mut pairs = self.dirs.chunks_exact_mut(2 * m);
        for pair in &mut pairs {
            let (d1, d2) = pair.split_at_mut(m);
            self.conv.product_pair_with_base(d1, d2, &mut self.s1, &mut self.s2);
            differentiate_scaled(&mut self.s1, 1.0);
            differentiate_scaled(&mut self.s2, 1.0);
            update_tangent(d1, &self.s1, &self.damp, dt);
            update_tangent(d2, &self.s2, &self.damp, dt);
        }
        let rest = pairs.into_remainder();
        if !rest.is_empty() {
            self.conv.product_with_base(rest, false, &mut self.s1);
            differentiate_scaled(&mut self.s1, 1.0);
            update_tangent(rest, &self.s1, &self.damp, dt);
        }
    }
}

#[inline]
fn update_tangent(d: &mut [Complex64], coupling: &[Complex64], damp: &[f64], dt: f64) {
    for ((dk, sk), r) in d.iter_mut().zip(coupling).zip(damp) {
        *dk = (*dk - sk * dt) * *r;
    }
}

fn check_direction(h: &SpectralField, m: usize) -> Result<(), SimError> {
    if !h.is_zero_mean() {
        return Err(crate::error::SpectralError::NonZeroMean(h.mean()).into());
    }
    if h.m() != m {
        return Err(crate::error::SpectralError::TruncationMismatch { left: h.m(), right: m }.into());
    }
    Ok(())
}

/// One step of the scheme.
pub fn step<R: Rng + ?Sized>(
    x: &SpectralField,
    cfg: &SimConfig,
    q: &NoiseSpec,
    rng: &mut R,
) -> Result<SpectralField, SimError> {
    let mut integ = Integrator::new(x, cfg, q)?;
    let mut z = vec![Complex64::new(0.0, 0.0); cfg.m];
    integ.advance_with(rng, &mut z)?;
    Ok(integ.state())
}

fn record(integ: &Integrator, traj: &mut Trajectory) {
    traj.times.push(integ.time());
    traj.states.push(integ.state());
    traj.v_integral.push(integ.v_integral());
}

/// Iterates [`step`] from `x0` to `cfg.t_end`, recording every state.
pub fn simulate_path<R: Rng + ?Sized>(
    x0: &SpectralField,
    cfg: &SimConfig,
    q: &NoiseSpec,
    rng: &mut R,
) -> Result<Trajectory, SimError> {
    let n = cfg.steps_to(cfg.t_end)?;
    let mut integ = Integrator::new(x0, cfg, q)?;
    let mut traj = Trajectory {
        times: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
        v_integral: Vec::with_capacity(n + 1),
    };
    record(&integ, &mut traj);
    let mut z = vec![Complex64::new(0.0, 0.0); cfg.m];
    for _ in 0..n {
        integ.advance_with(rng, &mut z)?;
        record(&integ, &mut traj);
    }
    Ok(traj)
}

/// Two paths driven by identical increments (synchronous coupling).
pub fn simulate_coupled<R: Rng + ?Sized>(
    x0: &SpectralField,
    y0: &SpectralField,
    cfg: &SimConfig,
    q: &NoiseSpec,
    rng: &mut R,
) -> Result<(Trajectory, Trajectory), SimError> {
    let n = cfg.steps_to(cfg.t_end)?;
    let mut a = Integrator::new(x0, cfg, q)?;
    let mut b = Integrator::new(y0, cfg, q)?;
    let empty = || Trajectory {
        times: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
        v_integral: Vec::with_capacity(n + 1),
    };
    let (mut ta, mut tb) = (empty(), empty());
    record(&a, &mut ta);
    record(&b, &mut tb);
    let mut z = vec![Complex64::new(0.0, 0.0); cfg.m];
    for _ in 0..n {
        fill_standard_normals(rng, &mut z);
        a.advance(&z)?;
        b.advance(&z)?;
        record(&a, &mut ta);
        record(&b, &mut tb);
    }
    Ok((ta, tb))
}

/// Integrates the tangent equation along a recorded base path, starting from `h`.
pub fn simulate_tangent(
    path: &Trajectory,
    h: &SpectralField,
    cfg: &SimConfig,
) -> Result<TangentPath, SimError> {
    check_direction(h, cfg.m)?;
    let mut bundle = TangentBundle::new(std::slice::from_ref(h), cfg)?;
    let mut states = Vec::with_capacity(path.len());
    states.push(h.clone());
    for x_n in path.states.iter().take(path.len().saturating_sub(1)) {
        bundle.advance(x_n.coeffs());
        states.push(SpectralField::from_coeffs(bundle.direction(0).to_vec(), 0.0));
    }
    Ok(TangentPath {
        direction: h.clone(),
        states,
    })
}

/// Pulls a terminal covector `w_N` back to time 0 along `path` through the
/// transpose of the tangent map, returning `J^T w_N` where `J` is the Jacobian
/// of `x_0 ↦ X_{t_N}`. Uses `M^T w = −π_m B(x, w)` for `M d = π_m B̃(x, d)`.
pub fn pull_back(
    path: &Trajectory,
    terminal: &SpectralField,
    cfg: &SimConfig,
) -> Result<SpectralField, SimError> {
    let m = cfg.m;
    check_direction(terminal, m)?;
    let damp = damping(cfg.scheme, cfg.nu, cfg.dt, m);
    let mut conv = Convolver::new(m);
    let mut w = terminal.coeffs().to_vec();
    let mut s = vec![Complex64::new(0.0, 0.0); m];
    for x_n in path.states.iter().rev().skip(1) {
        for (wk, r) in w.iter_mut().zip(&damp) {
            *wk *= *r;
        }
        conv.set_base(x_n.coeffs());
        conv.product_with_base(&w, true, &mut s);
        for (wk, sk) in w.iter_mut().zip(&s) {
            *wk += sk * cfg.dt;
        }
    }
    Ok(SpectralField::from_coeffs(w, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(m: usize, nu: f64, dt: f64, t_end: f64) -> SimConfig {
        SimConfig {
            nu,
            m,
            dt,
            t_end,
            seed: 1,
            scheme: Scheme::SemiImplicit,
        }
    }

    fn close(a: &SpectralField, b: &SpectralField, tol: f64) -> bool {
        (a - b).l2_norm() <= tol
    }

    #[test]
    fn drift_examples() {
        assert_eq!(drift(&SpectralField::zeros(4), 2.0, 4).unwrap().l2_norm(), 0.0);
        let s = SpectralField::sin_mode(4, 1, 1.0);
        let expected = &SpectralField::sin_mode(4, 1, -2.0) + &SpectralField::sin_mode(4, 2, -0.5);
        assert!(close(&drift(&s, 2.0, 4).unwrap(), &expected, 1e-14));
        let s1 = SpectralField::sin_mode(1, 1, 1.0);
        assert!(close(&drift(&s1, 2.0, 1).unwrap(), &SpectralField::sin_mode(1, 1, -2.0), 1e-14));
    }

    #[test]
    fn linear_steps() {
        let q = NoiseSpec::zero(3);
        let s = SpectralField::sin_mode(3, 1, 1.0);
        let c = cfg(3, 1.0, 0.1, 0.1);
        let mut integ = Integrator::new(&s, &c, &q).unwrap().without_nonlinearity();
        integ.advance_deterministic().unwrap();
        assert!(close(&integ.state(), &s.scale(1.0 / 1.1), 1e-15));

        let c = SimConfig {
            scheme: Scheme::Exponential,
            ..c
        };
        let mut integ = Integrator::new(&s, &c, &q).unwrap().without_nonlinearity();
        integ.advance_deterministic().unwrap();
        assert!(close(&integ.state(), &s.scale((-0.1f64).exp()), 1e-15));
    }

    #[test]
    fn zero_start_without_noise_stays_zero() {
        let c = cfg(8, 2.0, 1e-3, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = simulate_path(&SpectralField::zeros(8), &c, &NoiseSpec::zero(8), &mut rng).unwrap();
        assert_eq!(traj.len(), 101);
        assert!(traj.states.iter().all(|s| s.l2_norm() == 0.0));
        assert!(traj.v_integral.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_energy_decreases() {
        let m = 16;
        let c = cfg(m, 0.5, 1e-2, 2.0);
        let x0 = &(&SpectralField::sin_mode(m, 1, 2.0) + &SpectralField::cos_mode(m, 3, 1.0))
            + &SpectralField::sin_mode(m, 5, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = simulate_path(&x0, &c, &NoiseSpec::zero(m), &mut rng).unwrap();
        for w in traj.states.windows(2) {
            assert!(w[1].l2_norm() <= w[0].l2_norm());
        }
        for w in traj.v_integral.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn equal_seeds_are_bit_identical() {
        let c = cfg(12, 2.0, 1e-3, 0.05);
        let q = NoiseSpec::power_law(12, 0.5, 1.0);
        let x0 = SpectralField::sin_mode(12, 1, 1.0);
        let a = simulate_path(&x0, &c, &q, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = simulate_path(&x0, &c, &q, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_guard_trips() {
        let m = 4;
        let c = SimConfig {
            scheme: Scheme::Exponential,
            ..cfg(m, 1e-3, 0.5, 50.0)
        };
        let x0 = SpectralField::sin_mode(m, 1, 50.0);
        let err = simulate_path(&x0, &c, &NoiseSpec::zero(m), &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap_err();
        assert!(matches!(err, SimError::Diverged { .. }), "{err}");
    }

    #[test]
    fn off_grid_horizon_rejected() {
        let c = cfg(4, 2.0, 1e-3, 0.0105);
        assert!(matches!(c.validate(), Err(SimError::OffGrid { .. })));
        assert_eq!(cfg(4, 2.0, 1e-3, 0.25).steps_to(0.25).unwrap(), 250);
        assert!(matches!(
            SimConfig { dt: -1.0, ..SimConfig::default() }.validate(),
            Err(SimError::InvalidConfig { key: "dt", .. })
        ));
    }

    #[test]
    fn coupled_paths() {
        let m = 8;
        let c = cfg(m, 2.0, 1e-3, 0.1);
        let q = NoiseSpec::power_law(m, 0.5, 1.0);
        let x0 = SpectralField::sin_mode(m, 1, 1.0);
        let (a, b) = simulate_coupled(&x0, &x0, &c, &q, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
        let single = simulate_path(&x0, &c, &q, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, single);

        let y0 = SpectralField::cos_mode(m, 2, 0.3);
        let zero = NoiseSpec::zero(m);
        let (a, b) = simulate_coupled(&x0, &y0, &c, &zero, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let da = simulate_path(&x0, &c, &zero, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let db = simulate_path(&y0, &c, &zero, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, da);
        assert_eq!(b, db);
    }

    #[test]
    fn tangent_along_zero_path_is_heat_flow() {
        let m = 6;
        let c = cfg(m, 2.0, 1e-3, 0.2);
        let traj = simulate_path(&SpectralField::zeros(m), &c, &NoiseSpec::zero(m), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let h = &SpectralField::sin_mode(m, 1, 1.0) + &SpectralField::cos_mode(m, 3, 0.5);
        let tan = simulate_tangent(&traj, &h, &c).unwrap();
        let n = tan.states.len() - 1;
        let expected = SpectralField::from_coeffs(
            h.coeffs()
                .iter()
                .enumerate()
                .map(|(i, v)| v * (1.0 / (1.0 + 2.0 * 1e-3 * ((i + 1) * (i + 1)) as f64)).powi(n as i32))
                .collect(),
            0.0,
        );
        assert!(close(tan.states.last().unwrap(), &expected, 1e-14));
        // and close to the continuous heat semigroup
        let heat = (-2.0 * 0.2f64).exp();
        assert!((tan.states.last().unwrap().coeffs()[0].im / h.coeffs()[0].im - heat).abs() < 1e-3);
    }

    #[test]
    fn tangent_is_linear() {
        let m = 10;
        let c = cfg(m, 2.0, 1e-3, 0.1);
        let q = NoiseSpec::power_law(m, 0.5, 1.0);
        let traj = simulate_path(&SpectralField::sin_mode(m, 1, 1.0), &c, &q, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let h1 = SpectralField::sin_mode(m, 2, 1.0);
        let h2 = SpectralField::cos_mode(m, 5, 0.7);
        let t1 = simulate_tangent(&traj, &h1, &c).unwrap();
        let t2 = simulate_tangent(&traj, &h2, &c).unwrap();
        let t12 = simulate_tangent(&traj, &(&h1 + &h2), &c).unwrap();
        let t2h = simulate_tangent(&traj, &h1.scale(2.0), &c).unwrap();
        for i in 0..t1.states.len() {
            let sum = &t1.states[i] + &t2.states[i];
            assert!((&t12.states[i] - &sum).l2_norm() <= 1e-10 * sum.l2_norm().max(1e-300));
            assert!((&t2h.states[i] - &t1.states[i].scale(2.0)).l2_norm() <= 1e-12 * t1.states[i].l2_norm());
        }
    }

    #[test]
    fn adjoint_is_transpose_of_tangent() {
        let m = 7;
        let c = cfg(m, 2.0, 1e-3, 0.05);
        let q = NoiseSpec::power_law(m, 0.5, 1.0);
        let traj = simulate_path(&SpectralField::sin_mode(m, 1, 1.5), &c, &q, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let h = &SpectralField::sin_mode(m, 2, 1.0) + &SpectralField::cos_mode(m, 1, 0.4);
        let w = &SpectralField::cos_mode(m, 3, 1.0) + &SpectralField::sin_mode(m, 1, -0.8);
        let forward = simulate_tangent(&traj, &h, &c).unwrap();
        let lhs = forward.states.last().unwrap().inner(&w);
        let rhs = pull_back(&traj, &w, &c).unwrap().inner(&h);
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn fft_step_matches_direct_drift() {
        let m = 16;
        let c = SimConfig {
            scheme: Scheme::Exponential,
            ..cfg(m, 2.0, 1e-3, 0.001)
        };
        let x0 = &SpectralField::sin_mode(m, 1, 1.0) + &SpectralField::cos_mode(m, 4, 0.3);
        let mut integ = Integrator::new(&x0, &c, &NoiseSpec::zero(m)).unwrap();
        integ.advance_deterministic().unwrap();
        // X⁺ = R (X + dt (drift + νAX))
        let d = drift(&x0, 2.0, m).unwrap();
        let expected: Vec<Complex64> = x0
            .coeffs()
            .iter()
            .zip(d.coeffs())
            .enumerate()
            .map(|(i, (x, dk))| {
                let k2 = ((i + 1) * (i + 1)) as f64;
                (x + (dk + x * (2.0 * k2)) * 1e-3) * (-2.0 * 1e-3 * k2).exp()
            })
            .collect();
        assert!(close(&integ.state(), &SpectralField::from_coeffs(expected, 0.0), 1e-14));
    }

    #[test]
    fn paired_advance_matches_single() {
        let m = 12;
        let c = cfg(m, 2.0, 1e-3, 0.1);
        let q = NoiseSpec::power_law(m, 0.5, 1.0);
        let x0 = SpectralField::sin_mode(m, 1, 1.0);
        let y0 = SpectralField::cos_mode(m, 2, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (mut a, mut b) = (Integrator::new(&x0, &c, &q).unwrap(), Integrator::new(&y0, &c, &q).unwrap());
        let (mut a1, mut b1) = (a.clone(), b.clone());
        let mut za = vec![Complex64::new(0.0, 0.0); m];
        let mut zb = za.clone();
        for _ in 0..100 {
            fill_standard_normals(&mut rng, &mut za);
            fill_standard_normals(&mut rng, &mut zb);
            advance_pair(&mut a, &za, &mut b, &zb).unwrap();
            a1.advance(&za).unwrap();
            b1.advance(&zb).unwrap();
        }
        assert!(close(&a.state(), &a1.state(), 1e-12));
        assert!(close(&b.state(), &b1.state(), 1e-12));
        assert!((a.v_integral() - a1.v_integral()).abs() < 1e-12);
    }

    #[test]
    fn bundle_matches_single_tangents() {
        let m = 9;
        let c = cfg(m, 2.0, 1e-3, 0.05);
        let q = NoiseSpec::power_law(m, 0.5, 1.0);
        let traj = simulate_path(&SpectralField::sin_mode(m, 1, 1.0), &c, &q, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let basis = TangentBundle::real_basis(m);
        assert_eq!(basis.len(), 2 * m);
        for (i, u) in basis.iter().enumerate() {
            for (j, v) in basis.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((u.inner(v) - expected).abs() < 1e-15);
            }
        }
        // odd count exercises the unpaired remainder
        let dirs = &basis[..5];
        let mut bundle = TangentBundle::new(dirs, &c).unwrap();
        for x_n in traj.states.iter().take(traj.len() - 1) {
            bundle.advance(x_n.coeffs());
        }
        for (j, h) in dirs.iter().enumerate() {
            let single = simulate_tangent(&traj, h, &c).unwrap();
            let got = SpectralField::from_coeffs(bundle.direction(j).to_vec(), 0.0);
            assert!(close(&got, single.states.last().unwrap(), 1e-13));
        }
    }
}
