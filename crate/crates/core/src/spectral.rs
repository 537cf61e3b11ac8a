//! Truncated Fourier fields on the circle `T = R / 2πZ`.
//!
//! A field is stored through its coefficients against the orthonormal basis
//! `e_k(θ) = (2π)^{-1/2} e^{ikθ}`. Only the modes `k = 1..=m` are stored; the
//! negative modes are the complex conjugates, so every field is real-valued by
//! construction. The zero mode is kept separately as `mean` because raw
//! quadratic products have one, while elements of the state space do not.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::SpectralError;

/// `(2π)^{-1/2}`, the structure constant of `e_j · e_l = (2π)^{-1/2} e_{j+l}`.
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Real field on the circle with Fourier modes `|k| <= m`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    coeffs: Vec<Complex64>,
    mean: f64,
}

/// The norms of a zero-mean field, plus the sup-norm bound `√π·‖x‖_V`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormReport {
    pub l2: f64,
    pub v: f64,
    pub sup_bound: f64,
}

impl SpectralField {
    /// The zero field of truncation `m`.
    pub fn zeros(m: usize) -> Self {
        Self {
            coeffs: vec![Complex64::new(0.0, 0.0); m],
            mean: 0.0,
        }
    }

    /// Builds a field from the coefficients of modes `1..=coeffs.len()` and
    /// the zero-mode coefficient.
    pub fn from_coeffs(coeffs: Vec<Complex64>, mean: f64) -> Self {
        Self { coeffs, mean }
    }

    /// `amplitude · sin(kθ)` at truncation `m`.
    pub fn sin_mode(m: usize, k: usize, amplitude: f64) -> Self {
        assert!(k >= 1 && k <= m, "mode {k} outside 1..={m}");
        // sin kθ = √(2π)(e_k − e_{−k}) / 2i
        let mut x = Self::zeros(m);
        x.coeffs[k - 1] = Complex64::new(0.0, -amplitude * (PI / 2.0).sqrt());
        x
    }

    /// `amplitude · cos(kθ)` at truncation `m`.
    pub fn cos_mode(m: usize, k: usize, amplitude: f64) -> Self {
        assert!(k >= 1 && k <= m, "mode {k} outside 1..={m}");
        let mut x = Self::zeros(m);
        x.coeffs[k - 1] = Complex64::new(amplitude * (PI / 2.0).sqrt(), 0.0);
        x
    }

    /// Truncation level (number of stored positive modes).
    pub fn m(&self) -> usize {
        self.coeffs.len()
    }

    /// Coefficient of mode `k` for `1 <= k <= m` (index `k - 1`).
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn set_mean(&mut self, mean: f64) {
        self.mean = mean;
    }

    pub fn is_zero_mean(&self) -> bool {
        self.mean == 0.0
    }

    fn require_zero_mean(&self) -> Result<(), SpectralError> {
        if self.is_zero_mean() {
            Ok(())
        } else {
            Err(SpectralError::NonZeroMean(self.mean))
        }
    }

    /// `‖x‖ = (∫ x(θ)² dθ)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.mean * self.mean + 2.0 * sum_sq(&self.coeffs)
    }

    /// `‖x‖_V = ‖A^{1/2} x‖ = (∫ x'(θ)² dθ)^{1/2}`; defined on zero-mean fields.
    pub fn v_norm(&self) -> Result<f64, SpectralError> {
        Ok(self.v_norm_sq()?.sqrt())
    }

    pub fn v_norm_sq(&self) -> Result<f64, SpectralError> {
        self.require_zero_mean()?;
        Ok(v_norm_sq_unchecked(&self.coeffs))
    }

    pub fn norms(&self) -> Result<NormReport, SpectralError> {
        let v = self.v_norm()?;
        Ok(NormReport {
            l2: self.l2_norm(),
            v,
            sup_bound: PI.sqrt() * v,
        })
    }

    /// `L²(T)` inner product `∫ x y dθ`. Truncations may differ.
    pub fn inner(&self, other: &Self) -> f64 {
        self.mean * other.mean + 2.0 * dot_re(&self.coeffs, &other.coeffs)
    }

    /// `A^s x`: multiplies mode `k` by `k^{2s}`.
    pub fn apply_a_power(&self, s: f64) -> Result<Self, SpectralError> {
        self.require_zero_mean()?;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let k = (i + 1) as f64;
                c * k.powf(2.0 * s)
            })
            .collect();
        Ok(Self { coeffs, mean: 0.0 })
    }

    /// Orthogonal projection onto `H_{m'}`: drops the mean and all modes above `m'`.
    pub fn project(&self, m_target: usize) -> Result<Self, SpectralError> {
        if m_target > self.m() {
            return Err(SpectralError::ProjectionAbove {
                target: m_target,
                m: self.m(),
            });
        }
        Ok(Self {
            coeffs: self.coeffs[..m_target].to_vec(),
            mean: 0.0,
        })
    }

    /// Zero-pads to a higher truncation level; the represented function is unchanged.
    pub fn embed(&self, m_target: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(m_target.max(self.m()), Complex64::new(0.0, 0.0));
        Self {
            coeffs,
            mean: self.mean,
        }
    }

    /// Samples `x(θ_j)` on `θ_j = 2πj / n_grid`.
    pub fn eval_physical(&self, n_grid: usize) -> Result<Vec<f64>, SpectralError> {
        Ok(self.eval_with_residue(n_grid)?.0)
    }

    /// Physical samples together with the largest imaginary residue of the
    /// inverse transform.
    pub(crate) fn eval_with_residue(
        &self,
        n_grid: usize,
    ) -> Result<(Vec<f64>, f64), SpectralError> {
        let m = self.m();
        if n_grid < 2 * m + 1 {
            return Err(SpectralError::GridTooCoarse { n_grid, m });
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); n_grid];
        buf[0] = Complex64::new(self.mean, 0.0);
        for (i, c) in self.coeffs.iter().enumerate() {
            let k = i + 1;
            buf[k] = *c;
            buf[n_grid - k] = c.conj();
        }
        FftPlanner::new().plan_fft_inverse(n_grid).process(&mut buf);
        let mut residue: f64 = 0.0;
        let values = buf
            .iter()
            .map(|z| {
                residue = residue.max((z.im * INV_SQRT_2PI).abs());
                z.re * INV_SQRT_2PI
            })
            .collect();
        Ok((values, residue))
    }

    /// Inverse of [`eval_physical`](Self::eval_physical): coefficients of modes
    /// `0..=m` from `n >= 2m + 1` uniform samples.
    pub fn from_samples(samples: &[f64], m: usize) -> Result<Self, SpectralError> {
        let n = samples.len();
        if n < 2 * m + 1 {
            return Err(SpectralError::GridTooCoarse { n_grid: n, m });
        }
        let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let scale = (2.0 * PI).sqrt() / n as f64;
        Ok(Self {
            coeffs: buf[1..=m].iter().map(|c| c * scale).collect(),
            mean: buf[0].re * scale,
        })
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
            mean: self.mean * factor,
        }
    }
}

fn zip_with(
    a: &SpectralField,
    b: &SpectralField,
    op: impl Fn(Complex64, Complex64) -> Complex64,
    mean: f64,
) -> SpectralField {
    let m = a.m().max(b.m());
    let zero = Complex64::new(0.0, 0.0);
    let coeffs = (0..m)
        .map(|i| {
            op(
                a.coeffs.get(i).copied().unwrap_or(zero),
                b.coeffs.get(i).copied().unwrap_or(zero),
            )
        })
        .collect();
    SpectralField { coeffs, mean }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        zip_with(self, rhs, |a, b| a + b, self.mean + rhs.mean)
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        zip_with(self, rhs, |a, b| a - b, self.mean - rhs.mean)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scale(-1.0)
    }
}

impl Mul<&SpectralField> for f64 {
    type Output = SpectralField;
    fn mul(self, rhs: &SpectralField) -> SpectralField {
        rhs.scale(self)
    }
}

pub(crate) fn sum_sq(c: &[Complex64]) -> f64 {
    c.iter().map(|z| z.norm_sqr()).sum()
}

pub(crate) fn dot_re(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub(crate) fn v_norm_sq_unchecked(c: &[Complex64]) -> f64 {
    2.0 * c
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let k = (i + 1) as f64;
            k * k * z.norm_sqr()
        })
        .sum::<f64>()
}

fn check_pair(x: &SpectralField, y: &SpectralField) -> Result<(), SpectralError> {
    x.require_zero_mean()?;
    y.require_zero_mean()?;
    if x.m() != y.m() {
        return Err(SpectralError::TruncationMismatch {
            left: x.m(),
            right: y.m(),
        });
    }
    Ok(())
}

/// `B(x, y) = x y'` on modes `|k| <= 2m`, including the zero mode.
///
/// Computed by direct convolution, so there is no aliasing error.
pub fn bilinear_b(x: &SpectralField, y: &SpectralField) -> Result<SpectralField, SpectralError> {
    check_pair(x, y)?;
    let m = x.m() as i64;
    // signed-index view over modes -m..=m
    let at = |f: &SpectralField, j: i64| -> Complex64 {
        match j {
            0 => Complex64::new(0.0, 0.0),
            j if j > 0 => f.coeffs[(j - 1) as usize],
            j => f.coeffs[(-j - 1) as usize].conj(),
        }
    };
    let mut out = vec![Complex64::new(0.0, 0.0); 2 * m as usize];
    let mut mean = Complex64::new(0.0, 0.0);
    for k in 0..=2 * m {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in (k - m).max(-m)..=m.min(k + m) {
            let l = k - j;
            if j == 0 || l == 0 || l.abs() > m {
                continue;
            }
            acc += at(x, j) * at(y, l) * (I * l as f64);
        }
        acc *= INV_SQRT_2PI;
        if k == 0 {
            mean = acc;
        } else {
            out[(k - 1) as usize] = acc;
        }
    }
    Ok(SpectralField {
        coeffs: out,
        mean: mean.re,
    })
}

/// `B̃(x, y) = B(x, y) + B(y, x) = (x y)'` on modes `|k| <= 2m`. The zero
/// mode is exactly zero.
pub fn bilinear_b_sym(
    x: &SpectralField,
    y: &SpectralField,
) -> Result<SpectralField, SpectralError> {
    check_pair(x, y)?;
    let m = x.m();
    let mut prod = vec![Complex64::new(0.0, 0.0); 2 * m];
    product_full(x.coeffs(), y.coeffs(), &mut prod);
    for (i, c) in prod.iter_mut().enumerate() {
        *c *= I * (i + 1) as f64;
    }
    Ok(SpectralField {
        coeffs: prod,
        mean: 0.0,
    })
}

/// Positive modes `1..=out.len()` of the pointwise product `u v` (both zero-mean,
/// truncation `m`), `out.len() <= 2m`.
fn product_full(u: &[Complex64], v: &[Complex64], out: &mut [Complex64]) {
    let m = u.len() as i64;
    let at = |f: &[Complex64], j: i64| -> Complex64 {
        if j > 0 {
            f[(j - 1) as usize]
        } else {
            f[(-j - 1) as usize].conj()
        }
    };
    for (idx, o) in out.iter_mut().enumerate() {
        let k = idx as i64 + 1;
        let mut acc = Complex64::new(0.0, 0.0);
        for j in (k - m).max(-m)..=m.min(k + m) {
            let l = k - j;
            if j == 0 || l == 0 || l.abs() > m {
                continue;
            }
            acc += at(u, j) * at(v, l);
        }
        *o = acc * INV_SQRT_2PI;
    }
}

// Hot-path kernels on raw coefficient slices. All inputs are zero-mean fields of
// the same truncation `m = out.len()`, and only modes 1..=m of the result are
// formed, which is exactly the Galerkin projection.

/// `Σ_i a_i conj(b_i)` with four independent accumulator chains.
#[inline(always)]
fn cdot_conj(a: &[Complex64], b: &[Complex64]) -> (f64, f64) {
    let mut re = [0.0f64; 4];
    let mut im = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            re[l] += x[l].re * y[l].re + x[l].im * y[l].im;
            im[l] += x[l].im * y[l].re - x[l].re * y[l].im;
        }
    }
    for (x, y) in ra.iter().zip(rb) {
        re[0] += x.re * y.re + x.im * y.im;
        im[0] += x.im * y.re - x.re * y.im;
    }
    ((re[0] + re[1]) + (re[2] + re[3]), (im[0] + im[1]) + (im[2] + im[3]))
}

/// `Σ_{j=1}^{k-1} u_j v_{k-j}` with `u = a[..k-1]` and `v` read backwards.
#[inline(always)]
fn ccorr_rev(a: &[Complex64], b_rev: &[Complex64]) -> (f64, f64) {
    let mut re = [0.0f64; 2];
    let mut im = [0.0f64; 2];
    let n = a.len();
    let mut j = 0;
    while j + 1 < n {
        for l in 0..2 {
            let x = a[j + l];
            let y = b_rev[n - 1 - j - l];
            re[l] += x.re * y.re - x.im * y.im;
            im[l] += x.re * y.im + x.im * y.re;
        }
        j += 2;
    }
    if j < n {
        let x = a[j];
        let y = b_rev[n - 1 - j];
        re[0] += x.re * y.re - x.im * y.im;
        im[0] += x.re * y.im + x.im * y.re;
    }
    (re[0] + re[1], im[0] + im[1])
}

/// Modes `1..=m` of the pointwise product `u·v`.
#[cfg(test)]
pub(crate) fn product_projected(u: &[Complex64], v: &[Complex64], out: &mut [Complex64]) {
    let m = out.len();
    debug_assert!(u.len() == m && v.len() == m);
    for k in 1..=m {
        // both indices positive: j + (k - j) = k
        let (r0, i0) = ccorr_rev(&u[..k - 1], &v[..k - 1]);
        // one negative index: u_{k+l} conj(v_l) + v_{k+l} conj(u_l)
        let (r1, i1) = cdot_conj(&u[k..], &v[..m - k]);
        let (r2, i2) = cdot_conj(&v[k..], &u[..m - k]);
        let re = r0 + r1 + r2;
        let im = i0 + i1 + i2;
        out[k - 1] = Complex64::new(re * INV_SQRT_2PI, im * INV_SQRT_2PI);
    }
}

/// Modes `1..=m` of `u²`, using the symmetry of the square.
#[inline]
pub(crate) fn square_projected(u: &[Complex64], out: &mut [Complex64]) {
    let m = out.len();
    debug_assert!(u.len() == m);
    for k in 1..=m {
        let h = (k - 1) / 2;
        // pairs (j, k-j) with j < k-j, counted twice
        let (mut re, mut im) = ccorr_rev(&u[..h], &u[k - 1 - h..k - 1]);
        re *= 2.0;
        im *= 2.0;
        if k % 2 == 0 {
            let a = u[k / 2 - 1];
            re += a.re * a.re - a.im * a.im;
            im += 2.0 * a.re * a.im;
        }
        let (cre, cim) = cdot_conj(&u[k..], &u[..m - k]);
        re += 2.0 * cre;
        im += 2.0 * cim;
        out[k - 1] = Complex64::new(re * INV_SQRT_2PI, im * INV_SQRT_2PI);
    }
}

/// `π_m B(x, x) = ½ π_m (x²)'` into `out`.
#[inline]
pub(crate) fn nonlinear_projected(x: &[Complex64], out: &mut [Complex64]) {
    square_projected(x, out);
    for (i, c) in out.iter_mut().enumerate() {
        let half_k = 0.5 * (i + 1) as f64;
        *c = Complex64::new(-c.im * half_k, c.re * half_k);
    }
}

/// `π_m B̃(x, d) = π_m (x d)'` into `out`.
#[cfg(test)]
pub(crate) fn sym_projected(x: &[Complex64], d: &[Complex64], out: &mut [Complex64]) {
    product_projected(x, d, out);
    for (i, c) in out.iter_mut().enumerate() {
        let k = (i + 1) as f64;
        *c = Complex64::new(-c.im * k, c.re * k);
    }
}

/// `π_m B(x, w) = π_m (x w')` into `out`.
#[cfg(test)]
pub(crate) fn b_projected(x: &[Complex64], w: &[Complex64], out: &mut [Complex64], scratch: &mut [Complex64]) {
    for (i, (s, c)) in scratch.iter_mut().zip(w).enumerate() {
        let k = (i + 1) as f64;
        // derivative multiplies mode k by ik
        *s = Complex64::new(-c.im * k, c.re * k);
    }
    product_projected(x, scratch, out);
}
