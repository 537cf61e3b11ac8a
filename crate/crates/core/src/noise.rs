//! Diagonal covariance operators `Q e_k = q_k e_k` and their Wiener increments.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::SpectralError;
use crate::spectral::SpectralField;

/// Covariance `Q`, diagonal in the Fourier basis with real symbols `q_k = q_{-k}`
/// for `k = 1..=m` and `q_0 = 0`.
///
/// Zero symbols are representable (degenerate noise) so that deterministic
/// limits can be run through the same code; the Harnack-type estimates reject
/// them through [`NoiseSpec::is_nondegenerate`].
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    q: Vec<f64>,
}

impl NoiseSpec {
    /// `q_k = q0 · k^{-gamma}` for `k = 1..=m`.
    pub fn power_law(m: usize, q0: f64, gamma: f64) -> Self {
        Self {
            q: (1..=m).map(|k| q0 * (k as f64).powf(-gamma)).collect(),
        }
    }

    /// Explicit symbols; panics on negative or non-finite values.
    pub fn from_amplitudes(q: Vec<f64>) -> Self {
        assert!(
            q.iter().all(|v| v.is_finite() && *v >= 0.0),
            "noise amplitudes must be finite and nonnegative"
        );
        Self { q }
    }

    /// `Q = 0` at truncation `m`.
    pub fn zero(m: usize) -> Self {
        Self { q: vec![0.0; m] }
    }

    pub fn m(&self) -> usize {
        self.q.len()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.q
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.q.iter().all(|&v| v > 0.0)
    }

    /// `Q_{m'} = π_{m'} Q`.
    pub fn truncate(&self, m: usize) -> Self {
        Self {
            q: self.q.iter().copied().take(m).collect(),
        }
    }

    /// `‖Q‖_HS = (2 Σ q_k²)^{1/2}`.
    pub fn hs_norm(&self) -> f64 {
        self.hs_norm_sq().sqrt()
    }

    pub fn hs_norm_sq(&self) -> f64 {
        2.0 * self.q.iter().map(|v| v * v).sum::<f64>()
    }

    /// Operator norm `‖A^{-1/2} Q‖ = max_k q_k / k`.
    pub fn a_minus_half_op_norm(&self) -> f64 {
        self.q
            .iter()
            .enumerate()
            .map(|(i, v)| v / (i + 1) as f64)
            .fold(0.0, f64::max)
    }

    /// `4π ‖A^{-1/2} Q‖²`, the threshold `ν³` must reach.
    pub fn admissibility_threshold(&self) -> f64 {
        4.0 * std::f64::consts::PI * self.a_minus_half_op_norm().powi(2)
    }

    /// Smallest `C` with `‖x‖_Q <= C ‖x‖_V` on `H_m`, i.e. `max_k 1 / (k q_k)`.
    pub fn q_to_v_constant(&self) -> f64 {
        self.q
            .iter()
            .enumerate()
            .map(|(i, v)| 1.0 / ((i + 1) as f64 * v))
            .fold(0.0, f64::max)
    }

    /// `Q x`.
    pub fn apply(&self, x: &SpectralField) -> Result<SpectralField, SpectralError> {
        self.check_m(x)?;
        let coeffs = x.coeffs().iter().zip(&self.q).map(|(c, q)| c * *q).collect();
        Ok(SpectralField::from_coeffs(coeffs, 0.0))
    }

    fn check_m(&self, x: &SpectralField) -> Result<(), SpectralError> {
        if x.m() != self.m() {
            return Err(SpectralError::TruncationMismatch {
                left: x.m(),
                right: self.m(),
            });
        }
        Ok(())
    }

    /// `Q ΔW` over a step `dt`: mode `k` receives `q_k (ξ_k + iη_k) √(dt/2)`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> SpectralField {
        let mut z = vec![Complex64::new(0.0, 0.0); self.m()];
        fill_standard_normals(rng, &mut z);
        let s = (dt / 2.0).sqrt();
        for (c, q) in z.iter_mut().zip(&self.q) {
            *c *= q * s;
        }
        SpectralField::from_coeffs(z, 0.0)
    }
}

/// Fills `out` with independent `ξ + iη`, `ξ, η ~ N(0, 1)`, real part first.
pub fn fill_standard_normals<R: Rng + ?Sized>(rng: &mut R, out: &mut [Complex64]) {
    for z in out.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z = Complex64::new(re, im);
    }
}

/// `ν³ >= 4π ‖A^{-1/2} Q‖²`.
pub fn admissible(nu: f64, q: &NoiseSpec) -> bool {
    nu.powi(3) >= q.admissibility_threshold()
}

/// Intrinsic norm `‖x‖_Q = inf{‖z‖ : Q z = x}`; infinite when `x` charges a mode
/// with zero amplitude.
pub fn q_norm(x: &SpectralField, q: &NoiseSpec) -> Result<f64, SpectralError> {
    if !x.is_zero_mean() {
        return Err(SpectralError::NonZeroMean(x.mean()));
    }
    if x.m() > q.m() {
        return Err(SpectralError::TruncationMismatch {
            left: x.m(),
            right: q.m(),
        });
    }
    let mut acc = 0.0;
    for (c, &qk) in x.coeffs().iter().zip(q.amplitudes()) {
        let n = c.norm_sqr();
        if n == 0.0 {
            continue;
        }
        if qk == 0.0 {
            return Ok(f64::INFINITY);
        }
        acc += n / (qk * qk);
    }
    Ok((2.0 * acc).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn hs_norm_examples() {
        assert_relative_eq!(NoiseSpec::power_law(1, 0.5, 1.0).hs_norm(), 0.5f64.sqrt(), max_relative = 1e-15);
        // partial sum oracle Σ_{k<=32} k^-2
        let partial: f64 = (1..=32).map(|k| 1.0 / (k * k) as f64).sum();
        assert_relative_eq!(partial, 1.614_167, epsilon = 1e-6);
        let hs = NoiseSpec::power_law(32, 0.5, 1.0).hs_norm();
        assert_relative_eq!(hs, (0.5 * partial).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(hs, 0.8984, epsilon = 1e-4);
        assert_relative_eq!(NoiseSpec::from_amplitudes(vec![1.0]).hs_norm(), 2f64.sqrt());
    }

    #[test]
    fn op_norm_and_admissibility() {
        assert_eq!(NoiseSpec::power_law(32, 0.5, 1.0).a_minus_half_op_norm(), 0.5);
        assert_eq!(NoiseSpec::power_law(8, 0.3, 0.0).a_minus_half_op_norm(), 0.3);
        assert_eq!(NoiseSpec::from_amplitudes(vec![2.0]).a_minus_half_op_norm(), 2.0);

        assert!(admissible(2.0, &NoiseSpec::power_law(32, 0.5, 1.0)));
        assert!(!admissible(1.0, &NoiseSpec::from_amplitudes(vec![1.0])));
        assert!(admissible(1e-3, &NoiseSpec::power_law(16, 1e-9, 1.0)));
    }

    #[test]
    fn monotone_in_each_symbol() {
        let base = NoiseSpec::power_law(6, 0.5, 1.0);
        for k in 0..6 {
            let mut q = base.amplitudes().to_vec();
            q[k] *= 1.5;
            let bigger = NoiseSpec::from_amplitudes(q);
            assert!(bigger.hs_norm() > base.hs_norm());
            assert!(bigger.a_minus_half_op_norm() >= base.a_minus_half_op_norm());
        }
    }

    #[test]
    fn q_norm_examples() {
        let q = NoiseSpec::power_law(4, 0.5, 1.0);
        assert_eq!(q_norm(&SpectralField::zeros(4), &q).unwrap(), 0.0);
        let s = SpectralField::sin_mode(4, 1, 1.0);
        assert_relative_eq!(q_norm(&s, &q).unwrap(), (4.0 * PI).sqrt(), max_relative = 1e-14);
        let degenerate = NoiseSpec::from_amplitudes(vec![0.5, 0.0, 0.1, 0.1]);
        assert_eq!(
            q_norm(&SpectralField::sin_mode(4, 2, 1.0), &degenerate).unwrap(),
            f64::INFINITY
        );
        assert_eq!(q.q_to_v_constant(), 2.0);
    }

    #[test]
    fn q_norm_of_image_is_preimage_norm() {
        let q = NoiseSpec::power_law(8, 0.5, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let z = q.sample_increment(1.0, &mut rng);
            let qz = q.apply(&z).unwrap();
            assert_relative_eq!(q_norm(&qz, &q).unwrap(), z.l2_norm(), max_relative = 1e-12);
        }
    }

    #[test]
    fn increment_second_moment() {
        let q = NoiseSpec::power_law(8, 0.5, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dt in [1e-2, 1e-3] {
            let n = 100_000;
            let mean: f64 =
                (0..n).map(|_| q.sample_increment(dt, &mut rng).l2_norm_sq()).sum::<f64>() / n as f64;
            let expected = q.hs_norm_sq() * dt;
            assert!((mean / expected - 1.0).abs() < 0.02, "{mean} vs {expected}");
        }
    }

    #[test]
    fn single_mode_component_variances() {
        let q = NoiseSpec::from_amplitudes(vec![0.7]);
        let dt = 0.01;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let (mut sre, mut sim, mut sre2, mut sim2) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let c = q.sample_increment(dt, &mut rng).coeffs()[0];
            sre += c.re;
            sim += c.im;
            sre2 += c.re * c.re;
            sim2 += c.im * c.im;
        }
        let nf = n as f64;
        let target = 0.49 * dt / 2.0;
        let var_re = sre2 / nf - (sre / nf).powi(2);
        let var_im = sim2 / nf - (sim / nf).powi(2);
        assert!((var_re / target - 1.0).abs() < 0.02);
        assert!((var_im / target - 1.0).abs() < 0.02);
        // centred: within 4 standard errors
        let se = (target / nf).sqrt();
        assert!((sre / nf).abs() < 4.0 * se);
        assert!((sim / nf).abs() < 4.0 * se);
    }

    #[test]
    fn translation_invariance_in_law() {
        // shifting θ by a multiplies mode k by e^{-ika}; the law of each
        // coefficient is rotation invariant, so shifted statistics match.
        let q = NoiseSpec::power_law(3, 0.5, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 50_000;
        let shift = 0.9_f64;
        let (mut plain, mut shifted) = (0.0, 0.0);
        for _ in 0..n {
            let c = q.sample_increment(1.0, &mut rng).coeffs()[1];
            plain += c.re * c.re;
            let rot = c * Complex64::from_polar(1.0, -2.0 * shift);
            shifted += rot.re * rot.re;
        }
        let target = 0.0625 / 2.0;
        assert!((plain / n as f64 / target - 1.0).abs() < 0.03);
        assert!((shifted / n as f64 / target - 1.0).abs() < 0.03);
    }
}
