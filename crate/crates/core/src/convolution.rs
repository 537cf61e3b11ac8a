//! Dealiased products of truncated fields on a zero-padded FFT grid.
//!
//! Fields of truncation `m` are sampled on `N >= 3m + 1` points, so products of
//! two of them (modes up to `2m`) alias only onto modes above `m`, and the
//! projected modes `1..=m` of every product are exact up to rounding.
//!
//! Two real fields are transformed at once by packing them as the real and
//! imaginary parts of one complex signal.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::spectral::INV_SQRT_2PI;

type Plans = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> Plans {
    static CACHE: OnceLock<Mutex<HashMap<usize, Plans>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_inverse(n), planner.plan_fft_forward(n))
        })
        .clone()
}

/// Grid size used for truncation `m`.
pub fn padded_grid(m: usize) -> usize {
    (3 * m + 1).next_power_of_two()
}

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Workspace for projected products at a fixed truncation.
#[derive(Clone)]
pub struct Convolver {
    m: usize,
    n: usize,
    inverse: Arc<dyn Fft<f64>>,
    forward: Arc<dyn Fft<f64>>,
    base: Vec<Complex64>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl std::fmt::Debug for Convolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Convolver").field("m", &self.m).field("n", &self.n).finish()
    }
}

impl Convolver {
    pub fn new(m: usize) -> Self {
        let n = padded_grid(m);
        let (inverse, forward) = plans(n);
        let scratch_len = inverse
            .get_inplace_scratch_len()
            .max(forward.get_inplace_scratch_len());
        Self {
            m,
            n,
            inverse,
            forward,
            base: vec![ZERO; n],
            buf: vec![ZERO; n],
            scratch: vec![ZERO; scratch_len],
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Writes the packed spectrum of `a + i b` (both Hermitian) into `dst`.
    /// `b_deriv` multiplies `b` by `ik` first, likewise `a_deriv`.
    fn load(dst: &mut [Complex64], a: &[Complex64], b: Option<&[Complex64]>, a_deriv: bool, b_deriv: bool) {
        let n = dst.len();
        dst.fill(ZERO);
        for (i, &c) in a.iter().enumerate() {
            let k = i + 1;
            let c = if a_deriv { c * Complex64::new(0.0, k as f64) } else { c };
            dst[k] += c;
            dst[n - k] += c.conj();
        }
        if let Some(b) = b {
            for (i, &c) in b.iter().enumerate() {
                let k = i + 1;
                let c = if b_deriv { c * Complex64::new(0.0, k as f64) } else { c };
                // i·(c e_k + conj(c) e_{-k})
                dst[k] += Complex64::new(-c.im, c.re);
                dst[n - k] += Complex64::new(c.im, c.re);
            }
        }
    }

    /// Splits the forward transform of `p + i q` (p, q real) into the
    /// coefficients of `p` and `q` on modes `1..=m`, scaled to product coefficients.
    fn unpack(&self, out_p: &mut [Complex64], out_q: Option<&mut [Complex64]>) {
        let n = self.n;
        let scale = INV_SQRT_2PI / n as f64;
        let w = &self.buf;
        match out_q {
            None => {
                for (i, o) in out_p.iter_mut().enumerate() {
                    *o = w[i + 1] * scale;
                }
            }
            Some(out_q) => {
                for i in 0..self.m {
                    let k = i + 1;
                    let a = w[k];
                    let b = w[n - k].conj();
                    out_p[i] = (a + b) * (0.5 * scale);
                    // (a − b) / 2i
                    let d = a - b;
                    out_q[i] = Complex64::new(d.im, -d.re) * (0.5 * scale);
                }
            }
        }
    }

    /// Samples the base field `x` once; the `*_with_base` products reuse it.
    pub fn set_base(&mut self, x: &[Complex64]) {
        Self::load(&mut self.base, x, None, false, false);
        self.inverse.process_with_scratch(&mut self.base, &mut self.scratch);
    }

    /// Coefficients of `x²` on modes `1..=m`.
    pub fn square(&mut self, x: &[Complex64], out: &mut [Complex64]) {
        Self::load(&mut self.buf, x, None, false, false);
        self.inverse.process_with_scratch(&mut self.buf, &mut self.scratch);
        for v in self.buf.iter_mut() {
            *v = Complex64::new(v.re * v.re, 0.0);
        }
        self.forward.process_with_scratch(&mut self.buf, &mut self.scratch);
        self.unpack(out, None);
    }

    /// Coefficients of `x²` and `y²` on modes `1..=m`, one transform pair.
    pub fn square_pair(&mut self, x: &[Complex64], y: &[Complex64], out_x: &mut [Complex64], out_y: &mut [Complex64]) {
        Self::load(&mut self.buf, x, Some(y), false, false);
        self.inverse.process_with_scratch(&mut self.buf, &mut self.scratch);
        for v in self.buf.iter_mut() {
            *v = Complex64::new(v.re * v.re, v.im * v.im);
        }
        self.forward.process_with_scratch(&mut self.buf, &mut self.scratch);
        self.unpack(out_x, Some(out_y));
    }

    /// Coefficients of `base · d` (after [`set_base`](Self::set_base)); with
    /// `derivative`, of `base · d'`.
    pub fn product_with_base(&mut self, d: &[Complex64], derivative: bool, out: &mut [Complex64]) {
        Self::load(&mut self.buf, d, None, derivative, false);
        self.inverse.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (v, b) in self.buf.iter_mut().zip(&self.base) {
            *v = Complex64::new(v.re * b.re, 0.0);
        }
        self.forward.process_with_scratch(&mut self.buf, &mut self.scratch);
        self.unpack(out, None);
    }

    /// Coefficients of `base · d1` and `base · d2`, one transform pair.
    pub fn product_pair_with_base(
        &mut self,
        d1: &[Complex64],
        d2: &[Complex64],
        out1: &mut [Complex64],
        out2: &mut [Complex64],
    ) {
        Self::load(&mut self.buf, d1, Some(d2), false, false);
        self.inverse.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (v, b) in self.buf.iter_mut().zip(&self.base) {
            *v *= b.re;
        }
        self.forward.process_with_scratch(&mut self.buf, &mut self.scratch);
        self.unpack(out1, Some(out2));
    }
}

/// `c_k ← ik·s·c_k`: derivative of a product, scaled.
#[inline]
pub(crate) fn differentiate_scaled(c: &mut [Complex64], s: f64) {
    for (i, v) in c.iter_mut().enumerate() {
        let f = s * (i + 1) as f64;
        *v = Complex64::new(-v.im * f, v.re * f);
    }
}
