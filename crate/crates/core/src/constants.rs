//! Closed-form right-hand sides shared by the estimators and experiments.

use std::f64::consts::PI;

/// Exponent rate used by a gradient-type bound `exp[rate·(‖x‖² + t‖Q‖²_HS)]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientRate {
    /// `2π/ν²`
    InverseSquare,
    /// `2π/ν`
    Inverse,
}

impl GradientRate {
    pub fn value(self, nu: f64) -> f64 {
        match self {
            GradientRate::InverseSquare => 2.0 * PI / (nu * nu),
            GradientRate::Inverse => 2.0 * PI / nu,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            GradientRate::InverseSquare => "2pi/nu^2",
            GradientRate::Inverse => "2pi/nu",
        }
    }
}

/// `exp[rate·(‖x‖² + t‖Q‖²_HS)]`.
pub fn gradient_factor(rate: GradientRate, nu: f64, x_norm_sq: f64, t: f64, hs_sq: f64) -> f64 {
    (rate.value(nu) * (x_norm_sq + t * hs_sq)).exp()
}

/// Form of the log-Harnack constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarnackForm {
    /// `2π‖Q‖²_HS d² / (1 − e^{−(4π/ν²)‖Q‖²_HS t}) · e^{(4π/ν²) R²}`
    Full,
    /// `π‖Q‖²_HS d² e^{(2π/ν²) R²} / (1 − e^{−(2π/ν²)‖Q‖²_HS t})`
    HalfRate,
}

impl HarnackForm {
    pub fn label(self) -> &'static str {
        match self {
            HarnackForm::Full => "full",
            HarnackForm::HalfRate => "half_rate",
        }
    }
}

/// Additive constant of the log-Harnack inequality for points at intrinsic
/// distance `d_q_sq = ‖x − y‖²_Q` with `r_sq = ‖x‖² ∨ ‖y‖²`.
///
/// Returns 0 when `d_q_sq = 0` (same point) for every `t ≥ 0`, and `+∞` for
/// `t = 0` otherwise.
pub fn log_harnack_constant(form: HarnackForm, t: f64, nu: f64, hs_sq: f64, d_q_sq: f64, r_sq: f64) -> f64 {
    if d_q_sq == 0.0 {
        return 0.0;
    }
    let (lead, rate) = match form {
        HarnackForm::Full => (2.0 * PI, 4.0 * PI / (nu * nu)),
        HarnackForm::HalfRate => (PI, 2.0 * PI / (nu * nu)),
    };
    // −expm1(−a) = 1 − e^{−a} without cancellation at small t
    let denom = -(-rate * hs_sq * t).exp_m1();
    lead * hs_sq * d_q_sq / denom * (rate * r_sq).exp()
}

/// `λ* = ν / (2‖A^{-1/2}Q‖²)`.
pub fn exp_moment_rate(nu: f64, a_minus_half_op_norm: f64) -> f64 {
    nu / (2.0 * a_minus_half_op_norm * a_minus_half_op_norm)
}

/// `exp[λ(‖x‖² + ‖Q‖²_HS t)]`.
pub fn exp_moment_bound(lambda: f64, x_norm_sq: f64, hs_sq: f64, t: f64) -> f64 {
    (lambda * (x_norm_sq + hs_sq * t)).exp()
}

/// Pathwise Gronwall bound for two solutions driven by the same noise:
/// `‖x0 − y0‖² exp[(π/ν) ∫ (‖X‖²_V + ‖Y‖²_V) ds]`.
pub fn coupled_gap_bound(initial_gap_sq: f64, nu: f64, v_integral_sum: f64) -> f64 {
    initial_gap_sq * (PI / nu * v_integral_sum).exp()
}
