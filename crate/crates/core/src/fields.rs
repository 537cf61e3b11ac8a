//! Serializable descriptions of initial conditions and directions.
//!
//! A field is a list of terms `{"sin": k, "amp": a}` or `{"cos": k, "amp": a}`,
//! read as `Σ a sin(kθ)` / `Σ a cos(kθ)`. The empty list is the zero field.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::spectral::SpectralField;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeTerm {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sin: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cos: Option<usize>,
    pub amp: f64,
}

impl ModeTerm {
    pub fn sin(k: usize, amp: f64) -> Self {
        Self { sin: Some(k), cos: None, amp }
    }

    pub fn cos(k: usize, amp: f64) -> Self {
        Self { sin: None, cos: Some(k), amp }
    }

    fn wave(&self) -> Result<(bool, usize), String> {
        match (self.sin, self.cos) {
            (Some(k), None) => Ok((true, k)),
            (None, Some(k)) => Ok((false, k)),
            _ => Err("each term needs exactly one of \"sin\" or \"cos\"".into()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldSpec(pub Vec<ModeTerm>);

impl FieldSpec {
    pub fn zero() -> Self {
        Self(Vec::new())
    }

    pub fn sin(amp: f64) -> Self {
        Self(vec![ModeTerm::sin(1, amp)])
    }

    pub fn validate(&self) -> Result<(), String> {
        for t in &self.0 {
            let (_, k) = t.wave()?;
            if k == 0 {
                return Err("mode index must be at least 1".into());
            }
            if !t.amp.is_finite() {
                return Err(format!("amplitude {} is not finite", t.amp));
            }
        }
        Ok(())
    }

    /// Highest mode used.
    pub fn max_mode(&self) -> usize {
        self.0.iter().filter_map(|t| t.wave().ok().map(|w| w.1)).max().unwrap_or(0)
    }

    /// The field at truncation `m`; terms above `m` are an error.
    pub fn build(&self, m: usize) -> Result<SpectralField, String> {
        self.validate()?;
        if self.max_mode() > m {
            return Err(format!("mode {} exceeds truncation {m}", self.max_mode()));
        }
        let mut out = SpectralField::zeros(m);
        for t in &self.0 {
            let (is_sin, k) = t.wave()?;
            let term = if is_sin {
                SpectralField::sin_mode(m, k, t.amp)
            } else {
                SpectralField::cos_mode(m, k, t.amp)
            };
            out = &out + &term;
        }
        Ok(out)
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            match t.wave() {
                Ok((true, k)) => write!(f, "{:?}*sin({k}t)", t.amp)?,
                Ok((false, k)) => write!(f, "{:?}*cos({k}t)", t.amp)?,
                Err(_) => write!(f, "?")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_build() {
        let spec: FieldSpec = serde_json::from_str(r#"[{"sin": 1, "amp": 0.1}, {"cos": 3, "amp": 2}]"#).unwrap();
        let x = spec.build(4).unwrap();
        let expected = &SpectralField::sin_mode(4, 1, 0.1) + &SpectralField::cos_mode(4, 3, 2.0);
        assert_eq!(x, expected);
        assert_eq!(spec.to_string(), "0.1*sin(1t) + 2.0*cos(3t)");
        assert!(spec.build(2).is_err());
        assert_eq!(FieldSpec::zero().build(3).unwrap(), SpectralField::zeros(3));
    }

    #[test]
    fn rejects_bad_terms() {
        assert!(serde_json::from_str::<FieldSpec>(r#"[{"tan": 1, "amp": 1}]"#).is_err());
        let both: FieldSpec = serde_json::from_str(r#"[{"sin": 1, "cos": 1, "amp": 1}]"#).unwrap();
        assert!(both.validate().is_err());
        let zero_mode: FieldSpec = serde_json::from_str(r#"[{"sin": 0, "amp": 1}]"#).unwrap();
        assert!(zero_mode.validate().is_err());
    }
}
