//! JSON run configuration: solver and noise parameters plus one section per
//! experiment. Every key has a default, so `{}` is a complete configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::experiments::{
    BilinearSettings, ConvergenceSettings, EnergySettings, ExpMomentSettings, GradientSettings,
    IrreducibilitySettings, LogHarnackSettings, MixingSettings, StrongFellerSettings,
};
use crate::fields::FieldSpec;
use crate::galerkin::{Scheme, SimConfig};
use crate::mc::TestFunction;
use crate::noise::{admissible, NoiseSpec};

/// Noise spectrum: `q_k = q0·k^{-gamma}` or an explicit list `q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            q0: Some(0.5),
            gamma: Some(1.0),
            q: None,
        }
    }
}

impl NoiseSection {
    fn validate(&self) -> Result<(), ConfigError> {
        match (&self.q, self.q0, self.gamma) {
            (Some(q), None, None) => {
                if q.is_empty() {
                    return Err(ConfigError::invalid("noise.q", "must list at least one amplitude"));
                }
                if let Some(v) = q.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                    return Err(ConfigError::invalid("noise.q", format!("amplitudes must be positive, got {v}")));
                }
                Ok(())
            }
            (Some(_), _, _) => Err(ConfigError::invalid("noise", "give either \"q\" or \"q0\"/\"gamma\", not both")),
            (None, q0, gamma) => {
                let q0 = q0.unwrap_or(0.5);
                let gamma = gamma.unwrap_or(1.0);
                if !(q0.is_finite() && q0 > 0.0) {
                    return Err(ConfigError::invalid("noise.q0", format!("must be positive, got {q0}")));
                }
                if !gamma.is_finite() {
                    return Err(ConfigError::invalid("noise.gamma", format!("must be finite, got {gamma}")));
                }
                Ok(())
            }
        }
    }

    /// Spectrum truncated to `m` modes.
    pub fn at(&self, m: usize) -> Result<NoiseSpec, ConfigError> {
        match &self.q {
            Some(q) => {
                if q.len() < m {
                    return Err(ConfigError::invalid(
                        "noise.q",
                        format!("lists {} amplitudes but truncation {m} is used", q.len()),
                    ));
                }
                Ok(NoiseSpec::from_amplitudes(q[..m].to_vec()))
            }
            None => Ok(NoiseSpec::power_law(m, self.q0.unwrap_or(0.5), self.gamma.unwrap_or(1.0))),
        }
    }
}

/// Serializable test function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunctionSpec {
    GaussBump {
        #[serde(default)]
        center: FieldSpec,
        amplitude: f64,
        scale: f64,
    },
    SigmoidRay {
        direction: FieldSpec,
        amplitude: f64,
        scale: f64,
    },
}

impl TestFunctionSpec {
    pub fn gauss(center: FieldSpec, amplitude: f64, scale: f64) -> Self {
        TestFunctionSpec::GaussBump {
            center,
            amplitude,
            scale,
        }
    }

    pub fn sigmoid(direction: FieldSpec, amplitude: f64, scale: f64) -> Self {
        TestFunctionSpec::SigmoidRay {
            direction,
            amplitude,
            scale,
        }
    }

    pub fn build(&self, m: usize) -> Result<TestFunction, String> {
        let r = match self {
            TestFunctionSpec::GaussBump {
                center,
                amplitude,
                scale,
            } => TestFunction::gauss_bump(center.build(m)?, *amplitude, *scale),
            TestFunctionSpec::SigmoidRay {
                direction,
                amplitude,
                scale,
            } => TestFunction::sigmoid_ray(direction.build(m)?, *amplitude, *scale),
        };
        r.map_err(|e| e.to_string())
    }

    pub fn amplitude(&self) -> f64 {
        match self {
            TestFunctionSpec::GaussBump { amplitude, .. } | TestFunctionSpec::SigmoidRay { amplitude, .. } => *amplitude,
        }
    }

    /// Short text used in report parameters.
    pub fn label(&self) -> String {
        match self {
            TestFunctionSpec::GaussBump {
                center,
                amplitude,
                scale,
            } => format!("gauss_bump(center={center},c={amplitude:?},s={scale:?})"),
            TestFunctionSpec::SigmoidRay {
                direction,
                amplitude,
                scale,
            } => format!("sigmoid_ray(h={direction},c={amplitude:?},s={scale:?})"),
        }
    }
}

/// Default pair of test functions: a bump at 0 and a sigmoid along `sin θ`.
pub fn default_test_functions() -> Vec<TestFunctionSpec> {
    vec![
        TestFunctionSpec::gauss(FieldSpec::zero(), 1.0, 1.0),
        TestFunctionSpec::sigmoid(FieldSpec::sin(1.0), 1.0, 0.25),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub nu: f64,
    pub m: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub noise: NoiseSection,
    /// Overrides every experiment's sample count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    pub bilinear: BilinearSettings,
    pub energy: EnergySettings,
    pub exp_moment: ExpMomentSettings,
    pub log_harnack: LogHarnackSettings,
    pub gradient: GradientSettings,
    pub convergence: ConvergenceSettings,
    pub irreducibility: IrreducibilitySettings,
    pub mixing: MixingSettings,
    pub strong_feller: StrongFellerSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            nu: sim.nu,
            m: sim.m,
            dt: sim.dt,
            t_end: sim.t_end,
            seed: sim.seed,
            scheme: sim.scheme,
            noise: NoiseSection::default(),
            samples: None,
            bilinear: Default::default(),
            energy: Default::default(),
            exp_moment: Default::default(),
            log_harnack: Default::default(),
            gradient: Default::default(),
            convergence: Default::default(),
            irreducibility: Default::default(),
            mixing: Default::default(),
            strong_feller: Default::default(),
        }
    }
}

impl RunConfig {
    pub fn sim(&self) -> SimConfig {
        SimConfig {
            nu: self.nu,
            m: self.m,
            dt: self.dt,
            t_end: self.t_end,
            seed: self.seed,
            scheme: self.scheme,
        }
    }

    /// Noise at the working truncation.
    pub fn noise(&self) -> Result<NoiseSpec, ConfigError> {
        self.noise.at(self.m)
    }

    /// `self.samples` if set, else `default`.
    pub fn samples_or(&self, default: usize) -> usize {
        self.samples.unwrap_or(default)
    }

    /// Checks values that the JSON schema cannot express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sim().validate().map_err(|e| match e {
            crate::error::SimError::InvalidConfig { key, reason } => ConfigError::invalid(key, reason),
            crate::error::SimError::OffGrid { time, dt } => {
                ConfigError::invalid("t_end", format!("{time} is not a multiple of dt = {dt}"))
            }
            other => ConfigError::invalid("config", other.to_string()),
        })?;
        self.noise.validate()?;
        if self.samples == Some(0) {
            return Err(ConfigError::invalid("samples", "must be at least 1"));
        }
        let q = self.noise()?;
        if !admissible(self.nu, &q) {
            return Err(ConfigError::Inadmissible {
                nu_cubed: self.nu.powi(3),
                threshold: q.admissibility_threshold(),
            });
        }
        self.bilinear.validate()?;
        self.energy.validate(self)?;
        self.exp_moment.validate(self)?;
        self.log_harnack.validate(self)?;
        self.gradient.validate(self)?;
        self.convergence.validate(self)?;
        self.irreducibility.validate(self)?;
        self.mixing.validate(self)?;
        self.strong_feller.validate(self)?;
        Ok(())
    }

    /// Checks that `t` lies on the step grid, naming `key` otherwise.
    pub(crate) fn check_time(&self, key: &str, t: f64) -> Result<(), ConfigError> {
        if !(t >= 0.0) || self.sim().steps_to(t).is_err() {
            return Err(ConfigError::invalid(key, format!("{t} is not a nonnegative multiple of dt = {}", self.dt)));
        }
        Ok(())
    }

    pub(crate) fn check_field(&self, key: &str, f: &FieldSpec, m: usize) -> Result<(), ConfigError> {
        f.build(m).map(|_| ()).map_err(|e| ConfigError::invalid(key, e))
    }

    pub(crate) fn check_test_function(&self, key: &str, f: &TestFunctionSpec) -> Result<(), ConfigError> {
        f.build(self.m).map(|_| ()).map_err(|e| ConfigError::invalid(key, e))
    }
}

/// Parses a configuration from JSON text and validates it.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Schema(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_config_str(&text)
}
