use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;

/// How the composite-loss weights are written down.
///
/// The per-model table quotes `√(1/σ²)`; the loss weight is `1/σ²`, the square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    InverseVariance([f64; 3]),
    SqrtInverseVariance([f64; 3]),
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::SqrtInverseVariance([1.0, 1.0, 1.0])
    }
}

impl WeightSpec {
    pub fn resolve(&self) -> LossWeights {
        match *self {
            WeightSpec::InverseVariance([a, b, c]) => LossWeights::new(a, b, c),
            WeightSpec::SqrtInverseVariance([a, b, c]) => LossWeights::new(a * a, b * b, c * c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl LossWeights {
    pub const fn new(w1: f64, w2: f64, w3: f64) -> Self {
        Self { w1, w2, w3 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w1, self.w2, self.w3];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!("loss weights must be finite and >= 0: {all:?}")));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::Config("loss weights must not all be zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// `δ ← Proj(δ + α·sign(ĝ))`: integer 255-level steps.
    #[default]
    Sign,
    /// `δ ← Proj(δ + α·ĝ)`: the raw estimate, scaled.
    Raw,
}

/// Per-model balancing weights and distortion timestep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelPreset {
    pub name: &'static str,
    pub sqrt_weights: [f64; 3],
    pub timestep: u32,
}

pub const MODEL_PRESETS: &[ModelPreset] = &[
    ModelPreset {
        name: "llava-v1.5",
        sqrt_weights: [1.0, 1.0, 1.0],
        timestep: 500,
    },
    ModelPreset {
        name: "instruct-blip",
        sqrt_weights: [1.0, 1.0, 1.0],
        timestep: 500,
    },
    ModelPreset {
        name: "intern-vl2",
        sqrt_weights: [1.0, 0.5, 0.5],
        timestep: 200,
    },
    ModelPreset {
        name: "intern-vl2-mpo",
        sqrt_weights: [1.0, 0.5, 0.5],
        timestep: 800,
    },
    ModelPreset {
        name: "deepseek-vl2",
        sqrt_weights: [1.0, 1.0, 1.0],
        timestep: 100,
    },
    ModelPreset {
        name: "qwen-vl2",
        sqrt_weights: [1.0, 0.5, 0.5],
        timestep: 500,
    },
    ModelPreset {
        name: "llava-ov",
        sqrt_weights: [0.1, 1.0, 0.1],
        timestep: 200,
    },
    ModelPreset {
        name: "ovis1.6-gemma2",
        sqrt_weights: [1.0, 1.0, 1.0],
        timestep: 500,
    },
];

impl ModelPreset {
    pub fn lookup(name: &str) -> Option<&'static ModelPreset> {
        let name = name.to_ascii_lowercase();
        MODEL_PRESETS.iter().find(|p| p.name == name)
    }
}

fn default_alpha() -> f64 {
    1.0 / 255.0
}
fn default_beta() -> f64 {
    8.0 / 255.0
}
fn default_queries() -> usize {
    10
}
fn default_epsilon() -> f64 {
    2.0
}
fn default_timestep() -> u32 {
    500
}
fn default_rounds() -> u32 {
    2
}

/// Adversarial hyperparameters. `alpha` and `beta` are in `[0,1]` pixel
/// units; `epsilon` is in 255-scale units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_queries")]
    pub num_queries: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_timestep")]
    pub timestep: u32,
    #[serde(default)]
    pub weights: WeightSpec,
    #[serde(default = "default_rounds")]
    pub rounds: u32,
    #[serde(default)]
    pub update: UpdateRule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub schedule: NoiseSchedule,
    /// Query the model once more at the final image (2 extra model calls).
    #[serde(default)]
    pub final_responses: bool,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            beta: default_beta(),
            num_queries: default_queries(),
            epsilon: default_epsilon(),
            timestep: default_timestep(),
            weights: WeightSpec::default(),
            rounds: default_rounds(),
            update: UpdateRule::Sign,
            seed: 0,
            schedule: NoiseSchedule::default(),
            final_responses: false,
        }
    }
}

impl PerturbationConfig {
    pub fn with_preset(mut self, preset: &ModelPreset) -> Self {
        self.weights = WeightSpec::SqrtInverseVariance(preset.sqrt_weights);
        self.timestep = preset.timestep;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.alpha) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !positive(self.beta) {
            return Err(Error::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.num_queries == 0 {
            return Err(Error::Config("num_queries must be >= 1".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        self.weights.resolve().validate()?;
        self.schedule.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.timestep > self.schedule.total_steps {
            return Err(Error::Config(format!(
                "timestep {} exceeds schedule length {}",
                self.timestep, self.schedule.total_steps
            )));
        }
        Ok(())
    }
}
