//! The run configuration file (TOML or JSON). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::BackendDescriptor;
use crate::error::{Error, Result};
use crate::harness::Condition;
use crate::metrics::PopeOptions;
use crate::vap::{ModelPreset, PerturbationConfig};

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn default_workers() -> usize {
    4
}
fn default_conditions() -> Vec<Condition> {
    vec![Condition::Original, Condition::Vap]
}
fn default_model() -> BackendDescriptor {
    BackendDescriptor::new("mock://model", "mock-model")
}
fn default_embedder() -> BackendDescriptor {
    BackendDescriptor::new("mock://embed", "mock-embed")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    /// Model queried during optimization.
    #[serde(default = "default_model")]
    pub perturb: BackendDescriptor,
    /// Model answering the benchmark questions; defaults to `perturb`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluate: Option<BackendDescriptor>,
    #[serde(default = "default_embedder")]
    pub embedder: BackendDescriptor,
}

impl Default for BackendsConfig {
    fn default() -> Self {
        Self {
            perturb: default_model(),
            evaluate: None,
            embedder: default_embedder(),
        }
    }
}

impl BackendsConfig {
    pub fn evaluate(&self) -> &BackendDescriptor {
        self.evaluate.as_ref().unwrap_or(&self.perturb)
    }

    fn all_mut(&mut self) -> impl Iterator<Item = &mut BackendDescriptor> {
        [
            Some(&mut self.perturb),
            self.evaluate.as_mut(),
            Some(&mut self.embedder),
        ]
        .into_iter()
        .flatten()
    }

    /// Points every model backend at `url`. Embedders move too unless they are mocks.
    pub fn override_url(&mut self, url: &str) {
        self.perturb.base_url = url.to_string();
        if let Some(e) = self.evaluate.as_mut() {
            e.base_url = url.to_string();
        }
        if !self.embedder.is_mock() || !url.starts_with(crate::backends::MOCK_SCHEME) {
            self.embedder.base_url = url.to_string();
        }
    }

    pub fn override_concurrency(&mut self, n: usize) {
        for b in self.all_mut() {
            b.max_concurrency = n;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.perturb.validate()?;
        self.evaluate().validate()?;
        self.embedder.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    /// Single source of randomness; overrides `perturbation.seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Samples processed in parallel.
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Named per-model loss weights and timestep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub backends: BackendsConfig,
    #[serde(default)]
    pub pope: PopeOptions,
    #[serde(default = "default_conditions")]
    pub conditions: Vec<Condition>,
    /// Write every backend request/response to `audit.jsonl` in the run directory.
    #[serde(default)]
    pub audit: bool,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out_dir: default_out_dir(),
            workers: default_workers(),
            preset: None,
            perturbation: PerturbationConfig::default(),
            backends: BackendsConfig::default(),
            pope: PopeOptions::default(),
            conditions: default_conditions(),
            audit: false,
        }
    }
}

impl AppConfig {
    /// Loads `.toml` or `.json` by extension.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .to_ascii_lowercase();
        match ext.as_str() {
            "toml" => Self::from_toml(&text),
            "json" => serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
            other => Err(Error::Config(format!(
                "config {} has unsupported extension `{other}` (use .toml or .json)",
                path.display()
            ))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies the preset and the top-level seed, then validates.
    pub fn resolve(mut self) -> Result<Self> {
        if let Some(name) = &self.preset {
            let preset = ModelPreset::lookup(name).ok_or_else(|| {
                Error::Config(format!(
                    "unknown preset `{name}`; known: {}",
                    crate::vap::MODEL_PRESETS
                        .iter()
                        .map(|p| p.name)
                        .collect::<Vec<_>>()
                        .join(", ")
                ))
            })?;
            self.perturbation = self.perturbation.with_preset(preset);
        }
        if let Some(seed) = self.seed {
            self.perturbation.seed = seed;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if self.conditions.is_empty() {
            return Err(Error::Config("at least one condition is required".into()));
        }
        if self.pope.k == 0 || self.pope.questions_per_image < 2 {
            return Err(Error::Config(
                "pope.k must be >= 1 and pope.questions_per_image >= 2".into(),
            ));
        }
        self.perturbation.validate()?;
        self.backends.validate()
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.perturbation.seed)
    }

    /// Hash over everything that can change results. Output paths,
    /// parallelism, retry policy and credentials are excluded.
    pub fn config_hash(&self) -> String {
        let backend = |b: &BackendDescriptor| {
            serde_json::json!({
                "label": b.label(),
                "temperature": b.temperature,
                "max_tokens": b.max_tokens,
                "null_prompt": b.null_prompt,
            })
        };
        let canonical = serde_json::json!({
            "seed": self.seed(),
            "perturbation": self.perturbation,
            "perturb": backend(&self.backends.perturb),
            "evaluate": backend(self.backends.evaluate()),
            "embedder": backend(&self.backends.embedder),
        });
        let digest = Sha256::digest(canonical.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The configuration as persisted next to a run, without credentials.
    pub fn redacted(&self) -> Self {
        let mut c = self.clone();
        for b in c.backends.all_mut() {
            b.api_key = None;
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_with_overrides() {
        let c = AppConfig::from_toml(
            r#"
            seed = 7
            preset = "intern-vl2"
            conditions = ["original", "gaussian", "vap"]
            [perturbation]
            rounds = 3
            [backends.perturb]
            base_url = "http://localhost:8000/v1"
            model_id = "llava"
            "#,
        )
        .unwrap()
        .resolve()
        .unwrap();
        assert_eq!(c.perturbation.seed, 7);
        assert_eq!(c.perturbation.rounds, 3);
        assert_eq!(c.conditions.len(), 3);
        assert_eq!(c.backends.evaluate().model_id, "llava");
        assert_ne!(c.perturbation.weights, PerturbationConfig::default().weights);
        assert_eq!(c.perturbation.timestep, 200);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(matches!(AppConfig::from_toml("sed = 1"), Err(Error::Config(_))));
        assert!(AppConfig::from_toml("[perturbation]\nepsilonn = 2").is_err());
        let c = AppConfig::from_toml("preset = \"nope\"").unwrap();
        assert!(c.resolve().is_err());
        let c = AppConfig::from_toml("[backends.perturb]\nbase_url = \"ftp://x\"\nmodel_id = \"m\"").unwrap();
        assert!(c.resolve().is_err());
    }

    #[test]
    fn hash_ignores_operational_settings() {
        let a = AppConfig::default();
        let mut b = a.clone();
        b.workers = 9;
        b.out_dir = "elsewhere".into();
        b.backends.override_concurrency(2);
        b.backends.perturb.api_key = Some("secret".into());
        assert_eq!(a.config_hash(), b.config_hash());
        b.perturbation.rounds = 5;
        assert_ne!(a.config_hash(), b.config_hash());
        assert!(b.redacted().backends.perturb.api_key.is_none());
    }

    #[test]
    fn json_and_extension_dispatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"seed": 3, "workers": 2}"#).unwrap();
        assert_eq!(AppConfig::load(&p).unwrap().workers, 2);
        let q = dir.path().join("c.yaml");
        std::fs::write(&q, "seed: 3").unwrap();
        assert!(AppConfig::load(&q).is_err());
    }
}
