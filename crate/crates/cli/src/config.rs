//! Versioned experiment configuration.

use std::fmt;
use std::path::Path;

use adaptive_attractors::attacks::{AttackConfig, AttackKind};
use adaptive_attractors::attractor::AttractorConfig;
use adaptive_attractors::model::ModelConfig;
use adaptive_attractors::rewriter::CalibrationConfig;
use adaptive_attractors::sim1::{calibrate_threshold, Form1Params};
use adaptive_attractors::sim2::Form2Params;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// A configuration that cannot be read or fails validation.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl ConfigError {
    fn field(field: &str, err: impl fmt::Display) -> Self {
        ConfigError(format!("{field}: {err}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Fixed,
    Adaptive,
}

impl PolicyKind {
    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Fixed => "fixed",
            PolicyKind::Adaptive => "adaptive",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub attractor: AttractorConfig,
    #[serde(default)]
    pub dataset: DatasetBlock,
    #[serde(default)]
    pub calibration: CalibrationBlock,
    #[serde(default)]
    pub policy: PolicyBlock,
    #[serde(default)]
    pub attack: AttackBlock,
    #[serde(default)]
    pub replication: ReplicationBlock,
    #[serde(default)]
    pub shift: ShiftBlock,
    #[serde(default)]
    pub sim1: Sim1Block,
    #[serde(default)]
    pub sim2: Form2Params,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            model: ModelBlock::default(),
            attractor: AttractorConfig::default(),
            dataset: DatasetBlock::default(),
            calibration: CalibrationBlock::default(),
            policy: PolicyBlock::default(),
            attack: AttackBlock::default(),
            replication: ReplicationBlock::default(),
            shift: ShiftBlock::default(),
            sim1: Sim1Block::default(),
            sim2: Form2Params::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    pub classes: usize,
    pub dim: usize,
    pub prototypes_per_class: usize,
    pub temperature: f64,
    pub model_seed: u64,
}

impl Default for ModelBlock {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelBlock {
            classes: m.classes,
            dim: m.dim,
            prototypes_per_class: m.prototypes_per_class,
            temperature: m.temperature,
            model_seed: 1,
        }
    }
}

impl ModelBlock {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            classes: self.classes,
            dim: self.dim,
            prototypes_per_class: self.prototypes_per_class,
            temperature: self.temperature,
        }
    }
}

/// The labelled dataset used for calibration and accuracy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetBlock {
    pub size: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for DatasetBlock {
    fn default() -> Self {
        DatasetBlock {
            size: 5000,
            noise: 0.1,
            seed: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationBlock {
    /// Attractor key of the field used while calibrating.
    pub key: u64,
    pub budget: f64,
    pub alpha_cap: f64,
    pub tolerance: f64,
    pub bucket_edges: Vec<f64>,
    pub mid_alpha: f64,
    pub far_threshold: f64,
    pub epsilon: f64,
}

impl Default for CalibrationBlock {
    fn default() -> Self {
        let c = CalibrationConfig::default();
        CalibrationBlock {
            key: 7,
            budget: c.budget,
            alpha_cap: c.alpha_cap,
            tolerance: c.tolerance,
            bucket_edges: c.bucket_edges,
            mid_alpha: 0.2,
            far_threshold: c.far_threshold,
            epsilon: c.epsilon,
        }
    }
}

impl CalibrationBlock {
    pub fn calibration_config(&self) -> CalibrationConfig {
        CalibrationConfig {
            budget: self.budget,
            alpha_cap: self.alpha_cap,
            tolerance: self.tolerance,
            bucket_edges: self.bucket_edges.clone(),
            mid_alpha: self.mid_alpha,
            far_threshold: self.far_threshold,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyBlock {
    /// Weight of fixed-policy copies; defaults to the calibration's
    /// `mid_alpha` so both policies weigh mid-gap samples equally.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_alpha: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackBlock {
    pub kind: AttackKind,
    /// Number of samples drawn for attack experiments.
    pub samples: usize,
    /// Jitter of the attack samples; defaults to the dataset noise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    pub max_colluders: usize,
    pub policies: Vec<PolicyKind>,
    pub params: AttackConfig,
}

impl Default for AttackBlock {
    fn default() -> Self {
        AttackBlock {
            kind: AttackKind::Deepfool,
            samples: 100,
            noise: None,
            max_colluders: 12,
            policies: vec![PolicyKind::Fixed, PolicyKind::Adaptive],
            params: AttackConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplicationBlock {
    pub kind: AttackKind,
}

impl Default for ReplicationBlock {
    fn default() -> Self {
        ReplicationBlock {
            kind: AttackKind::Boundary,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShiftBlock {
    pub colluder_counts: Vec<usize>,
}

impl Default for ShiftBlock {
    fn default() -> Self {
        ShiftBlock {
            colluder_counts: vec![1, 8],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sim1Block {
    pub eta: f64,
    /// Success threshold; when absent it is chosen so that the single-copy
    /// rate equals `target_rate`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub target_rate: f64,
    pub num_samples: usize,
    pub max_colluders: usize,
}

impl Default for Sim1Block {
    fn default() -> Self {
        Sim1Block {
            eta: 0.5,
            threshold: None,
            target_rate: 0.03,
            num_samples: 1_000_000,
            max_colluders: 20,
        }
    }
}

impl Sim1Block {
    /// Requires a resolved threshold.
    pub fn params(&self) -> Form1Params {
        Form1Params {
            eta: self.eta,
            threshold: self.threshold.expect("threshold resolved"),
            num_samples: self.num_samples,
            max_colluders: self.max_colluders,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::field(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    cfg.schema_version
                ),
            ));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    pub fn fixed_alpha(&self) -> f64 {
        self.policy
            .fixed_alpha
            .unwrap_or(self.calibration.mid_alpha)
    }

    pub fn attack_noise(&self) -> f64 {
        self.attack.noise.unwrap_or(self.dataset.noise)
    }

    /// Checks every block and fills derived defaults, so the result re-runs
    /// without further resolution.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        self.model
            .model_config()
            .validate()
            .map_err(|e| ConfigError::field("model", e))?;
        if self.model.classes < 2 {
            return Err(ConfigError::field("model.classes", "must be at least 2"));
        }
        self.attractor
            .validate()
            .map_err(|e| ConfigError::field("attractor", e))?;
        if self.dataset.size == 0 {
            return Err(ConfigError::field("dataset.size", "must be at least 1"));
        }
        if !(self.dataset.noise >= 0.0 && self.dataset.noise.is_finite()) {
            return Err(ConfigError::field(
                "dataset.noise",
                "must be finite and >= 0",
            ));
        }
        self.calibration
            .calibration_config()
            .validate()
            .map_err(|e| ConfigError::field("calibration", e))?;
        let fixed = self.fixed_alpha();
        if !(fixed >= 0.0 && fixed.is_finite()) {
            return Err(ConfigError::field(
                "policy.fixed_alpha",
                "must be finite and >= 0",
            ));
        }
        self.policy.fixed_alpha = Some(fixed);

        self.attack
            .params
            .validate()
            .map_err(|e| ConfigError::field("attack.params", e))?;
        if self.attack.samples == 0 {
            return Err(ConfigError::field("attack.samples", "must be at least 1"));
        }
        if self.attack.max_colluders == 0 {
            return Err(ConfigError::field(
                "attack.max_colluders",
                "must be at least 1",
            ));
        }
        if self.attack.policies.is_empty() {
            return Err(ConfigError::field(
                "attack.policies",
                "must name at least one policy",
            ));
        }
        let noise = self.attack_noise();
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(ConfigError::field(
                "attack.noise",
                "must be finite and >= 0",
            ));
        }
        self.attack.noise = Some(noise);
        if self.shift.colluder_counts.is_empty() || self.shift.colluder_counts.contains(&0) {
            return Err(ConfigError::field(
                "shift.colluder_counts",
                "must be a nonempty list of positive counts",
            ));
        }

        if self.sim1.threshold.is_none() {
            if !(self.sim1.target_rate > 0.0 && self.sim1.target_rate < 1.0) {
                return Err(ConfigError::field("sim1.target_rate", "must lie in (0, 1)"));
            }
            let t = calibrate_threshold(self.sim1.eta, self.sim1.target_rate)
                .map_err(|e| ConfigError::field("sim1", e))?;
            self.sim1.threshold = Some(t);
        }
        self.sim1
            .params()
            .validate()
            .map_err(|e| ConfigError::field("sim1", e))?;
        self.sim2
            .validate()
            .map_err(|e| ConfigError::field("sim2", e))?;
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}
