//! Builds models, calibrated policies and buyer copies from a resolved
//! configuration.

use std::sync::Arc;

use adaptive_attractors::attractor::AttractorField;
use adaptive_attractors::model::{gen_dataset, LabeledDataset, PrototypeModel};
use adaptive_attractors::rewriter::{
    calibrate_ushape, CalibrationReport, RewrittenCopy, WeightPolicy,
};
use adaptive_attractors::seed::stream;
use adaptive_attractors::Result;
use rand::RngCore;

use crate::config::{ExperimentConfig, PolicyKind};

/// Attractor key of buyer `index` under `master_seed`.
pub fn buyer_key(master_seed: u64, index: usize) -> u64 {
    stream(master_seed, "desk/buyer-key", index as u64).next_u64()
}

/// Attractor key of the victim copy, never shared with a buyer.
pub fn victim_key(master_seed: u64) -> u64 {
    stream(master_seed, "desk/victim-key", 0).next_u64()
}

pub struct Desk {
    pub config: ExperimentConfig,
    pub model: Arc<PrototypeModel>,
    pub dataset: LabeledDataset,
    pub calibration: CalibrationReport,
}

impl Desk {
    /// `config` must already be resolved.
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        let model = Arc::new(PrototypeModel::generate(
            &config.model.model_config(),
            config.model.model_seed,
        )?);
        let dataset = gen_dataset(
            &model,
            config.dataset.size,
            config.dataset.noise,
            config.dataset.seed,
        )?;
        let field = AttractorField::new(
            config.calibration.key,
            config.model.classes,
            config.model.dim,
            &config.attractor,
        )?;
        let calibration = calibrate_ushape(
            &model,
            &field,
            &dataset,
            &config.calibration.calibration_config(),
        )?;
        Ok(Desk {
            config: config.clone(),
            model,
            dataset,
            calibration,
        })
    }

    pub fn policy(&self, kind: PolicyKind) -> WeightPolicy {
        match kind {
            PolicyKind::Fixed => WeightPolicy::Fixed(self.config.fixed_alpha()),
            PolicyKind::Adaptive => WeightPolicy::Adaptive(self.calibration.params.clone()),
        }
    }

    pub fn copy(&self, kind: PolicyKind, key: u64) -> Result<RewrittenCopy> {
        let field = AttractorField::new(
            key,
            self.config.model.classes,
            self.config.model.dim,
            &self.config.attractor,
        )?;
        RewrittenCopy::new(self.model.clone(), field, self.policy(kind))
    }

    /// The first `count` buyer copies.
    pub fn pool(&self, kind: PolicyKind, count: usize) -> Result<Vec<RewrittenCopy>> {
        (0..count)
            .map(|i| self.copy(kind, buyer_key(self.config.seed, i)))
            .collect()
    }

    pub fn victim(&self, kind: PolicyKind) -> Result<RewrittenCopy> {
        self.copy(kind, victim_key(self.config.seed))
    }

    /// Fresh samples for attack experiments, drawn per master seed.
    pub fn attack_set(&self) -> Result<LabeledDataset> {
        let seed = stream(self.config.seed, "desk/attack-set", 0).next_u64();
        gen_dataset(
            &self.model,
            self.config.attack.samples,
            self.config.attack_noise(),
            seed,
        )
    }
}
