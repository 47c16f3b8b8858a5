//! Synthetic prototype classifier and labelled datasets.
//!
//! The classifier scores a point by a softmax over negative distances to the
//! nearest prototype of every class. It stands in for a trained network: the
//! landscape is smooth, has curved decision boundaries and produces a full
//! range of top-2 gaps.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::export::fmt_sig9;
use crate::numeric::{argmax, l2_distance, Sample, ScoreVector};
use crate::seed::stream;

/// Anything that maps a sample to normalized class scores.
pub trait Classifier: Sync {
    fn classes(&self) -> usize;
    fn dim(&self) -> usize;
    fn score(&self, x: &Sample) -> Result<ScoreVector>;

    fn predict(&self, x: &Sample) -> Result<usize> {
        Ok(self.score(x)?.argmax())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub classes: usize,
    pub dim: usize,
    pub prototypes_per_class: usize,
    pub temperature: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            classes: 10,
            dim: 8,
            prototypes_per_class: 3,
            temperature: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::param("classes", "must be at least 2"));
        }
        if self.dim < 1 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        if self.prototypes_per_class < 1 {
            return Err(Error::param("prototypes_per_class", "must be at least 1"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::param("temperature", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeModel {
    prototypes: Vec<Vec<Sample>>,
    dim: usize,
    temperature: f64,
    model_seed: u64,
}

impl PrototypeModel {
    /// Places `prototypes_per_class` prototypes per class uniformly in
    /// `[0.1, 0.9]^d`, fully determined by `(config, model_seed)`.
    pub fn generate(config: &ModelConfig, model_seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(model_seed, "model/prototypes", 0);
        let prototypes = (0..config.classes)
            .map(|_| {
                (0..config.prototypes_per_class)
                    .map(|_| {
                        let coords = (0..config.dim)
                            .map(|_| rng.random_range(0.1..0.9))
                            .collect();
                        Sample::new(coords).expect("prototype inside unit cube")
                    })
                    .collect()
            })
            .collect();
        Ok(PrototypeModel {
            prototypes,
            dim: config.dim,
            temperature: config.temperature,
            model_seed,
        })
    }

    /// Builds a model from explicit per-class prototype lists.
    pub fn from_prototypes(prototypes: Vec<Vec<Sample>>, temperature: f64) -> Result<Self> {
        if prototypes.len() < 2 {
            return Err(Error::param("prototypes", "need at least 2 classes"));
        }
        if prototypes.iter().any(|p| p.is_empty()) {
            return Err(Error::param("prototypes", "every class needs a prototype"));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::param("temperature", "must be positive"));
        }
        let dim = prototypes[0][0].dim();
        for p in prototypes.iter().flatten() {
            check_dim(dim, p.dim())?;
        }
        Ok(PrototypeModel {
            prototypes,
            dim,
            temperature,
            model_seed: 0,
        })
    }

    pub fn prototypes(&self) -> &[Vec<Sample>] {
        &self.prototypes
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn model_seed(&self) -> u64 {
        self.model_seed
    }

    pub(crate) fn scores_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self
            .prototypes
            .iter()
            .map(|protos| {
                let nearest = protos
                    .iter()
                    .map(|p| l2_distance(x, p.coords()))
                    .fold(f64::INFINITY, f64::min);
                -nearest / self.temperature
            })
            .collect();
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / sum).collect()
    }
}

impl Classifier for PrototypeModel {
    fn classes(&self) -> usize {
        self.prototypes.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn score(&self, x: &Sample) -> Result<ScoreVector> {
        check_dim(self.dim, x.dim())?;
        ScoreVector::normalized(self.scores_unchecked(x.coords()))
    }

    fn predict(&self, x: &Sample) -> Result<usize> {
        check_dim(self.dim, x.dim())?;
        Ok(argmax(&self.scores_unchecked(x.coords())))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub items: Vec<(Sample, usize)>,
    pub classes: usize,
    pub noise: f64,
    pub seed: u64,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Writes `x0,...,x{d-1},label` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let dim = self.items.first().map(|(x, _)| x.dim()).unwrap_or(0);
        let header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
        writeln!(out, "{},label", header.join(","))?;
        for (x, label) in &self.items {
            let row: Vec<String> = x.coords().iter().map(|v| fmt_sig9(*v)).collect();
            writeln!(out, "{},{}", row.join(","), label)?;
        }
        Ok(())
    }
}

/// Draws `n` samples as prototype plus Gaussian jitter, clipped to the unit
/// cube. Labels cycle through the classes so the dataset is balanced.
pub fn gen_dataset(
    model: &PrototypeModel,
    n: usize,
    noise: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if n == 0 {
        return Err(Error::param("n", "dataset size must be at least 1"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::param("noise", "must be finite and nonnegative"));
    }
    let classes = model.classes();
    let items = (0..n)
        .map(|i| {
            let mut rng = stream(seed, "dataset", i as u64);
            let label = i % classes;
            let protos = &model.prototypes[label];
            let proto = &protos[rng.random_range(0..protos.len())];
            let coords = proto
                .coords()
                .iter()
                .map(|c| c + noise * rng.sample::<f64, _>(StandardNormal))
                .collect();
            (Sample::clipped(coords), label)
        })
        .collect();
    Ok(LabeledDataset {
        items,
        classes,
        noise,
        seed,
    })
}

/// Fraction of dataset items whose predicted class equals the label.
pub fn accuracy<C: Classifier + ?Sized>(classifier: &C, dataset: &LabeledDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Contract("accuracy of an empty dataset".into()));
    }
    let correct = dataset
        .items
        .par_iter()
        .map(|(x, label)| classifier.predict(x).map(|p| usize::from(p == *label)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / dataset.len() as f64)
}
