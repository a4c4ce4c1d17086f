//! Synthetic fingerprint generation.
//!
//! PointGAN conditions its generator on a normalized training coordinate
//! and labels each sample with that coordinate. FreeGAN generates from
//! noise alone; its samples get coordinates from a weak localizer.

mod synth;
mod train;


use std::path::Path;

use serde::{Deserialize, Serialize};

pub use synth::{
    build_augmented, freegan_generate, pointgan_generate, pseudo_label, Selection, SyntheticBatch,
};
pub use train::{train_freegan, train_pointgan, GanTrace, GanTrainer, StepLosses};

use crate::datamodel::{Extent, Modality, NormStats};
use crate::error::{ensure, Result};
use crate::numerics::{Activation, LayerSpec, Matrix, MlpNet};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
const COORD_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GanKind {
    PointGan,
    FreeGan,
}

impl GanKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GanKind::PointGan => "pointgan",
            GanKind::FreeGan => "freegan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub noise_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub leaky_slope: f64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            noise_dim: 32,
            epochs: 5000,
            batch_size: 4096,
            learning_rate: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            leaky_slope: 0.2,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.noise_dim > 0, "noise_dim must be positive");
        ensure!(self.epochs > 0, "epochs must be positive");
        ensure!(self.batch_size > 0, "batch_size must be positive");
        Activation::LeakyRelu { slope: self.leaky_slope }.validate()?;
        crate::numerics::AdamConfig::new(self.learning_rate, self.beta1, self.beta2).validate()
    }

    pub fn generator_specs(&self, kind: GanKind, dim: usize) -> Vec<LayerSpec> {
        match kind {
            GanKind::PointGan => vec![
                LayerSpec::new(self.noise_dim + COORD_DIM, 128, Activation::Relu),
                LayerSpec::new(128, 256, Activation::Relu),
                LayerSpec::new(256, dim, Activation::Sigmoid),
            ],
            GanKind::FreeGan => {
                let leaky = Activation::LeakyRelu { slope: self.leaky_slope };
                vec![
                    LayerSpec::new(self.noise_dim, 128, leaky).with_batch_norm(),
                    LayerSpec::new(128, 256, leaky).with_batch_norm(),
                    LayerSpec::new(256, dim, Activation::Sigmoid),
                ]
            }
        }
    }

    pub fn discriminator_specs(&self, kind: GanKind, dim: usize) -> Vec<LayerSpec> {
        let (input, act) = match kind {
            GanKind::PointGan => (COORD_DIM + dim, Activation::Relu),
            GanKind::FreeGan => (dim, Activation::LeakyRelu { slope: self.leaky_slope }),
        };
        vec![
            LayerSpec::new(input, 256, act),
            LayerSpec::new(256, 128, act),
            LayerSpec::new(128, 1, Activation::Sigmoid),
        ]
    }
}

/// A trained generator/discriminator pair plus the normalizer fitted on the
/// real training data it saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanBundle {
    pub kind: GanKind,
    pub modality: Modality,
    pub extent: Extent,
    pub config: GanConfig,
    pub norm: NormStats,
    pub generator: MlpNet,
    pub discriminator: MlpNet,
}

impl GanBundle {
    pub fn dim(&self) -> usize {
        self.modality.dim()
    }

    /// Discriminator realism scores. `fingerprints` are normalized; PointGAN
    /// also needs the normalized conditioning coordinates.
    pub fn discriminator_scores(
        &self,
        fingerprints: &Matrix,
        conditions: Option<&Matrix>,
    ) -> Result<Vec<f64>> {
        let input = match (self.kind, conditions) {
            (GanKind::PointGan, Some(c)) => c.hcat(fingerprints)?,
            (GanKind::FreeGan, None) => fingerprints.clone(),
            (GanKind::PointGan, None) => {
                return Err(crate::error::contract("pointgan scores need conditions"))
            }
            (GanKind::FreeGan, Some(_)) => {
                return Err(crate::error::contract("freegan takes no conditions"))
            }
        };
        Ok(self.discriminator.infer(&input)?.into_vec())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = BundleDocument {
            version: BUNDLE_FORMAT_VERSION,
            bundle: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: BundleDocument = serde_json::from_str(text)?;
        ensure!(
            doc.version == BUNDLE_FORMAT_VERSION,
            "unsupported bundle format version {}",
            doc.version
        );
        let b = doc.bundle;
        b.generator.validate()?;
        b.discriminator.validate()?;
        let specs = |n: &MlpNet| n.specs();
        ensure!(
            specs(&b.generator) == b.config.generator_specs(b.kind, b.dim())
                && specs(&b.discriminator) == b.config.discriminator_specs(b.kind, b.dim()),
            "network shapes do not match a {} bundle",
            b.kind.as_str()
        );
        Ok(b)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BundleDocument {
    version: u32,
    #[serde(flatten)]
    bundle: GanBundle,
}
