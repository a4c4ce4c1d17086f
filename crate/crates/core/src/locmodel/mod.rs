//! Fingerprint-to-coordinate regressors.
//!
//! A localizer is `d -> H x n_hidden (ReLU, dropout) -> 2 (linear)`, trained
//! with MSE on min-max normalized fingerprints and coordinates. Predictions
//! are mapped back to meters and never clamped to the room.

mod search;

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use search::{hyper_search, sample_config, SearchOutcome, TrialRecord, SEARCH_RANGES};

use crate::datamodel::{Coordinate, Dataset, Fingerprint, Modality, NormStats};
use crate::error::{ensure, Error, Result};
use crate::numerics::{
    mse_loss, Activation, AdamConfig, AdamState, LayerSpec, Matrix, MlpNet, Mode,
};
use crate::seed::stage_rng;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocConfig {
    pub hidden_size: usize,
    pub n_hidden: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for LocConfig {
    fn default() -> Self {
        Self {
            hidden_size: 256,
            n_hidden: 4,
            dropout_rate: 0.1,
            learning_rate: 1e-3,
            epochs: 700,
            batch_size: 4096,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

impl LocConfig {
    /// The fixed pseudo-labeling model: width 128, dropout 0.1, lr 1e-3.
    pub fn weak() -> Self {
        Self {
            hidden_size: 128,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.hidden_size > 0, "hidden_size must be positive");
        ensure!(self.n_hidden > 0, "n_hidden must be positive");
        ensure!(
            (0.0..1.0).contains(&self.dropout_rate),
            "dropout_rate must lie in [0, 1)"
        );
        ensure!(self.epochs > 0, "epochs must be positive");
        ensure!(self.batch_size > 0, "batch_size must be positive");
        self.adam().validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig::new(self.learning_rate, self.beta1, self.beta2)
    }

    pub fn layer_specs(&self, input_dim: usize) -> Vec<LayerSpec> {
        let mut specs = Vec::with_capacity(self.n_hidden + 1);
        let mut prev = input_dim;
        for k in 0..self.n_hidden {
            let mut spec = LayerSpec::new(prev, self.hidden_size, Activation::Relu);
            if k + 1 == self.n_hidden {
                spec = spec.with_dropout(self.dropout_rate);
            }
            specs.push(spec);
            prev = self.hidden_size;
        }
        specs.push(LayerSpec::new(prev, 2, Activation::Identity));
        specs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedLocalizer {
    pub modality: Modality,
    pub config: LocConfig,
    pub norm: NormStats,
    pub net: MlpNet,
    /// `(epoch, mean training MSE in normalized units)`, epochs from 1.
    pub loss_curve: Vec<(usize, f64)>,
    pub optimizer_steps: u64,
}

/// Index batches for one epoch: the whole set when it fits in one batch,
/// otherwise a fresh shuffle cut into `batch_size` chunks.
pub(crate) fn epoch_batches<R: rand::Rng + ?Sized>(
    n: usize,
    batch_size: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    if n <= batch_size {
        return vec![idx];
    }
    idx.shuffle(rng);
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

pub fn train_localizer(data: &Dataset, config: &LocConfig, seed: u64) -> Result<TrainedLocalizer> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("cannot train a localizer on no data".into()));
    }
    let norm = NormStats::fit(data)?;
    let x = norm.feature_matrix(data)?;
    let y = norm.target_matrix(data);

    let mut net = MlpNet::new(
        &config.layer_specs(data.dim()),
        &mut stage_rng(seed, "localizer/init", 0),
    )?;
    let mut adam = AdamState::for_net(config.adam(), &net)?;
    let mut shuffle_rng = stage_rng(seed, "localizer/shuffle", 0);
    let mut dropout_rng = stage_rng(seed, "localizer/dropout", 0);

    let n = data.len();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let diverged = || Error::Divergence {
            stage: "localizer".into(),
            epoch,
        };
        let mut total = 0.0;
        for batch in epoch_batches(n, config.batch_size, &mut shuffle_rng) {
            let (xb, yb) = if batch.len() == n {
                (x.clone(), y.clone())
            } else {
                (x.select_rows(&batch), y.select_rows(&batch))
            };
            let (pred, cache) = net.forward(&xb, &mut dropout_rng).map_err(|e| match e {
                Error::NumericOverflow(_) => diverged(),
                other => other,
            })?;
            let (loss, grad) = mse_loss(&pred, &yb)?;
            if !loss.is_finite() {
                return Err(diverged());
            }
            let grads = net.backward(&cache, &grad)?;
            adam.step_net(&mut net, &grads)?;
            total += loss * batch.len() as f64;
        }
        let mean = total / n as f64;
        if !mean.is_finite() {
            return Err(diverged());
        }
        loss_curve.push((epoch, mean));
    }
    net.set_mode(Mode::Eval);
    Ok(TrainedLocalizer {
        modality: data.modality(),
        config: *config,
        norm,
        net,
        loss_curve,
        optimizer_steps: adam.step_count(),
    })
}

/// The pseudo-labeling model, trained on real samples only.
pub fn train_weak_model(data: &Dataset, seed: u64) -> Result<TrainedLocalizer> {
    train_weak_model_with(data, &LocConfig::weak(), seed)
}

/// [`train_weak_model`] with an explicit configuration (for reduced budgets).
pub fn train_weak_model_with(
    data: &Dataset,
    config: &LocConfig,
    seed: u64,
) -> Result<TrainedLocalizer> {
    ensure!(
        data.only_real(),
        "the weak model trains on real samples only"
    );
    train_localizer(data, config, seed)
}

impl TrainedLocalizer {
    pub fn input_dim(&self) -> usize {
        self.net.in_dim()
    }

    /// Predicts meters for raw (unnormalized) fingerprints, one per row.
    pub fn predict_raw(&self, raw: &Matrix) -> Result<Vec<Coordinate>> {
        ensure!(
            raw.cols() == self.input_dim(),
            "model expects {} features, got {}",
            self.input_dim(),
            raw.cols()
        );
        let out = self.net.infer(&self.norm.normalize_rows(raw)?)?;
        Ok(out
            .row_iter()
            .map(|r| self.norm.denormalize_coord([r[0], r[1]]))
            .collect())
    }

    pub fn predict(&self, fp: &Fingerprint) -> Result<Coordinate> {
        ensure!(
            fp.modality() == self.modality,
            "model is {} but fingerprint is {}",
            self.modality,
            fp.modality()
        );
        let raw = Matrix::from_vec(1, fp.values().len(), fp.values().to_vec())?;
        Ok(self.predict_raw(&raw)?[0])
    }

    pub fn predict_many(&self, fps: &[Fingerprint]) -> Result<Vec<Coordinate>> {
        ensure!(
            fps.iter().all(|f| f.modality() == self.modality),
            "fingerprint modality does not match the model"
        );
        let rows: Vec<&[f64]> = fps.iter().map(Fingerprint::values).collect();
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        self.predict_raw(&Matrix::from_rows(&rows)?)
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<Coordinate>> {
        ensure!(
            data.modality() == self.modality,
            "model is {} but data is {}",
            self.modality,
            data.modality()
        );
        if data.is_empty() {
            return Ok(Vec::new());
        }
        self.predict_raw(&data.features())
    }

    /// Stable digest of the network parameters and normalizer.
    pub fn identity_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.norm).expect("serializable"));
        h.update(serde_json::to_vec(&self.net).expect("serializable"));
        hex::encode(h.finalize())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = LocalizerDocument {
            version: MODEL_FORMAT_VERSION,
            kind: "localizer".into(),
            model: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: LocalizerDocument = serde_json::from_str(text)?;
        ensure!(
            doc.version == MODEL_FORMAT_VERSION,
            "unsupported model format version {}",
            doc.version
        );
        ensure!(doc.kind == "localizer", "expected a localizer, found `{}`", doc.kind);
        doc.model.net.validate()?;
        ensure!(
            doc.model.net.in_dim() == doc.model.modality.dim() && doc.model.net.out_dim() == 2,
            "network shape does not match a {} localizer",
            doc.model.modality
        );
        Ok(doc.model)
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
struct LocalizerDocument {
    version: u32,
    kind: String,
    #[serde(flatten)]
    model: TrainedLocalizer,
}
