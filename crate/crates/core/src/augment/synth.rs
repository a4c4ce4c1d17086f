use serde::{Deserialize, Serialize};

use super::train::draw_noise;
use super::{GanBundle, GanKind};
use crate::datamodel::{
    Coordinate, Dataset, Extent, Fingerprint, LabeledSample, Modality, NormStats, Origin,
};
use crate::error::{ensure, Result};
use crate::locmodel::TrainedLocalizer;
use crate::numerics::Matrix;
use crate::seed::stage_rng;

const GENERATION_CHUNK: usize = 8192;

/// Generated fingerprints in the normalized space of the GAN that made them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBatch {
    pub origin: Origin,
    pub modality: Modality,
    pub norm: NormStats,
    pub fingerprints: Matrix,
    pub conditions: Option<Vec<Coordinate>>,
    pub labels: Option<Vec<Coordinate>>,
    pub scores: Option<Vec<f64>>,
    /// Identity hash of the localizer that produced `labels`, if any.
    pub labeler: Option<String>,
    pub out_of_extent_fraction: Option<f64>,
}

impl SyntheticBatch {
    pub fn len(&self) -> usize {
        self.fingerprints.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    pub fn raw_fingerprints(&self) -> Result<Matrix> {
        let d = self.fingerprints.cols();
        let mut data = Vec::with_capacity(self.len() * d);
        for row in self.fingerprints.row_iter() {
            data.extend(self.norm.denormalize_fingerprint(row));
        }
        Matrix::from_vec(self.len(), d, data)
    }

    pub fn samples(&self) -> Result<Vec<LabeledSample>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| crate::error::contract("synthetic batch has no labels"))?;
        let raw = self.raw_fingerprints()?;
        raw.row_iter()
            .zip(labels)
            .map(|(row, loc)| {
                Ok(LabeledSample {
                    fingerprint: Fingerprint::from_values(self.modality, row)?,
                    location: *loc,
                    origin: self.origin,
                })
            })
            .collect()
    }

    pub fn to_dataset(&self, extent: Extent) -> Result<Dataset> {
        Dataset::new(self.modality, extent, self.samples()?)
    }
}

fn empty_batch(bundle: &GanBundle, origin: Origin) -> SyntheticBatch {
    SyntheticBatch {
        origin,
        modality: bundle.modality,
        norm: bundle.norm.clone(),
        fingerprints: Matrix::zeros(0, bundle.dim()),
        conditions: None,
        labels: None,
        scores: None,
        labeler: None,
        out_of_extent_fraction: None,
    }
}

/// `per_point` fingerprints for every point, labeled with the point.
pub fn pointgan_generate(
    bundle: &GanBundle,
    points: &[Coordinate],
    per_point: usize,
    seed: u64,
) -> Result<SyntheticBatch> {
    ensure!(bundle.kind == GanKind::PointGan, "expected a pointgan bundle");
    ensure!(
        points.iter().all(|p| bundle.extent.contains(p)),
        "conditioning points must lie inside the room"
    );
    let mut batch = empty_batch(bundle, Origin::PointGan);
    let labels: Vec<Coordinate> = points
        .iter()
        .flat_map(|p| std::iter::repeat_n(*p, per_point))
        .collect();
    if labels.is_empty() {
        batch.conditions = Some(Vec::new());
        batch.labels = Some(Vec::new());
        batch.scores = Some(Vec::new());
        return Ok(batch);
    }
    let nd = bundle.config.noise_dim;
    let mut z = Vec::with_capacity(labels.len() * nd);
    for i in 0..points.len() {
        let mut rng = stage_rng(seed, "pointgan/generate", i as u64);
        z.extend(draw_noise(&mut rng, per_point, nd).into_vec());
    }
    let z = Matrix::from_vec(labels.len(), nd, z)?;
    let cond_rows: Vec<[f64; 2]> = labels.iter().map(|c| bundle.norm.normalize_coord(*c)).collect();
    let cond = Matrix::from_rows(&cond_rows)?;
    let fps = bundle.generator.infer(&z.hcat(&cond)?)?;
    batch.scores = Some(bundle.discriminator_scores(&fps, Some(&cond))?);
    batch.fingerprints = fps;
    batch.conditions = Some(labels.clone());
    batch.labels = Some(labels);
    Ok(batch)
}

/// `n` unlabeled fingerprints with discriminator scores.
pub fn freegan_generate(bundle: &GanBundle, n: usize, seed: u64) -> Result<SyntheticBatch> {
    ensure!(bundle.kind == GanKind::FreeGan, "expected a freegan bundle");
    let mut batch = empty_batch(bundle, Origin::FreeGan);
    let mut rng = stage_rng(seed, "freegan/generate", 0);
    let mut data = Vec::with_capacity(n * bundle.dim());
    let mut scores = Vec::with_capacity(n);
    let mut left = n;
    while left > 0 {
        let m = left.min(GENERATION_CHUNK);
        let fps = bundle.generator.infer(&draw_noise(&mut rng, m, bundle.config.noise_dim))?;
        scores.extend(bundle.discriminator_scores(&fps, None)?);
        data.extend(fps.into_vec());
        left -= m;
    }
    batch.fingerprints = Matrix::from_vec(n, bundle.dim(), data)?;
    batch.scores = Some(scores);
    Ok(batch)
}

/// Labels every fingerprint with the weak model's raw prediction.
pub fn pseudo_label(
    wlm: &TrainedLocalizer,
    batch: &SyntheticBatch,
    extent: Extent,
) -> Result<SyntheticBatch> {
    ensure!(!batch.is_labeled(), "batch is already labeled");
    ensure!(
        wlm.modality == batch.modality,
        "weak model is {} but batch is {}",
        wlm.modality,
        batch.modality
    );
    let labels = if batch.is_empty() {
        Vec::new()
    } else {
        wlm.predict_raw(&batch.raw_fingerprints()?)?
    };
    let outside = labels.iter().filter(|c| !extent.contains(c)).count();
    let mut out = batch.clone();
    out.out_of_extent_fraction = Some(if labels.is_empty() {
        0.0
    } else {
        outside as f64 / labels.len() as f64
    });
    out.labels = Some(labels);
    out.labeler = Some(wlm.identity_hash());
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "k")]
pub enum Selection {
    All,
    /// Keep the `k` synthetic samples with the highest discriminator score.
    TopK(usize),
}

/// Real samples followed by the selected synthetic samples, in input order.
pub fn build_augmented(
    real: &Dataset,
    synthetic: &[SyntheticBatch],
    selection: Selection,
) -> Result<Dataset> {
    let mut pool = Vec::new();
    let mut scores = Vec::new();
    for b in synthetic {
        ensure!(
            b.modality == real.modality(),
            "synthetic {} batch cannot augment {} data",
            b.modality,
            real.modality()
        );
        ensure!(b.is_labeled(), "synthetic batch must be labeled before augmentation");
        pool.extend(b.samples()?);
        if let Selection::TopK(_) = selection {
            let s = b
                .scores
                .as_ref()
                .ok_or_else(|| crate::error::contract("top-k selection needs scores"))?;
            scores.extend_from_slice(s);
        }
    }
    let chosen: Vec<LabeledSample> = match selection {
        Selection::All => pool,
        Selection::TopK(k) => {
            let mut order: Vec<usize> = (0..pool.len()).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            let mut keep = order[..k.min(pool.len())].to_vec();
            keep.sort_unstable();
            keep.into_iter().map(|i| pool[i]).collect()
        }
    };
    let mut out = real.clone();
    out.extend(chosen)?;
    Ok(out)
}
