use serde::{Deserialize, Serialize};

use super::{Coordinate, Dataset, Modality};
use crate::error::{ensure, Error, Result};
use crate::numerics::Matrix;

/// Min-max statistics from training data. A channel whose max equals its
/// min normalizes to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub modality: Modality,
    pub fingerprint_min: Vec<f64>,
    pub fingerprint_max: Vec<f64>,
    pub coord_min: [f64; 2],
    pub coord_max: [f64; 2],
}

#[inline]
fn scale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

#[inline]
fn unscale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        lo + v * (hi - lo)
    } else {
        lo
    }
}

impl NormStats {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyInput("cannot fit normalizer on an empty dataset".into()));
        }
        let d = train.dim();
        let mut fmin = vec![f64::INFINITY; d];
        let mut fmax = vec![f64::NEG_INFINITY; d];
        let mut cmin = [f64::INFINITY; 2];
        let mut cmax = [f64::NEG_INFINITY; 2];
        for s in train.samples() {
            for (j, &v) in s.fingerprint.values().iter().enumerate() {
                fmin[j] = fmin[j].min(v);
                fmax[j] = fmax[j].max(v);
            }
            for (k, v) in [s.location.x, s.location.y].into_iter().enumerate() {
                cmin[k] = cmin[k].min(v);
                cmax[k] = cmax[k].max(v);
            }
        }
        Ok(Self {
            modality: train.modality(),
            fingerprint_min: fmin,
            fingerprint_max: fmax,
            coord_min: cmin,
            coord_max: cmax,
        })
    }

    pub fn dim(&self) -> usize {
        self.fingerprint_min.len()
    }

    pub fn normalize_fingerprint(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .enumerate()
            .map(|(j, &v)| scale(v, self.fingerprint_min[j], self.fingerprint_max[j]))
            .collect()
    }

    pub fn denormalize_fingerprint(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .enumerate()
            .map(|(j, &v)| unscale(v, self.fingerprint_min[j], self.fingerprint_max[j]))
            .collect()
    }

    pub fn normalize_coord(&self, c: Coordinate) -> [f64; 2] {
        [
            scale(c.x, self.coord_min[0], self.coord_max[0]),
            scale(c.y, self.coord_min[1], self.coord_max[1]),
        ]
    }

    pub fn denormalize_coord(&self, v: [f64; 2]) -> Coordinate {
        Coordinate::new(
            unscale(v[0], self.coord_min[0], self.coord_max[0]),
            unscale(v[1], self.coord_min[1], self.coord_max[1]),
        )
    }

    /// Normalized fingerprints of `data` as an `N x d` matrix.
    pub fn feature_matrix(&self, data: &Dataset) -> Result<Matrix> {
        ensure!(
            data.modality() == self.modality,
            "normalizer is {} but data is {}",
            self.modality,
            data.modality()
        );
        self.normalize_rows(&data.features())
    }

    pub fn normalize_rows(&self, raw: &Matrix) -> Result<Matrix> {
        ensure!(
            raw.cols() == self.dim(),
            "expected {} columns, got {}",
            self.dim(),
            raw.cols()
        );
        let mut out = raw.clone();
        let cols = out.cols();
        for row in out.data_mut().chunks_exact_mut(cols.max(1)) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = scale(*v, self.fingerprint_min[j], self.fingerprint_max[j]);
            }
        }
        Ok(out)
    }

    /// Normalized locations of `data` as an `N x 2` matrix.
    pub fn target_matrix(&self, data: &Dataset) -> Matrix {
        let rows: Vec<[f64; 2]> = data
            .samples()
            .iter()
            .map(|s| self.normalize_coord(s.location))
            .collect();
        Matrix::from_rows(&rows).unwrap_or_else(|_| Matrix::zeros(0, 2))
    }
}
