use serde::{Deserialize, Serialize};

use crate::datamodel::Coordinate;
use crate::error::{ensure, Error, Result};

/// Root-mean-square Euclidean error in meters.
pub fn rmse(preds: &[Coordinate], truths: &[Coordinate]) -> Result<f64> {
    ensure!(
        preds.len() == truths.len(),
        "rmse needs equal lengths, got {} and {}",
        preds.len(),
        truths.len()
    );
    if preds.is_empty() {
        return Err(Error::EmptyInput("rmse over zero predictions".into()));
    }
    let sq: f64 = preds
        .iter()
        .zip(truths)
        .map(|(p, t)| (p.x - t.x).powi(2) + (p.y - t.y).powi(2))
        .sum();
    Ok((sq / preds.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedStd {
    pub value: f64,
    /// Channels whose mean is zero; they contribute 0 to the average.
    pub zero_mean_channels: Vec<usize>,
}

/// Mean over channels of `sigma_j / |mu_j|` across repeated readings at one
/// location, with the population standard deviation. Using `|mu_j|` keeps
/// the ratio positive for RSSI, whose means are negative dBm values.
pub fn normalized_std<R: AsRef<[f64]>>(samples: &[R]) -> Result<NormalizedStd> {
    ensure!(
        samples.len() >= 2,
        "normalized std needs at least 2 samples, got {}",
        samples.len()
    );
    let d = samples[0].as_ref().len();
    ensure!(d > 0, "fingerprints have no channels");
    ensure!(
        samples.iter().all(|s| s.as_ref().len() == d),
        "samples have differing channel counts"
    );
    let n = samples.len() as f64;
    let mut total = 0.0;
    let mut zero = Vec::new();
    for j in 0..d {
        let mean = samples.iter().map(|s| s.as_ref()[j]).sum::<f64>() / n;
        if mean == 0.0 {
            zero.push(j);
            continue;
        }
        // Deviations from the first reading, so identical readings give
        // exactly zero.
        let k = samples[0].as_ref()[j];
        let (s1, s2) = samples.iter().fold((0.0, 0.0), |(a, b), s| {
            let dev = s.as_ref()[j] - k;
            (a + dev, b + dev * dev)
        });
        let var = ((s2 - s1 * s1 / n) / n).max(0.0);
        total += var.sqrt() / mean.abs();
    }
    Ok(NormalizedStd {
        value: total / d as f64,
        zero_mean_channels: zero,
    })
}

/// Five-number summary plus mean. Quartiles interpolate linearly between
/// order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuartileSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    pub count: usize,
}

impl QuartileSummary {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("quartiles of zero values".into()));
        }
        ensure!(values.iter().all(|v| v.is_finite()), "quartiles need finite values");
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Ok(Self {
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
            count: v.len(),
        })
    }

    pub fn is_ordered(&self) -> bool {
        self.min <= self.q1 && self.q1 <= self.median && self.median <= self.q3 && self.q3 <= self.max
    }
}
