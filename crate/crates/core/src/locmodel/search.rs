use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{train_localizer, LocConfig};
use crate::datamodel::{coordinate_split, Dataset};
use crate::error::{ensure, Error, Result};
use crate::eval::rmse;
use crate::seed::{derive_seed, stage_rng};

/// `(hidden_min, hidden_max, lr_min, lr_max, dropout_min, dropout_max)`.
pub const SEARCH_RANGES: (f64, f64, f64, f64, f64, f64) = (64.0, 1024.0, 1e-4, 1e-2, 0.1, 0.5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub config: LocConfig,
    pub validation_rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: LocConfig,
    pub best_trial: usize,
    pub trials: Vec<TrialRecord>,
}

/// Draws width and learning rate log-uniformly and dropout uniformly; every
/// other field comes from `base`.
pub fn sample_config<R: Rng + ?Sized>(rng: &mut R, base: &LocConfig) -> LocConfig {
    let (h_lo, h_hi, lr_lo, lr_hi, d_lo, d_hi) = SEARCH_RANGES;
    let hidden = rng.random_range(h_lo.ln()..=h_hi.ln()).exp().round() as usize;
    let lr = rng.random_range(lr_lo.ln()..=lr_hi.ln()).exp();
    let dropout = rng.random_range(d_lo..=d_hi);
    LocConfig {
        hidden_size: hidden.clamp(h_lo as usize, h_hi as usize),
        learning_rate: lr,
        dropout_rate: dropout,
        ..*base
    }
}

/// Random search over localizer hyperparameters, scored on a held-out 20%
/// of the training locations. Trials that fail are recorded and skipped;
/// ties keep the earliest trial.
pub fn hyper_search(
    train: &Dataset,
    trials: usize,
    base: &LocConfig,
    seed: u64,
) -> Result<SearchOutcome> {
    ensure!(trials > 0, "hyper_search needs at least one trial");
    let points = train.unique_locations();
    ensure!(
        points.len() >= 2,
        "hyper_search needs at least 2 distinct locations, got {}",
        points.len()
    );
    let n_fit = ((points.len() as f64 * 0.8).round() as usize).clamp(1, points.len() - 1);
    let (fit_pts, _) = coordinate_split(&points, n_fit, derive_seed(seed, "search/split", 0))?;
    let (fit, val) = train.partition_by_locations(&fit_pts);
    let truths: Vec<_> = val.samples().iter().map(|s| s.location).collect();

    let mut sampler = stage_rng(seed, "search/sample", 0);
    let mut records = Vec::with_capacity(trials);
    let mut best: Option<(usize, f64)> = None;
    for trial in 0..trials {
        let config = sample_config(&mut sampler, base);
        let scored = train_localizer(&fit, &config, derive_seed(seed, "search/trial", trial as u64))
            .and_then(|m| rmse(&m.predict_dataset(&val)?, &truths));
        let record = match scored {
            Ok(score) if score.is_finite() => {
                if best.is_none_or(|(_, b)| score < b) {
                    best = Some((trial, score));
                }
                TrialRecord { trial, config, validation_rmse: Some(score), error: None }
            }
            Ok(score) => TrialRecord {
                trial,
                config,
                validation_rmse: None,
                error: Some(format!("non-finite validation rmse {score}")),
            },
            Err(e) => TrialRecord { trial, config, validation_rmse: None, error: Some(e.to_string()) },
        };
        records.push(record);
    }
    match best {
        Some((best_trial, _)) => Ok(SearchOutcome {
            best: records[best_trial].config,
            best_trial,
            trials: records,
        }),
        None => Err(Error::Search(format!("all {trials} trials failed"))),
    }
}
