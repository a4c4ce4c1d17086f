use serde::{Deserialize, Serialize};

use crate::augment::{GanConfig, GanKind};
use crate::error::{contract, ensure, Error, Result};
use crate::numerics::LayerSpec;

/// Sizes entering the cost formulas. `layers` counts linear layers, so a
/// localizer with four hidden layers has `layers = 5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub d: Option<u64>,
    pub hidden: Option<u64>,
    pub layers: Option<u64>,
    pub batch: Option<u64>,
    pub epochs_mlp: Option<u64>,
    pub epochs_gan: Option<u64>,
    pub noise_dim: Option<u64>,
    pub n: Option<u64>,
    pub n_aug: Option<u64>,
    pub n_free: Option<u64>,
    pub gan: GanKind,
    pub wlm_hidden: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            d: None,
            hidden: None,
            layers: None,
            batch: None,
            epochs_mlp: None,
            epochs_gan: None,
            noise_dim: None,
            n: None,
            n_aug: None,
            n_free: None,
            gan: GanKind::PointGan,
            wlm_hidden: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostQuery {
    MlpFwd,
    MlpEpoch,
    GanIter,
    GanEpoch,
    WlmLabel,
    Total,
    Infer,
}

fn need(v: Option<u64>, name: &str) -> Result<u64> {
    match v {
        Some(x) if x > 0 => Ok(x),
        Some(_) => Err(contract(format!("cost field `{name}` must be positive"))),
        None => Err(contract(format!("cost field `{name}` is missing"))),
    }
}

fn mul(a: u64, b: u64) -> Result<u64> {
    a.checked_mul(b)
        .ok_or_else(|| Error::NumericOverflow("cost estimate overflows u64".into()))
}

fn add(a: u64, b: u64) -> Result<u64> {
    a.checked_add(b)
        .ok_or_else(|| Error::NumericOverflow("cost estimate overflows u64".into()))
}

fn spec_macs(specs: &[LayerSpec]) -> u64 {
    specs.iter().map(|s| (s.in_dim * s.out_dim) as u64).sum()
}

/// Per-sample forward MACs of a `d -> H x (layers-1) -> 2` network.
pub fn mlp_forward_macs(d: u64, hidden: u64, layers: u64) -> Result<u64> {
    ensure!(layers >= 1, "an MLP needs at least one layer");
    if layers == 1 {
        return mul(d, 2);
    }
    let inner = mul(mul(layers - 2, hidden)?, hidden)?;
    add(add(mul(d, hidden)?, inner)?, mul(2, hidden)?)
}

/// `dH + (L_d - 1)H^2 + H`: a discriminator of uniform width `H` with
/// `l_d` hidden layers.
pub fn uniform_discriminator_macs(d: u64, hidden: u64, l_d: u64) -> Result<u64> {
    ensure!(l_d >= 1, "a discriminator needs at least one hidden layer");
    let inner = mul(mul(l_d - 1, hidden)?, hidden)?;
    add(add(mul(d, hidden)?, inner)?, hidden)
}

impl CostModel {
    /// Per-sample forward MACs of the implemented generator and
    /// discriminator.
    pub fn gan_forward_macs(&self) -> Result<(u64, u64)> {
        let d = need(self.d, "d")? as usize;
        let cfg = GanConfig {
            noise_dim: need(self.noise_dim, "noise_dim")? as usize,
            ..GanConfig::default()
        };
        Ok((
            spec_macs(&cfg.generator_specs(self.gan, d)),
            spec_macs(&cfg.discriminator_specs(self.gan, d)),
        ))
    }

    pub fn wlm_forward_macs(&self) -> Result<u64> {
        mlp_forward_macs(
            need(self.d, "d")?,
            self.wlm_hidden,
            need(self.layers, "layers")?,
        )
    }

    /// `ceil((N + N_aug) / B)`.
    pub fn batches_per_epoch(&self) -> Result<u64> {
        let total = add(need(self.n, "n")?, self.n_aug.unwrap_or(0))?;
        Ok(total.div_ceil(need(self.batch, "batch")?))
    }
}

/// Multiply-accumulate count of the requested stage. Epoch figures sum the
/// forward passes over all `ceil((N + N_aug) / B)` batches, so a short final
/// batch is counted at its true size.
pub fn estimate_cost(model: &CostModel, query: CostQuery) -> Result<u64> {
    let fwd = || {
        mlp_forward_macs(
            need(model.d, "d")?,
            need(model.hidden, "hidden")?,
            need(model.layers, "layers")?,
        )
    };
    let gan_per_sample = || {
        let (g, d) = model.gan_forward_macs()?;
        add(mul(2, d)?, g)
    };
    match query {
        CostQuery::MlpFwd | CostQuery::Infer => fwd(),
        CostQuery::MlpEpoch => {
            model.batches_per_epoch()?;
            let samples = add(need(model.n, "n")?, model.n_aug.unwrap_or(0))?;
            mul(samples, fwd()?)
        }
        CostQuery::GanIter => mul(need(model.batch, "batch")?, gan_per_sample()?),
        CostQuery::GanEpoch => mul(need(model.n, "n")?, gan_per_sample()?),
        CostQuery::WlmLabel => mul(need(model.n_free, "n_free")?, model.wlm_forward_macs()?),
        CostQuery::Total => {
            let gan = mul(
                need(model.epochs_gan, "epochs_gan")?,
                estimate_cost(model, CostQuery::GanEpoch)?,
            )?;
            let mlp = mul(
                need(model.epochs_mlp, "epochs_mlp")?,
                estimate_cost(model, CostQuery::MlpEpoch)?,
            )?;
            add(add(gan, mlp)?, estimate_cost(model, CostQuery::WlmLabel)?)
        }
    }
}
