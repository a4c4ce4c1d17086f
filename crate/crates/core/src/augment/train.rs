use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{GanBundle, GanConfig, GanKind, COORD_DIM};
use crate::datamodel::{Dataset, NormStats};
use crate::error::{ensure, Error, Result};
use crate::locmodel::epoch_batches;
use crate::numerics::{bce_loss, AdamState, Matrix, MlpNet, Mode};
use crate::seed::{stage_rng, StageRng};

/// Per-epoch means of the discriminator loss (real + fake terms) and the
/// generator loss.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GanTrace {
    pub d_loss: Vec<f64>,
    pub g_loss: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub d_real: f64,
    pub d_fake: f64,
    pub g: f64,
}

/// Training state for one GAN. Exposed so a single step can be driven with
/// caller-supplied noise.
pub struct GanTrainer {
    kind: GanKind,
    bundle_meta: (crate::datamodel::Modality, crate::datamodel::Extent, NormStats),
    config: GanConfig,
    real: Matrix,
    conditions: Option<Matrix>,
    generator: MlpNet,
    discriminator: MlpNet,
    adam_g: AdamState,
    adam_d: AdamState,
    noise_rng: StageRng,
    shuffle_rng: StageRng,
    mask_rng: StageRng,
}

impl GanTrainer {
    pub fn new(kind: GanKind, train: &Dataset, config: &GanConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(Error::EmptyInput("cannot train a GAN on no data".into()));
        }
        ensure!(train.only_real(), "GANs train on real samples only");
        let norm = NormStats::fit(train)?;
        let real = norm.feature_matrix(train)?;
        let conditions = match kind {
            GanKind::PointGan => Some(norm.target_matrix(train)),
            GanKind::FreeGan => None,
        };
        let dim = train.dim();
        let generator = MlpNet::new(
            &config.generator_specs(kind, dim),
            &mut stage_rng(seed, "gan/generator", 0),
        )?;
        let discriminator = MlpNet::new(
            &config.discriminator_specs(kind, dim),
            &mut stage_rng(seed, "gan/discriminator", 0),
        )?;
        let adam = crate::numerics::AdamConfig::new(config.learning_rate, config.beta1, config.beta2);
        Ok(Self {
            kind,
            bundle_meta: (train.modality(), train.extent(), norm),
            config: *config,
            real,
            conditions,
            adam_g: AdamState::for_net(adam, &generator)?,
            adam_d: AdamState::for_net(adam, &discriminator)?,
            generator,
            discriminator,
            noise_rng: stage_rng(seed, "gan/noise", 0),
            shuffle_rng: stage_rng(seed, "gan/shuffle", 0),
            mask_rng: stage_rng(seed, "gan/masks", 0),
        })
    }

    pub fn generator(&self) -> &MlpNet {
        &self.generator
    }

    pub fn discriminator(&self) -> &MlpNet {
        &self.discriminator
    }

    pub fn real(&self) -> &Matrix {
        &self.real
    }

    pub fn conditions(&self) -> Option<&Matrix> {
        self.conditions.as_ref()
    }

    pub fn noise(&mut self, n: usize) -> Matrix {
        draw_noise(&mut self.noise_rng, n, self.config.noise_dim)
    }

    fn disc_input(&self, cond: Option<&Matrix>, fp: &Matrix) -> Result<Matrix> {
        match cond {
            Some(c) => c.hcat(fp),
            None => Ok(fp.clone()),
        }
    }

    /// One discriminator update followed by one generator update on the
    /// rows `idx` of the training set, using noise `z`.
    pub fn step_with_noise(&mut self, idx: &[usize], z: &Matrix) -> Result<StepLosses> {
        let n = idx.len();
        ensure!(n > 0, "empty GAN batch");
        ensure!(
            z.shape() == (n, self.config.noise_dim),
            "noise must be {n}x{}",
            self.config.noise_dim
        );
        let full = n == self.real.rows();
        let pick = |m: &Matrix| if full { m.clone() } else { m.select_rows(idx) };
        let x = pick(&self.real);
        let c = self.conditions.as_ref().map(pick);

        let g_in = match &c {
            Some(c) => z.hcat(c)?,
            None => z.clone(),
        };
        let (fake, g_cache) = self.generator.forward(&g_in, &mut self.mask_rng)?;
        let real_in = self.disc_input(c.as_ref(), &x)?;
        let fake_in = self.disc_input(c.as_ref(), &fake)?;
        let ones = Matrix::filled(n, 1, 1.0);
        let zeros = Matrix::zeros(n, 1);

        let (p_real, cache_real) = self.discriminator.forward(&real_in, &mut self.mask_rng)?;
        let (p_fake, cache_fake) = self.discriminator.forward(&fake_in, &mut self.mask_rng)?;
        check_finite(&p_real)?;
        check_finite(&p_fake)?;
        let (d_real, up_real) = bce_loss(&p_real, &ones)?;
        let (d_fake, up_fake) = bce_loss(&p_fake, &zeros)?;
        let gr = self.discriminator.backward(&cache_real, &up_real)?;
        let gf = self.discriminator.backward(&cache_fake, &up_fake)?;
        let summed: Vec<Vec<f64>> = gr
            .tensors()
            .iter()
            .zip(gf.tensors())
            .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u + v).collect())
            .collect();
        let refs: Vec<&[f64]> = summed.iter().map(Vec::as_slice).collect();
        self.adam_d.step(&mut self.discriminator.params_mut(), &refs)?;

        let (p_gen, cache_gen) = self.discriminator.forward(&fake_in, &mut self.mask_rng)?;
        check_finite(&p_gen)?;
        let (g, up_gen) = bce_loss(&p_gen, &ones)?;
        let through_d = self.discriminator.backward(&cache_gen, &up_gen)?.input;
        let upstream = match self.kind {
            GanKind::PointGan => through_d.split_cols(COORD_DIM)?.1,
            GanKind::FreeGan => through_d,
        };
        let gg = self.generator.backward(&g_cache, &upstream)?;
        self.adam_g.step_net(&mut self.generator, &gg)?;
        Ok(StepLosses { d_real, d_fake, g })
    }

    /// Runs one epoch and returns the sample-weighted mean `(d_loss, g_loss)`.
    pub fn epoch(&mut self, epoch: usize) -> Result<(f64, f64)> {
        let stage = self.kind.as_str();
        let diverged = || Error::Divergence { stage: stage.into(), epoch };
        let n = self.real.rows();
        let (mut d_total, mut g_total) = (0.0, 0.0);
        for batch in epoch_batches(n, self.config.batch_size, &mut self.shuffle_rng) {
            let z = self.noise(batch.len());
            let s = self.step_with_noise(&batch, &z).map_err(|e| match e {
                Error::NumericOverflow(_) | Error::Divergence { .. } => diverged(),
                other => other,
            })?;
            let w = batch.len() as f64;
            d_total += (s.d_real + s.d_fake) * w;
            g_total += s.g * w;
        }
        let (d, g) = (d_total / n as f64, g_total / n as f64);
        if !(d.is_finite() && g.is_finite()) {
            return Err(diverged());
        }
        Ok((d, g))
    }

    pub fn finish(mut self) -> GanBundle {
        self.generator.set_mode(Mode::Eval);
        self.discriminator.set_mode(Mode::Eval);
        let (modality, extent, norm) = self.bundle_meta;
        GanBundle {
            kind: self.kind,
            modality,
            extent,
            config: self.config,
            norm,
            generator: self.generator,
            discriminator: self.discriminator,
        }
    }
}

pub(crate) fn draw_noise(rng: &mut StageRng, n: usize, dim: usize) -> Matrix {
    let data = (0..n * dim).map(|_| StandardNormal.sample(rng)).collect();
    Matrix::from_vec(n, dim, data).expect("shape matches")
}

fn check_finite(p: &Matrix) -> Result<()> {
    if p.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericOverflow("discriminator produced a non-finite score".into()))
    }
}

fn train(kind: GanKind, train: &Dataset, config: &GanConfig, seed: u64) -> Result<(GanBundle, GanTrace)> {
    let mut t = GanTrainer::new(kind, train, config, seed)?;
    let mut trace = GanTrace::default();
    for epoch in 1..=config.epochs {
        let (d, g) = t.epoch(epoch)?;
        trace.d_loss.push(d);
        trace.g_loss.push(g);
    }
    Ok((t.finish(), trace))
}

pub fn train_pointgan(data: &Dataset, config: &GanConfig, seed: u64) -> Result<(GanBundle, GanTrace)> {
    train(GanKind::PointGan, data, config, seed)
}

pub fn train_freegan(data: &Dataset, config: &GanConfig, seed: u64) -> Result<(GanBundle, GanTrace)> {
    train(GanKind::FreeGan, data, config, seed)
}
