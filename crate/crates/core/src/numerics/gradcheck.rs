//! Central-difference verification of [`MlpNet::backward`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layer::Activation;
use super::{bce_loss, mse_loss, Matrix, MlpNet, Mode};
use crate::error::{ensure, Result};

#[derive(Debug, Clone)]
pub enum CheckLoss {
    Mse { target: Matrix },
    /// BCE on the network output, which must end in a sigmoid layer.
    BceAfterSigmoid { labels: Matrix },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub params_checked: usize,
    /// True when the input network had dropout and it was switched off.
    pub dropout_disabled: bool,
}

fn loss_value(net: &mut MlpNet, batch: &Matrix, loss: &CheckLoss) -> Result<(f64, Matrix)> {
    // No dropout is active, so the stream is never drawn from.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (out, cache) = net.forward(batch, &mut rng)?;
    let (value, upstream) = match loss {
        CheckLoss::Mse { target } => mse_loss(&out, target)?,
        CheckLoss::BceAfterSigmoid { labels } => bce_loss(&out, labels)?,
    };
    let grads = net.backward(&cache, &upstream)?;
    let flat: Vec<f64> = grads.tensors().concat();
    Ok((value, Matrix::from_vec(1, flat.len(), flat)?))
}

/// Largest `|a - n| / max(|a|, |n|, 1e-12)` over every parameter, where `a`
/// is the analytic gradient and `n` the central difference with step `eps`.
pub fn gradient_check(
    net: &MlpNet,
    batch: &Matrix,
    loss: &CheckLoss,
    eps: f64,
) -> Result<GradCheckReport> {
    ensure!(
        (1e-6..=1e-4).contains(&eps),
        "finite-difference step must lie in [1e-6, 1e-4], got {eps}"
    );
    if matches!(loss, CheckLoss::BceAfterSigmoid { .. }) {
        let last = net.layers().last().map(|l| l.spec.activation);
        ensure!(
            last == Some(Activation::Sigmoid),
            "BCE check needs a sigmoid output layer"
        );
    }
    let mut work = net.clone();
    let dropout_disabled = work.has_dropout();
    work.set_dropout(0.0);
    work.set_mode(Mode::Train);

    let (_, analytic) = loss_value(&mut work, batch, loss)?;
    let analytic = analytic.into_vec();

    let sizes = work.param_sizes();
    let mut max_rel = 0.0f64;
    let mut flat = 0;
    for (k, &size) in sizes.iter().enumerate() {
        for i in 0..size {
            let original = work.params_mut()[k][i];
            work.params_mut()[k][i] = original + eps;
            let (hi, _) = loss_value(&mut work, batch, loss)?;
            work.params_mut()[k][i] = original - eps;
            let (lo, _) = loss_value(&mut work, batch, loss)?;
            work.params_mut()[k][i] = original;

            let numeric = (hi - lo) / (2.0 * eps);
            let a = analytic[flat];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            max_rel = max_rel.max(rel);
            flat += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        params_checked: flat,
        dropout_disabled,
    })
}
