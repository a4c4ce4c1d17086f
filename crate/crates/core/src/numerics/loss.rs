use super::Matrix;
use crate::error::{ensure, Error, Result};

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the logarithm.
pub const BCE_CLAMP: f64 = 1e-7;

/// Mean over rows of the squared Euclidean residual, with its gradient
/// `2 (pred - target) / N`.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    ensure!(
        pred.shape() == target.shape(),
        "mse shapes differ: {:?} vs {:?}",
        pred.shape(),
        target.shape()
    );
    if pred.rows() == 0 {
        return Err(Error::EmptyInput("mse over zero samples".into()));
    }
    let n = pred.rows() as f64;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut total = 0.0;
    for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let r = p - t;
        total += r * r;
        *g = 2.0 * r / n;
    }
    Ok((total / n, grad))
}

/// Binary cross-entropy on probabilities. The gradient with respect to the
/// probability is evaluated at the clamped value, so saturated outputs still
/// pass a finite signal to the sigmoid below.
pub fn bce_loss(prob: &Matrix, label: &Matrix) -> Result<(f64, Matrix)> {
    ensure!(
        prob.shape() == label.shape(),
        "bce shapes differ: {:?} vs {:?}",
        prob.shape(),
        label.shape()
    );
    if prob.rows() == 0 {
        return Err(Error::EmptyInput("bce over zero samples".into()));
    }
    ensure!(
        label.data().iter().all(|&y| y == 0.0 || y == 1.0),
        "bce labels must be 0 or 1"
    );
    ensure!(
        prob.data().iter().all(|p| (0.0..=1.0).contains(p)),
        "bce probabilities must lie in [0, 1]"
    );
    let n = prob.data().len() as f64;
    let mut grad = Matrix::zeros(prob.rows(), prob.cols());
    let mut total = 0.0;
    for ((g, &p), &y) in grad.data_mut().iter_mut().zip(prob.data()).zip(label.data()) {
        let pc = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        total -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        *g = (pc - y) / (pc * (1.0 - pc)) / n;
    }
    Ok((total / n, grad))
}
