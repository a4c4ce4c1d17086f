//! Feed-forward network built from [`DenseLayer`]s.
//!
//! Layer order within a block is affine -> batch norm -> activation -> dropout.
//! Dropout uses inverted scaling, so eval mode is a plain affine/activation
//! chain and batch norm switches to its running statistics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{DenseLayer, LayerSpec};
use super::Matrix;
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    layers: Vec<DenseLayer>,
    #[serde(default)]
    mode: Mode,
}

#[derive(Debug, Clone)]
struct BatchNormCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Matrix,
    /// Value fed to the activation (after batch norm when enabled).
    pre: Matrix,
    act: Matrix,
    /// Inverted-dropout multipliers: `0` or `1 / (1 - rate)`.
    mask: Option<Vec<f64>>,
    batch_norm: Option<BatchNormCache>,
}

/// Intermediates recorded by [`MlpNet::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    shapes: Vec<(usize, usize)>,
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    /// Normalized pre-activations of layer `k`, before gamma/beta.
    pub fn normalized(&self, k: usize) -> Option<&Matrix> {
        self.layers.get(k)?.batch_norm.as_ref().map(|b| &b.xhat)
    }

    pub fn dropout_mask(&self, k: usize) -> Option<&[f64]> {
        self.layers.get(k)?.mask.as_deref()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
    /// Gradient with respect to the network input.
    pub input: Matrix,
}

impl Gradients {
    /// Flattened views in the same order as [`MlpNet::params_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.push(g.weight.data());
            if !g.bias.is_empty() {
                out.push(&g.bias);
            }
            if !g.gamma.is_empty() {
                out.push(&g.gamma);
                out.push(&g.beta);
            }
        }
        out
    }
}

impl MlpNet {
    pub fn new<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        check_chain(specs)?;
        let layers = specs
            .iter()
            .map(|s| DenseLayer::init(*s, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layers,
            mode: Mode::Train,
        })
    }

    /// All weights and biases zero.
    pub fn zeroed(specs: &[LayerSpec]) -> Result<Self> {
        check_chain(specs)?;
        let layers = specs
            .iter()
            .map(|s| DenseLayer::zeroed(*s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layers,
            mode: Mode::Train,
        })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        for l in &layers {
            l.validate()?;
        }
        check_chain(&layers.iter().map(|l| l.spec).collect::<Vec<_>>())?;
        Ok(Self {
            layers,
            mode: Mode::Train,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for l in &self.layers {
            l.validate()?;
        }
        check_chain(&self.specs())
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.out_dim
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Per-sample multiply-accumulates of one forward pass (matrix products only).
    pub fn forward_macs(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| (l.spec.in_dim * l.spec.out_dim) as u64)
            .sum()
    }

    pub fn set_dropout(&mut self, rate: f64) {
        for l in &mut self.layers {
            l.spec.dropout_rate = rate;
        }
    }

    pub fn has_dropout(&self) -> bool {
        self.layers.iter().any(|l| l.spec.dropout_rate > 0.0)
    }

    /// Mutable parameter views: per layer weight, bias (if any), gamma and beta (if any).
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.push(l.weight.data_mut());
            if !l.bias.is_empty() {
                out.push(&mut l.bias);
            }
            if let Some(bn) = &mut l.batch_norm {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight.data().len());
            if !l.bias.is_empty() {
                out.push(l.bias.len());
            }
            if let Some(bn) = &l.batch_norm {
                out.push(bn.gamma.len());
                out.push(bn.beta.len());
            }
        }
        out
    }

    /// Runs the network in its current mode. Train mode draws dropout masks
    /// from `rng` and updates batch-norm running statistics.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        batch: &Matrix,
        rng: &mut R,
    ) -> Result<(Matrix, ForwardCache)> {
        ensure!(
            batch.cols() == self.in_dim(),
            "input has {} columns, network expects {}",
            batch.cols(),
            self.in_dim()
        );
        let train = self.mode == Mode::Train;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = batch.clone();
        for layer in &mut self.layers {
            let (out, cache) = layer_forward(layer, x, train, rng)?;
            caches.push(cache);
            x = out;
        }
        ensure_finite(&x)?;
        Ok((
            x,
            ForwardCache {
                mode: self.mode,
                shapes: self.layers.iter().map(|l| l.weight.shape()).collect(),
                layers: caches,
            },
        ))
    }

    /// Eval-mode forward pass; never touches network state.
    pub fn infer(&self, batch: &Matrix) -> Result<Matrix> {
        ensure!(
            batch.cols() == self.in_dim(),
            "input has {} columns, network expects {}",
            batch.cols(),
            self.in_dim()
        );
        let mut x = batch.clone();
        for layer in &self.layers {
            let mut z = x.matmul_nt(&layer.weight)?;
            add_bias(&mut z, &layer.bias);
            if let Some(bn) = &layer.batch_norm {
                let cols = z.cols();
                for row in z.data_mut().chunks_exact_mut(cols) {
                    for (j, v) in row.iter_mut().enumerate() {
                        let xhat = (*v - bn.running_mean[j]) / (bn.running_var[j] + bn.eps).sqrt();
                        *v = bn.gamma[j] * xhat + bn.beta[j];
                    }
                }
            }
            let act = layer.spec.activation;
            z.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            x = z;
        }
        ensure_finite(&x)?;
        Ok(x)
    }

    /// Backpropagates `upstream` (dLoss/dOutput) through a train-mode cache.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<Gradients> {
        ensure!(
            cache.mode == Mode::Train,
            "backward requires a cache from a train-mode forward pass"
        );
        let shapes: Vec<_> = self.layers.iter().map(|l| l.weight.shape()).collect();
        ensure!(cache.shapes == shapes, "cache was produced by a different network");
        let batch = cache.layers[0].input.rows();
        ensure!(
            upstream.shape() == (batch, self.out_dim()),
            "upstream gradient shape {:?}, expected {:?}",
            upstream.shape(),
            (batch, self.out_dim())
        );

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = upstream.clone();
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            if let Some(mask) = &lc.mask {
                g.data_mut().iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
            }
            let act = layer.spec.activation;
            for ((v, &z), &a) in g
                .data_mut()
                .iter_mut()
                .zip(lc.pre.data())
                .zip(lc.act.data())
            {
                *v *= act.derivative(z, a);
            }

            let (bias, gamma, beta) = match (&layer.batch_norm, &lc.batch_norm) {
                (Some(bn), Some(bc)) => {
                    let (gamma, beta) = batch_norm_backward(&mut g, bn.gamma.as_slice(), bc);
                    (Vec::new(), gamma, beta)
                }
                _ => (g.column_sums(), Vec::new(), Vec::new()),
            };
            let weight = g.matmul_tn(&lc.input)?;
            let next = g.matmul(&layer.weight)?;
            grads.push(LayerGrads {
                weight,
                bias,
                gamma,
                beta,
            });
            g = next;
        }
        grads.reverse();
        Ok(Gradients {
            layers: grads,
            input: g,
        })
    }
}

fn check_chain(specs: &[LayerSpec]) -> Result<()> {
    ensure!(!specs.is_empty(), "network needs at least one layer");
    for s in specs {
        s.validate()?;
    }
    for (k, pair) in specs.windows(2).enumerate() {
        ensure!(
            pair[0].out_dim == pair[1].in_dim,
            "layer {k} outputs {} but layer {} expects {}",
            pair[0].out_dim,
            k + 1,
            pair[1].in_dim
        );
    }
    Ok(())
}

fn ensure_finite(m: &Matrix) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericOverflow(
            "network produced a non-finite output".into(),
        ))
    }
}

fn add_bias(z: &mut Matrix, bias: &[f64]) {
    if bias.is_empty() {
        return;
    }
    let cols = z.cols();
    for row in z.data_mut().chunks_exact_mut(cols) {
        row.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
    }
}

fn layer_forward<R: Rng + ?Sized>(
    layer: &mut DenseLayer,
    input: Matrix,
    train: bool,
    rng: &mut R,
) -> Result<(Matrix, LayerCache)> {
    let mut z = input.matmul_nt(&layer.weight)?;
    add_bias(&mut z, &layer.bias);

    let batch_norm = match &mut layer.batch_norm {
        Some(bn) if train => Some(batch_norm_train(&mut z, bn)),
        Some(bn) => {
            let cols = z.cols();
            for row in z.data_mut().chunks_exact_mut(cols) {
                for (j, v) in row.iter_mut().enumerate() {
                    let xhat = (*v - bn.running_mean[j]) / (bn.running_var[j] + bn.eps).sqrt();
                    *v = bn.gamma[j] * xhat + bn.beta[j];
                }
            }
            None
        }
        None => None,
    };

    let act_fn = layer.spec.activation;
    let act = z.map(|v| act_fn.apply(v));
    let rate = layer.spec.dropout_rate;
    let (out, mask) = if train && rate > 0.0 {
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..act.data().len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let mut out = act.clone();
        out.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        (out, Some(mask))
    } else {
        (act.clone(), None)
    };

    Ok((
        out,
        LayerCache {
            input,
            pre: z,
            act,
            mask,
            batch_norm,
        },
    ))
}

/// Normalizes `z` in place with batch statistics (population variance),
/// applies gamma/beta and updates the running estimates.
fn batch_norm_train(z: &mut Matrix, bn: &mut super::layer::BatchNormState) -> BatchNormCache {
    let (n, cols) = z.shape();
    let mean = z.column_means();
    let mut var = vec![0.0; cols];
    for row in z.row_iter() {
        for j in 0..cols {
            let d = row[j] - mean[j];
            var[j] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= n.max(1) as f64);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.eps).sqrt()).collect();

    let mut xhat = Matrix::zeros(n, cols);
    for (r, row) in z.data_mut().chunks_exact_mut(cols).enumerate() {
        let xr = xhat.row_mut(r);
        for j in 0..cols {
            let h = (row[j] - mean[j]) * inv_std[j];
            xr[j] = h;
            row[j] = bn.gamma[j] * h + bn.beta[j];
        }
    }
    let m = bn.momentum;
    for j in 0..cols {
        bn.running_mean[j] = (1.0 - m) * bn.running_mean[j] + m * mean[j];
        bn.running_var[j] = (1.0 - m) * bn.running_var[j] + m * var[j];
    }
    BatchNormCache { xhat, inv_std }
}

/// Turns `g` (dLoss/d(gamma*xhat+beta)) into dLoss/dz in place and returns
/// (dgamma, dbeta).
fn batch_norm_backward(g: &mut Matrix, gamma: &[f64], cache: &BatchNormCache) -> (Vec<f64>, Vec<f64>) {
    let (n, cols) = g.shape();
    let mut dgamma = vec![0.0; cols];
    let mut dbeta = vec![0.0; cols];
    for (row, xrow) in g.row_iter().zip(cache.xhat.row_iter()) {
        for j in 0..cols {
            dgamma[j] += row[j] * xrow[j];
            dbeta[j] += row[j];
        }
    }
    // dxhat = g * gamma; dz = inv_std / n * (n*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
    let nf = n as f64;
    let sum_dxhat: Vec<f64> = (0..cols).map(|j| dbeta[j] * gamma[j]).collect();
    let sum_dxhat_xhat: Vec<f64> = (0..cols).map(|j| dgamma[j] * gamma[j]).collect();
    for (r, row) in g.data_mut().chunks_exact_mut(cols).enumerate() {
        let xrow = cache.xhat.row(r);
        for j in 0..cols {
            let dxhat = row[j] * gamma[j];
            row[j] = cache.inv_std[j] / nf
                * (nf * dxhat - sum_dxhat[j] - xrow[j] * sum_dxhat_xhat[j]);
        }
    }
    (dgamma, dbeta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::layer::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn zero_weights_yield_bias_rows() {
        let mut net = MlpNet::zeroed(&[LayerSpec::new(3, 2, Activation::Identity)]).unwrap();
        net.layers_mut()[0].bias = vec![0.25, -1.5];
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-4.0, 0.5, 9.0]]).unwrap();
        let (y, _) = net.forward(&x, &mut rng()).unwrap();
        for row in y.row_iter() {
            assert_eq!(row, &[0.25, -1.5]);
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net = MlpNet::zeroed(&[LayerSpec::new(3, 3, Activation::Identity)]).unwrap();
        net.layers_mut()[0].weight = Matrix::identity(3);
        let x = Matrix::from_rows(&[vec![1.5, -2.0, 3.25]]).unwrap();
        let (y, _) = net.forward(&x, &mut rng()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn two_layer_hand_computation() {
        // W1 = [[1, -1], [0.5, 2], [-1, 1]], b1 = [0.1, -0.2, 0.3]
        // W2 = [[1, 2, -0.5]], b2 = [0.05]
        // x = (2, 1): z1 = (1.1, 2.8, -0.7) -> relu (1.1, 2.8, 0) -> 1.1 + 5.6 + 0.05 = 6.75
        // x = (-1, 3): z1 = (-3.9, 5.3, 4.3) -> (0, 5.3, 4.3) -> 10.6 - 2.15 + 0.05 = 8.5
        let mut net = MlpNet::zeroed(&[
            LayerSpec::new(2, 3, Activation::Relu),
            LayerSpec::new(3, 1, Activation::Identity),
        ])
        .unwrap();
        net.layers_mut()[0].weight =
            Matrix::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0], vec![-1.0, 1.0]]).unwrap();
        net.layers_mut()[0].bias = vec![0.1, -0.2, 0.3];
        net.layers_mut()[1].weight = Matrix::from_rows(&[vec![1.0, 2.0, -0.5]]).unwrap();
        net.layers_mut()[1].bias = vec![0.05];
        let x = Matrix::from_rows(&[vec![2.0, 1.0], vec![-1.0, 3.0]]).unwrap();
        let (y, _) = net.forward(&x, &mut rng()).unwrap();
        assert!((y.get(0, 0) - 6.75).abs() < 1e-12);
        assert!((y.get(1, 0) - 8.5).abs() < 1e-12);
        assert_eq!(net.infer(&x).unwrap(), y);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut net = MlpNet::new(
            &[
                LayerSpec::new(4, 5, Activation::Relu).with_batch_norm(),
                LayerSpec::new(5, 2, Activation::Identity),
            ],
            &mut rng(),
        )
        .unwrap();
        let x = Matrix::from_vec(3, 4, (0..12).map(|i| i as f64 * 0.1).collect()).unwrap();
        let (_, cache) = net.forward(&x, &mut rng()).unwrap();
        let g = net.backward(&cache, &Matrix::zeros(3, 2)).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
        assert!(g.input.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_gradient_is_outer_product() {
        // One sample, MSE: dW = (2/N) * residual * x^T with N = 1.
        let mut net = MlpNet::zeroed(&[LayerSpec::new(3, 2, Activation::Identity)]).unwrap();
        net.layers_mut()[0].weight =
            Matrix::from_rows(&[vec![0.5, -0.25, 1.0], vec![0.0, 2.0, -1.0]]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0, -1.0]]).unwrap();
        let target = Matrix::from_rows(&[vec![0.5, 1.0]]).unwrap();
        let (y, cache) = net.forward(&x, &mut rng()).unwrap();
        let (_, upstream) = crate::numerics::mse_loss(&y, &target).unwrap();
        let g = net.backward(&cache, &upstream).unwrap();
        // y = (-1, 5); residual = (-1.5, 4)
        let resid = [-1.5, 4.0];
        for i in 0..2 {
            for j in 0..3 {
                let expect = 2.0 * resid[i] * x.get(0, j);
                assert!((g.layers[0].weight.get(i, j) - expect).abs() < 1e-12);
            }
            assert!((g.layers[0].bias[i] - 2.0 * resid[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_rejects_eval_cache_and_foreign_cache() {
        let specs = [LayerSpec::new(2, 2, Activation::Identity)];
        let mut net = MlpNet::new(&specs, &mut rng()).unwrap();
        let x = Matrix::zeros(1, 2);
        net.set_mode(Mode::Eval);
        let (_, cache) = net.forward(&x, &mut rng()).unwrap();
        assert!(net.backward(&cache, &Matrix::zeros(1, 2)).is_err());

        net.set_mode(Mode::Train);
        let (_, cache) = net.forward(&x, &mut rng()).unwrap();
        let other = MlpNet::new(&[LayerSpec::new(2, 3, Activation::Identity)], &mut rng()).unwrap();
        assert!(other.backward(&cache, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn dimension_mismatch_errors() {
        assert!(MlpNet::zeroed(&[
            LayerSpec::new(2, 3, Activation::Relu),
            LayerSpec::new(4, 1, Activation::Identity),
        ])
        .is_err());
        let mut net = MlpNet::zeroed(&[LayerSpec::new(2, 3, Activation::Relu)]).unwrap();
        assert!(net.forward(&Matrix::zeros(1, 5), &mut rng()).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let mut net = MlpNet::zeroed(&[LayerSpec::new(1, 1, Activation::Identity)]).unwrap();
        net.layers_mut()[0].weight = Matrix::filled(1, 1, f64::MAX);
        let x = Matrix::filled(1, 1, 10.0);
        assert!(matches!(
            net.forward(&x, &mut rng()),
            Err(Error::NumericOverflow(_))
        ));
    }

    #[test]
    fn batch_norm_normalizes_in_train_mode() {
        let mut net = MlpNet::new(
            &[LayerSpec::new(3, 4, Activation::Relu).with_batch_norm()],
            &mut rng(),
        )
        .unwrap();
        // Large inputs keep the batch variance well above eps.
        let x = Matrix::from_vec(
            8,
            3,
            (0..24).map(|i| ((i * 7919) % 23) as f64 * 40.0 - 300.0).collect(),
        )
        .unwrap();
        let (_, cache) = net.forward(&x, &mut rng()).unwrap();
        let xhat = cache.normalized(0).unwrap();
        for j in 0..4 {
            let col: Vec<f64> = (0..8).map(|r| xhat.get(r, j)).collect();
            let mean = col.iter().sum::<f64>() / 8.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-9, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-6, "var {var}");
        }
    }

    #[test]
    fn eval_mode_is_mask_free_and_repeatable() {
        let mut net = MlpNet::new(
            &[
                LayerSpec::new(3, 16, Activation::Relu).with_dropout(0.5),
                LayerSpec::new(16, 2, Activation::Identity),
            ],
            &mut rng(),
        )
        .unwrap();
        net.set_mode(Mode::Eval);
        let x = Matrix::filled(4, 3, 0.7);
        let (a, cache) = net.forward(&x, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (b, _) = net.forward(&x, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
        assert!(cache.dropout_mask(0).is_none());
        assert_eq!(a, net.infer(&x).unwrap());
    }
}
