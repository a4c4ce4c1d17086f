//! Dense layers: affine map, optional batch normalization, activation, dropout.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{ensure, Result};

pub const BATCH_NORM_MOMENTUM: f64 = 0.1;
pub const BATCH_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative given the pre-activation `z` and the activation `a = apply(z)`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }

    pub fn validate(self) -> Result<()> {
        if let Activation::LeakyRelu { slope } = self {
            ensure!(
                slope > 0.0 && slope < 1.0,
                "LeakyReLU slope must lie in (0, 1), got {slope}"
            );
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    #[serde(default)]
    pub dropout_rate: f64,
    #[serde(default)]
    pub batch_norm: bool,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
            dropout_rate: 0.0,
            batch_norm: false,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn with_batch_norm(mut self) -> Self {
        self.batch_norm = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.in_dim > 0 && self.out_dim > 0,
            "layer dimensions must be positive, got {}x{}",
            self.in_dim,
            self.out_dim
        );
        ensure!(
            (0.0..1.0).contains(&self.dropout_rate),
            "dropout rate must lie in [0, 1), got {}",
            self.dropout_rate
        );
        self.activation.validate()
    }
}

/// Learned scale/shift plus running statistics used in eval mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: vec![1.0; features],
            beta: vec![0.0; features],
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: BATCH_NORM_MOMENTUM,
            eps: BATCH_NORM_EPS,
        }
    }
}

/// One fully connected layer. Layers with batch normalization carry no bias;
/// `beta` plays that role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub spec: LayerSpec,
    /// `out_dim x in_dim`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub batch_norm: Option<BatchNormState>,
}

impl DenseLayer {
    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let limit = (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite positive limit");
        let data = (0..spec.in_dim * spec.out_dim)
            .map(|_| dist.sample(rng))
            .collect();
        let weight = Matrix::from_vec(spec.out_dim, spec.in_dim, data)?;
        Ok(Self::with_weight(spec, weight))
    }

    pub fn zeroed(spec: LayerSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self::with_weight(spec, Matrix::zeros(spec.out_dim, spec.in_dim)))
    }

    fn with_weight(spec: LayerSpec, weight: Matrix) -> Self {
        let (bias, batch_norm) = if spec.batch_norm {
            (Vec::new(), Some(BatchNormState::new(spec.out_dim)))
        } else {
            (vec![0.0; spec.out_dim], None)
        };
        Self {
            spec,
            weight,
            bias,
            batch_norm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        ensure!(
            self.weight.shape() == (self.spec.out_dim, self.spec.in_dim),
            "weight shape {:?} does not match layer {}x{}",
            self.weight.shape(),
            self.spec.out_dim,
            self.spec.in_dim
        );
        match &self.batch_norm {
            Some(bn) => {
                let n = self.spec.out_dim;
                ensure!(self.bias.is_empty(), "batch-norm layer must not carry a bias");
                ensure!(
                    bn.gamma.len() == n
                        && bn.beta.len() == n
                        && bn.running_mean.len() == n
                        && bn.running_var.len() == n,
                    "batch-norm state length mismatch"
                );
            }
            None => {
                ensure!(!self.spec.batch_norm, "layer declares batch norm but has no state");
                ensure!(
                    self.bias.len() == self.spec.out_dim,
                    "bias length {} does not match {}",
                    self.bias.len(),
                    self.spec.out_dim
                );
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let bn = self.batch_norm.as_ref().map_or(0, |b| b.gamma.len() * 2);
        self.weight.data().len() + self.bias.len() + bn
    }
}
