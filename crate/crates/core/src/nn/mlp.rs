use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::tape::{Tape, Var};
use super::NnError;
use crate::par;
use crate::features::FeatureVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub(crate) fn code(self) -> u64 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    pub(crate) fn from_code(c: u64) -> Option<Self> {
        match c {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        })
    }
}

impl FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

/// Fully-connected layer `y = x W + b`, `W` of shape in × out.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Feed-forward network mapping a feature vector to a chart point.
///
/// Inputs are standardized as `(x − input_mean) ⊙ input_scale` before the
/// first layer. Hidden layers use `activation`; the output layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<DenseLayer>,
    pub activation: Activation,
    pub input_mean: Array1<f64>,
    pub input_scale: Array1<f64>,
    pub seed: u64,
}

impl MlpModel {
    /// Random initialization: He-normal for relu, Glorot-normal for tanh,
    /// zero biases, identity standardization.
    pub fn new(widths: &[usize], activation: Activation, seed: u64) -> Result<Self, NnError> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(NnError::InvalidConfig(format!("invalid layer widths {widths:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let var = match activation {
                    Activation::Relu => 2.0 / fan_in as f64,
                    Activation::Tanh => 2.0 / (fan_in + fan_out) as f64,
                };
                let dist = Normal::new(0.0, var.sqrt()).expect("finite variance");
                DenseLayer {
                    weights: Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(&mut rng)),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self {
            layers,
            activation,
            input_mean: Array1::zeros(widths[0]),
            input_scale: Array1::ones(widths[0]),
            seed,
        })
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.bias.len()));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weights.nrows())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.ncols())
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Checks widths chain correctly and all parameters are finite.
    pub fn validate(&self) -> Result<(), NnError> {
        if self.layers.is_empty() {
            return Err(NnError::InvalidConfig("model has no layers".into()));
        }
        for w in self.layers.windows(2) {
            if w[0].weights.ncols() != w[1].weights.nrows() {
                return Err(NnError::InvalidConfig("layer widths do not chain".into()));
            }
        }
        for l in &self.layers {
            if l.bias.len() != l.weights.ncols() {
                return Err(NnError::InvalidConfig("bias length does not match layer width".into()));
            }
        }
        let f = self.input_dim();
        if self.input_mean.len() != f || self.input_scale.len() != f {
            return Err(NnError::InvalidConfig("standardization length does not match input width".into()));
        }
        let finite = self.layers.iter().all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
            && self.input_mean.iter().chain(self.input_scale.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(NnError::InvalidConfig("model parameters must be finite".into()));
        }
        Ok(())
    }

    pub(crate) fn standardize(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.input_mean.view().insert_axis(Axis(0))) * &self.input_scale.view().insert_axis(Axis(0))
    }

    /// Maps one input vector to the latent space.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch { expected: self.input_dim(), found: x.len() });
        }
        let mut h: Vec<f64> = x
            .iter()
            .zip(self.input_mean.iter().zip(self.input_scale.iter()))
            .map(|(v, (m, s))| (v - m) * s)
            .collect();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut out = layer.bias.to_vec();
            for (i, &hi) in h.iter().enumerate() {
                if hi == 0.0 {
                    continue;
                }
                for (o, &w) in out.iter_mut().zip(layer.weights.row(i).iter()) {
                    *o += hi * w;
                }
            }
            if li < last {
                out.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            h = out;
        }
        Ok(h)
    }

    /// Row-wise forward pass over an N × F matrix. Each row goes through
    /// [`MlpModel::forward`], so batch and single-sample results agree bitwise.
    pub fn forward_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::DimensionMismatch { expected: self.input_dim(), found: x.ncols() });
        }
        let rows = par::map_range(x.nrows(), |i| self.forward(&x.row(i).to_vec()));
        let mut out = Array2::zeros((x.nrows(), self.output_dim()));
        for (i, r) in rows.into_iter().enumerate() {
            for (o, v) in out.row_mut(i).iter_mut().zip(r?) {
                *o = v;
            }
        }
        Ok(out)
    }

    /// Records the network on `tape` for already-standardized input `x`.
    /// Returns the output node and the (weight, bias) leaves per layer.
    pub(crate) fn record(&self, tape: &mut Tape, x: Var) -> (Var, Vec<(Var, Var)>) {
        let mut params = Vec::with_capacity(self.layers.len());
        let mut h = x;
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let w = tape.leaf(layer.weights.clone());
            let b = tape.leaf(layer.bias.clone().insert_axis(Axis(0)));
            params.push((w, b));
            let z = tape.matmul(h, w);
            h = tape.add_bias(z, b);
            if li < last {
                h = match self.activation {
                    Activation::Relu => tape.relu(h),
                    Activation::Tanh => tape.tanh(h),
                };
            }
        }
        (h, params)
    }
}

/// Chart point of one feature vector.
pub fn forward(model: &MlpModel, feature: &FeatureVector) -> Result<Vec<f64>, NnError> {
    model.forward(&feature.values)
}
