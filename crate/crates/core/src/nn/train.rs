use ndarray::{Array1, Array2, Axis};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mlp::{Activation, MlpModel};
use super::tape::Tape;
use super::triplet::{mine_triplets, Triplet, TripletMiningConfig};
use super::NnError;
use crate::dr::{ChannelChart, Method, TrainingMeta};
use crate::features::{feature_matrix, FeatureVector};
use crate::Point2;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: vec![256, 128, 64], latent_dim: 2, activation: Activation::Relu }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Step decay: the learning rate is multiplied by `decay_factor` every
    /// `decay_every` epochs.
    pub decay_every: usize,
    pub decay_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 0.01,
            batch_size: 128,
            seed: 0,
            optimizer: Optimizer::SgdMomentum { momentum: 0.9 },
            decay_every: 10,
            decay_factor: 0.5,
        }
    }
}

/// Samples with known physical positions, used as a supervised regularizer.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorSet {
    pub anchors: Vec<(u64, Point2)>,
    /// Weight λ of the anchor term.
    pub weight: f64,
}

impl AnchorSet {
    /// One anchor per `interval` seconds: the first sample at or after each
    /// instant `t0 + k·interval`. `samples` holds (sample_id, timestamp,
    /// position) sorted by timestamp.
    pub fn every(samples: &[(u64, f64, Point2)], interval: f64, weight: f64) -> Result<Self, NnError> {
        if !(interval > 0.0) {
            return Err(NnError::InvalidConfig("anchor interval must be positive".into()));
        }
        let mut anchors = Vec::new();
        let Some(&(_, t0, _)) = samples.first() else {
            return Ok(Self { anchors, weight });
        };
        let mut next = t0;
        for &(id, t, p) in samples {
            if t >= next - 1e-9 {
                anchors.push((id, p));
                while next <= t + 1e-9 {
                    next += interval;
                }
            }
        }
        Ok(Self { anchors, weight })
    }
}

/// Per-layer parameter gradients (weights, bias).
pub type ParamGradients = Vec<(Array2<f64>, Array1<f64>)>;

/// Total batch loss and its gradient with respect to every model parameter:
/// mean triplet hinge loss over `triplets` plus `lambda` times the mean
/// squared anchor error over `anchors` (row index into `x`, target).
///
/// `x` holds raw (unstandardized) features, one row per sample.
pub fn loss_and_gradient(
    model: &MlpModel,
    x: &Array2<f64>,
    triplets: &[Triplet],
    anchors: &[(usize, Point2)],
    margin: f64,
    lambda: f64,
) -> (f64, ParamGradients) {
    let b = triplets.len();
    let k = if lambda > 0.0 { anchors.len() } else { 0 };
    let mut rows: Vec<usize> = Vec::with_capacity(3 * b + k);
    rows.extend(triplets.iter().map(|t| t.anchor));
    rows.extend(triplets.iter().map(|t| t.positive));
    rows.extend(triplets.iter().map(|t| t.negative));
    rows.extend(anchors.iter().take(k).map(|a| a.0));
    let batch = model.standardize(&x.select(Axis(0), &rows));

    let mut tape = Tape::new();
    let input = tape.leaf(batch);
    let (out, params) = model.record(&mut tape, input);
    let mut terms = Vec::new();
    if b > 0 {
        let a = tape.rows(out, 0, b);
        let p = tape.rows(out, b, b);
        let n = tape.rows(out, 2 * b, b);
        let ap = tape.sub(a, p);
        let an = tape.sub(a, n);
        let dap = tape.row_norm(ap);
        let dan = tape.row_norm(an);
        let gap = tape.sub(dap, dan);
        let shifted = tape.add_scalar(gap, margin);
        let hinge = tape.relu(shifted);
        terms.push(tape.mean(hinge));
    }
    if k > 0 {
        let z = tape.rows(out, 3 * b, k);
        let targets = Array2::from_shape_fn((k, 2), |(i, j)| anchors[i].1[j]);
        let t = tape.leaf(targets);
        let err = tape.sub(z, t);
        let sq = tape.row_sum_sq(err);
        let mean = tape.mean(sq);
        terms.push(tape.scale(mean, lambda));
    }
    let total = match terms.as_slice() {
        [] => return (0.0, zero_gradients(model)),
        [one] => *one,
        [first, second] => tape.add(*first, *second),
        _ => unreachable!(),
    };
    let loss = tape.scalar(total);
    let mut grads = tape.backward(total);
    let pg = params
        .iter()
        .zip(&model.layers)
        .map(|(&(w, bv), layer)| {
            let gw = grads.take(w).unwrap_or_else(|| Array2::zeros(layer.weights.raw_dim()));
            let gb = grads.take(bv).map_or_else(|| Array1::zeros(layer.bias.len()), |g| g.row(0).to_owned());
            (gw, gb)
        })
        .collect();
    (loss, pg)
}

fn zero_gradients(model: &MlpModel) -> ParamGradients {
    model
        .layers
        .iter()
        .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len())))
        .collect()
}

struct OptimizerState {
    first: ParamGradients,
    second: ParamGradients,
    step: i32,
}

impl OptimizerState {
    fn new(model: &MlpModel) -> Self {
        Self { first: zero_gradients(model), second: zero_gradients(model), step: 0 }
    }

    fn apply(&mut self, model: &mut MlpModel, grads: &ParamGradients, opt: Optimizer, lr: f64) {
        self.step += 1;
        for (li, layer) in model.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads[li];
            match opt {
                Optimizer::SgdMomentum { momentum } => {
                    let (vw, vb) = &mut self.first[li];
                    vw.zip_mut_with(gw, |v, &g| *v = momentum * *v - lr * g);
                    vb.zip_mut_with(gb, |v, &g| *v = momentum * *v - lr * g);
                    layer.weights += &*vw;
                    layer.bias += &*vb;
                }
                Optimizer::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(self.step);
                    let c2 = 1.0 - beta2.powi(self.step);
                    let (mw, mb) = &mut self.first[li];
                    let (sw, sb) = &mut self.second[li];
                    mw.zip_mut_with(gw, |m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
                    mb.zip_mut_with(gb, |m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
                    sw.zip_mut_with(gw, |s, &g| *s = beta2 * *s + (1.0 - beta2) * g * g);
                    sb.zip_mut_with(gb, |s, &g| *s = beta2 * *s + (1.0 - beta2) * g * g);
                    ndarray::Zip::from(&mut layer.weights)
                        .and(&*mw)
                        .and(&*sw)
                        .for_each(|p, &m, &s| *p -= lr * (m / c1) / ((s / c2).sqrt() + eps));
                    ndarray::Zip::from(&mut layer.bias)
                        .and(&*mb)
                        .and(&*sb)
                        .for_each(|p, &m, &s| *p -= lr * (m / c1) / ((s / c2).sqrt() + eps));
                }
            }
        }
    }
}

/// Spread of anchor targets in chart units, relative to the triplet margin.
const ANCHOR_FRAME_RADIUS: f64 = 10.0;

/// Center and meters-per-unit scale of the anchor fitting frame.
fn anchor_frame(anchors: &[(usize, Point2)], margin: f64) -> (Point2, f64) {
    if anchors.is_empty() {
        return ([0.0, 0.0], 1.0);
    }
    let k = anchors.len() as f64;
    let c = [
        anchors.iter().map(|a| a.1[0]).sum::<f64>() / k,
        anchors.iter().map(|a| a.1[1]).sum::<f64>() / k,
    ];
    let rms = (anchors.iter().map(|a| (a.1[0] - c[0]).powi(2) + (a.1[1] - c[1]).powi(2)).sum::<f64>() / k).sqrt();
    let scale = if rms > 0.0 { rms / (ANCHOR_FRAME_RADIUS * margin.max(f64::MIN_POSITIVE)) } else { 1.0 };
    (c, scale)
}

/// Per-dimension mean and inverse standard deviation (1 for constant columns).
fn standardization(x: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    let mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
    let std = x.std_axis(Axis(0), 0.0);
    let scale = std.mapv(|s| if s > 1e-12 { 1.0 / s } else { 1.0 });
    (mean, scale)
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    // splitmix64 step keeps per-epoch streams decorrelated.
    let mut z = seed.wrapping_add((epoch as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A trained model and its per-epoch mean batch loss.
#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub model: MlpModel,
    pub loss_trace: Vec<f64>,
}

/// Trains a triplet network on `features`, mining triplets from their
/// timestamps each epoch. With `anchors`, every batch also includes (up to
/// `batch_size` of) the anchor samples.
pub fn train(
    features: &[FeatureVector],
    model_config: &ModelConfig,
    mining: &TripletMiningConfig,
    anchors: Option<&AnchorSet>,
    config: &TrainConfig,
) -> Result<TrainingOutcome, NnError> {
    if config.epochs < 1 {
        return Err(NnError::InvalidConfig("epochs must be at least 1".into()));
    }
    if config.batch_size < 1 || !(config.lr > 0.0) {
        return Err(NnError::InvalidConfig("batch_size and lr must be positive".into()));
    }
    if config.decay_every < 1 || !(config.decay_factor > 0.0) {
        return Err(NnError::InvalidConfig("decay_every and decay_factor must be positive".into()));
    }
    if features.is_empty() {
        return Err(NnError::InvalidConfig("no training features".into()));
    }
    let x = feature_matrix(features)?;
    let timestamps: Vec<f64> = features.iter().map(|f| f.timestamp).collect();

    let (lambda, anchor_rows) = match anchors {
        Some(set) if set.weight > 0.0 => {
            if set.anchors.is_empty() {
                return Err(NnError::EmptyAnchorSet);
            }
            if model_config.latent_dim != 2 {
                return Err(NnError::InvalidConfig("anchor positions are 2D; latent_dim must be 2".into()));
            }
            let rows = set
                .anchors
                .iter()
                .map(|&(id, p)| {
                    features.iter().position(|f| f.sample_id == id).map(|r| (r, p)).ok_or(NnError::UnknownAnchor(id))
                })
                .collect::<Result<Vec<_>, _>>()?;
            (set.weight, rows)
        }
        Some(set) if set.weight < 0.0 || !set.weight.is_finite() => {
            return Err(NnError::InvalidConfig("anchor weight must be non-negative".into()));
        }
        _ => (0.0, Vec::new()),
    };
    // Anchor targets are fitted in a centered frame whose spread matches a
    // triplet chart at this margin; the frame is undone in the last layer
    // after training so the model outputs positions in meters.
    let frame = anchor_frame(&anchor_rows, mining.margin);
    let anchor_rows: Vec<(usize, Point2)> = anchor_rows
        .iter()
        .map(|&(r, p)| (r, [(p[0] - frame.0[0]) / frame.1, (p[1] - frame.0[1]) / frame.1]))
        .collect();
    if mining.triplets_per_epoch == 0 && anchor_rows.is_empty() {
        return Err(NnError::InvalidConfig("nothing to train on: zero triplets and no anchors".into()));
    }
    if mining.triplets_per_epoch > 0 {
        mining.validate()?;
    }

    let mut widths = vec![x.ncols()];
    widths.extend(&model_config.hidden);
    widths.push(model_config.latent_dim);
    let mut model = MlpModel::new(&widths, model_config.activation, config.seed)?;
    let (mean, scale) = standardization(&x);
    model.input_mean = mean;
    model.input_scale = scale;

    let mut state = OptimizerState::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.lr * config.decay_factor.powi((epoch / config.decay_every) as i32);
        let triplets = if mining.triplets_per_epoch > 0 {
            mine_triplets(&timestamps, mining, epoch_seed(config.seed, epoch))?
        } else {
            Vec::new()
        };
        let steps = if triplets.is_empty() {
            anchor_rows.len().div_ceil(config.batch_size)
        } else {
            triplets.len().div_ceil(config.batch_size)
        };
        let mut total = 0.0;
        for step in 0..steps {
            let lo = (step * config.batch_size).min(triplets.len());
            let hi = ((step + 1) * config.batch_size).min(triplets.len());
            let batch_anchors: Vec<(usize, Point2)> = if anchor_rows.len() <= config.batch_size {
                anchor_rows.clone()
            } else {
                sample_indices(&mut rng, anchor_rows.len(), config.batch_size)
                    .into_iter()
                    .map(|i| anchor_rows[i])
                    .collect()
            };
            let (loss, grads) = loss_and_gradient(&model, &x, &triplets[lo..hi], &batch_anchors, mining.margin, lambda);
            if !loss.is_finite() {
                return Err(NnError::Divergence { epoch });
            }
            state.apply(&mut model, &grads, config.optimizer, lr);
            total += loss;
        }
        let epoch_loss = total / steps.max(1) as f64;
        if !epoch_loss.is_finite() || model.validate().is_err() {
            return Err(NnError::Divergence { epoch });
        }
        log::debug!("epoch {epoch}: loss {epoch_loss:.6}");
        trace.push(epoch_loss);
    }
    if !anchor_rows.is_empty() {
        let last = model.layers.last_mut().expect("model has layers");
        last.weights *= frame.1;
        for j in 0..2 {
            last.bias[j] = last.bias[j] * frame.1 + frame.0[j];
        }
    }
    Ok(TrainingOutcome { model, loss_trace: trace })
}

/// Maps every feature through `model`; the chart keeps a copy of the model.
pub fn chart_from_model(model: &MlpModel, features: &[FeatureVector]) -> Result<ChannelChart, NnError> {
    let x = feature_matrix(features)?;
    if features.is_empty() {
        return Err(NnError::InvalidConfig("no features to chart".into()));
    }
    let coords = model.forward_batch(&x)?;
    let meta = TrainingMeta { seed: model.seed, ..TrainingMeta::default() };
    let mut chart = ChannelChart::new(coords, features.iter().map(|f| f.sample_id).collect(), Method::TripletNet, meta)
        .map_err(|e| NnError::InvalidConfig(e.to_string()))?;
    chart.model = Some(model.clone());
    Ok(chart)
}
