use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NnError;

/// `max(0, ‖a − p‖ − ‖a − n‖ + margin)` with plain Euclidean distances.
pub fn triplet_loss(anchor: &[f64], positive: &[f64], negative: &[f64], margin: f64) -> f64 {
    let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    (d(anchor, positive) - d(anchor, negative) + margin).max(0.0)
}

/// Time-based triplet selection: positives are at most `t_close` seconds from
/// the anchor, negatives at least `t_far` seconds away.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletMiningConfig {
    pub t_close: f64,
    pub t_far: f64,
    pub triplets_per_epoch: usize,
    pub margin: f64,
}

impl Default for TripletMiningConfig {
    fn default() -> Self {
        Self { t_close: 2.0, t_far: 60.0, triplets_per_epoch: 20_000, margin: 1.0 }
    }
}

impl TripletMiningConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.t_close > 0.0 && self.t_close < self.t_far && self.t_far.is_finite()) {
            return Err(NnError::InvalidConfig(format!(
                "need 0 < t_close < t_far, got t_close = {}, t_far = {}",
                self.t_close, self.t_far
            )));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(NnError::InvalidConfig(format!("margin must be positive, got {}", self.margin)));
        }
        Ok(())
    }
}

/// Indices (into the mined timestamp slice) of one training triplet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Eligible index ranges for one anchor, in time-sorted order.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Eligibility {
    /// Positives: `pos_lo..pos_hi` without the anchor itself.
    pub pos_lo: usize,
    pub pos_hi: usize,
    /// Negatives: `0..neg_before` and `neg_after..n`.
    pub neg_before: usize,
    pub neg_after: usize,
}

impl Eligibility {
    pub fn positives(&self) -> usize {
        self.pos_hi - self.pos_lo - 1
    }

    pub fn negatives(&self, n: usize) -> usize {
        self.neg_before + (n - self.neg_after)
    }
}

pub(crate) fn eligibility(sorted: &[f64], a: usize, cfg: &TripletMiningConfig) -> Eligibility {
    let t = sorted[a];
    Eligibility {
        pos_lo: sorted.partition_point(|&s| s < t - cfg.t_close),
        pos_hi: sorted.partition_point(|&s| s <= t + cfg.t_close),
        neg_before: sorted.partition_point(|&s| s <= t - cfg.t_far),
        neg_after: sorted.partition_point(|&s| s < t + cfg.t_far),
    }
}

/// Draws `config.triplets_per_epoch` triplets: the anchor uniformly among
/// samples that have at least one eligible positive and negative, then the
/// positive and negative uniformly among the anchor's eligible sets.
///
/// Timestamps need not be sorted; returned indices refer to `timestamps`.
pub fn mine_triplets(timestamps: &[f64], config: &TripletMiningConfig, seed: u64) -> Result<Vec<Triplet>, NnError> {
    config.validate()?;
    let n = timestamps.len();
    if timestamps.iter().any(|t| !t.is_finite()) {
        return Err(NnError::InvalidConfig("timestamps must be finite".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| timestamps[a].total_cmp(&timestamps[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| timestamps[i]).collect();
    let eligible: Vec<(usize, Eligibility)> = (0..n)
        .map(|a| (a, eligibility(&sorted, a, config)))
        .filter(|(_, e)| e.positives() > 0 && e.negatives(n) > 0)
        .collect();
    if eligible.is_empty() {
        return Err(NnError::InsufficientTemporalDiversity(format!(
            "no sample has a positive within {} s and a negative beyond {} s",
            config.t_close, config.t_far
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(config.triplets_per_epoch);
    for _ in 0..config.triplets_per_epoch {
        let (a, e) = eligible[rng.random_range(0..eligible.len())];
        let mut p = e.pos_lo + rng.random_range(0..e.positives());
        if p >= a {
            p += 1;
        }
        let k = rng.random_range(0..e.negatives(n));
        let neg = if k < e.neg_before { k } else { e.neg_after + (k - e.neg_before) };
        out.push(Triplet { anchor: order[a], positive: order[p], negative: order[neg] });
    }
    Ok(out)
}
