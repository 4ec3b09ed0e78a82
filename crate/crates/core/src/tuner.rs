//! Random configuration search with successive halving.
//!
//! Trials are ranked by validation RMSE in mm, which stays comparable across
//! trials with different SmoothL1 thresholds. Diverged trials are dropped
//! before ranking; each round keeps the best `⌈n / eta⌉` of the rest.

use std::io::Write;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Examples, InitScheme, LayerSpec, ModelConfig, Network, TrainConfig, Trainer, OUTPUT_SIZE};
use crate::optics::sample_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    /// Inclusive range of convolution layers.
    pub n_conv: [usize; 2],
    /// Inclusive range of hidden fully connected layers.
    pub n_fc: [usize; 2],
    pub bn_per_layer: Vec<bool>,
    pub dropout_after_fc: Vec<bool>,
    pub dropout_rate: [f64; 2],
    pub stride: Vec<usize>,
    pub pool_kernel: Vec<usize>,
    pub init_scheme: Vec<InitScheme>,
    pub learning_rate: Vec<f64>,
    pub sort_conv: Vec<bool>,
    pub l2: Vec<f64>,
    pub smooth_l1_beta: [f64; 2],
    pub channels: Vec<usize>,
    pub fc_units: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            n_conv: [1, 20],
            n_fc: [1, 20],
            bn_per_layer: vec![false, true],
            dropout_after_fc: vec![false, true],
            dropout_rate: [0.1, 0.8],
            stride: vec![1, 2],
            pool_kernel: vec![2, 3],
            init_scheme: InitScheme::ALL.to_vec(),
            learning_rate: vec![1e-2, 1e-3, 1e-4, 1e-5],
            sort_conv: vec![false, true],
            l2: vec![0.1, 0.01, 0.001, 0.0001, 0.00001, 0.0],
            smooth_l1_beta: [0.0, 5.0],
            channels: vec![16, 32, 64, 128, 256],
            fc_units: vec![256],
        }
    }
}

/// One point of a [`SearchSpace`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    pub channels: Vec<usize>,
    pub n_fc: usize,
    pub fc_units: usize,
    pub bn_per_layer: bool,
    pub dropout_after_fc: bool,
    pub dropout_rate: f64,
    pub stride: usize,
    pub pool_kernel: usize,
    pub init_scheme: InitScheme,
    pub learning_rate: f64,
    pub sort_conv: bool,
    pub l2: f64,
    pub smooth_l1_beta: f64,
}

fn cfg_err(m: &str) -> Error {
    Error::Config(m.into())
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let range = |r: [usize; 2]| r[0] >= 1 && r[0] <= r[1];
        if !range(self.n_conv) || !range(self.n_fc) {
            return Err(cfg_err("layer count ranges must satisfy 1 <= min <= max"));
        }
        let frange = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !frange(self.dropout_rate) || self.dropout_rate[0] < 0.0 || self.dropout_rate[1] >= 1.0 {
            return Err(cfg_err("dropout range must lie in [0, 1)"));
        }
        if !frange(self.smooth_l1_beta) || self.smooth_l1_beta[0] < 0.0 {
            return Err(cfg_err("beta range must be finite and non-negative"));
        }
        if self.bn_per_layer.is_empty()
            || self.dropout_after_fc.is_empty()
            || self.stride.is_empty()
            || self.pool_kernel.is_empty()
            || self.init_scheme.is_empty()
            || self.learning_rate.is_empty()
            || self.sort_conv.is_empty()
            || self.l2.is_empty()
            || self.channels.is_empty()
            || self.fc_units.is_empty()
        {
            return Err(cfg_err("every menu needs at least one entry"));
        }
        let positive = |v: &[usize]| v.iter().all(|&x| x > 0);
        if !positive(&self.stride) || !positive(&self.pool_kernel) || !positive(&self.channels) || !positive(&self.fc_units) {
            return Err(cfg_err("strides, pool kernels and widths must be positive"));
        }
        if !self.learning_rate.iter().all(|&x| x > 0.0) || !self.l2.iter().all(|&x| x >= 0.0) {
            return Err(cfg_err("learning rates must be positive and l2 non-negative"));
        }
        Ok(())
    }

    pub fn contains(&self, h: &Hyperparams) -> bool {
        let n = h.channels.len();
        let within = |r: [f64; 2], x: f64| x >= r[0] && x <= r[1];
        n >= self.n_conv[0]
            && n <= self.n_conv[1]
            && h.n_fc >= self.n_fc[0]
            && h.n_fc <= self.n_fc[1]
            && h.channels.iter().all(|c| self.channels.contains(c))
            && (!h.sort_conv || h.channels.windows(2).all(|w| w[0] <= w[1]))
            && self.fc_units.contains(&h.fc_units)
            && self.bn_per_layer.contains(&h.bn_per_layer)
            && self.dropout_after_fc.contains(&h.dropout_after_fc)
            && within(self.dropout_rate, h.dropout_rate)
            && self.stride.contains(&h.stride)
            && self.pool_kernel.contains(&h.pool_kernel)
            && self.init_scheme.contains(&h.init_scheme)
            && self.learning_rate.contains(&h.learning_rate)
            && self.sort_conv.contains(&h.sort_conv)
            && self.l2.contains(&h.l2)
            && within(self.smooth_l1_beta, h.smooth_l1_beta)
    }
}

fn pick<T: Copy>(menu: &[T], rng: &mut impl Rng) -> T {
    *menu.choose(rng).expect("validated menu")
}

fn uniform(r: [f64; 2], rng: &mut impl Rng) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

/// Uniform draw per dimension. With `sort_conv` the channel counts are
/// arranged non-decreasing.
pub fn sample_config(space: &SearchSpace, rng: &mut impl Rng) -> Result<Hyperparams> {
    space.validate()?;
    let n_conv = rng.random_range(space.n_conv[0]..=space.n_conv[1]);
    let n_fc = rng.random_range(space.n_fc[0]..=space.n_fc[1]);
    let mut channels: Vec<usize> = (0..n_conv).map(|_| pick(&space.channels, rng)).collect();
    let sort_conv = pick(&space.sort_conv, rng);
    if sort_conv {
        channels.sort_unstable();
    }
    Ok(Hyperparams {
        channels,
        n_fc,
        fc_units: pick(&space.fc_units, rng),
        bn_per_layer: pick(&space.bn_per_layer, rng),
        dropout_after_fc: pick(&space.dropout_after_fc, rng),
        dropout_rate: uniform(space.dropout_rate, rng),
        stride: pick(&space.stride, rng),
        pool_kernel: pick(&space.pool_kernel, rng),
        init_scheme: pick(&space.init_scheme, rng),
        learning_rate: pick(&space.learning_rate, rng),
        sort_conv,
        l2: pick(&space.l2, rng),
        smooth_l1_beta: uniform(space.smooth_l1_beta, rng),
    })
}

impl Hyperparams {
    /// Network layout: each convolution is followed by ReLU, optional batch
    /// norm and a pooling layer while the sequence is long enough to pool;
    /// each hidden linear layer by ReLU, optional batch norm and dropout.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut layers = Vec::new();
        let mut shape = vec![crate::nn::INPUT_CHANNELS, crate::nn::INPUT_LEN];
        let push = |layers: &mut Vec<LayerSpec>, l: LayerSpec, shape: &mut Vec<usize>| -> Result<()> {
            *shape = l.output_shape(shape)?;
            layers.push(l);
            Ok(())
        };
        if self.bn_per_layer {
            push(&mut layers, LayerSpec::batch_norm(), &mut shape)?;
        }
        for &c in &self.channels {
            push(&mut layers, LayerSpec::conv(c, self.stride), &mut shape)?;
            push(&mut layers, LayerSpec::Relu, &mut shape)?;
            if self.bn_per_layer {
                push(&mut layers, LayerSpec::batch_norm(), &mut shape)?;
            }
            if shape[1] >= 2 * self.pool_kernel {
                push(&mut layers, LayerSpec::pool(self.pool_kernel, self.pool_kernel), &mut shape)?;
            }
        }
        push(&mut layers, LayerSpec::Flatten, &mut shape)?;
        for _ in 0..self.n_fc {
            push(&mut layers, LayerSpec::linear(self.fc_units), &mut shape)?;
            push(&mut layers, LayerSpec::Relu, &mut shape)?;
            if self.bn_per_layer {
                push(&mut layers, LayerSpec::batch_norm(), &mut shape)?;
            }
            if self.dropout_after_fc {
                push(&mut layers, LayerSpec::dropout(self.dropout_rate), &mut shape)?;
            }
        }
        push(&mut layers, LayerSpec::linear(OUTPUT_SIZE), &mut shape)?;
        let cfg = ModelConfig::new(layers, self.init_scheme);
        cfg.validate()?;
        Ok(cfg)
    }

    /// `base` with this point's optimizer settings.
    pub fn train_config(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig { learning_rate: self.learning_rate, l2: self.l2, smooth_l1_beta: self.smooth_l1_beta, ..base.clone() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrialOutcome {
    /// Validation RMSE (mm) and SmoothL1 loss after the requested epochs.
    Scored { val_rmse_mm: f64, val_loss: f64 },
    Diverged(String),
}

/// Trains trials on demand; `advance` brings trial `id` to `epochs` epochs in total.
pub trait TrialRunner {
    fn advance(&mut self, id: usize, epochs: usize) -> Result<TrialOutcome>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Promoted,
    Eliminated,
    Final,
    Diverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub bracket: usize,
    pub round: usize,
    pub epochs: usize,
    pub val_rmse_mm: Option<f64>,
    pub val_loss: Option<f64>,
    pub status: TrialStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<Hyperparams>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HalvingResult {
    /// Trial ids trained in each round.
    pub rounds: Vec<Vec<usize>>,
    /// Epoch total of each round.
    pub epochs: Vec<usize>,
    pub survivors: Vec<usize>,
    pub records: Vec<TrialRecord>,
}

/// Number of rounds needed to halve `n` down to one trial.
pub fn round_count(n: usize, eta: usize) -> usize {
    let (mut n, mut r) = (n, 1);
    while n > 1 {
        n = n.div_ceil(eta);
        r += 1;
    }
    r
}

/// Successive halving over trials `ids`, ending with `max_epochs` for the
/// last round; earlier rounds get `max_epochs / eta^k` epochs (at least 1).
pub fn successive_halving(
    ids: &[usize],
    runner: &mut dyn TrialRunner,
    eta: usize,
    max_epochs: usize,
) -> Result<HalvingResult> {
    if eta < 2 {
        return Err(cfg_err("eta must be at least 2"));
    }
    if ids.is_empty() || max_epochs == 0 {
        return Err(cfg_err("halving needs at least one trial and one epoch"));
    }
    let total_rounds = round_count(ids.len(), eta);
    let mut alive = ids.to_vec();
    let mut out = HalvingResult { rounds: vec![], epochs: vec![], survivors: vec![], records: vec![] };
    for round in 0..total_rounds {
        let shrink = eta.checked_pow((total_rounds - 1 - round) as u32).unwrap_or(usize::MAX);
        let epochs = (max_epochs / shrink).max(1);
        let mut scored = Vec::new();
        let mut records = Vec::new();
        for &id in &alive {
            let rec = match runner.advance(id, epochs)? {
                TrialOutcome::Scored { val_rmse_mm, val_loss } => {
                    scored.push((val_rmse_mm, id, records.len()));
                    TrialRecord {
                        trial: id,
                        bracket: 0,
                        round,
                        epochs,
                        val_rmse_mm: Some(val_rmse_mm),
                        val_loss: Some(val_loss),
                        status: TrialStatus::Eliminated,
                        reason: None,
                        config: None,
                    }
                }
                TrialOutcome::Diverged(reason) => TrialRecord {
                    trial: id,
                    bracket: 0,
                    round,
                    epochs,
                    val_rmse_mm: None,
                    val_loss: None,
                    status: TrialStatus::Diverged,
                    reason: Some(reason),
                    config: None,
                },
            };
            records.push(rec);
        }
        out.rounds.push(alive.clone());
        out.epochs.push(epochs);
        if scored.is_empty() {
            out.records.extend(records);
            return Err(Error::SearchFailed(format!("all {} trials diverged in round {round}", alive.len())));
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let last = round + 1 == total_rounds;
        let keep = if last { scored.len() } else { alive.len().div_ceil(eta).min(scored.len()) };
        for &(_, _, r) in &scored[..keep] {
            records[r].status = if last { TrialStatus::Final } else { TrialStatus::Promoted };
        }
        alive = scored[..keep].iter().map(|s| s.1).collect();
        out.records.extend(records);
    }
    out.survivors = alive;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchBudget {
    /// Configurations in the single bracket.
    pub n_configs: usize,
    pub eta: usize,
    /// Epochs of a full training, given to the last round.
    pub max_epochs: usize,
    pub seed: u64,
    /// Runs the Hyperband bracket family instead of one bracket.
    pub multi_bracket: bool,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { n_configs: 9, eta: 3, max_epochs: 9, seed: 0, multi_bracket: false }
    }
}

/// Runner that trains real networks, one resumable [`Trainer`] per trial.
pub struct TrainingRunner<'a> {
    pub configs: Vec<Hyperparams>,
    base: TrainConfig,
    train: &'a Examples,
    val: &'a Examples,
    seed: u64,
    trainers: Vec<Option<Trainer<f32>>>,
    failed: Vec<Option<String>>,
}

impl<'a> TrainingRunner<'a> {
    pub fn new(configs: Vec<Hyperparams>, base: &TrainConfig, train: &'a Examples, val: &'a Examples, seed: u64) -> Self {
        let n = configs.len();
        Self {
            configs,
            base: base.clone(),
            train,
            val,
            seed,
            trainers: (0..n).map(|_| None).collect(),
            failed: vec![None; n],
        }
    }

    fn trainer(&mut self, id: usize) -> Result<&mut Trainer<f32>> {
        if self.trainers[id].is_none() {
            let h = &self.configs[id];
            let net = Network::new(&h.model_config()?, sample_seed(self.seed, 2 * id as u64))?;
            let cfg = TrainConfig { seed: sample_seed(self.seed, 2 * id as u64 + 1), ..h.train_config(&self.base) };
            self.trainers[id] = Some(Trainer::new(net, &cfg)?);
        }
        Ok(self.trainers[id].as_mut().unwrap())
    }
}

impl TrialRunner for TrainingRunner<'_> {
    fn advance(&mut self, id: usize, epochs: usize) -> Result<TrialOutcome> {
        if let Some(r) = &self.failed[id] {
            return Ok(TrialOutcome::Diverged(r.clone()));
        }
        let (train, val) = (self.train, self.val);
        let t = self.trainer(id)?;
        let more = epochs.saturating_sub(t.epochs_done());
        match t.run_epochs(train, val, more) {
            Ok(()) => {}
            Err(Error::TrainingDiverged { epoch, reason }) => {
                let r = format!("epoch {epoch}: {reason}");
                self.failed[id] = Some(r.clone());
                self.trainers[id] = None;
                return Ok(TrialOutcome::Diverged(r));
            }
            Err(e) => return Err(e),
        }
        let last = t.history().epochs.last().ok_or_else(|| Error::State("trial trained for zero epochs".into()))?;
        if !last.val_rmse_mm.is_finite() {
            let r = "non-finite validation error".to_string();
            self.failed[id] = Some(r.clone());
            return Ok(TrialOutcome::Diverged(r));
        }
        Ok(TrialOutcome::Scored { val_rmse_mm: last.val_rmse_mm, val_loss: last.val_loss })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub best: TrialRecord,
    pub records: Vec<TrialRecord>,
}

/// Bracket sizes `(configs, max epochs)` for a budget.
pub fn brackets(budget: &SearchBudget) -> Vec<(usize, usize)> {
    if !budget.multi_bracket {
        return vec![(budget.n_configs, budget.max_epochs)];
    }
    let eta = budget.eta;
    let mut s_max = 0usize;
    while eta.pow(s_max as u32 + 1) <= budget.max_epochs {
        s_max += 1;
    }
    (0..=s_max)
        .rev()
        .map(|s| {
            let n = ((s_max + 1) * eta.pow(s as u32)).div_ceil(s + 1);
            (n, budget.max_epochs)
        })
        .collect()
}

/// Samples configurations, runs the brackets and returns the record with
/// the lowest validation RMSE. Every record is also written to `log` as
/// one JSON line.
pub fn run_search(
    space: &SearchSpace,
    train_set: &Examples,
    val_set: &Examples,
    base: &TrainConfig,
    budget: &SearchBudget,
    mut log: Option<&mut dyn Write>,
) -> Result<SearchOutcome> {
    space.validate()?;
    base.validate()?;
    if budget.n_configs == 0 || budget.max_epochs == 0 || budget.eta < 2 {
        return Err(cfg_err("budget needs configs, epochs and eta >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let plan = brackets(budget);
    let mut configs = Vec::new();
    let mut ranges = Vec::new();
    for &(n, _) in &plan {
        let start = configs.len();
        for _ in 0..n {
            configs.push(sample_config(space, &mut rng)?);
        }
        ranges.push((start..configs.len()).collect::<Vec<_>>());
    }
    let mut runner = TrainingRunner::new(configs, base, train_set, val_set, budget.seed);
    let mut records = Vec::new();
    let mut failures = 0;
    for (b, (ids, &(_, max_epochs))) in ranges.iter().zip(&plan).enumerate() {
        let result = successive_halving(ids, &mut runner, budget.eta, max_epochs);
        let recs = match result {
            Ok(r) => r.records,
            Err(Error::SearchFailed(_)) => {
                failures += 1;
                Vec::new()
            }
            Err(e) => return Err(e),
        };
        for mut r in recs {
            r.bracket = b;
            r.config = Some(runner.configs[r.trial].clone());
            if let Some(w) = log.as_deref_mut() {
                let line = serde_json::to_string(&r).map_err(|e| Error::Format(e.to_string()))?;
                writeln!(w, "{line}")?;
            }
            records.push(r);
        }
    }
    let best = records
        .iter()
        .filter_map(|r| r.val_rmse_mm.map(|v| (v, r)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, r)| r.clone())
        .ok_or_else(|| Error::SearchFailed(format!("every trial diverged in {failures} bracket(s)")))?;
    Ok(SearchOutcome { best, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn singleton() -> SearchSpace {
        SearchSpace {
            n_conv: [2, 2],
            n_fc: [1, 1],
            bn_per_layer: vec![true],
            dropout_after_fc: vec![false],
            dropout_rate: [0.3, 0.3],
            stride: vec![2],
            pool_kernel: vec![3],
            init_scheme: vec![InitScheme::KaimingUniform],
            learning_rate: vec![1e-3],
            sort_conv: vec![true],
            l2: vec![0.0],
            smooth_l1_beta: [1.5, 1.5],
            channels: vec![32],
            fc_units: vec![64],
        }
    }

    #[test]
    fn degenerate_space_gives_its_point() {
        let h = sample_config(&singleton(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let expected = Hyperparams {
            channels: vec![32, 32],
            n_fc: 1,
            fc_units: 64,
            bn_per_layer: true,
            dropout_after_fc: false,
            dropout_rate: 0.3,
            stride: 2,
            pool_kernel: 3,
            init_scheme: InitScheme::KaimingUniform,
            learning_rate: 1e-3,
            sort_conv: true,
            l2: 0.0,
            smooth_l1_beta: 1.5,
        };
        assert_eq!(h, expected);
    }

    #[test]
    fn draws_stay_in_bounds_and_build() {
        let space = SearchSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let h = sample_config(&space, &mut rng).unwrap();
            assert!(space.contains(&h));
            assert!((1..=20).contains(&h.channels.len()) && (0.0..=5.0).contains(&h.smooth_l1_beta));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            sample_config(&space, &mut rng).unwrap().model_config().unwrap();
        }
    }

    #[test]
    fn same_seed_same_sequence() {
        let draw = |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            (0..20).map(|_| sample_config(&SearchSpace::default(), &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn published_selection_is_expressible() {
        let h = Hyperparams {
            channels: vec![16, 16, 32, 32, 256],
            n_fc: 5,
            fc_units: 2000,
            bn_per_layer: true,
            dropout_after_fc: true,
            dropout_rate: 0.37,
            stride: 1,
            pool_kernel: 2,
            init_scheme: InitScheme::XavierNormal,
            learning_rate: 1e-4,
            sort_conv: true,
            l2: 0.0,
            smooth_l1_beta: 4.04,
        };
        let space = SearchSpace { fc_units: vec![256, 2000], ..Default::default() };
        assert!(space.contains(&h));
        let m = h.model_config().unwrap();
        assert_eq!(m.conv_channels(), h.channels);
        let t = h.train_config(&TrainConfig::default());
        assert_eq!((t.learning_rate, t.l2, t.smooth_l1_beta), (1e-4, 0.0, 4.04));
    }

    /// Replays fixed per-trial losses; losses fall with epochs by a trial-specific factor.
    struct Table {
        loss: HashMap<usize, f64>,
        diverge: Vec<usize>,
        calls: Vec<(usize, usize)>,
    }

    impl TrialRunner for Table {
        fn advance(&mut self, id: usize, epochs: usize) -> Result<TrialOutcome> {
            self.calls.push((id, epochs));
            if self.diverge.contains(&id) {
                return Ok(TrialOutcome::Diverged("nan".into()));
            }
            let v = self.loss[&id] / epochs as f64;
            Ok(TrialOutcome::Scored { val_rmse_mm: v, val_loss: v })
        }
    }

    fn table(losses: &[f64], diverge: &[usize]) -> Table {
        Table { loss: losses.iter().copied().enumerate().collect(), diverge: diverge.to_vec(), calls: vec![] }
    }

    #[test]
    fn nine_three_one() {
        let losses = [5.0, 3.0, 9.0, 1.0, 7.0, 2.0, 8.0, 6.0, 4.0];
        let mut t = table(&losses, &[]);
        let ids: Vec<usize> = (0..9).collect();
        let r = successive_halving(&ids, &mut t, 3, 9).unwrap();
        assert_eq!(r.rounds.iter().map(Vec::len).collect::<Vec<_>>(), vec![9, 3, 1]);
        assert_eq!(r.epochs, vec![1, 3, 9]);
        // brute-force top 3 by recorded loss, then the best of those
        let mut order = ids.clone();
        order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]));
        let mut second = r.rounds[1].clone();
        second.sort();
        let mut top3 = order[..3].to_vec();
        top3.sort();
        assert_eq!(second, top3);
        assert_eq!(r.survivors, vec![order[0]]);
        // survivors always trained at least as long as anything eliminated
        let max_elim = r.records.iter().filter(|x| x.status == TrialStatus::Eliminated).map(|x| x.epochs).max().unwrap();
        assert!(r.records.iter().filter(|x| x.status == TrialStatus::Final).all(|x| x.epochs >= max_elim));
    }

    #[test]
    fn single_trial_survives() {
        let mut t = table(&[2.0], &[]);
        let r = successive_halving(&[0], &mut t, 3, 4).unwrap();
        assert_eq!(r.survivors, vec![0]);
        assert_eq!(t.calls, vec![(0, 4)]);
    }

    #[test]
    fn diverged_trials_go_first() {
        // the lowest losses belong to diverging trials
        let mut t = table(&[0.1, 0.2, 5.0, 6.0], &[0, 1]);
        let r = successive_halving(&[0, 1, 2, 3], &mut t, 2, 4).unwrap();
        assert_eq!(r.rounds[1], vec![2, 3]);
        assert_eq!(r.survivors, vec![2]);
        let mut all_bad = table(&[1.0, 2.0], &[0, 1]);
        assert!(matches!(successive_halving(&[0, 1], &mut all_bad, 2, 2), Err(Error::SearchFailed(_))));
        assert!(successive_halving(&[0], &mut table(&[1.0], &[]), 1, 2).is_err());
    }

    #[test]
    fn hyperband_bracket_sizes() {
        let b = SearchBudget { n_configs: 9, eta: 3, max_epochs: 27, seed: 0, multi_bracket: true };
        assert_eq!(brackets(&b), vec![(27, 27), (12, 27), (6, 27), (4, 27)]);
        assert_eq!(brackets(&SearchBudget::default()), vec![(9, 9)]);
    }
}
