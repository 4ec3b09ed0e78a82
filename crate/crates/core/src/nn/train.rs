use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{TrainConfig, INPUT_CHANNELS, INPUT_LEN, OUTPUT_SIZE};
use super::network::{Network, Snapshot};
use super::optim::{smooth_l1, Adam};
use super::tensor::{Real, Tensor};
use crate::error::{invalid, Error, Result};
use crate::geometry::MarkerShape;
use crate::optics::{SampleRecord, SCAN_VALUES, SHAPE_VALUES};

const EVAL_CHUNK: usize = 256;

/// Network inputs (`n x 3 x 190`) and targets (`n x 60`, mm).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Examples {
    pub inputs: Vec<f32>,
    pub targets: Vec<f32>,
}

impl Examples {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a SampleRecord>) -> Result<Self> {
        let mut e = Self::default();
        for r in records {
            if r.scans.len() != SCAN_VALUES || r.shape.len() != SHAPE_VALUES {
                return Err(invalid("record has wrong field sizes"));
            }
            e.inputs.extend_from_slice(&r.scans);
            e.targets.extend_from_slice(&r.shape);
        }
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.targets.len() / OUTPUT_SIZE
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f32] {
        &self.inputs[i * SCAN_VALUES..(i + 1) * SCAN_VALUES]
    }

    pub fn target(&self, i: usize) -> &[f32] {
        &self.targets[i * OUTPUT_SIZE..(i + 1) * OUTPUT_SIZE]
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut e = Self::default();
        for &i in idx {
            e.inputs.extend_from_slice(self.input(i));
            e.targets.extend_from_slice(self.target(i));
        }
        e
    }

    fn check(&self) -> Result<()> {
        if self.is_empty() {
            return Err(invalid("empty example set"));
        }
        if self.inputs.len() != self.len() * SCAN_VALUES || self.targets.len() % OUTPUT_SIZE != 0 {
            return Err(invalid("inputs and targets disagree on the sample count"));
        }
        Ok(())
    }

    fn batch<T: Real>(&self, idx: &[usize]) -> (Tensor<T>, Vec<T>) {
        let mut x = Vec::with_capacity(idx.len() * SCAN_VALUES);
        let mut y = Vec::with_capacity(idx.len() * OUTPUT_SIZE);
        for &i in idx {
            x.extend(self.input(i).iter().map(|&v| T::lit(v as f64)));
            y.extend(self.target(i).iter().map(|&v| T::lit(v as f64)));
        }
        let t = Tensor::new(vec![idx.len(), INPUT_CHANNELS, INPUT_LEN], x).expect("batch shape");
        (t, y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Root mean square of per-marker distances over the validation set, mm.
    pub val_rmse_mm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochStats> {
        self.best_epoch.map(|e| &self.epochs[e])
    }
}

/// Eval-mode outputs for many inputs, in chunks.
pub fn predict_outputs<T: Real>(net: &Network<T>, inputs: &[f32]) -> Result<Vec<f32>> {
    if inputs.len() % SCAN_VALUES != 0 {
        return Err(invalid("input length is not a whole number of samples"));
    }
    let mut out = Vec::with_capacity(inputs.len() / SCAN_VALUES * OUTPUT_SIZE);
    for chunk in inputs.chunks(EVAL_CHUNK * SCAN_VALUES) {
        let n = chunk.len() / SCAN_VALUES;
        let x = Tensor::from_f32(vec![n, INPUT_CHANNELS, INPUT_LEN], chunk)?;
        out.extend(net.infer(&x)?.data().iter().map(|v| v.as_f64() as f32));
    }
    Ok(out)
}

/// Marker shape from the three scans of one sample.
pub fn predict<T: Real>(net: &Network<T>, scans: &[f32]) -> Result<MarkerShape> {
    if scans.len() != SCAN_VALUES {
        return Err(invalid(format!("expected {SCAN_VALUES} scan values, got {}", scans.len())));
    }
    let out = predict_outputs(net, scans)?;
    MarkerShape::from_flat(&out.iter().map(|&v| v as f64).collect::<Vec<_>>())
}

/// SmoothL1 loss and marker RMSE (mm) of eval-mode predictions.
pub fn evaluate<T: Real>(net: &Network<T>, data: &Examples, beta: f64) -> Result<(f64, f64)> {
    data.check()?;
    let pred = predict_outputs(net, &data.inputs)?;
    let (loss, _) = smooth_l1(&pred, &data.targets, beta)?;
    let sq: f64 = pred.iter().zip(&data.targets).map(|(&p, &t)| ((p - t) as f64).powi(2)).sum();
    Ok((loss, (sq / (data.len() * OUTPUT_SIZE / 3) as f64).sqrt()))
}

/// Resumable training loop; keeps the parameters of the lowest validation loss.
pub struct Trainer<T> {
    pub net: Network<T>,
    pub cfg: TrainConfig,
    adam: Adam<T>,
    rng: ChaCha8Rng,
    history: TrainHistory,
    best: Option<(f64, Snapshot<T>)>,
}

impl<T: Real> Trainer<T> {
    pub fn new(mut net: Network<T>, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        net.reseed(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
        Ok(Self {
            net,
            cfg: cfg.clone(),
            adam: Adam::new(cfg.learning_rate, cfg.l2),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            history: TrainHistory::default(),
            best: None,
        })
    }

    pub fn history(&self) -> &TrainHistory {
        &self.history
    }

    pub fn optimizer(&self) -> &Adam<T> {
        &self.adam
    }

    pub fn epochs_done(&self) -> usize {
        self.history.epochs.len()
    }

    fn diverged(&self, reason: String) -> Error {
        Error::TrainingDiverged { epoch: self.epochs_done(), reason }
    }

    fn train_epoch(&mut self, data: &Examples) -> Result<f64> {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let bs = self.cfg.batch_size;
        let (mut total, mut seen) = (0.0, 0usize);
        for idx in order.chunks(bs) {
            if idx.len() < 2 && bs > 1 && seen > 0 {
                continue;
            }
            let (x, y) = data.batch::<T>(idx);
            self.net.zero_grad();
            let out = self.net.forward(&x)?;
            let (loss, grad) = smooth_l1(out.data(), &y, self.cfg.smooth_l1_beta)?;
            if !loss.is_finite() {
                return Err(self.diverged("non-finite training loss".into()));
            }
            self.net.backward(&Tensor::new(out.shape().to_vec(), grad)?)?;
            let epoch = self.epochs_done();
            self.adam.step(&mut self.net.params_mut()).map_err(|e| match e {
                Error::TrainingDiverged { reason, .. } => Error::TrainingDiverged { epoch, reason },
                other => other,
            })?;
            total += loss * idx.len() as f64;
            seen += idx.len();
        }
        Ok(total / seen.max(1) as f64)
    }

    pub fn run_epochs(&mut self, train: &Examples, val: &Examples, epochs: usize) -> Result<()> {
        train.check()?;
        val.check()?;
        for _ in 0..epochs {
            let train_loss = self.train_epoch(train)?;
            if self.cfg.bn_recalibration_batches > 0 && self.net.has_batch_norm() {
                let mut order: Vec<usize> = (0..train.len()).collect();
                order.shuffle(&mut self.rng);
                let batches: Vec<Tensor<T>> = order
                    .chunks(self.cfg.batch_size.max(2))
                    .filter(|c| c.len() >= 2)
                    .take(self.cfg.bn_recalibration_batches)
                    .map(|c| train.batch::<T>(c).0)
                    .collect();
                self.net.recalibrate_batch_norm(&batches)?;
            }
            let (val_loss, val_rmse_mm) = evaluate(&self.net, val, self.cfg.smooth_l1_beta)?;
            if !val_loss.is_finite() {
                return Err(self.diverged("non-finite validation loss".into()));
            }
            let epoch = self.epochs_done();
            log::info!("epoch {epoch}: train {train_loss:.4} val {val_loss:.4} rmse {val_rmse_mm:.3} mm");
            if self.best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
                self.best = Some((val_loss, self.net.snapshot()));
                self.history.best_epoch = Some(epoch);
            }
            self.history.epochs.push(EpochStats { epoch, train_loss, val_loss, val_rmse_mm });
        }
        Ok(())
    }

    /// The network with its best-validation parameters restored.
    pub fn finish(mut self) -> (Network<T>, TrainHistory) {
        if let Some((_, s)) = &self.best {
            self.net.restore(s);
        }
        (self.net, self.history)
    }
}

pub fn train<T: Real>(net: Network<T>, train: &Examples, val: &Examples, cfg: &TrainConfig) -> Result<(Network<T>, TrainHistory)> {
    let mut t = Trainer::new(net, cfg)?;
    t.run_epochs(train, val, cfg.epochs)?;
    Ok(t.finish())
}
