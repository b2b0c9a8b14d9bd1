//! Dataset splitting, mini-batch training with early stopping, and evaluation.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Checkpoint, MetricError, ModelParams, ModelShape, RngState, Sample};

/// Items per parallel gradient chunk. Fixed so results do not depend on the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub max_epochs: usize,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-5,
            patience: 20,
            max_epochs: 2000,
            split: [0.9, 0.05, 0.05],
            seed: 0,
            optimizer: Optimizer::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        let bad = |m: String| Err(MetricError::InvalidConfig(m));
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return bad("batch_size, patience and max_epochs must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate = {}", self.learning_rate));
        }
        if self.split.iter().any(|f| !(0.0..=1.0).contains(f)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("split fractions {:?} must be in [0, 1] and sum to 1", self.split));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return bad("Adam betas must be in [0, 1) and eps positive".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Deterministic split by trajectory id: groups are shuffled with `seed`,
/// then cut into validation, test and train by the given fractions. With at
/// least three groups, validation and test get at least one group each.
pub fn split_dataset(items: &[Sample], fractions: [f64; 3], seed: u64) -> Result<Split, MetricError> {
    if items.is_empty() {
        return Err(MetricError::EmptyDataset);
    }
    let mut groups: Vec<&str> = items.iter().map(|s| s.group.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = groups.len();
    let count = |f: f64| {
        let c = (f * n as f64).round() as usize;
        if n >= 3 && f > 0.0 {
            c.max(1)
        } else {
            c
        }
    };
    let n_val = count(fractions[1]).min(n);
    let n_test = count(fractions[2]).min(n - n_val);
    let val: BTreeSet<&str> = groups[..n_val].iter().copied().collect();
    let test: BTreeSet<&str> = groups[n_val..n_val + n_test].iter().copied().collect();
    let mut split = Split { train: Vec::new(), validation: Vec::new(), test: Vec::new() };
    for s in items {
        if val.contains(s.group.as_str()) {
            split.validation.push(s.clone());
        } else if test.contains(s.group.as_str()) {
            split.test.push(s.clone());
        } else {
            split.train.push(s.clone());
        }
    }
    Ok(split)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub count: usize,
}

impl Metrics {
    pub fn from_predictions(predictions: &[f64], targets: &[f64]) -> Result<Self, MetricError> {
        if predictions.len() != targets.len() {
            return Err(MetricError::ShapeMismatch { expected: targets.len(), got: predictions.len() });
        }
        if targets.is_empty() {
            return Err(MetricError::EmptyDataset);
        }
        let n = targets.len() as f64;
        let (mut se, mut ae) = (0.0, 0.0);
        for (p, t) in predictions.iter().zip(targets) {
            se += (p - t).powi(2);
            ae += (p - t).abs();
        }
        Ok(Self { mse: se / n, mae: ae / n, count: targets.len() })
    }
}

pub fn predict_all(params: &ModelParams, samples: &[Sample]) -> Result<Vec<f64>, MetricError> {
    samples.par_iter().map(|s| params.forward(&s.inputs)).collect()
}

/// MSE and MAE of a checkpoint on samples built with feature layout `layout_version`.
pub fn evaluate(checkpoint: &Checkpoint, samples: &[Sample], layout_version: &str) -> Result<Metrics, MetricError> {
    checkpoint.check_layout(layout_version)?;
    let preds = predict_all(&checkpoint.params, samples)?;
    let targets: Vec<f64> = samples.iter().map(|s| s.target).collect();
    Metrics::from_predictions(&preds, &targets)
}

/// Mean squared error over `batch` and its gradient.
pub fn loss_and_gradients(params: &ModelParams, batch: &[&Sample]) -> Result<(f64, Vec<f64>), MetricError> {
    if batch.is_empty() {
        return Err(MetricError::EmptyDataset);
    }
    let w = 1.0 / batch.len() as f64;
    let n = params.as_slice().len();
    let partials = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0; n];
            let mut loss = 0.0;
            for s in chunk {
                let y = params.backward_into(&s.inputs, s.target, w, &mut grad)?;
                loss += w * (y - s.target).powi(2);
            }
            Ok((loss, grad))
        })
        .collect::<Result<Vec<_>, MetricError>>()?;
    let mut iter = partials.into_iter();
    let (mut loss, mut grad) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((loss, grad))
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptimizerState {
    fn new(kind: Optimizer, lr: f64, n: usize) -> Self {
        let (m, v) = match kind {
            Optimizer::Adam { .. } => (vec![0.0; n], vec![0.0; n]),
            Optimizer::Sgd => (Vec::new(), Vec::new()),
        };
        Self { kind, lr, m, v, t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for i in 0..params.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    params[i] -= self.lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub improved: bool,
}

pub enum TrainEvent<'a> {
    Epoch(&'a EpochLog),
    Improved(&'a Checkpoint),
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// Mini-batch training with early stopping on validation MSE. `on_event` sees
/// every epoch and every new best checkpoint (for saving to disk).
pub fn train(
    train_set: &[Sample],
    validation: &[Sample],
    shape: ModelShape,
    layout_version: &str,
    cfg: &TrainConfig,
    mut on_event: impl FnMut(TrainEvent<'_>),
) -> Result<TrainOutcome, MetricError> {
    cfg.validate()?;
    shape.validate()?;
    if train_set.is_empty() || validation.is_empty() {
        return Err(MetricError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(shape, &mut rng);
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.learning_rate, params.as_slice().len());
    let val_targets: Vec<f64> = validation.iter().map(|s| s.target).collect();

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train_set[i]).collect();
            let (loss, grad) = loss_and_gradients(&params, &batch)?;
            train_loss += loss * batch.len() as f64;
            opt.step(params.as_mut_slice(), &grad);
        }
        train_loss /= train_set.len() as f64;
        let val_loss = Metrics::from_predictions(&predict_all(&params, validation)?, &val_targets)?.mse;
        let improved = best.as_ref().is_none_or(|b| val_loss < b.val_loss);
        let entry = EpochLog { epoch, train_loss, val_loss, improved };
        on_event(TrainEvent::Epoch(&entry));
        log.push(entry);
        if improved {
            let ckpt = Checkpoint {
                params: params.clone(),
                epoch,
                val_loss,
                layout_version: layout_version.to_string(),
                rng: RngState { seed: cfg.seed, word_pos: rng.get_word_pos() },
            };
            on_event(TrainEvent::Improved(&ckpt));
            best = Some(ckpt);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
        if !params.is_finite() {
            return Err(MetricError::InvalidConfig(format!("parameters diverged at epoch {epoch}")));
        }
    }
    Ok(TrainOutcome { best: best.expect("at least one epoch"), log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::InputVector;
    use proptest::prelude::*;
    use rand::Rng;
    use std::sync::Arc;

    fn sample(group: &str, len: usize, dim: usize, seed: u64, target: f64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = (0..len).map(|_| InputVector((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())).collect();
        Sample { group: group.into(), inputs: Arc::new(inputs), target }
    }

    fn singles(n: usize) -> Vec<Sample> {
        (0..n).map(|i| sample(&format!("t{i:03}"), 2, 2, i as u64, 0.5)).collect()
    }

    #[test]
    fn hundred_items_split_90_5_5() {
        let s = split_dataset(&singles(100), [0.9, 0.05, 0.05], 1).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (90, 5, 5));
    }

    #[test]
    fn split_is_seeded() {
        let items = singles(50);
        let ids = |s: &Split| s.validation.iter().chain(&s.test).map(|x| x.group.clone()).collect::<Vec<_>>();
        let a = split_dataset(&items, [0.9, 0.05, 0.05], 7).unwrap();
        let b = split_dataset(&items, [0.9, 0.05, 0.05], 7).unwrap();
        let c = split_dataset(&items, [0.9, 0.05, 0.05], 8).unwrap();
        assert_eq!(ids(&a), ids(&b));
        assert_ne!(ids(&a), ids(&c));
    }

    #[test]
    fn empty_split_input() {
        assert!(matches!(split_dataset(&[], [0.9, 0.05, 0.05], 0), Err(MetricError::EmptyDataset)));
    }

    #[test]
    fn constant_half_on_balanced_targets() {
        let m = Metrics::from_predictions(&[0.5; 4], &[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!((m.mse, m.mae), (0.25, 0.5));
        let m = Metrics::from_predictions(&[0.2, 0.9], &[0.2, 0.9]).unwrap();
        assert_eq!((m.mse, m.mae), (0.0, 0.0));
    }

    #[test]
    fn loss_is_batch_order_invariant() {
        let shape = ModelShape { input_dim: 3, hidden: 4, layers: 2, head_hidden: 4 };
        let p = ModelParams::init(shape, &mut ChaCha8Rng::seed_from_u64(0));
        let items: Vec<Sample> = (0..6).map(|i| sample("g", 3 + i, 3, i as u64, i as f64 / 6.0)).collect();
        let fwd: Vec<&Sample> = items.iter().collect();
        let rev: Vec<&Sample> = items.iter().rev().collect();
        let (la, ga) = loss_and_gradients(&p, &fwd).unwrap();
        let (lb, gb) = loss_and_gradients(&p, &rev).unwrap();
        assert!((la - lb).abs() < 1e-15);
        assert!(ga.iter().zip(&gb).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn forward_independent_of_batch_composition() {
        let shape = ModelShape { input_dim: 3, hidden: 4, layers: 2, head_hidden: 4 };
        let p = ModelParams::init(shape, &mut ChaCha8Rng::seed_from_u64(0));
        let items: Vec<Sample> = (0..5).map(|i| sample("g", 4, 3, i, 0.0)).collect();
        let all = predict_all(&p, &items).unwrap();
        let some = predict_all(&p, &items[2..4]).unwrap();
        assert_eq!(all[2..4], some[..]);
    }

    #[test]
    fn overfits_sixteen_sequences() {
        let shape = ModelShape { input_dim: 3, hidden: 8, layers: 2, head_hidden: 8 };
        let items: Vec<Sample> = (0..16).map(|i| sample(&format!("t{i}"), 5, 3, 100 + i, 0.05 + 0.9 * i as f64 / 15.0)).collect();
        let cfg = TrainConfig { batch_size: 16, learning_rate: 1e-2, patience: 5000, max_epochs: 5000, ..Default::default() };
        let mut reached = None;
        let out = train(&items, &items, shape, "test", &cfg, |e| {
            if let TrainEvent::Epoch(l) = e {
                if reached.is_none() && l.val_loss < 1e-3 {
                    reached = Some(l.epoch);
                }
            }
        })
        .unwrap();
        assert!(reached.is_some(), "best MSE {}", out.best.val_loss);
        assert!(out.best.val_loss < 1e-3);
    }

    #[test]
    fn early_stopping_and_checkpoint_rule() {
        let shape = ModelShape { input_dim: 2, hidden: 3, layers: 1, head_hidden: 3 };
        let items: Vec<Sample> = (0..12).map(|i| sample(&format!("t{i}"), 3, 2, i, (i % 3) as f64 / 2.0)).collect();
        let split = split_dataset(&items, [0.5, 0.25, 0.25], 0).unwrap();
        let cfg = TrainConfig { batch_size: 4, learning_rate: 5e-2, patience: 3, max_epochs: 300, ..Default::default() };
        let mut saved = Vec::new();
        let out = train(&split.train, &split.validation, shape, "test", &cfg, |e| {
            if let TrainEvent::Improved(c) = e {
                saved.push((c.epoch, c.val_loss));
            }
        })
        .unwrap();
        let improved: Vec<(usize, f64)> = out.log.iter().filter(|l| l.improved).map(|l| (l.epoch, l.val_loss)).collect();
        assert_eq!(saved, improved);
        assert!(improved.windows(2).all(|w| w[1].1 < w[0].1));
        let min = out.log.iter().map(|l| l.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(out.best.val_loss, min);
        let last = out.log.last().unwrap().epoch;
        if last < cfg.max_epochs {
            assert_eq!(last - out.best.epoch, cfg.patience);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { split: [0.9, 0.1, 0.1], ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn split_disjoint_and_exhaustive(groups in prop::collection::vec(0usize..30, 1..120), seed in any::<u64>()) {
            let items: Vec<Sample> = groups.iter().enumerate().map(|(i, g)| sample(&format!("g{g}"), 1, 1, i as u64, 0.0)).collect();
            let s = split_dataset(&items, [0.9, 0.05, 0.05], seed).unwrap();
            prop_assert_eq!(s.train.len() + s.validation.len() + s.test.len(), items.len());
            let ids = |v: &[Sample]| v.iter().map(|x| x.group.clone()).collect::<BTreeSet<_>>();
            let (a, b, c) = (ids(&s.train), ids(&s.validation), ids(&s.test));
            prop_assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
        }

        #[test]
        fn mae_squared_bounded_by_mse(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..50)) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = Metrics::from_predictions(&p, &t).unwrap();
            prop_assert!(m.mae * m.mae <= m.mse + 1e-15);
        }
    }
}
