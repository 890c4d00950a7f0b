//! Mini-batch Adam training of the predictor on weak labels, with the
//! large-batch and small-batch presets, best-checkpoint tracking and
//! controlled label noise.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dialog_model::Session;
use crate::error::{Error, Result};
use crate::evalmetrics::auc;
use crate::satformer::model::{accumulate_gradients, forward};
use crate::satformer::tensor::Mat;
use crate::satformer::{Predictor, PredictorParams, TurnInput};

/// Samples per gradient work unit. Per-sample gradients are summed inside a
/// chunk in index order, then chunks are summed in index order, so the
/// result does not depend on how many workers run the chunks.
pub const GRAD_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Validation AUC is computed every this many epochs (and after the last).
    pub eval_every: usize,
    /// Fraction of training labels replaced by `1 - label` before training.
    pub label_noise_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            learning_rate: 1e-3,
            epochs: 10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            eval_every: 1,
            label_noise_rate: 0.0,
        }
    }
}

impl TrainConfig {
    /// Production large-batch setting: batch 12000, lr 0.012.
    pub fn production_large_batch() -> Self {
        TrainConfig { batch_size: 12_000, learning_rate: 0.012, ..Self::default() }
    }

    /// Production small-batch setting: batch 1024, lr 0.001.
    pub fn production_small_batch() -> Self {
        TrainConfig { batch_size: 1024, learning_rate: 0.001, ..Self::default() }
    }

    /// Large-batch preset for synthetic corpora: batch 4096, lr 0.012.
    pub fn desk_large_batch() -> Self {
        TrainConfig { batch_size: 4096, learning_rate: 0.012, ..Self::default() }
    }

    /// Small-batch preset for synthetic corpora: batch 64 with the learning
    /// rate scaled linearly from the large-batch preset (0.012 * 64 / 4096).
    pub fn desk_small_batch() -> Self {
        TrainConfig { batch_size: 64, learning_rate: 0.012 * 64.0 / 4096.0, ..Self::default() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "production-lb" => Ok(Self::production_large_batch()),
            "production-sb" => Ok(Self::production_small_batch()),
            "lb" => Ok(Self::desk_large_batch()),
            "sb" => Ok(Self::desk_small_batch()),
            other => Err(Error::Config(format!("unknown training preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || self.eval_every == 0 {
            return Err(Error::Validation("batch_size, epochs and eval_every must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation(format!("learning_rate {} must be a finite nonnegative number", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::Validation("adam betas must lie in [0,1) and epsilon be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.label_noise_rate) {
            return Err(Error::Validation("label_noise_rate must lie in [0,1]".into()));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }
}

/// Adam optimizer state for a fixed list of tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(shapes: &[usize], beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam {
            beta1,
            beta2,
            epsilon,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: Vec<&mut Mat>, grads: Vec<&Mat>, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..g.data.len() {
                let gj = g.data[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                p.data[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.epsilon);
            }
        }
    }
}

/// Prediction windows with targets.
#[derive(Debug, Clone, Default)]
pub struct Examples {
    pub windows: Vec<Vec<TurnInput>>,
    pub labels: Vec<f64>,
}

impl Examples {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// One example per turn, labelled by the session's weak labels.
    pub fn from_weak_labels(predictor: &Predictor, sessions: &[Session]) -> Result<Self> {
        Self::build(predictor, sessions, |s| {
            s.weak_labels.clone().ok_or_else(|| Error::Validation(format!("session {} has no weak labels", s.session_id)))
        })
    }

    /// One example per turn, labelled by the session's oracle ratings.
    pub fn from_oracle(predictor: &Predictor, sessions: &[Session]) -> Result<Self> {
        Self::build(predictor, sessions, |s| {
            s.oracle_satisfaction
                .as_ref()
                .map(|o| o.iter().map(|&v| v as f64).collect())
                .ok_or_else(|| Error::Validation(format!("session {} has no oracle labels", s.session_id)))
        })
    }

    fn build(predictor: &Predictor, sessions: &[Session], labels: impl Fn(&Session) -> Result<Vec<f64>>) -> Result<Self> {
        let mut out = Examples::default();
        for s in sessions {
            let l = labels(s)?;
            for (n, &label) in l.iter().enumerate() {
                out.windows.push(predictor.window(s, n)?);
                out.labels.push(label);
            }
        }
        Ok(out)
    }

    /// Hard 0/1 targets (threshold 0.5) for ranking metrics.
    pub fn binary_labels(&self) -> Vec<u8> {
        self.labels.iter().map(|&l| u8::from(l >= 0.5)).collect()
    }
}

/// Replaces exactly `round(rate * N)` labels, chosen by `seed`, with
/// `1 - label` (a flip for hard labels).
pub fn inject_label_noise(labels: &[f64], rate: f64, seed: u64) -> Vec<f64> {
    let mut out = labels.to_vec();
    let count = ((rate.clamp(0.0, 1.0) * labels.len() as f64).round() as usize).min(labels.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in index::sample(&mut rng, labels.len(), count) {
        out[i] = 1.0 - out[i];
    }
    out
}

pub fn predict_all(predictor: &Predictor, examples: &Examples) -> Result<Vec<f64>> {
    examples
        .windows
        .par_iter()
        .map(|w| forward(&predictor.params, &predictor.config, w).map(|t| t.prob))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub step: u64,
    pub train_loss: f64,
    /// `None` when not evaluated this epoch or when validation has one class.
    pub val_auc: Option<f64>,
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("epoch,step,train_loss,val_auc\n");
    for r in trace {
        let auc = r.val_auc.map(|a| format!("{a:.10}")).unwrap_or_default();
        s.push_str(&format!("{},{},{:.10},{}\n", r.epoch, r.step, r.train_loss, auc));
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub last: Predictor,
    /// Parameters with the highest validation AUC (the last ones when no
    /// evaluation was defined).
    pub best: Predictor,
    pub best_epoch: usize,
    pub best_val_auc: Option<f64>,
    pub trace: Vec<TraceRow>,
}

fn batch_gradient(predictor: &Predictor, train: &Examples, labels: &[f64], idx: &[usize]) -> Result<(PredictorParams, f64)> {
    let chunks: Vec<Result<(PredictorParams, f64)>> = idx
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = predictor.params.zeros_like();
            let mut loss = 0.0;
            for &i in chunk {
                let (l, _) = accumulate_gradients(&predictor.params, &predictor.config, &train.windows[i], labels[i], &mut g)?;
                loss += l;
            }
            Ok((g, loss))
        })
        .collect();
    let mut total: Option<PredictorParams> = None;
    let mut loss = 0.0;
    for c in chunks {
        let (g, l) = c?;
        loss += l;
        match &mut total {
            None => total = Some(g),
            Some(t) => t.add_assign(&g),
        }
    }
    let mut g = total.expect("non-empty batch");
    g.scale(1.0 / idx.len() as f64);
    Ok((g, loss))
}

/// Trains `init` (a fresh or previously trained predictor, for warm starts)
/// on `train` and tracks AUC on `val` against its hard labels.
pub fn train(init: Predictor, config: &TrainConfig, train: &Examples, val: &Examples) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Validation("training and validation sets must be non-empty".into()));
    }
    let labels = if config.label_noise_rate > 0.0 {
        inject_label_noise(&train.labels, config.label_noise_rate, config.seed ^ 0x006e_6f69_7365)
    } else {
        train.labels.clone()
    };
    let val_labels = val.binary_labels();
    let mut predictor = init;
    let shapes: Vec<usize> = predictor.params.tensors().iter().map(|(_, m)| m.len()).collect();
    let mut adam = Adam::new(&shapes, config.beta1, config.beta2, config.epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Predictor)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let (grad, loss) = batch_gradient(&predictor, train, &labels, idx)?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            epoch_loss += loss;
            adam.step(predictor.params.tensors_mut(), grad.tensors().into_iter().map(|(_, m)| m).collect(), config.learning_rate);
        }
        let evaluate = epoch % config.eval_every == 0 || epoch == config.epochs;
        let val_auc = if evaluate {
            let scores = predict_all(&predictor, val)?;
            auc(&scores, &val_labels).ok()
        } else {
            None
        };
        log::info!("epoch {epoch}: train loss {:.6}, val auc {:?}", epoch_loss / train.len() as f64, val_auc);
        if let Some(a) = val_auc {
            if best.as_ref().is_none_or(|(b, _, _)| a > *b) {
                best = Some((a, epoch, predictor.clone()));
            }
        }
        trace.push(TraceRow { epoch, step: adam.steps(), train_loss: epoch_loss / train.len() as f64, val_auc });
    }
    let (best_val_auc, best_epoch, best) = match best {
        Some((a, e, p)) => (Some(a), e, p),
        None => (None, config.epochs, predictor.clone()),
    };
    Ok(TrainOutcome { last: predictor, best, best_epoch, best_val_auc, trace })
}
