use std::ops::ControlFlow;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::Batch;
use super::metrics::QErrorSummary;
use super::network::{forward, qerror, train_step, LossKind, LossSpec};
use super::params::MscnParams;
use super::{MscnError, Real};
use crate::featurizer::{denormalize_label, FeatureDims, FeaturizedQuery, LabeledSample};
use crate::seed::{derive_seed, streams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Both operands of the q-error are clamped to at least this.
    pub qerror_floor: f64,
    pub hidden_units: usize,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 25,
            batch_size: 128,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            validation_fraction: 0.1,
            seed: 0,
            qerror_floor: 1.0,
            hidden_units: 256,
            loss: LossKind::QError,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MscnError> {
        let bad = |m: &str| Err(MscnError::InvalidConfig(m.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if self.hidden_units < 1 {
            return bad("hidden_units must be at least 1");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie strictly between 0 and 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return bad("Adam parameters out of range");
        }
        if self.qerror_floor.is_nan() || self.qerror_floor < 1.0 {
            return bad("qerror_floor must be at least 1");
        }
        Ok(())
    }
}

/// Adam with bias correction.
pub struct Adam<F> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: i32,
    m: MscnParams<F>,
    v: MscnParams<F>,
}

impl<F: Real> Adam<F> {
    pub fn new(params: &MscnParams<F>, config: &TrainConfig) -> Self {
        Adam {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            step: 0,
            m: MscnParams::zeros(params.shape()),
            v: MscnParams::zeros(params.shape()),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn update(&mut self, params: &mut MscnParams<F>, grads: &MscnParams<F>) {
        self.step += 1;
        let c = |x: f64| F::from_f64(x).expect("finite");
        let (b1, b2) = (c(self.beta1), c(self.beta2));
        let (one_b1, one_b2) = (c(1.0 - self.beta1), c(1.0 - self.beta2));
        let bc1 = c(1.0 - self.beta1.powi(self.step));
        let bc2 = c(1.0 - self.beta2.powi(self.step));
        let lr = c(self.lr);
        let eps = c(self.epsilon);
        for (((p, g), m), v) in params
            .slices_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_qerror: f64,
    pub validation_qerror: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub train_size: usize,
    pub validation_size: usize,
    pub steps: u64,
    /// Validation q-errors of the returned parameters.
    pub validation: Option<QErrorSummary>,
}

impl TrainReport {
    /// One JSON object per epoch.
    pub fn to_json_lines(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("serializable") + "\n")
            .collect()
    }
}

/// Progress callbacks from [`train`]. Returning `Break` cancels training.
pub enum TrainEvent<'a> {
    Batch { epoch: usize, done: usize, total: usize },
    Epoch(&'a EpochRecord),
}

/// Predictions in batches of at most 512 queries.
pub fn predict_normalized<F: Real>(
    params: &MscnParams<F>,
    dims: &FeatureDims,
    queries: &[&FeaturizedQuery],
) -> Result<Vec<f64>, MscnError> {
    let mut out = Vec::with_capacity(queries.len());
    for chunk in queries.chunks(512) {
        let batch = Batch::assemble(dims, chunk);
        let fw = forward(params, &batch)?;
        out.extend(fw.predictions.iter().map(|y| y.to_f64().expect("finite")));
    }
    Ok(out)
}

/// Per-query q-errors of the model on `samples`.
pub fn evaluate<F: Real>(
    params: &MscnParams<F>,
    dims: &FeatureDims,
    samples: &[&LabeledSample],
    label_log_max: f64,
    floor: f64,
) -> Result<Vec<f64>, MscnError> {
    let queries: Vec<&FeaturizedQuery> = samples.iter().map(|s| &s.features).collect();
    let ys = predict_normalized(params, dims, &queries)?;
    Ok(ys
        .iter()
        .zip(samples)
        .map(|(y, s)| qerror(denormalize_label(label_log_max, *y), s.cardinality as f64, floor))
        .collect())
}

/// Mini-batch Adam training with a seeded train/validation split. Returns
/// the parameters of the epoch with the lowest mean validation q-error.
pub fn train<F: Real>(
    init: MscnParams<F>,
    dims: &FeatureDims,
    corpus: &[LabeledSample],
    label_log_max: f64,
    config: &TrainConfig,
    observer: &mut dyn FnMut(TrainEvent<'_>) -> ControlFlow<()>,
) -> Result<(MscnParams<F>, TrainReport), MscnError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(MscnError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, streams::TRAIN));
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng);
    let val_size = if corpus.len() < 2 {
        0
    } else {
        ((corpus.len() as f64 * config.validation_fraction).round() as usize).clamp(1, corpus.len() - 1)
    };
    let (val_idx, train_idx) = order.split_at(val_size);
    let mut train_idx = train_idx.to_vec();
    let val: Vec<&LabeledSample> = val_idx.iter().map(|&i| &corpus[i]).collect();

    let spec = LossSpec {
        kind: config.loss,
        label_log_max,
        floor: config.qerror_floor,
    };
    let mut params = init;
    let mut adam = Adam::new(&params, config);
    let mut best: Option<(f64, usize, MscnParams<F>)> = None;
    let mut epochs = Vec::with_capacity(config.epochs);
    let batches = train_idx.len().div_ceil(config.batch_size);

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        train_idx.shuffle(&mut rng);
        let mut q_total = 0.0;
        for (done, chunk) in train_idx.chunks(config.batch_size).enumerate() {
            let feats: Vec<&FeaturizedQuery> = chunk.iter().map(|&i| &corpus[i].features).collect();
            let labels: Vec<F> = chunk
                .iter()
                .map(|&i| F::from_f64(corpus[i].label).expect("finite"))
                .collect();
            let cards: Vec<f64> = chunk.iter().map(|&i| corpus[i].cardinality as f64).collect();
            let batch = Batch::assemble(dims, &feats);
            let (_, mean_q, grads) = train_step(&params, &batch, &labels, &cards, &spec)?;
            q_total += mean_q * chunk.len() as f64;
            adam.update(&mut params, &grads);
            if observer(TrainEvent::Batch {
                epoch,
                done: done + 1,
                total: batches,
            })
            .is_break()
            {
                return Err(MscnError::Cancelled);
            }
        }
        if !params.is_finite() {
            return Err(MscnError::NonFiniteValue(format!("parameters after epoch {epoch}")));
        }
        let train_qerror = q_total / train_idx.len() as f64;
        let validation_qerror = if val.is_empty() {
            None
        } else {
            let errs = evaluate(&params, dims, &val, label_log_max, config.qerror_floor)?;
            Some(errs.iter().sum::<f64>() / errs.len() as f64)
        };
        let score = validation_qerror.unwrap_or(train_qerror);
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, epoch, params.clone()));
        }
        let record = EpochRecord {
            epoch,
            train_qerror,
            validation_qerror,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        if observer(TrainEvent::Epoch(&record)).is_break() {
            return Err(MscnError::Cancelled);
        }
        epochs.push(record);
    }

    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    let validation = if val.is_empty() {
        None
    } else {
        QErrorSummary::from_errors(&evaluate(&best_params, dims, &val, label_log_max, config.qerror_floor)?)
    };
    Ok((
        best_params,
        TrainReport {
            epochs,
            best_epoch,
            train_size: train_idx.len(),
            validation_size: val.len(),
            steps: adam.steps() as u64,
            validation,
        },
    ))
}
