use std::borrow::Cow;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::loss::{evaluate, mean_gap, LossKind, PanoExample};
use super::policy::{PolicyPair, ToyPolicyParams};
use super::PolicyError;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Linear warm-up, then cosine decay to zero.
    Cosine,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_ratio: f64,
    pub schedule: Schedule,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub loss: LossKind,
    /// Prefer the clean question over the perturbed one in `dpo_t`.
    pub flip_dpo_t: bool,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            epochs: 3,
            batch_size: 64,
            lr: 1e-5,
            warmup_ratio: 0.1,
            schedule: Schedule::Cosine,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            loss: LossKind::PanoDpo,
            flip_dpo_t: false,
            embed_dim: 16,
            hidden_dim: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: String| Err(PolicyError::Config(m));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return bad(format!("warmup ratio must be in [0, 1], got {}", self.warmup_ratio));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must be in [0, 1)".into());
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return bad("embedding and hidden dims must be >= 1".into());
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }

    pub fn warmup_steps(&self, total_steps: usize) -> usize {
        (self.warmup_ratio * total_steps as f64).ceil() as usize
    }

    /// Learning rate for 0-based `step` out of `total_steps`.
    pub fn lr_at(&self, step: usize, total_steps: usize) -> f64 {
        let warmup = self.warmup_steps(total_steps);
        if step < warmup {
            return self.lr * (step + 1) as f64 / warmup as f64;
        }
        match self.schedule {
            Schedule::Constant => self.lr,
            Schedule::Cosine => {
                let span = total_steps.saturating_sub(warmup).max(1);
                let progress = (step - warmup) as f64 / span as f64;
                0.5 * self.lr * (1.0 + (PI * progress).cos())
            }
        }
    }
}

/// Per-epoch summary. Epoch 0 is the state before any update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub dpo_m: f64,
    pub dpo_v: Option<f64>,
    pub dpo_t: Option<f64>,
    /// Mean optimized objective: `dpo_m` for DPO, the three-term sum for PanoDPO.
    pub total: f64,
    /// Held-out mean of `log pi(chosen) - log pi(rejected)` after the epoch.
    pub mean_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub steps: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
}

/// Trains `pair.theta` in place on a fixed example set.
pub fn train(
    pair: &mut PolicyPair,
    train_set: &[PanoExample],
    heldout: &[PanoExample],
    config: &TrainConfig,
) -> Result<TrainOutcome, PolicyError> {
    train_epochs(pair, |_| Cow::Borrowed(train_set), heldout, config)
}

/// Like [`train`], but asks `examples_for_epoch(e)` (1-based) for each epoch's
/// data, so rejected videos can be re-drawn per epoch. Epoch 0 is the initial state.
/// Every call must return the same number of examples.
pub fn train_epochs<'a>(
    pair: &mut PolicyPair,
    examples_for_epoch: impl Fn(usize) -> Cow<'a, [PanoExample]>,
    heldout: &[PanoExample],
    config: &TrainConfig,
) -> Result<TrainOutcome, PolicyError> {
    config.validate()?;
    let initial = examples_for_epoch(0);
    if initial.is_empty() {
        return Err(PolicyError::Precondition("no training examples".into()));
    }
    let n = initial.len();
    let gap_set: &[PanoExample] = if heldout.is_empty() { &initial } else { heldout };

    let init_eval = evaluate(pair, &initial, config.beta, config.loss, config.flip_dpo_t, false)?;
    let mut history = vec![EpochRecord {
        epoch: 0,
        dpo_m: init_eval.dpo_m,
        dpo_v: init_eval.dpo_v,
        dpo_t: init_eval.dpo_t,
        total: init_eval.objective,
        mean_gap: mean_gap(&pair.theta, gap_set)?,
    }];

    let per_epoch = config.steps_per_epoch(n);
    let total_steps = per_epoch * config.epochs;
    let mut adam = Adam::new(pair.theta.data().len());
    let mut step = 0;
    for epoch in 1..=config.epochs {
        let data = if epoch == 1 { initial.clone() } else { examples_for_epoch(epoch) };
        if data.len() != n {
            return Err(PolicyError::Precondition(format!(
                "epoch {epoch} has {} examples, expected {n}",
                data.len()
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        StreamRng::new(config.seed, "train-order", &format!("epoch{epoch}")).shuffle(&mut order);

        let (mut sum_m, mut sum_v, mut sum_t, mut sum_obj) = (0.0, Some(0.0), Some(0.0), 0.0);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<PanoExample> = chunk.iter().map(|&i| data[i].clone()).collect();
            let eval = evaluate(pair, &batch, config.beta, config.loss, config.flip_dpo_t, true)
                .map_err(|e| match e {
                    PolicyError::NonFinite { term } | PolicyError::Diverged { term, .. } => {
                        PolicyError::Diverged { step, term }
                    }
                    other => other,
                })?;
            if !eval.objective.is_finite() {
                return Err(PolicyError::Diverged {
                    step,
                    term: "objective".into(),
                });
            }
            let w = batch.len() as f64;
            sum_m += w * eval.dpo_m;
            sum_v = sum_v.zip(eval.dpo_v).map(|(a, b)| a + w * b);
            sum_t = sum_t.zip(eval.dpo_t).map(|(a, b)| a + w * b);
            sum_obj += w * eval.objective;
            let grad = eval.grad.expect("requested");
            adam.step(
                pair.theta.data_mut(),
                grad.data(),
                config.lr_at(step, total_steps),
                config,
            );
            if let Some(b) = pair.theta.non_finite_block() {
                return Err(PolicyError::Diverged {
                    step,
                    term: format!("parameters in block {}", b.name()),
                });
            }
            step += 1;
        }
        let nf = n as f64;
        history.push(EpochRecord {
            epoch,
            dpo_m: sum_m / nf,
            dpo_v: sum_v.map(|v| v / nf),
            dpo_t: sum_t.map(|t| t / nf),
            total: sum_obj / nf,
            mean_gap: mean_gap(&pair.theta, gap_set)?,
        });
    }
    Ok(TrainOutcome {
        history,
        steps: step,
    })
}

/// Writes `epoch,dpo_m,dpo_v,dpo_t,total,mean_gap`; absent terms are empty cells.
pub fn write_history_csv<W: std::io::Write>(history: &[EpochRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "dpo_m", "dpo_v", "dpo_t", "total", "mean_gap"])?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.10}")).unwrap_or_default();
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            cell(Some(r.dpo_m)),
            cell(r.dpo_v),
            cell(r.dpo_t),
            cell(Some(r.total)),
            cell(Some(r.mean_gap)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Fresh policy pair sized for `vocab_len` under `config`.
pub fn init_pair(vocab_len: usize, config: &TrainConfig) -> PolicyPair {
    let dims = super::policy::Dims {
        vocab: vocab_len,
        embed: config.embed_dim,
        hidden: config.hidden_dim,
    };
    PolicyPair::new(ToyPolicyParams::init(dims, config.seed))
}
