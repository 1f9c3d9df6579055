//! L1 training with Adam, a warmup/inverse-square-root learning-rate
//! schedule, early stopping on validation loss, and checkpointing.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::model::{container, forward, update_running_stats, ForwardMode, ModelWeights, Params};

pub const OPTIMIZER_MAGIC: [u8; 4] = *b"BGO1";

/// `k * d^-0.5 * min(n^-0.5, n * warmup^-1.5)` for step `n >= 1`.
pub fn lr_schedule(n: u64, d_model: usize, k: f64, warmup: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("learning-rate step must be >= 1"));
    }
    if warmup == 0 || d_model == 0 {
        return Err(Error::invalid("warmup and d_model must be positive"));
    }
    let n = n as f64;
    Ok(k * (d_model as f64).powf(-0.5) * n.powf(-0.5).min(n * (warmup as f64).powf(-1.5)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

/// Adam moments per parameter and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: BTreeMap<String, Vec<f32>>,
    pub v: BTreeMap<String, Vec<f32>>,
}

#[derive(Serialize, Deserialize)]
struct OptimizerMeta {
    config: AdamConfig,
    step: u64,
}

impl OptimizerState {
    pub fn new(weights: &ModelWeights, config: AdamConfig) -> Self {
        let zeros = |n: &String| (n.clone(), vec![0.0; weights.get(n).map_or(0, |t| t.numel())]);
        let names = weights.trainable_names();
        Self {
            config,
            step: 0,
            m: names.iter().map(zeros).collect(),
            v: names.iter().map(zeros).collect(),
        }
    }

    /// One bias-corrected Adam update. Every parameter with a moment entry
    /// must have a gradient; a non-finite gradient aborts before any weight
    /// changes.
    pub fn adam_step(&mut self, weights: &mut ModelWeights, grads: &BTreeMap<String, Vec<f32>>, lr: f64) -> Result<()> {
        for (name, m) in &self.m {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::invalid(format!("missing gradient for `{name}`")))?;
            if g.len() != m.len() {
                return Err(Error::shape(format!("gradient for `{name}` has {} values, expected {}", g.len(), m.len())));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powf(self.step as f64);
        let c2 = 1.0 - beta2.powf(self.step as f64);
        for (name, m) in self.m.iter_mut() {
            let v = self.v.get_mut(name).expect("moments share keys");
            let g = &grads[name];
            let w = weights.get_mut(name)?.data_mut();
            for i in 0..g.len() {
                let gi = f64::from(g[i]);
                let mi = beta1 * f64::from(m[i]) + (1.0 - beta1) * gi;
                let vi = beta2 * f64::from(v[i]) + (1.0 - beta2) * gi * gi;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
                w[i] = (f64::from(w[i]) - update) as f32;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::to_value(OptimizerMeta {
            config: self.config,
            step: self.step,
        })?;
        let mut owned = Vec::new();
        for (name, m) in &self.m {
            owned.push((format!("m.{name}"), Tensor::new(vec![m.len()], m.clone())?));
            owned.push((format!("v.{name}"), Tensor::new(vec![m.len()], self.v[name].clone())?));
        }
        let list: Vec<(&str, &Tensor<f32>)> = owned.iter().map(|(n, t)| (n.as_str(), t)).collect();
        container::write(path, &container::encode(OPTIMIZER_MAGIC, meta, &list)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, tensors) = container::decode(OPTIMIZER_MAGIC, &container::read(path)?, path)?;
        let meta: OptimizerMeta =
            serde_json::from_value(meta).map_err(|e| Error::format(path, format!("optimizer metadata: {e}")))?;
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for (name, t) in tensors {
            let data = t.into_data();
            if let Some(n) = name.strip_prefix("m.") {
                m.insert(n.to_string(), data);
            } else if let Some(n) = name.strip_prefix("v.") {
                v.insert(n.to_string(), data);
            } else {
                return Err(Error::format(path, format!("unexpected tensor `{name}`")));
            }
        }
        if m.keys().ne(v.keys()) {
            return Err(Error::format(path, "first and second moments name different parameters"));
        }
        Ok(Self {
            config: meta.config,
            step: meta.step,
            m,
            v,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub warmup: u64,
    pub k: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Global gradient-norm clip; off when `None`.
    pub grad_clip: Option<f64>,
    pub bn_momentum: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            warmup: 500,
            k: 1.0,
            batch_size: 32,
            max_epochs: 100,
            patience: 5,
            seed: 0,
            grad_clip: None,
            bn_momentum: 0.1,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup == 0 || self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::invalid("warmup, batch_size, max_epochs and patience must be positive"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::invalid(format!("grad_clip must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// One training sequence: row-major `len x feature_dim` normalized features
/// and `len x output_dim` target skeleton, borrowed from prepared pieces.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub features: &'a [f64],
    pub target: &'a [f64],
    pub len: usize,
}

fn stack<'a>(
    weights: &ModelWeights,
    batch: &[Example<'a>],
) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let cfg = &weights.config;
    let len = batch[0].len;
    let (fd, od) = (cfg.feature_dim, cfg.output_dim());
    let mut x = Vec::with_capacity(batch.len() * len * fd);
    let mut y = Vec::with_capacity(batch.len() * len * od);
    for ex in batch {
        if ex.len != len || ex.features.len() != len * fd || ex.target.len() != len * od {
            return Err(Error::shape(format!(
                "batch examples must share length {len} with {fd} feature and {od} target columns"
            )));
        }
        x.extend(ex.features.iter().map(|&v| v as f32));
        y.extend(ex.target.iter().map(|&v| v as f32));
    }
    Ok((
        Tensor::new(vec![batch.len(), len, fd], x)?,
        Tensor::new(vec![batch.len(), len, od], y)?,
    ))
}

/// Gradients of the batch L1 loss with respect to every trainable tensor,
/// plus the loss and the batch-norm statistics of the pass.
pub struct BatchGrad {
    pub loss: f64,
    pub grads: BTreeMap<String, Vec<f32>>,
    pub bn_stats: Vec<(String, crate::autodiff::BatchStats)>,
}

pub fn batch_gradient(weights: &ModelWeights, batch: &[Example<'_>], mode: ForwardMode) -> Result<BatchGrad> {
    let (x, y) = stack(weights, batch)?;
    let tape = Tape::<f32>::new();
    let params = Params::bind(weights, &tape, true);
    let out = forward(weights, &params, tape.constant(x), mode)?;
    let loss = out.full.l1_loss(&tape.constant(y))?;
    tape.backward(loss)?;
    let grads = params
        .iter()
        .map(|(name, v)| {
            let g = v
                .grad()
                .map_or_else(|| vec![0.0; v.value_ref().numel()], Tensor::into_data);
            (name.to_string(), g)
        })
        .collect();
    Ok(BatchGrad {
        loss: f64::from(loss.item()),
        grads,
        bn_stats: out.bn_stats,
    })
}

/// Mean L1 over `data`, evaluated in batches of `batch_size`.
pub fn evaluate_loss(weights: &ModelWeights, data: &[Example<'_>], batch_size: usize, mode: ForwardMode) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty set"));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for batch in data.chunks(batch_size.max(1)) {
        let (x, y) = stack(weights, batch)?;
        let tape = Tape::<f32>::new();
        let params = Params::bind(weights, &tape, false);
        let out = forward(weights, &params, tape.constant(x), mode)?;
        let n = y.numel();
        let loss = out.full.l1_loss(&tape.constant(y))?;
        total += f64::from(loss.item()) * n as f64;
        count += n;
    }
    Ok(total / count as f64)
}

fn clip_gradients(grads: &mut BTreeMap<String, Vec<f32>>, max_norm: f64) {
    let norm = grads
        .values()
        .flat_map(|g| g.iter())
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = (max_norm / norm) as f32;
        grads.values_mut().for_each(|g| g.iter_mut().for_each(|v| *v *= s));
    }
}

/// One optimizer step on `batch` at the scheduled learning rate for the
/// next step. Returns the training-mode batch loss.
pub fn train_step(
    weights: &mut ModelWeights,
    opt: &mut OptimizerState,
    batch: &[Example<'_>],
    cfg: &TrainConfig,
) -> Result<f64> {
    let n = opt.step + 1;
    let lr = lr_schedule(n, weights.config.d_model, cfg.k, cfg.warmup)?;
    let mode = ForwardMode::train(cfg.seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ n);
    let mut g = batch_gradient(weights, batch, mode)?;
    if let Some(c) = cfg.grad_clip {
        clip_gradients(&mut g.grads, c);
    }
    opt.adam_step(weights, &g.grads, lr)?;
    update_running_stats(weights, &g.bn_stats, cfg.bn_momentum)?;
    Ok(g.loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    /// Seconds since training started.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

pub struct FitResult {
    /// Weights of the best validation epoch.
    pub weights: ModelWeights,
    /// Optimizer state at the end of training.
    pub optimizer: OptimizerState,
    pub history: History,
}

/// Batch order of one epoch: a permutation drawn from `(seed, epoch)` only.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Trains until validation loss has not reached a new strict minimum for
/// `patience` epochs, or `max_epochs`. Each epoch appends one JSON line to
/// `log` when given.
pub fn fit(
    init: ModelWeights,
    train: &[Example<'_>],
    val: &[Example<'_>],
    cfg: &TrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<FitResult> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid(format!(
            "training needs nonempty splits, got {} train and {} validation examples",
            train.len(),
            val.len()
        )));
    }
    let start = Instant::now();
    let mut weights = init;
    let mut opt = OptimizerState::new(&weights, cfg.adam);
    let mut best = (weights.clone(), f64::INFINITY, 0usize);
    let mut epochs = Vec::new();
    let mut since_best = 0;
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        let order = epoch_order(train.len(), cfg.seed, epoch);
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Example<'_>> = chunk.iter().map(|&i| train[i]).collect();
            let loss = train_step(&mut weights, &mut opt, &batch, cfg)?;
            sum += loss * batch.len() as f64;
            count += batch.len();
        }
        let val_loss = evaluate_loss(&weights, val, cfg.batch_size, ForwardMode::eval())?;
        let rec = EpochRecord {
            epoch,
            train_loss: sum / count as f64,
            val_loss,
            lr: lr_schedule(opt.step.max(1), weights.config.d_model, cfg.k, cfg.warmup)?,
            wall_time: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train {:.5} val {:.5} lr {:.3e}",
            rec.train_loss,
            rec.val_loss,
            rec.lr
        );
        if let Some(w) = log.as_deref_mut() {
            serde_json::to_writer(&mut *w, &rec)?;
            writeln!(w).map_err(|e| Error::io("<train log>", e))?;
        }
        epochs.push(rec);
        if val_loss < best.1 {
            best = (weights.clone(), val_loss, epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(FitResult {
        weights: best.0,
        optimizer: opt,
        history: History {
            epochs,
            best_epoch: best.2,
            best_val_loss: best.1,
            stopped_early,
        },
    })
}
