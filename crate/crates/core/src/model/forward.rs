use std::collections::HashMap;

use super::{ModelConfig, ModelWeights};
use crate::autodiff::{BatchStats, BnMode, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Model tensors registered on one tape.
pub struct Params<'t, T: Real> {
    vars: HashMap<String, Var<'t, T>>,
}

impl<'t, T: Real> Params<'t, T> {
    /// Registers every trainable tensor of `weights`; as parameters when
    /// `trainable`, as constants otherwise.
    pub fn bind(weights: &ModelWeights, tape: &'t Tape<T>, trainable: bool) -> Self {
        let vars = weights
            .iter()
            .filter(|(name, _)| !ModelWeights::is_buffer(name))
            .map(|(name, t)| {
                let t = t.cast::<T>();
                let v = if trainable { tape.param(t) } else { tape.constant(t) };
                (name.to_string(), v)
            })
            .collect();
        Self { vars }
    }

    pub fn from_vars(names: &[String], vars: &[Var<'t, T>]) -> Self {
        Self {
            vars: names.iter().cloned().zip(vars.iter().copied()).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var<'t, T>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid(format!("no parameter named `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var<'t, T>)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardMode {
    /// Normalize with batch statistics instead of running averages.
    pub batch_stats: bool,
    pub dropout: bool,
    /// Seed for dropout masks.
    pub seed: u64,
    /// Keep every attention matrix for inspection.
    pub trace_attention: bool,
}

impl ForwardMode {
    pub fn eval() -> Self {
        Self::default()
    }

    pub fn train(seed: u64) -> Self {
        Self {
            batch_stats: true,
            dropout: true,
            seed,
            trace_attention: false,
        }
    }
}

/// Softmax weights of one head, `[B, L, L]`.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub block: usize,
    pub head: usize,
    pub weights: Tensor<f64>,
}

pub struct ForwardOutput<'t, T: Real> {
    /// `[B, L, body_dim + rh_dim]` in joint layout.
    pub full: Var<'t, T>,
    pub body: Var<'t, T>,
    pub rh: Var<'t, T>,
    /// Batch statistics per batch-norm layer (training mode only).
    pub bn_stats: Vec<(String, BatchStats)>,
    pub attention: Vec<AttentionTrace>,
}

struct Ctx<'a, 't, T: Real> {
    cfg: &'a ModelConfig,
    weights: &'a ModelWeights,
    p: &'a Params<'t, T>,
    mode: ForwardMode,
    bn_stats: Vec<(String, BatchStats)>,
    attention: Vec<AttentionTrace>,
}

pub fn linear<'t, T: Real>(x: Var<'t, T>, w: Var<'t, T>, b: Var<'t, T>) -> Result<Var<'t, T>> {
    x.matmul(&w)?.add_bias(&b)
}

/// Weights of one relative-position multi-head attention layer.
pub struct AttentionParams<'t, T: Real> {
    pub wq: Var<'t, T>,
    pub wk: Var<'t, T>,
    pub wv: Var<'t, T>,
    pub wo: Var<'t, T>,
    /// `[2C+1, d_head]` key and value embeddings of clipped offsets `j - i`,
    /// shared by all heads.
    pub rel_k: Var<'t, T>,
    pub rel_v: Var<'t, T>,
}

/// Multi-head self-attention over `[B, L, d]` with relative-position keys and
/// values, followed by the output projection and a residual connection.
/// When `trace` is given, each head's attention matrix is appended to it.
pub fn attention<'t, T: Real>(
    x: Var<'t, T>,
    p: &AttentionParams<'t, T>,
    n_heads: usize,
    max_dist: usize,
    mut trace: Option<&mut Vec<Tensor<f64>>>,
) -> Result<Var<'t, T>> {
    let shape = x.shape();
    if shape.len() != 3 || shape[1] == 0 {
        return Err(Error::shape(format!("attention expects [B, L, d] with L >= 1, got {shape:?}")));
    }
    let d = shape[2];
    if n_heads == 0 || d % n_heads != 0 {
        return Err(Error::shape(format!("{d} channels do not split into {n_heads} heads")));
    }
    let dh = d / n_heads;
    let q = x.matmul(&p.wq)?;
    let k = x.matmul(&p.wk)?;
    let v = x.matmul(&p.wv)?;
    let rel_kt = p.rel_k.transpose()?;
    let scale = T::lit(1.0 / (dh as f64).sqrt());
    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = q.narrow(2, h * dh, dh)?;
        let kh = k.narrow(2, h * dh, dh)?;
        let vh = v.narrow(2, h * dh, dh)?;
        let content = qh.matmul(&kh.transpose()?)?;
        let position = qh.matmul(&rel_kt)?.rel_gather(max_dist)?;
        let a = content.add(&position)?.scale(scale).softmax();
        if let Some(t) = trace.as_deref_mut() {
            t.push(a.value().cast());
        }
        let out = a.matmul(&vh)?.add(&a.rel_scatter(max_dist)?.matmul(&p.rel_v)?)?;
        heads.push(out);
    }
    Var::concat(&heads, 2)?.matmul(&p.wo)?.add(&x)
}

/// Position-wise `relu(x W1 + b1) W2 + b2`.
pub fn ffn<'t, T: Real>(
    x: Var<'t, T>,
    w1: Var<'t, T>,
    b1: Var<'t, T>,
    w2: Var<'t, T>,
    b2: Var<'t, T>,
) -> Result<Var<'t, T>> {
    linear(linear(x, w1, b1)?.relu(), w2, b2)
}

impl<'t, T: Real> Ctx<'_, 't, T> {
    fn conv_bn_relu(&mut self, x: Var<'t, T>, prefix: &str, idx: usize) -> Result<Var<'t, T>> {
        let y = x.conv1d(&self.p.get(&format!("{prefix}.conv{idx}.weight"))?, None)?;
        let bn = format!("{prefix}.bn{idx}");
        let gamma = self.p.get(&format!("{bn}.gamma"))?;
        let beta = self.p.get(&format!("{bn}.beta"))?;
        let (y, stats) = if self.mode.batch_stats {
            y.batch_norm(&gamma, &beta, BnMode::Train)?
        } else {
            let rm: Vec<f64> = self.weights.get(&format!("{bn}.running_mean"))?.to_f64_vec();
            let rv: Vec<f64> = self.weights.get(&format!("{bn}.running_var"))?.to_f64_vec();
            y.batch_norm(
                &gamma,
                &beta,
                BnMode::Eval {
                    running_mean: &rm,
                    running_var: &rv,
                },
            )?
        };
        if let Some(s) = stats {
            self.bn_stats.push((bn, s));
        }
        Ok(y.relu())
    }

    fn unet_block(&mut self, x: Var<'t, T>, b: usize) -> Result<Var<'t, T>> {
        let l = x.shape()[1];
        if l < self.cfg.min_len() {
            return Err(Error::invalid(format!(
                "sequence of {l} frames is shorter than {} needed for {} U-net levels",
                self.cfg.min_len(),
                self.cfg.n_unet_levels
            )));
        }
        let mut skips = vec![x];
        let mut h = x;
        for n in 0..self.cfg.n_unet_levels {
            let p = format!("block{b}.down{n}");
            h = h.avg_pool1d(2)?;
            h = self.conv_bn_relu(h, &p, 1)?;
            h = self.conv_bn_relu(h, &p, 2)?;
            skips.push(h);
        }
        skips.pop();
        let ap = AttentionParams {
            wq: self.p.get(&format!("block{b}.attn.wq"))?,
            wk: self.p.get(&format!("block{b}.attn.wk"))?,
            wv: self.p.get(&format!("block{b}.attn.wv"))?,
            wo: self.p.get(&format!("block{b}.attn.wo"))?,
            rel_k: self.p.get(&format!("block{b}.attn.rel_k"))?,
            rel_v: self.p.get(&format!("block{b}.attn.rel_v"))?,
        };
        let mut trace = Vec::new();
        let tr = self.mode.trace_attention.then_some(&mut trace);
        h = attention(h, &ap, self.cfg.n_heads, self.cfg.max_rel_dist, tr)?;
        for (head, weights) in trace.into_iter().enumerate() {
            self.attention.push(AttentionTrace { block: b, head, weights });
        }
        for n in (0..self.cfg.n_unet_levels).rev() {
            let skip = skips[n];
            let p = format!("block{b}.up{n}");
            h = h.upsample(skip.shape()[1])?;
            h = Var::concat(&[h, skip], 2)?;
            h = self.conv_bn_relu(h, &p, 1)?;
            h = self.conv_bn_relu(h, &p, 2)?;
        }
        Ok(h)
    }

    fn lin(&self, x: Var<'t, T>, prefix: &str) -> Result<Var<'t, T>> {
        linear(
            x,
            self.p.get(&format!("{prefix}.weight"))?,
            self.p.get(&format!("{prefix}.bias"))?,
        )
    }

    fn lstm(&self, x: Var<'t, T>, prefix: &str) -> Result<Var<'t, T>> {
        x.lstm(
            &self.p.get(&format!("{prefix}.w_ih"))?,
            &self.p.get(&format!("{prefix}.w_hh"))?,
            &self.p.get(&format!("{prefix}.bias"))?,
            None,
        )
    }

    fn dropout(&self, x: Var<'t, T>, salt: u64) -> Result<Var<'t, T>> {
        let seed = self.mode.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt;
        x.dropout(self.cfg.dropout, self.mode.dropout, seed)
    }
}

/// Runs the generator on `features` `[B, L, feature_dim]`.
pub fn forward<'t, T: Real>(
    weights: &ModelWeights,
    params: &Params<'t, T>,
    features: Var<'t, T>,
    mode: ForwardMode,
) -> Result<ForwardOutput<'t, T>> {
    let cfg = &weights.config;
    let shape = features.shape();
    if shape.len() != 3 || shape[2] != cfg.feature_dim {
        return Err(Error::shape(format!(
            "features must be [B, L, {}], got {shape:?}",
            cfg.feature_dim
        )));
    }
    if !features.value_ref().all_finite() {
        return Err(Error::invalid("non-finite input features"));
    }
    let mut ctx = Ctx {
        cfg,
        weights,
        p: params,
        mode,
        bn_stats: Vec::new(),
        attention: Vec::new(),
    };
    let mut h = ctx.lin(features, "input")?;
    for b in 0..cfg.n_blocks {
        h = ctx.unet_block(h, b)?;
    }
    let h = ffn(
        h,
        params.get("ffn.lin1.weight")?,
        params.get("ffn.lin1.bias")?,
        params.get("ffn.lin2.weight")?,
        params.get("ffn.lin2.bias")?,
    )?;

    let rh = ctx.lstm(h, "rh.lstm")?;
    let rh = ctx.dropout(rh, 0x5248)?;
    let rh = ctx.lin(rh, "rh.out")?;
    let refine = ctx.lin(h, "refine")?;
    let wrist_at = cfg.rh_dim - 3;
    let rh = Var::concat(
        &[rh.narrow(2, 0, wrist_at)?, rh.narrow(2, wrist_at, 3)?.add(&refine)?],
        2,
    )?;

    let body = ctx.lstm(features, "body.lstm")?;
    let body = ctx.dropout(body, 0x424f)?;
    let body = ctx.lin(body, "body.out")?;

    let full = merge_joints(cfg, body, rh)?;
    Ok(ForwardOutput {
        full,
        body,
        rh,
        bn_stats: ctx.bn_stats,
        attention: ctx.attention,
    })
}

/// Interleaves body and right-hand columns into the full joint layout,
/// copying contiguous runs.
fn merge_joints<'t, T: Real>(cfg: &ModelConfig, body: Var<'t, T>, rh: Var<'t, T>) -> Result<Var<'t, T>> {
    let plan = cfg.split.merge_plan();
    let mut parts = Vec::new();
    let mut c = 0;
    while c < plan.len() {
        let (src_rh, start) = plan[c];
        let mut len = 1;
        while c + len < plan.len() && plan[c + len] == (src_rh, start + len) {
            len += 1;
        }
        let src = if src_rh { rh } else { body };
        parts.push(src.narrow(2, start, len)?);
        c += len;
    }
    Var::concat(&parts, 2)
}

/// Blends training-batch statistics into the running averages:
/// `running = (1 - momentum) * running + momentum * batch`.
pub fn update_running_stats(weights: &mut ModelWeights, stats: &[(String, BatchStats)], momentum: f64) -> Result<()> {
    for (bn, s) in stats {
        for (suffix, batch) in [("running_mean", &s.mean), ("running_var", &s.var)] {
            let t = weights.get_mut(&format!("{bn}.{suffix}"))?;
            for (r, &b) in t.data_mut().iter_mut().zip(batch.iter()) {
                *r = ((1.0 - momentum) * f64::from(*r) + momentum * b) as f32;
            }
        }
    }
    Ok(())
}

/// Evaluation-mode generation for one sequence of raw (unnormalized)
/// features `[L, feature_dim]`. Applies the stored feature normalization.
pub fn generate(weights: &ModelWeights, features: &Matrix) -> Result<Matrix> {
    let x = match &weights.norm {
        Some(n) => crate::alignment::zscore_apply(features, n)?,
        None => features.clone(),
    };
    let tape = Tape::<f32>::new();
    let params = Params::bind(weights, &tape, false);
    let input = Tensor::new(
        vec![1, x.rows(), x.cols()],
        x.as_slice().iter().map(|&v| v as f32).collect(),
    )?;
    let out = forward(weights, &params, tape.constant(input), ForwardMode::eval())?;
    let full = out.full.value();
    let cols = weights.config.output_dim();
    Matrix::from_vec(x.rows(), cols, full.to_f64_vec())
}
