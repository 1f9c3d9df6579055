use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::container;
use super::ModelConfig;
use crate::alignment::NormStats;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: [u8; 4] = *b"BGW1";

/// How a parameter is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Glorot uniform with the given fan-in and fan-out.
    Glorot(usize, usize),
    /// `[H, 4H]` recurrent matrix: four orthogonal `H x H` blocks.
    Orthogonal,
    /// LSTM bias: forget gate 1, others 0.
    LstmBias,
    Zeros,
    Ones,
}

#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
    /// Running statistics: saved with the weights but never optimized.
    pub buffer: bool,
}

fn spec(name: String, shape: Vec<usize>, init: Init) -> ParamSpec {
    ParamSpec {
        name,
        shape,
        init,
        buffer: false,
    }
}

fn conv_bn(out: &mut Vec<ParamSpec>, prefix: &str, idx: usize, cin: usize, cout: usize, k: usize) {
    out.push(spec(
        format!("{prefix}.conv{idx}.weight"),
        vec![cout, cin, k],
        Init::Glorot(cin * k, cout * k),
    ));
    out.push(spec(format!("{prefix}.bn{idx}.gamma"), vec![cout], Init::Ones));
    out.push(spec(format!("{prefix}.bn{idx}.beta"), vec![cout], Init::Zeros));
    for (stat, init) in [("running_mean", Init::Zeros), ("running_var", Init::Ones)] {
        out.push(ParamSpec {
            buffer: true,
            ..spec(format!("{prefix}.bn{idx}.{stat}"), vec![cout], init)
        });
    }
}

fn linear(out: &mut Vec<ParamSpec>, prefix: &str, din: usize, dout: usize) {
    out.push(spec(format!("{prefix}.weight"), vec![din, dout], Init::Glorot(din, dout)));
    out.push(spec(format!("{prefix}.bias"), vec![dout], Init::Zeros));
}

fn lstm(out: &mut Vec<ParamSpec>, prefix: &str, din: usize, h: usize) {
    out.push(spec(format!("{prefix}.w_ih"), vec![din, 4 * h], Init::Glorot(din, 4 * h)));
    out.push(spec(format!("{prefix}.w_hh"), vec![h, 4 * h], Init::Orthogonal));
    out.push(spec(format!("{prefix}.bias"), vec![4 * h], Init::LstmBias));
}

/// Every named tensor of the model, in a fixed order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let (d, k) = (cfg.d_model, cfg.conv_kernel);
    let mut out = Vec::new();
    linear(&mut out, "input", cfg.feature_dim, d);
    for b in 0..cfg.n_blocks {
        for n in 0..cfg.n_unet_levels {
            let p = format!("block{b}.down{n}");
            conv_bn(&mut out, &p, 1, d, d, k);
            conv_bn(&mut out, &p, 2, d, d, k);
        }
        for w in ["wq", "wk", "wv", "wo"] {
            out.push(spec(format!("block{b}.attn.{w}"), vec![d, d], Init::Glorot(d, d)));
        }
        let (rows, dh) = (2 * cfg.max_rel_dist + 1, cfg.head_dim());
        for r in ["rel_k", "rel_v"] {
            out.push(spec(format!("block{b}.attn.{r}"), vec![rows, dh], Init::Glorot(rows, dh)));
        }
        for n in 0..cfg.n_unet_levels {
            let p = format!("block{b}.up{n}");
            conv_bn(&mut out, &p, 1, 2 * d, d, k);
            conv_bn(&mut out, &p, 2, d, d, k);
        }
    }
    linear(&mut out, "ffn.lin1", d, cfg.d_ff);
    linear(&mut out, "ffn.lin2", cfg.d_ff, d);
    lstm(&mut out, "rh.lstm", d, cfg.lstm_dim);
    linear(&mut out, "rh.out", cfg.lstm_dim, cfg.rh_dim);
    linear(&mut out, "refine", d, 3);
    lstm(&mut out, "body.lstm", cfg.feature_dim, cfg.lstm_dim);
    linear(&mut out, "body.out", cfg.lstm_dim, cfg.body_dim);
    out
}

/// Gram-Schmidt orthonormalization of the rows of a Gaussian matrix.
fn orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut m: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
        let mut ok = true;
        for i in 0..n {
            for j in 0..i {
                let dot: f64 = (0..n).map(|c| m[i * n + c] * m[j * n + c]).sum();
                for c in 0..n {
                    m[i * n + c] -= dot * m[j * n + c];
                }
            }
            let norm = (0..n).map(|c| m[i * n + c].powi(2)).sum::<f64>().sqrt();
            if norm < 1e-6 {
                ok = false;
                break;
            }
            (0..n).for_each(|c| m[i * n + c] /= norm);
        }
        if ok {
            return m;
        }
    }
}

fn init_tensor(s: &ParamSpec, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    let n: usize = s.shape.iter().product();
    let data: Vec<f32> = match s.init {
        Init::Glorot(fi, fo) => {
            let a = (6.0 / (fi + fo) as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-a..a) as f32).collect()
        }
        Init::Orthogonal => {
            let h = s.shape[0];
            let blocks: Vec<Vec<f64>> = (0..4).map(|_| orthogonal(h, rng)).collect();
            let mut data = vec![0.0f32; n];
            for r in 0..h {
                for (g, q) in blocks.iter().enumerate() {
                    for c in 0..h {
                        data[r * 4 * h + g * h + c] = q[r * h + c] as f32;
                    }
                }
            }
            data
        }
        Init::LstmBias => {
            let h = n / 4;
            (0..n).map(|i| if (h..2 * h).contains(&i) { 1.0 } else { 0.0 }).collect()
        }
        Init::Zeros => vec![0.0; n],
        Init::Ones => vec![1.0; n],
    };
    Tensor::new(s.shape.clone(), data).expect("spec shape")
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightsMeta {
    config: ModelConfig,
    norm: Option<NormStats>,
}

/// All model tensors by hierarchical name, plus the feature normalization
/// fitted on the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub norm: Option<NormStats>,
    tensors: BTreeMap<String, Tensor<f32>>,
}

impl ModelWeights {
    /// Fresh weights drawn deterministically from `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = param_specs(config)
            .iter()
            .map(|s| (s.name.clone(), init_tensor(s, &mut rng)))
            .collect();
        Ok(Self {
            config: config.clone(),
            norm: None,
            tensors,
        })
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<f32>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::invalid(format!("no tensor named `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<f32>> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("no tensor named `{name}`")))
    }

    /// Replaces a tensor of the same shape.
    pub fn set(&mut self, name: &str, value: Tensor<f32>) -> Result<()> {
        let slot = self.get_mut(name)?;
        if slot.shape() != value.shape() {
            return Err(Error::shape(format!(
                "`{name}` is {:?}, got {:?}",
                slot.shape(),
                value.shape()
            )));
        }
        *slot = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f32>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_buffer(name: &str) -> bool {
        name.ends_with(".running_mean") || name.ends_with(".running_var")
    }

    /// Names of optimized tensors, sorted.
    pub fn trainable_names(&self) -> Vec<String> {
        self.tensors
            .keys()
            .filter(|k| !Self::is_buffer(k))
            .cloned()
            .collect()
    }

    pub fn num_trainable(&self) -> usize {
        self.tensors
            .iter()
            .filter(|(k, _)| !Self::is_buffer(k))
            .map(|(_, t)| t.numel())
            .sum()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_value(WeightsMeta {
            config: self.config.clone(),
            norm: self.norm.clone(),
        })?;
        let list: Vec<(&str, &Tensor<f32>)> = self.iter().collect();
        container::encode(WEIGHTS_MAGIC, meta, &list)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let (meta, tensors) = container::decode(WEIGHTS_MAGIC, bytes, path)?;
        let meta: WeightsMeta =
            serde_json::from_value(meta).map_err(|e| Error::format(path, format!("weights metadata: {e}")))?;
        meta.config.validate()?;
        let tensors: BTreeMap<_, _> = tensors.into_iter().collect();
        for s in param_specs(&meta.config) {
            match tensors.get(&s.name) {
                Some(t) if t.shape() == s.shape.as_slice() => {}
                Some(t) => {
                    return Err(Error::format(
                        path,
                        format!("`{}` has shape {:?}, config needs {:?}", s.name, t.shape(), s.shape),
                    ))
                }
                None => return Err(Error::format(path, format!("missing tensor `{}`", s.name))),
            }
        }
        if tensors.len() != param_specs(&meta.config).len() {
            return Err(Error::format(path, "unexpected extra tensors"));
        }
        Ok(Self {
            config: meta.config,
            norm: meta.norm,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&container::read(path)?, path)
    }
}
