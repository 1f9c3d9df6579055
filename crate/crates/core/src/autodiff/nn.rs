//! Sequence-model building blocks: convolution, pooling, upsampling, batch
//! normalization and relative-position gather/scatter.
//!
//! Sequence tensors are `[B, L, C]` (channels last). Rank-2 inputs are read
//! as a single batch.

use super::ops::shape_err;
use super::real::gemm;
use super::tape::Op;
use super::{Real, Tensor, Var};
use crate::error::{Error, Result};

fn seq_dims(shape: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    match *shape {
        [l, c] => Ok((1, l, c)),
        [b, l, c] => Ok((b, l, c)),
        _ => Err(Error::shape(format!("{what} expects [B, L, C] or [L, C], got {shape:?}"))),
    }
}

fn with_len(shape: &[usize], len: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    let r = s.len();
    s[r - 2] = len;
    s
}

/// `cols[(b*L + l), c*k + j] = x[b, l + j - k/2, c]`, zero outside.
fn im2col<T: Real>(x: &[T], b: usize, l: usize, cin: usize, k: usize) -> Vec<T> {
    let pad = k / 2;
    let width = cin * k;
    let mut cols = vec![T::zero(); b * l * width];
    for bi in 0..b {
        for t in 0..l {
            let row = &mut cols[(bi * l + t) * width..(bi * l + t + 1) * width];
            for j in 0..k {
                let src = t + j;
                if src < pad || src - pad >= l {
                    continue;
                }
                let xr = &x[(bi * l + src - pad) * cin..(bi * l + src - pad + 1) * cin];
                for c in 0..cin {
                    row[c * k + j] = xr[c];
                }
            }
        }
    }
    cols
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dw: Option<Vec<T>>,
}

pub(crate) fn conv1d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad: &[T],
    need_x: bool,
    need_w: bool,
) -> ConvGrads<T> {
    let (b, l, cin) = seq_dims(x.shape(), "conv1d").expect("checked in forward");
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let width = cin * k;
    let rows = b * l;
    let dw = need_w.then(|| {
        let cols = im2col(x.data(), b, l, cin, k);
        let mut dw = vec![T::zero(); cout * width];
        gemm(true, false, cout, rows, width, grad, &cols, T::zero(), &mut dw);
        dw
    });
    let dx = need_x.then(|| {
        let mut dcols = vec![T::zero(); rows * width];
        gemm(false, false, rows, cout, width, grad, w.data(), T::zero(), &mut dcols);
        let pad = k / 2;
        let mut dx = vec![T::zero(); x.numel()];
        for bi in 0..b {
            for t in 0..l {
                let row = &dcols[(bi * l + t) * width..(bi * l + t + 1) * width];
                for j in 0..k {
                    let src = t + j;
                    if src < pad || src - pad >= l {
                        continue;
                    }
                    let base = (bi * l + src - pad) * cin;
                    for c in 0..cin {
                        dx[base + c] += row[c * k + j];
                    }
                }
            }
        }
        dx
    });
    ConvGrads { dx, dw }
}

pub(crate) fn avg_pool1d_backward<T: Real>(shape: &[usize], size: usize, grad: &[T]) -> Vec<T> {
    let (b, l, c) = seq_dims(shape, "avg_pool1d").expect("checked in forward");
    let lo = l.div_ceil(size);
    let mut dx = vec![T::zero(); b * l * c];
    for bi in 0..b {
        for o in 0..lo {
            let (s, e) = (o * size, ((o + 1) * size).min(l));
            let inv = T::one() / T::lit((e - s) as f64);
            let g = &grad[(bi * lo + o) * c..(bi * lo + o + 1) * c];
            for t in s..e {
                let d = &mut dx[(bi * l + t) * c..(bi * l + t + 1) * c];
                d.iter_mut().zip(g).for_each(|(d, &g)| *d += g * inv);
            }
        }
    }
    dx
}

/// Source position and weight for align-corners linear interpolation from
/// `l_in` to `l_out` samples: output `i` reads `(1 - w) * x[j] + w * x[j + 1]`.
fn interp_coords(l_in: usize, l_out: usize) -> Vec<(usize, f64)> {
    (0..l_out)
        .map(|i| {
            if l_in == 1 || l_out == 1 {
                return (0, 0.0);
            }
            let pos = i as f64 * (l_in - 1) as f64 / (l_out - 1) as f64;
            let j = (pos.floor() as usize).min(l_in - 2);
            (j, pos - j as f64)
        })
        .collect()
}

pub(crate) fn upsample_backward<T: Real>(src: &[usize], out: &[usize], grad: &[T]) -> Vec<T> {
    let (b, l_in, c) = seq_dims(src, "upsample").expect("checked in forward");
    let l_out = out[out.len() - 2];
    let coords = interp_coords(l_in, l_out);
    let mut dx = vec![T::zero(); b * l_in * c];
    for bi in 0..b {
        for (i, &(j, w)) in coords.iter().enumerate() {
            let g = &grad[(bi * l_out + i) * c..(bi * l_out + i + 1) * c];
            let (w1, w0) = (T::lit(w), T::lit(1.0 - w));
            for ch in 0..c {
                dx[(bi * l_in + j) * c + ch] += w0 * g[ch];
                if w > 0.0 {
                    dx[(bi * l_in + j + 1) * c + ch] += w1 * g[ch];
                }
            }
        }
    }
    dx
}

pub(crate) struct BnGrads<T> {
    pub dx: Vec<T>,
    pub dgamma: Vec<T>,
    pub dbeta: Vec<T>,
}

pub(crate) fn batch_norm_backward<T: Real>(
    gamma: &[T],
    xhat: &[T],
    inv_std: &[T],
    batch_stats: bool,
    grad: &[T],
) -> BnGrads<T> {
    let c = gamma.len();
    let n = xhat.len() / c.max(1);
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for (g, xh) in grad.chunks_exact(c).zip(xhat.chunks_exact(c)) {
        for ch in 0..c {
            dgamma[ch] += g[ch] * xh[ch];
            dbeta[ch] += g[ch];
        }
    }
    let nf = T::lit(n as f64);
    let mut dx = vec![T::zero(); grad.len()];
    for ((d, g), xh) in dx.chunks_exact_mut(c).zip(grad.chunks_exact(c)).zip(xhat.chunks_exact(c)) {
        for ch in 0..c {
            let s = gamma[ch] * inv_std[ch];
            d[ch] = if batch_stats {
                s * (g[ch] - dbeta[ch] / nf - xh[ch] * dgamma[ch] / nf)
            } else {
                s * g[ch]
            };
        }
    }
    BnGrads { dx, dgamma, dbeta }
}

/// `[.., L, 2C+1]` to `[.., L, L]`: `out[i, j] = src[i, clamp(j - i, -C, C) + C]`.
pub(crate) fn rel_gather_data<T: Real>(src: &[T], src_shape: &[usize], c: usize) -> Vec<T> {
    let r = src_shape.len();
    let l = src_shape[r - 2];
    let w = 2 * c + 1;
    let batch = src.len() / (l * w).max(1);
    let mut out = vec![T::zero(); batch * l * l];
    for b in 0..batch {
        for i in 0..l {
            let s = &src[(b * l + i) * w..(b * l + i + 1) * w];
            let o = &mut out[(b * l + i) * l..(b * l + i + 1) * l];
            for (j, v) in o.iter_mut().enumerate() {
                *v = s[rel_index(i, j, c)];
            }
        }
    }
    out
}

/// Transpose of [`rel_gather_data`]: `[.., L, L]` to `[.., L, 2C+1]`, summing
/// every entry whose clipped offset falls on the same table slot.
pub(crate) fn rel_scatter_data<T: Real>(src: &[T], src_shape: &[usize], c: usize) -> Vec<T> {
    let r = src_shape.len();
    let l = src_shape[r - 1];
    let w = 2 * c + 1;
    let batch = src.len() / (l * l).max(1);
    let mut out = vec![T::zero(); batch * l * w];
    for b in 0..batch {
        for i in 0..l {
            let s = &src[(b * l + i) * l..(b * l + i + 1) * l];
            let o = &mut out[(b * l + i) * w..(b * l + i + 1) * w];
            for (j, &v) in s.iter().enumerate() {
                o[rel_index(i, j, c)] += v;
            }
        }
    }
    out
}

#[inline]
fn rel_index(i: usize, j: usize, c: usize) -> usize {
    let d = (j as isize - i as isize).clamp(-(c as isize), c as isize);
    (d + c as isize) as usize
}

/// Batch statistics of a training-mode batch-norm call, for the caller's
/// running-average update.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased (n - 1) variance.
    pub var: Vec<f64>,
}

/// How batch normalization obtains its statistics.
#[derive(Debug, Clone, Copy)]
pub enum BnMode<'a> {
    Train,
    Eval {
        running_mean: &'a [f64],
        running_var: &'a [f64],
    },
}

pub const BN_EPS: f64 = 1e-5;

impl<'t, T: Real> Var<'t, T> {
    /// Same-padded 1-D cross-correlation of `[B, L, Cin]` with weights
    /// `[Cout, Cin, k]` (odd `k`), giving `[B, L, Cout]`.
    pub fn conv1d(&self, w: &Var<'t, T>, bias: Option<&Var<'t, T>>) -> Result<Var<'t, T>> {
        self.same_tape(w)?;
        if let Some(b) = bias {
            self.same_tape(b)?;
        }
        let out = {
            let nodes = self.tape.nodes.borrow();
            let (x, wv) = (&nodes[self.id].value, &nodes[w.id].value);
            let (b, l, cin) = seq_dims(x.shape(), "conv1d")?;
            let ws = wv.shape();
            if ws.len() != 3 || ws[1] != cin || ws[2] % 2 == 0 {
                return Err(shape_err("conv1d", x.shape(), ws));
            }
            let (cout, k) = (ws[0], ws[2]);
            let cols = im2col(x.data(), b, l, cin, k);
            let mut y = vec![T::zero(); b * l * cout];
            gemm(false, true, b * l, cin * k, cout, &cols, wv.data(), T::zero(), &mut y);
            if let Some(bias) = bias {
                let bv = &nodes[bias.id].value;
                if bv.shape() != [cout] {
                    return Err(shape_err("conv1d bias", &[cout], bv.shape()));
                }
                for row in y.chunks_exact_mut(cout) {
                    row.iter_mut().zip(bv.data()).for_each(|(y, &b)| *y += b);
                }
            }
            let mut shape = x.shape().to_vec();
            *shape.last_mut().unwrap() = cout;
            Tensor::new(shape, y)?
        };
        Ok(self.tape.push(
            out,
            Op::Conv1d {
                x: self.id,
                w: w.id,
                bias: bias.map(|b| b.id),
            },
        ))
    }

    /// Non-overlapping mean pooling along time. The output has
    /// `ceil(L / size)` steps; a short final window averages what it covers.
    pub fn avg_pool1d(&self, size: usize) -> Result<Var<'t, T>> {
        if size == 0 {
            return Err(Error::invalid("pool size must be positive"));
        }
        let out = {
            let v = self.value_ref();
            let (b, l, c) = seq_dims(v.shape(), "avg_pool1d")?;
            let lo = l.div_ceil(size);
            let mut y = vec![T::zero(); b * lo * c];
            for bi in 0..b {
                for o in 0..lo {
                    let (s, e) = (o * size, ((o + 1) * size).min(l));
                    let dst = &mut y[(bi * lo + o) * c..(bi * lo + o + 1) * c];
                    for t in s..e {
                        let src = &v.data()[(bi * l + t) * c..(bi * l + t + 1) * c];
                        dst.iter_mut().zip(src).for_each(|(d, &x)| *d += x);
                    }
                    let inv = T::one() / T::lit((e - s) as f64);
                    dst.iter_mut().for_each(|d| *d *= inv);
                }
            }
            Tensor::new(with_len(v.shape(), lo), y)?
        };
        Ok(self.tape.push(out, Op::AvgPool1d { src: self.id, size }))
    }

    /// Linear interpolation along time to exactly `len` steps, with the
    /// first and last samples aligned to the input's.
    pub fn upsample(&self, len: usize) -> Result<Var<'t, T>> {
        let out = {
            let v = self.value_ref();
            let (b, l_in, c) = seq_dims(v.shape(), "upsample")?;
            if l_in == 0 || len == 0 {
                return Err(Error::invalid("upsample of an empty sequence"));
            }
            let coords = interp_coords(l_in, len);
            let mut y = vec![T::zero(); b * len * c];
            for bi in 0..b {
                for (i, &(j, w)) in coords.iter().enumerate() {
                    let (w1, w0) = (T::lit(w), T::lit(1.0 - w));
                    let x0 = &v.data()[(bi * l_in + j) * c..(bi * l_in + j + 1) * c];
                    let dst = &mut y[(bi * len + i) * c..(bi * len + i + 1) * c];
                    if w > 0.0 {
                        let x1 = &v.data()[(bi * l_in + j + 1) * c..(bi * l_in + j + 2) * c];
                        for ch in 0..c {
                            dst[ch] = w0 * x0[ch] + w1 * x1[ch];
                        }
                    } else {
                        dst.copy_from_slice(x0);
                    }
                }
            }
            Tensor::new(with_len(v.shape(), len), y)?
        };
        Ok(self.tape.push(out, Op::Upsample(self.id)))
    }

    /// Batch normalization over every axis but the last.
    ///
    /// In training mode the batch statistics are used and also returned so
    /// the caller can update running averages; the output does not depend on
    /// the running values.
    pub fn batch_norm(
        &self,
        gamma: &Var<'t, T>,
        beta: &Var<'t, T>,
        mode: BnMode<'_>,
    ) -> Result<(Var<'t, T>, Option<BatchStats>)> {
        self.same_tape(gamma)?;
        self.same_tape(beta)?;
        let (out, op, stats) = {
            let nodes = self.tape.nodes.borrow();
            let x = &nodes[self.id].value;
            let (g, bt) = (&nodes[gamma.id].value, &nodes[beta.id].value);
            let c = *x.shape().last().unwrap_or(&0);
            if x.rank() < 2 || g.shape() != [c] || bt.shape() != [c] {
                return Err(shape_err("batch_norm", x.shape(), g.shape()));
            }
            let n = x.numel() / c.max(1);
            let (mean, var_biased, stats) = match mode {
                BnMode::Train => {
                    if n < 2 {
                        return Err(Error::invalid("batch norm needs at least two samples"));
                    }
                    let mut mean = vec![0.0; c];
                    for row in x.data().chunks_exact(c) {
                        row.iter().zip(&mut mean).for_each(|(v, m)| *m += v.as_f64());
                    }
                    mean.iter_mut().for_each(|m| *m /= n as f64);
                    let mut var = vec![0.0; c];
                    for row in x.data().chunks_exact(c) {
                        for ch in 0..c {
                            let d = row[ch].as_f64() - mean[ch];
                            var[ch] += d * d;
                        }
                    }
                    let biased: Vec<f64> = var.iter().map(|v| v / n as f64).collect();
                    let unbiased = var.iter().map(|v| v / (n - 1) as f64).collect();
                    (mean.clone(), biased, Some(BatchStats { mean, var: unbiased }))
                }
                BnMode::Eval {
                    running_mean,
                    running_var,
                } => {
                    if running_mean.len() != c || running_var.len() != c {
                        return Err(shape_err("batch_norm running stats", &[c], &[running_mean.len()]));
                    }
                    (running_mean.to_vec(), running_var.to_vec(), None)
                }
            };
            let inv_std: Vec<T> = var_biased.iter().map(|v| T::lit(1.0 / (v + BN_EPS).sqrt())).collect();
            let mean_t: Vec<T> = mean.iter().map(|&m| T::lit(m)).collect();
            let mut xhat = vec![T::zero(); x.numel()];
            let mut y = vec![T::zero(); x.numel()];
            for ((row, xh), yr) in x
                .data()
                .chunks_exact(c)
                .zip(xhat.chunks_exact_mut(c))
                .zip(y.chunks_exact_mut(c))
            {
                for ch in 0..c {
                    xh[ch] = (row[ch] - mean_t[ch]) * inv_std[ch];
                    yr[ch] = g.data()[ch] * xh[ch] + bt.data()[ch];
                }
            }
            let op = Op::BatchNorm {
                x: self.id,
                gamma: gamma.id,
                beta: beta.id,
                xhat,
                inv_std,
                batch_stats: stats.is_some(),
            };
            (Tensor::new(x.shape().to_vec(), y)?, op, stats)
        };
        Ok((self.tape.push(out, op), stats))
    }

    /// Expands per-offset scores `[B, L, 2C+1]` into a `[B, L, L]` matrix
    /// indexed by absolute position, clipping offsets to `[-C, C]`.
    pub fn rel_gather(&self, max_dist: usize) -> Result<Var<'t, T>> {
        let out = {
            let v = self.value_ref();
            let (b, l, w) = seq_dims(v.shape(), "rel_gather")?;
            if w != 2 * max_dist + 1 {
                return Err(Error::shape(format!(
                    "rel_gather with max distance {max_dist} needs {} columns, got {w}",
                    2 * max_dist + 1
                )));
            }
            let mut shape = v.shape().to_vec();
            *shape.last_mut().unwrap() = l;
            debug_assert_eq!(shape.iter().product::<usize>(), b * l * l);
            Tensor::new(shape, rel_gather_data(v.data(), v.shape(), max_dist))?
        };
        Ok(self.tape.push(out, Op::RelGather { src: self.id, max_dist }))
    }

    /// Adjoint of [`Var::rel_gather`]: folds `[B, L, L]` weights onto
    /// `[B, L, 2C+1]` offset slots.
    pub fn rel_scatter(&self, max_dist: usize) -> Result<Var<'t, T>> {
        let out = {
            let v = self.value_ref();
            let (_, l, w) = seq_dims(v.shape(), "rel_scatter")?;
            if w != l {
                return Err(Error::shape(format!("rel_scatter needs a square [L, L] input, got {:?}", v.shape())));
            }
            let mut shape = v.shape().to_vec();
            *shape.last_mut().unwrap() = 2 * max_dist + 1;
            Tensor::new(shape, rel_scatter_data(v.data(), v.shape(), max_dist))?
        };
        Ok(self.tape.push(out, Op::RelScatter { src: self.id, max_dist }))
    }
}
