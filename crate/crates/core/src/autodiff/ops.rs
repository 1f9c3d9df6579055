//! Elementwise, shape and linear-algebra operations, and the backward
//! dispatcher for every recorded [`Op`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::real::gemm;
use super::tape::{Node, Op};
use super::{lstm, nn, Real, Tensor, Var};
use crate::error::{Error, Result};

pub(crate) fn shape_err(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::shape(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

/// `(outer, axis_len, inner)` decomposition of `shape` around `axis`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn transpose_last2<T: Real>(data: &[T], shape: &[usize]) -> Vec<T> {
    let r = shape.len();
    let (m, n) = (shape[r - 2], shape[r - 1]);
    let batch = data.len() / (m * n).max(1);
    let mut out = vec![T::zero(); data.len()];
    for b in 0..batch {
        let src = &data[b * m * n..(b + 1) * m * n];
        let dst = &mut out[b * m * n..(b + 1) * m * n];
        for i in 0..m {
            for j in 0..n {
                dst[j * m + i] = src[i * n + j];
            }
        }
    }
    out
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<'t, T: Real> Var<'t, T> {
    fn binary_same_shape(
        &self,
        other: &Var<'t, T>,
        name: &str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var<'t, T>> {
        self.same_tape(other)?;
        let out = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
            if a.shape() != b.shape() {
                return Err(shape_err(name, a.shape(), b.shape()));
            }
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(a.shape().to_vec(), data)?
        };
        Ok(self.tape.push(out, op))
    }

    fn unary(&self, f: impl Fn(T) -> T, op: Op<T>) -> Var<'t, T> {
        let out = {
            let v = self.value_ref();
            Tensor::new(v.shape().to_vec(), v.data().iter().map(|&x| f(x)).collect())
                .expect("same shape")
        };
        self.tape.push(out, op)
    }

    pub fn add(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary_same_shape(other, "add", |a, b| a + b, Op::Add(self.id, other.id))
    }

    pub fn sub(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary_same_shape(other, "sub", |a, b| a - b, Op::Sub(self.id, other.id))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary_same_shape(other, "mul", |a, b| a * b, Op::Mul(self.id, other.id))
    }

    pub fn scale(&self, s: T) -> Var<'t, T> {
        self.unary(|x| x * s, Op::Scale(self.id, s))
    }

    /// Adds a `[C]` vector along the last axis.
    pub fn add_bias(&self, bias: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_tape(bias)?;
        let out = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[bias.id].value);
            let c = *a.shape().last().unwrap_or(&0);
            if b.rank() != 1 || b.numel() != c {
                return Err(shape_err("add_bias", a.shape(), b.shape()));
            }
            let data = a
                .data()
                .chunks_exact(c.max(1))
                .flat_map(|row| row.iter().zip(b.data()).map(|(&x, &y)| x + y))
                .collect();
            Tensor::new(a.shape().to_vec(), data)?
        };
        Ok(self.tape.push(out, Op::AddBias(self.id, bias.id)))
    }

    /// Matrix product. `self` is `[.., M, K]`; `rhs` is either a shared
    /// `[K, N]` matrix or, for a 3-D `self`, a batch `[B, K, N]`.
    pub fn matmul(&self, rhs: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_tape(rhs)?;
        let (out, batched) = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[rhs.id].value);
            let (sa, sb) = (a.shape(), b.shape());
            if sa.len() < 2 || sb.len() < 2 {
                return Err(shape_err("matmul", sa, sb));
            }
            let k = sa[sa.len() - 1];
            if sb.len() == 2 {
                if sb[0] != k {
                    return Err(shape_err("matmul", sa, sb));
                }
                let n = sb[1];
                let rows = a.numel() / k.max(1);
                let rows = if k == 0 { sa[..sa.len() - 1].iter().product() } else { rows };
                let mut c = vec![T::zero(); rows * n];
                gemm(false, false, rows, k, n, a.data(), b.data(), T::zero(), &mut c);
                let mut shape = sa.to_vec();
                *shape.last_mut().unwrap() = n;
                (Tensor::new(shape, c)?, false)
            } else if sa.len() == 3 && sb.len() == 3 && sa[0] == sb[0] && sb[1] == k {
                let (bsz, m, n) = (sa[0], sa[1], sb[2]);
                let mut c = vec![T::zero(); bsz * m * n];
                for i in 0..bsz {
                    gemm(
                        false,
                        false,
                        m,
                        k,
                        n,
                        &a.data()[i * m * k..(i + 1) * m * k],
                        &b.data()[i * k * n..(i + 1) * k * n],
                        T::zero(),
                        &mut c[i * m * n..(i + 1) * m * n],
                    );
                }
                (Tensor::new(vec![bsz, m, n], c)?, true)
            } else {
                return Err(shape_err("matmul", sa, sb));
            }
        };
        let op = if batched {
            Op::BatchMatMul(self.id, rhs.id)
        } else {
            Op::MatMul(self.id, rhs.id)
        };
        Ok(self.tape.push(out, op))
    }

    /// Swaps the last two axes.
    pub fn transpose(&self) -> Result<Var<'t, T>> {
        let out = {
            let v = self.value_ref();
            let s = v.shape();
            if s.len() < 2 {
                return Err(Error::shape(format!("transpose needs rank >= 2, got {s:?}")));
            }
            let mut shape = s.to_vec();
            shape.swap(s.len() - 2, s.len() - 1);
            Tensor::new(shape, transpose_last2(v.data(), s))?
        };
        Ok(self.tape.push(out, Op::Transpose(self.id)))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t, T>> {
        let out = self.value().reshaped(shape)?;
        Ok(self.tape.push(out, Op::Reshape(self.id)))
    }

    /// Concatenation along `axis`; all other dimensions must agree.
    pub fn concat(parts: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        for p in parts {
            first.same_tape(p)?;
        }
        let tape = first.tape;
        let out = {
            let nodes = tape.nodes.borrow();
            let base = nodes[first.id].value.shape().to_vec();
            if axis >= base.len() {
                return Err(Error::shape(format!("concat axis {axis} out of range for {base:?}")));
            }
            let mut total = 0;
            for p in parts {
                let s = nodes[p.id].value.shape();
                let compatible = s.len() == base.len()
                    && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
                if !compatible {
                    return Err(shape_err("concat", &base, s));
                }
                total += s[axis];
            }
            let (outer, _, inner) = split_axis(&base, axis);
            let mut data = Vec::with_capacity(outer * total * inner);
            for o in 0..outer {
                for p in parts {
                    let v = &nodes[p.id].value;
                    let len = v.shape()[axis] * inner;
                    data.extend_from_slice(&v.data()[o * len..(o + 1) * len]);
                }
            }
            let mut shape = base;
            shape[axis] = total;
            Tensor::new(shape, data)?
        };
        Ok(tape.push(
            out,
            Op::Concat {
                parts: parts.iter().map(|p| p.id).collect(),
                axis,
            },
        ))
    }

    /// Slice `start..start + len` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Var<'t, T>> {
        let out = {
            let v = self.value_ref();
            let s = v.shape();
            if axis >= s.len() || start + len > s[axis] {
                return Err(Error::shape(format!(
                    "narrow {start}..{} on axis {axis} of {s:?}",
                    start + len
                )));
            }
            let (outer, n, inner) = split_axis(s, axis);
            let mut data = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                let base = o * n * inner + start * inner;
                data.extend_from_slice(&v.data()[base..base + len * inner]);
            }
            let mut shape = s.to_vec();
            shape[axis] = len;
            Tensor::new(shape, data)?
        };
        Ok(self.tape.push(
            out,
            Op::Narrow {
                src: self.id,
                axis,
                start,
            },
        ))
    }

    pub fn relu(&self) -> Var<'t, T> {
        self.unary(|x| x.max(T::zero()), Op::Relu(self.id))
    }

    pub fn sigmoid(&self) -> Var<'t, T> {
        self.unary(sigmoid, Op::Sigmoid(self.id))
    }

    pub fn tanh(&self) -> Var<'t, T> {
        self.unary(|x| x.tanh(), Op::Tanh(self.id))
    }

    /// Inverted dropout: in training, each element is zeroed with
    /// probability `p` and survivors are scaled by `1 / (1 - p)`. The mask is
    /// a pure function of `seed`. Outside training this is the identity.
    pub fn dropout(&self, p: f64, train: bool, seed: u64) -> Result<Var<'t, T>> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid(format!("dropout probability {p} outside [0, 1)")));
        }
        if !train || p == 0.0 {
            return Ok(*self);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = T::lit(1.0 / (1.0 - p));
        let (out, mask) = {
            let v = self.value_ref();
            let mask: Vec<T> = (0..v.numel())
                .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
                .collect();
            let data = v.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
            (Tensor::new(v.shape().to_vec(), data)?, mask)
        };
        Ok(self.tape.push(out, Op::Dropout { src: self.id, mask }))
    }

    /// Softmax over the last axis.
    pub fn softmax(&self) -> Var<'t, T> {
        let out = {
            let v = self.value_ref();
            let n = *v.shape().last().unwrap_or(&1);
            let mut data = v.data().to_vec();
            for row in data.chunks_exact_mut(n.max(1)) {
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    sum += *x;
                }
                for x in row.iter_mut() {
                    *x /= sum;
                }
            }
            Tensor::new(v.shape().to_vec(), data).expect("same shape")
        };
        self.tape.push(out, Op::Softmax(self.id))
    }

    pub fn sum(&self) -> Var<'t, T> {
        let s = self.value_ref().data().iter().copied().sum();
        self.tape.push(Tensor::scalar(s), Op::Sum(self.id))
    }

    pub fn mean(&self) -> Var<'t, T> {
        let v = self.value_ref();
        let n = T::lit(v.numel().max(1) as f64);
        let s: T = v.data().iter().copied().sum();
        drop(v);
        self.tape.push(Tensor::scalar(s / n), Op::Mean(self.id))
    }

    /// Mean absolute error over all elements. The subgradient at zero is 0.
    pub fn l1_loss(&self, target: &Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_tape(target)?;
        let out = {
            let nodes = self.tape.nodes.borrow();
            let (p, t) = (&nodes[self.id].value, &nodes[target.id].value);
            if p.shape() != t.shape() {
                return Err(shape_err("l1_loss", p.shape(), t.shape()));
            }
            let n = T::lit(p.numel().max(1) as f64);
            let s: T = p.data().iter().zip(t.data()).map(|(&a, &b)| (a - b).abs()).sum();
            Tensor::scalar(s / n)
        };
        Ok(self.tape.push(out, Op::L1Loss(self.id, target.id)))
    }
}

fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Gradients of `op`'s parents given the gradient `grad` of its output.
/// Only parents for which `need` is true are returned.
pub(crate) fn backward<T: Real>(
    op: &Op<T>,
    out: &Tensor<T>,
    grad: &[T],
    nodes: &[Node<T>],
    need: &dyn Fn(usize) -> bool,
) -> Vec<(usize, Vec<T>)> {
    let val = |id: usize| &nodes[id].value;
    let mut res = Vec::new();
    let mut emit = |id: usize, f: &mut dyn FnMut() -> Vec<T>| {
        if need(id) {
            res.push((id, f()));
        }
    };
    match op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            emit(*a, &mut || grad.to_vec());
            emit(*b, &mut || grad.to_vec());
        }
        Op::Sub(a, b) => {
            emit(*a, &mut || grad.to_vec());
            emit(*b, &mut || grad.iter().map(|&g| -g).collect());
        }
        Op::Mul(a, b) => {
            emit(*a, &mut || grad.iter().zip(val(*b).data()).map(|(&g, &y)| g * y).collect());
            emit(*b, &mut || grad.iter().zip(val(*a).data()).map(|(&g, &x)| g * x).collect());
        }
        Op::Scale(a, s) => emit(*a, &mut || grad.iter().map(|&g| g * *s).collect()),
        Op::AddBias(a, b) => {
            emit(*a, &mut || grad.to_vec());
            emit(*b, &mut || {
                let c = val(*b).numel();
                let mut acc = vec![T::zero(); c];
                for row in grad.chunks_exact(c.max(1)) {
                    acc.iter_mut().zip(row).for_each(|(a, &g)| *a += g);
                }
                acc
            });
        }
        Op::MatMul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (k, n) = (bv.shape()[0], bv.shape()[1]);
            let rows = grad.len() / n.max(1);
            emit(*a, &mut || {
                let mut g = vec![T::zero(); rows * k];
                gemm(false, true, rows, n, k, grad, bv.data(), T::zero(), &mut g);
                g
            });
            emit(*b, &mut || {
                let mut g = vec![T::zero(); k * n];
                gemm(true, false, k, rows, n, av.data(), grad, T::zero(), &mut g);
                g
            });
        }
        Op::BatchMatMul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (bsz, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
            let n = bv.shape()[2];
            emit(*a, &mut || {
                let mut g = vec![T::zero(); bsz * m * k];
                for i in 0..bsz {
                    gemm(
                        false,
                        true,
                        m,
                        n,
                        k,
                        &grad[i * m * n..(i + 1) * m * n],
                        &bv.data()[i * k * n..(i + 1) * k * n],
                        T::zero(),
                        &mut g[i * m * k..(i + 1) * m * k],
                    );
                }
                g
            });
            emit(*b, &mut || {
                let mut g = vec![T::zero(); bsz * k * n];
                for i in 0..bsz {
                    gemm(
                        true,
                        false,
                        k,
                        m,
                        n,
                        &av.data()[i * m * k..(i + 1) * m * k],
                        &grad[i * m * n..(i + 1) * m * n],
                        T::zero(),
                        &mut g[i * k * n..(i + 1) * k * n],
                    );
                }
                g
            });
        }
        Op::Transpose(a) => emit(*a, &mut || transpose_last2(grad, out.shape())),
        Op::Reshape(a) => emit(*a, &mut || grad.to_vec()),
        Op::Concat { parts, axis } => {
            let (outer, total, inner) = split_axis(out.shape(), *axis);
            let mut offset = 0;
            for &p in parts {
                let len = val(p).shape()[*axis];
                emit(p, &mut || {
                    let mut g = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        let base = (o * total + offset) * inner;
                        g.extend_from_slice(&grad[base..base + len * inner]);
                    }
                    g
                });
                offset += len;
            }
        }
        Op::Narrow { src, axis, start } => emit(*src, &mut || {
            let (outer, n, inner) = split_axis(val(*src).shape(), *axis);
            let len = out.shape()[*axis];
            let mut g = vec![T::zero(); val(*src).numel()];
            for o in 0..outer {
                let base = o * n * inner + start * inner;
                g[base..base + len * inner]
                    .copy_from_slice(&grad[o * len * inner..(o + 1) * len * inner]);
            }
            g
        }),
        Op::Relu(a) => emit(*a, &mut || {
            grad.iter()
                .zip(val(*a).data())
                .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                .collect()
        }),
        Op::Sigmoid(a) => emit(*a, &mut || {
            grad.iter()
                .zip(out.data())
                .map(|(&g, &y)| g * y * (T::one() - y))
                .collect()
        }),
        Op::Tanh(a) => emit(*a, &mut || {
            grad.iter()
                .zip(out.data())
                .map(|(&g, &y)| g * (T::one() - y * y))
                .collect()
        }),
        Op::Dropout { src, mask } => {
            emit(*src, &mut || grad.iter().zip(mask).map(|(&g, &m)| g * m).collect())
        }
        Op::Softmax(a) => emit(*a, &mut || {
            let n = *out.shape().last().unwrap_or(&1);
            let mut g = vec![T::zero(); grad.len()];
            for ((gr, y), dst) in grad
                .chunks_exact(n.max(1))
                .zip(out.data().chunks_exact(n.max(1)))
                .zip(g.chunks_exact_mut(n.max(1)))
            {
                let dot: T = gr.iter().zip(y).map(|(&a, &b)| a * b).sum();
                for ((d, &gi), &yi) in dst.iter_mut().zip(gr).zip(y) {
                    *d = yi * (gi - dot);
                }
            }
            g
        }),
        Op::Sum(a) => emit(*a, &mut || vec![grad[0]; val(*a).numel()]),
        Op::Mean(a) => emit(*a, &mut || {
            let n = val(*a).numel();
            vec![grad[0] / T::lit(n.max(1) as f64); n]
        }),
        Op::L1Loss(p, t) => {
            let (pv, tv) = (val(*p), val(*t));
            let scale = grad[0] / T::lit(pv.numel().max(1) as f64);
            emit(*p, &mut || {
                pv.data()
                    .iter()
                    .zip(tv.data())
                    .map(|(&a, &b)| sign(a - b) * scale)
                    .collect()
            });
            emit(*t, &mut || {
                pv.data()
                    .iter()
                    .zip(tv.data())
                    .map(|(&a, &b)| -sign(a - b) * scale)
                    .collect()
            });
        }
        Op::Conv1d { x, w, bias } => {
            let g = nn::conv1d_backward(val(*x), val(*w), grad, need(*x), need(*w));
            if let Some(dx) = g.dx {
                emit(*x, &mut || dx.clone());
            }
            if let Some(dw) = g.dw {
                emit(*w, &mut || dw.clone());
            }
            if let Some(b) = bias {
                emit(*b, &mut || {
                    let c = val(*b).numel();
                    let mut acc = vec![T::zero(); c];
                    for row in grad.chunks_exact(c.max(1)) {
                        acc.iter_mut().zip(row).for_each(|(a, &g)| *a += g);
                    }
                    acc
                });
            }
        }
        Op::AvgPool1d { src, size } => {
            emit(*src, &mut || nn::avg_pool1d_backward(val(*src).shape(), *size, grad))
        }
        Op::Upsample(src) => {
            emit(*src, &mut || nn::upsample_backward(val(*src).shape(), out.shape(), grad))
        }
        Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            batch_stats,
        } => {
            let g = nn::batch_norm_backward(val(*gamma).data(), xhat, inv_std, *batch_stats, grad);
            emit(*x, &mut || g.dx.clone());
            emit(*gamma, &mut || g.dgamma.clone());
            emit(*beta, &mut || g.dbeta.clone());
        }
        Op::Lstm {
            x,
            w_ih,
            w_hh,
            bias,
            cache,
        } => {
            let g = lstm::lstm_backward(val(*x), val(*w_ih), val(*w_hh), cache, grad);
            emit(*x, &mut || g.dx.clone());
            emit(*w_ih, &mut || g.dw_ih.clone());
            emit(*w_hh, &mut || g.dw_hh.clone());
            emit(*bias, &mut || g.dbias.clone());
        }
        Op::RelGather { src, max_dist } => emit(*src, &mut || {
            nn::rel_scatter_data(grad, out.shape(), *max_dist)
        }),
        Op::RelScatter { src, max_dist } => emit(*src, &mut || {
            nn::rel_gather_data(grad, out.shape(), *max_dist)
        }),
    }
    res
}
