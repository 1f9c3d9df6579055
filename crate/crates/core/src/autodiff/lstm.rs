//! Fused single-layer LSTM with backpropagation through time.
//!
//! Gate layout along the `4H` axis is `i, f, g, o`.

use super::ops::shape_err;
use super::real::gemm;
use super::tape::Op;
use super::{Real, Tensor, Var};
use crate::error::{Error, Result};

/// Forward activations kept for the backward pass.
#[derive(Debug)]
pub(crate) struct LstmCache<T> {
    batch: usize,
    len: usize,
    hidden: usize,
    /// Post-activation gates per step, `[L][B, 4H]`.
    gates: Vec<Vec<T>>,
    /// Cell states `c_0 ..= c_L`, each `[B, H]`.
    cells: Vec<Vec<T>>,
    /// Hidden states `h_0 ..= h_L`, each `[B, H]`.
    hiddens: Vec<Vec<T>>,
}

pub(crate) struct LstmGrads<T> {
    pub dx: Vec<T>,
    pub dw_ih: Vec<T>,
    pub dw_hh: Vec<T>,
    pub dbias: Vec<T>,
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<'t, T: Real> Var<'t, T> {
    /// Runs the LSTM over `[B, L, Din]` (or `[L, Din]`) and returns every
    /// hidden state, `[B, L, H]`. `w_ih` is `[Din, 4H]`, `w_hh` is `[H, 4H]`
    /// and `bias` is `[4H]`. The initial state `(h0, c0)`, each `[B, H]`, is
    /// treated as a constant and defaults to zeros.
    pub fn lstm(
        &self,
        w_ih: &Var<'t, T>,
        w_hh: &Var<'t, T>,
        bias: &Var<'t, T>,
        init: Option<(&Tensor<T>, &Tensor<T>)>,
    ) -> Result<Var<'t, T>> {
        for v in [w_ih, w_hh, bias] {
            self.same_tape(v)?;
        }
        let (out, cache) = {
            let nodes = self.tape.nodes.borrow();
            let x = &nodes[self.id].value;
            let (wi, wh, b) = (&nodes[w_ih.id].value, &nodes[w_hh.id].value, &nodes[bias.id].value);
            let (batch, len, din) = match *x.shape() {
                [l, d] => (1, l, d),
                [bs, l, d] => (bs, l, d),
                _ => return Err(Error::shape(format!("lstm expects [B, L, D], got {:?}", x.shape()))),
            };
            if wi.rank() != 2 || wi.shape()[0] != din || wi.shape()[1] % 4 != 0 {
                return Err(shape_err("lstm w_ih", x.shape(), wi.shape()));
            }
            let h = wi.shape()[1] / 4;
            if wh.shape() != [h, 4 * h] || b.shape() != [4 * h] {
                return Err(shape_err("lstm w_hh/bias", wh.shape(), b.shape()));
            }
            let (h0, c0) = match init {
                Some((h0, c0)) => {
                    if h0.numel() != batch * h || c0.numel() != batch * h {
                        return Err(Error::shape("lstm initial state must be [B, H]"));
                    }
                    (h0.data().to_vec(), c0.data().to_vec())
                }
                None => (vec![T::zero(); batch * h], vec![T::zero(); batch * h]),
            };
            // Input projection for all steps at once: [B*L, 4H].
            let mut xw = vec![T::zero(); batch * len * 4 * h];
            gemm(false, false, batch * len, din, 4 * h, x.data(), wi.data(), T::zero(), &mut xw);
            let mut cache = LstmCache {
                batch,
                len,
                hidden: h,
                gates: Vec::with_capacity(len),
                cells: vec![c0],
                hiddens: vec![h0],
            };
            let mut out = vec![T::zero(); batch * len * h];
            let mut z = vec![T::zero(); batch * 4 * h];
            for t in 0..len {
                for bi in 0..batch {
                    let src = &xw[(bi * len + t) * 4 * h..(bi * len + t + 1) * 4 * h];
                    let dst = &mut z[bi * 4 * h..(bi + 1) * 4 * h];
                    for ((d, &s), &bb) in dst.iter_mut().zip(src).zip(b.data()) {
                        *d = s + bb;
                    }
                }
                gemm(false, false, batch, h, 4 * h, &cache.hiddens[t], wh.data(), T::one(), &mut z);
                let mut gates = z.clone();
                let mut c = vec![T::zero(); batch * h];
                let mut hn = vec![T::zero(); batch * h];
                let c_prev = &cache.cells[t];
                for bi in 0..batch {
                    let g = &mut gates[bi * 4 * h..(bi + 1) * 4 * h];
                    for k in 0..h {
                        let ig = sigmoid(g[k]);
                        let fg = sigmoid(g[h + k]);
                        let gg = g[2 * h + k].tanh();
                        let og = sigmoid(g[3 * h + k]);
                        g[k] = ig;
                        g[h + k] = fg;
                        g[2 * h + k] = gg;
                        g[3 * h + k] = og;
                        let ct = fg * c_prev[bi * h + k] + ig * gg;
                        c[bi * h + k] = ct;
                        hn[bi * h + k] = og * ct.tanh();
                    }
                    out[(bi * len + t) * h..(bi * len + t + 1) * h]
                        .copy_from_slice(&hn[bi * h..(bi + 1) * h]);
                }
                cache.gates.push(gates);
                cache.cells.push(c);
                cache.hiddens.push(hn);
            }
            let mut shape = x.shape().to_vec();
            *shape.last_mut().unwrap() = h;
            (Tensor::new(shape, out)?, cache)
        };
        Ok(self.tape.push(
            out,
            Op::Lstm {
                x: self.id,
                w_ih: w_ih.id,
                w_hh: w_hh.id,
                bias: bias.id,
                cache: Box::new(cache),
            },
        ))
    }
}

pub(crate) fn lstm_backward<T: Real>(
    x: &Tensor<T>,
    w_ih: &Tensor<T>,
    w_hh: &Tensor<T>,
    cache: &LstmCache<T>,
    grad: &[T],
) -> LstmGrads<T> {
    let (batch, len, h) = (cache.batch, cache.len, cache.hidden);
    let din = w_ih.shape()[0];
    // Pre-activation gradients for every step, laid out like x: [B*L, 4H].
    let mut dz_all = vec![T::zero(); batch * len * 4 * h];
    let mut dw_hh = vec![T::zero(); h * 4 * h];
    let mut dh_next = vec![T::zero(); batch * h];
    let mut dc_next = vec![T::zero(); batch * h];
    let mut dz = vec![T::zero(); batch * 4 * h];
    for t in (0..len).rev() {
        let gates = &cache.gates[t];
        let (c_prev, c) = (&cache.cells[t], &cache.cells[t + 1]);
        for bi in 0..batch {
            let g = &gates[bi * 4 * h..(bi + 1) * 4 * h];
            let d = &mut dz[bi * 4 * h..(bi + 1) * 4 * h];
            for k in 0..h {
                let (ig, fg, gg, og) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                let j = bi * h + k;
                let dh = grad[(bi * len + t) * h + k] + dh_next[j];
                let tc = c[j].tanh();
                let dc = dc_next[j] + dh * og * (T::one() - tc * tc);
                d[k] = dc * gg * ig * (T::one() - ig);
                d[h + k] = dc * c_prev[j] * fg * (T::one() - fg);
                d[2 * h + k] = dc * ig * (T::one() - gg * gg);
                d[3 * h + k] = dh * tc * og * (T::one() - og);
                dc_next[j] = dc * fg;
            }
            dz_all[(bi * len + t) * 4 * h..(bi * len + t + 1) * 4 * h].copy_from_slice(d);
        }
        gemm(true, false, h, batch, 4 * h, &cache.hiddens[t], &dz, T::one(), &mut dw_hh);
        gemm(false, true, batch, 4 * h, h, &dz, w_hh.data(), T::zero(), &mut dh_next);
    }
    let rows = batch * len;
    let mut dw_ih = vec![T::zero(); din * 4 * h];
    gemm(true, false, din, rows, 4 * h, x.data(), &dz_all, T::zero(), &mut dw_ih);
    let mut dx = vec![T::zero(); rows * din];
    gemm(false, true, rows, 4 * h, din, &dz_all, w_ih.data(), T::zero(), &mut dx);
    let mut dbias = vec![T::zero(); 4 * h];
    for row in dz_all.chunks_exact(4 * h) {
        dbias.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
    }
    LstmGrads {
        dx,
        dw_ih,
        dw_hh,
        dbias,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    #[test]
    fn single_step_by_hand() {
        // H = 1, Din = 1, all weights 0.5, bias 0, x = 1, zero state:
        // every pre-activation is 0.5.
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_f64(&[1, 1, 1], &[1.0]).unwrap());
        let wi = tape.constant(Tensor::full(&[1, 4], 0.5));
        let wh = tape.constant(Tensor::full(&[1, 4], 0.5));
        let b = tape.constant(Tensor::zeros(&[4]));
        let h = x.lstm(&wi, &wh, &b, None).unwrap().item();
        let s = 1.0 / (1.0 + (-0.5f64).exp());
        let c = s * 0.5f64.tanh();
        assert!((h - s * c.tanh()).abs() < 1e-15);
    }

    #[test]
    fn forget_bias_holds_the_cell() {
        // With i = 0 and f = 1 (saturated) the cell keeps c0 and h is o*tanh(c0).
        let tape = Tape::new();
        let x = tape.constant(Tensor::<f64>::zeros(&[1, 3, 1]));
        let wi = tape.constant(Tensor::zeros(&[1, 4]));
        let wh = tape.constant(Tensor::zeros(&[1, 4]));
        let b = tape.constant(Tensor::from_f64(&[4], &[-50.0, 50.0, 0.0, 50.0]).unwrap());
        let h0 = Tensor::zeros(&[1, 1]);
        let c0 = Tensor::from_f64(&[1, 1], &[0.7]).unwrap();
        let out = x.lstm(&wi, &wh, &b, Some((&h0, &c0))).unwrap().value();
        for v in out.data() {
            assert!((v - 0.7f64.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_two_input_is_one_sequence() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::<f64>::full(&[5, 2], 0.1));
        let wi = tape.constant(Tensor::full(&[2, 12], 0.1));
        let wh = tape.constant(Tensor::full(&[3, 12], 0.1));
        let b = tape.constant(Tensor::zeros(&[12]));
        assert_eq!(x.lstm(&wi, &wh, &b, None).unwrap().shape(), vec![5, 3]);
        let bad = tape.constant(Tensor::<f64>::zeros(&[2, 8]));
        assert!(x.lstm(&wi, &bad, &b, None).is_err());
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::<f64>::full(&[2, 6, 3], 0.9));
        let wi = tape.constant(Tensor::zeros(&[3, 8]));
        let wh = tape.constant(Tensor::zeros(&[2, 8]));
        let b = tape.constant(Tensor::zeros(&[8]));
        let y = x.lstm(&wi, &wh, &b, None).unwrap();
        assert_eq!(y.shape(), vec![2, 6, 2]);
        assert!(y.value().data().iter().all(|&v| v == 0.0));
    }
}
