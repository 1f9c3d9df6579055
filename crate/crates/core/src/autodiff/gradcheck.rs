//! Finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Check at most this many coordinates per input; `None` checks all.
    pub max_coords: Option<usize>,
    /// Seed for choosing coordinates.
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coords: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Relative error for each input:
    /// `max |a - n| / max(|a|_inf, |n|_inf, 1e-12)` over the checked coordinates.
    pub per_input: Vec<f64>,
    pub coords_checked: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_input.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares reverse-mode gradients of the scalar `f(inputs)` against
/// central differences. Every input is registered as a parameter.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<_> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = f(&tape, &vars)?;
        if out.value_ref().numel() != 1 {
            return Err(Error::invalid("grad_check needs a scalar function"));
        }
        Ok(out.item())
    };

    let analytic: Vec<Vec<f64>> = {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|x| tape.param(x.clone())).collect();
        let out = f(&tape, &vars)?;
        tape.backward(out)?;
        vars.iter()
            .zip(inputs)
            .map(|(v, x)| v.grad().map_or_else(|| vec![0.0; x.numel()], Tensor::into_data))
            .collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = inputs.to_vec();
    let mut per_input = Vec::with_capacity(inputs.len());
    let mut coords_checked = 0;
    for (k, x) in inputs.iter().enumerate() {
        let n = x.numel();
        let coords: Vec<usize> = match opts.max_coords {
            Some(m) if m < n => sample(&mut rng, n, m).into_vec(),
            _ => (0..n).collect(),
        };
        let (mut diff, mut a_inf, mut n_inf) = (0.0f64, 0.0f64, 0.0f64);
        for &i in &coords {
            let orig = x.data()[i];
            work[k].data_mut()[i] = orig + opts.step;
            let plus = eval(&work)?;
            work[k].data_mut()[i] = orig - opts.step;
            let minus = eval(&work)?;
            work[k].data_mut()[i] = orig;
            let num = (plus - minus) / (2.0 * opts.step);
            let a = analytic[k][i];
            diff = diff.max((a - num).abs());
            a_inf = a_inf.max(a.abs());
            n_inf = n_inf.max(num.abs());
        }
        coords_checked += coords.len();
        per_input.push(diff / a_inf.max(n_inf).max(1e-12));
    }
    Ok(GradCheckReport {
        per_input,
        coords_checked,
    })
}
