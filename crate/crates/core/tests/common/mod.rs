#![allow(dead_code)]

use bowmotion::autodiff::{BnMode, Tape, Tensor, Var};
use bowmotion::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type LossFn = Box<dyn for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>> + Sync>;

pub struct OpCase {
    pub name: &'static str,
    pub inputs: Vec<Tensor<f64>>,
    pub f: LossFn,
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Magnitudes in [0.1, 1) with random sign, so kinks at zero are never
/// crossed by a finite-difference step.
pub fn rand_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m: f64 = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Scalar `sum(out * R)` with a fixed pseudo-random `R`, so every output
/// element contributes with a distinct weight.
pub fn readout<'t>(out: Var<'t, f64>) -> Result<Var<'t, f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let r = rand_tensor(&mut rng, &out.shape());
    let r = out.tape().constant(r);
    Ok(out.mul(&r)?.sum())
}

macro_rules! case {
    ($name:expr, [$($input:expr),* $(,)?], |$t:ident, $v:ident| $body:expr) => {
        OpCase {
            name: $name,
            inputs: vec![$($input),*],
            f: Box::new(move |$t: &Tape<f64>, $v: &[Var<'_, f64>]| {
                let _ = $t;
                $body
            }),
        }
    };
}

/// One instance of every differentiable operation, with inputs drawn from
/// `seed`.
pub fn op_cases(seed: u64) -> Vec<OpCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    vec![
        case!("add", [rand_tensor(r, &[3, 4]), rand_tensor(r, &[3, 4])], |t, v| readout(v[0].add(&v[1])?)),
        case!("sub", [rand_tensor(r, &[3, 4]), rand_tensor(r, &[3, 4])], |t, v| readout(v[0].sub(&v[1])?)),
        case!("mul", [rand_tensor(r, &[3, 4]), rand_tensor(r, &[3, 4])], |t, v| readout(v[0].mul(&v[1])?)),
        case!("scale", [rand_tensor(r, &[5])], |t, v| readout(v[0].scale(-1.7))),
        case!("add_bias", [rand_tensor(r, &[2, 3, 4]), rand_tensor(r, &[4])], |t, v| readout(v[0].add_bias(&v[1])?)),
        case!("matmul", [rand_tensor(r, &[2, 3, 4]), rand_tensor(r, &[4, 5])], |t, v| readout(v[0].matmul(&v[1])?)),
        case!("batch_matmul", [rand_tensor(r, &[2, 3, 4]), rand_tensor(r, &[2, 4, 5])], |t, v| {
            readout(v[0].matmul(&v[1])?)
        }),
        case!("transpose", [rand_tensor(r, &[2, 3, 4])], |t, v| readout(v[0].transpose()?)),
        case!("reshape", [rand_tensor(r, &[2, 6])], |t, v| readout(v[0].reshape(&[3, 4])?)),
        case!("concat", [rand_tensor(r, &[2, 3, 2]), rand_tensor(r, &[2, 3, 3])], |t, v| {
            readout(Var::concat(&[v[0], v[1]], 2)?)
        }),
        case!("narrow", [rand_tensor(r, &[2, 6, 3])], |t, v| readout(v[0].narrow(1, 2, 3)?)),
        case!("relu", [rand_away_from_zero(r, &[4, 5])], |t, v| readout(v[0].relu())),
        case!("sigmoid", [rand_tensor(r, &[4, 5])], |t, v| readout(v[0].sigmoid())),
        case!("tanh", [rand_tensor(r, &[4, 5])], |t, v| readout(v[0].tanh())),
        case!("dropout", [rand_tensor(r, &[6, 5])], |t, v| readout(v[0].dropout(0.3, true, 17)?)),
        case!("softmax", [rand_tensor(r, &[3, 6])], |t, v| readout(v[0].scale(3.0).softmax())),
        case!("sum", [rand_tensor(r, &[3, 4])], |t, v| Ok(v[0].tanh().sum())),
        case!("mean", [rand_tensor(r, &[3, 4])], |t, v| Ok(v[0].tanh().mean())),
        {
            // Targets sit far from predictions so |p - t| never changes sign.
            let p = rand_tensor(r, &[3, 4]);
            let tgt = Tensor::new(vec![3, 4], p.data().iter().map(|x| x + 3.0).collect()).unwrap();
            case!("l1_loss", [p, tgt], |t, v| v[0].l1_loss(&v[1]))
        },
        case!(
            "conv1d",
            [rand_tensor(r, &[2, 7, 3]), rand_tensor(r, &[4, 3, 3]), rand_tensor(r, &[4])],
            |t, v| readout(v[0].conv1d(&v[1], Some(&v[2]))?)
        ),
        case!("conv1d_k5_nobias", [rand_tensor(r, &[1, 6, 2]), rand_tensor(r, &[3, 2, 5])], |t, v| {
            readout(v[0].conv1d(&v[1], None)?)
        }),
        case!("avg_pool1d", [rand_tensor(r, &[2, 7, 3])], |t, v| readout(v[0].avg_pool1d(2)?)),
        case!("upsample", [rand_tensor(r, &[2, 4, 3])], |t, v| readout(v[0].upsample(9)?)),
        case!(
            "batch_norm_train",
            [rand_tensor(r, &[2, 5, 3]), rand_tensor(r, &[3]), rand_tensor(r, &[3])],
            |t, v| readout(v[0].batch_norm(&v[1], &v[2], BnMode::Train)?.0)
        ),
        case!(
            "batch_norm_eval",
            [rand_tensor(r, &[2, 5, 3]), rand_tensor(r, &[3]), rand_tensor(r, &[3])],
            |t, v| {
                let mode = BnMode::Eval {
                    running_mean: &[0.1, -0.2, 0.3],
                    running_var: &[0.5, 1.5, 2.0],
                };
                readout(v[0].batch_norm(&v[1], &v[2], mode)?.0)
            }
        ),
        {
            let h0 = rand_tensor(r, &[2, 3]);
            let c0 = rand_tensor(r, &[2, 3]);
            case!(
                "lstm",
                [
                    rand_tensor(r, &[2, 5, 4]),
                    rand_tensor(r, &[4, 12]),
                    rand_tensor(r, &[3, 12]),
                    rand_tensor(r, &[12]),
                ],
                |t, v| readout(v[0].lstm(&v[1], &v[2], &v[3], Some((&h0, &c0)))?)
            )
        },
        case!("rel_gather", [rand_tensor(r, &[2, 6, 5])], |t, v| readout(v[0].rel_gather(2)?)),
        case!("rel_scatter", [rand_tensor(r, &[2, 6, 6])], |t, v| readout(v[0].rel_scatter(2)?)),
    ]
}
