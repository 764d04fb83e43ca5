use std::collections::BTreeMap;

use super::params::{Bound, Group, ParamSet};
use super::rng::RngStream;
use super::tape::{dropout, NodeId, Tape};
use super::tensor::Tensor;
use crate::Result;

/// Compare reverse-mode gradients against central finite differences for a
/// scalar loss built by `build`. Runs in f64. Returns the worst relative
/// error over every coordinate of every trainable parameter.
///
/// `build` must construct the same graph on every call; any randomness inside
/// has to come from a freshly seeded stream.
pub fn finite_diff_check<F>(params: &mut ParamSet<f64>, mut build: F, h: f64) -> Result<f64>
where
    F: FnMut(&mut Tape<f64>, &Bound) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let loss = build(&mut tape, &bound)?;
    tape.backward(loss)?;
    params.zero_grads();
    params.harvest(&tape, &bound);
    let analytic: BTreeMap<String, Tensor<f64>> = params
        .entries
        .iter()
        .map(|(n, e)| (n.clone(), e.grad.clone()))
        .collect();

    let names: Vec<String> = bound.ids.keys().cloned().collect();
    let mut worst = 0.0f64;
    for name in names {
        for i in 0..params.get(&name)?.value.len() {
            let orig = params.get(&name)?.value.data[i];
            params.get_mut(&name)?.value.data[i] = orig + h;
            let up = eval_loss(params, &mut build)?;
            params.get_mut(&name)?.value.data[i] = orig - h;
            let down = eval_loss(params, &mut build)?;
            params.get_mut(&name)?.value.data[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = analytic[&name].data[i];
            let denom = fd.abs().max(an.abs()).max(1e-3);
            let rel = (fd - an).abs() / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

fn eval_loss<F>(params: &ParamSet<f64>, build: &mut F) -> Result<f64>
where
    F: FnMut(&mut Tape<f64>, &Bound) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let loss = build(&mut tape, &bound)?;
    Ok(tape.value(loss).item())
}

fn rand_tensor(shape: &[usize], rng: &mut RngStream) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
    Tensor::new(shape.to_vec(), data)
}

/// Tensor with values bounded away from zero, for kinked ops like relu where
/// finite differences straddling the kink would be meaningless.
fn rand_tensor_off_zero(shape: &[usize], rng: &mut RngStream) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = rng.uniform(0.2, 1.0);
            if rng.flip(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

/// Contract a tensor-valued node to a scalar with a fixed random weighting,
/// so every output coordinate influences the loss.
fn weighted_sum(tape: &mut Tape<f64>, y: NodeId, w: &Tensor<f64>) -> Result<NodeId> {
    let wl = tape.leaf(w.clone());
    let prod = tape.mul(y, wl)?;
    tape.sum_all(prod)
}

/// Finite-difference check every primitive's backward rule on small random
/// shapes. Returns (primitive name, worst relative error) pairs.
pub fn primitive_checks(seed: u64) -> Result<Vec<(String, f64)>> {
    let h = 1e-3;
    let mut out = Vec::new();
    let mut rng = RngStream::new(seed, "fd");

    // matmul, all three rank pairings
    {
        let mut p = ParamSet::new();
        p.insert("a", Group::Output, rand_tensor(&[3, 4], &mut rng))?;
        p.insert("b", Group::Output, rand_tensor(&[4, 2], &mut rng))?;
        let w = rand_tensor(&[3, 2], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.matmul(bound.id("a")?, bound.id("b")?)?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("matmul mat*mat".to_string(), err));
    }
    {
        let mut p = ParamSet::new();
        p.insert("a", Group::Output, rand_tensor(&[4], &mut rng))?;
        p.insert("b", Group::Output, rand_tensor(&[4, 3], &mut rng))?;
        let w = rand_tensor(&[3], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.matmul(bound.id("a")?, bound.id("b")?)?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("matmul vec*mat".to_string(), err));
    }
    {
        let mut p = ParamSet::new();
        p.insert("a", Group::Output, rand_tensor(&[3, 4], &mut rng))?;
        p.insert("b", Group::Output, rand_tensor(&[4], &mut rng))?;
        let w = rand_tensor(&[3], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.matmul(bound.id("a")?, bound.id("b")?)?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("matmul mat*vec".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("a", Group::Output, rand_tensor(&[3, 3], &mut rng))?;
        p.insert("b", Group::Output, rand_tensor(&[3, 3], &mut rng))?;
        let w = rand_tensor(&[3, 3], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.add(bound.id("a")?, bound.id("b")?)?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("add".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("a", Group::Output, rand_tensor(&[4], &mut rng))?;
        p.insert("b", Group::Output, rand_tensor(&[4], &mut rng))?;
        p.insert("c", Group::Output, rand_tensor(&[4], &mut rng))?;
        let w = rand_tensor(&[4], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.add_n(&[bound.id("a")?, bound.id("b")?, bound.id("c")?])?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("addn".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("a", Group::Output, rand_tensor(&[5], &mut rng))?;
        let w = rand_tensor(&[5], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.scale(bound.id("a")?, -1.7)?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("scale".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("a", Group::Output, rand_tensor(&[2, 3], &mut rng))?;
        p.insert("b", Group::Output, rand_tensor(&[2, 3], &mut rng))?;
        let w = rand_tensor(&[2, 3], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.mul(bound.id("a")?, bound.id("b")?)?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("mul".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("x", Group::Output, rand_tensor(&[4, 3], &mut rng))?;
        p.insert("r", Group::Output, rand_tensor(&[3], &mut rng))?;
        let w = rand_tensor(&[4, 3], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.mul_row(bound.id("x")?, bound.id("r")?)?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("mul_row".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("x", Group::Output, rand_tensor_off_zero(&[4, 3], &mut rng))?;
        let w = rand_tensor(&[4, 3], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.relu(bound.id("x")?)?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("relu".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("x", Group::Output, rand_tensor(&[5], &mut rng))?;
        let w = rand_tensor(&[5], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.tanh(bound.id("x")?)?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("tanh".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("x", Group::Output, rand_tensor(&[6], &mut rng))?;
        let w = rand_tensor(&[6], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.softmax(bound.id("x")?)?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("softmax".to_string(), err));
    }

    for stride in [1usize, 2] {
        let mut p = ParamSet::new();
        p.insert("x", Group::Cnn, rand_tensor(&[7, 2], &mut rng))?;
        p.insert("w", Group::Cnn, rand_tensor(&[3, 3 * 2], &mut rng))?;
        p.insert("b", Group::Cnn, rand_tensor(&[3], &mut rng))?;
        let t_out = 7usize.div_ceil(stride);
        let w = rand_tensor(&[t_out, 3], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.conv1d(bound.id("x")?, bound.id("w")?, bound.id("b")?, stride)?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push((format!("conv1d stride {}", stride), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("x", Group::Cnn, rand_tensor(&[6, 3], &mut rng))?;
        p.insert("gamma", Group::Cnn, rand_tensor_off_zero(&[3], &mut rng))?;
        p.insert("beta", Group::Cnn, rand_tensor(&[3], &mut rng))?;
        let w = rand_tensor(&[6, 3], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let mut rm = Tensor::zeros(&[3]);
                let mut rv = Tensor::full(&[3], 1.0);
                let y = t.batchnorm_train(
                    bound.id("x")?,
                    bound.id("gamma")?,
                    bound.id("beta")?,
                    &mut rm,
                    &mut rv,
                    0.9,
                    1e-5,
                )?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("batchnorm train".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("x", Group::Cnn, rand_tensor(&[5, 3], &mut rng))?;
        p.insert("gamma", Group::Cnn, rand_tensor_off_zero(&[3], &mut rng))?;
        p.insert("beta", Group::Cnn, rand_tensor(&[3], &mut rng))?;
        let rm = rand_tensor(&[3], &mut rng);
        let rv = Tensor::vector(vec![0.5, 1.5, 2.0]);
        let w = rand_tensor(&[5, 3], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.batchnorm_eval(
                    bound.id("x")?,
                    bound.id("gamma")?,
                    bound.id("beta")?,
                    &rm,
                    &rv,
                    1e-5,
                )?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("batchnorm eval".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("x", Group::EncoderLstm, rand_tensor(&[3], &mut rng))?;
        p.insert("h", Group::EncoderLstm, rand_tensor(&[4], &mut rng))?;
        p.insert("c", Group::EncoderLstm, rand_tensor(&[4], &mut rng))?;
        p.insert("w_x", Group::EncoderLstm, rand_tensor(&[16, 3], &mut rng))?;
        p.insert("w_h", Group::EncoderLstm, rand_tensor(&[16, 4], &mut rng))?;
        p.insert("b", Group::EncoderLstm, rand_tensor(&[16], &mut rng))?;
        let w = rand_tensor(&[2, 4], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.lstm_step(
                    bound.id("x")?,
                    bound.id("h")?,
                    bound.id("c")?,
                    bound.id("w_x")?,
                    bound.id("w_h")?,
                    bound.id("b")?,
                )?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("lstm_step".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("table", Group::Decoder, rand_tensor(&[5, 3], &mut rng))?;
        let w = rand_tensor(&[3], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.embed(bound.id("table")?, 2)?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("embed".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("logits", Group::Output, rand_tensor(&[6], &mut rng))?;
        let err = finite_diff_check(
            &mut p,
            |t, bound| t.cross_entropy(bound.id("logits")?, 3),
            h,
        )?;
        out.push(("cross_entropy".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("a", Group::Output, rand_tensor(&[3], &mut rng))?;
        p.insert("b", Group::Output, rand_tensor(&[2], &mut rng))?;
        let w = rand_tensor(&[5], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.concat(&[bound.id("a")?, bound.id("b")?])?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("concat".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("a", Group::Output, rand_tensor(&[4], &mut rng))?;
        p.insert("b", Group::Output, rand_tensor(&[4], &mut rng))?;
        let w = rand_tensor(&[2, 4], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.stack_rows(&[bound.id("a")?, bound.id("b")?])?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("stack_rows".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("a", Group::Output, rand_tensor(&[2, 3], &mut rng))?;
        p.insert("b", Group::Output, rand_tensor(&[4, 3], &mut rng))?;
        let w = rand_tensor(&[6, 3], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.concat_rows(&[bound.id("a")?, bound.id("b")?])?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("concat_rows".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("a", Group::Output, rand_tensor(&[5, 3], &mut rng))?;
        let w = rand_tensor(&[2, 3], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.slice_rows(bound.id("a")?, 1, 2)?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("slice_rows".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("a", Group::Output, rand_tensor(&[4, 3], &mut rng))?;
        let w = rand_tensor(&[3], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let y = t.row(bound.id("a")?, 2)?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("row".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("a", Group::Output, rand_tensor(&[3, 3], &mut rng))?;
        let err = finite_diff_check(&mut p, |t, bound| t.sum_all(bound.id("a")?), h)?;
        out.push(("sum_all".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("x", Group::Output, rand_tensor(&[4, 3], &mut rng))?;
        let w = rand_tensor(&[4, 3], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let mut mask_rng = RngStream::new(123, "fd-dropout");
                let y = dropout(t, bound.id("x")?, 0.4, &mut mask_rng, true, false)?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("dropout".to_string(), err));
    }

    {
        let mut p = ParamSet::new();
        p.insert("x", Group::Output, rand_tensor(&[4, 3], &mut rng))?;
        let w = rand_tensor(&[4, 3], &mut rng);
        let err = finite_diff_check(
            &mut p,
            |t, bound| {
                let mut mask_rng = RngStream::new(321, "fd-dropout");
                let y = dropout(t, bound.id("x")?, 0.4, &mut mask_rng, true, true)?;
                weighted_sum(t, y, &w)
            },
            h,
        )?;
        out.push(("dropout variational".to_string(), err));
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_primitive_matches_finite_differences() {
        let checks = primitive_checks(20240817).unwrap();
        assert!(checks.len() >= 20);
        for (name, err) in checks {
            assert!(err < 1e-4, "{} rel err {}", name, err);
        }
    }
}
