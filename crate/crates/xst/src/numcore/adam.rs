use std::collections::BTreeMap;

use super::params::{ParamKind, ParamSet};
use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Classic Adam with bias correction. Weight decay is L2 added to the raw
/// gradient before the moment updates, matching the framework hook style the
/// reference training setup relied on, not decoupled decay.
pub struct AdamState<S: Scalar> {
    pub cfg: AdamConfig,
    pub t: u64,
    m: BTreeMap<String, Tensor<S>>,
    v: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(cfg: AdamConfig) -> Result<Self> {
        if cfg.alpha <= 0.0 {
            return Err(Error::Invalid(format!("adam alpha must be positive, got {}", cfg.alpha)));
        }
        Ok(AdamState {
            cfg,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        })
    }

    pub fn step(&mut self, params: &mut ParamSet<S>) -> Result<()> {
        self.t += 1;
        let b1 = S::from_f64(self.cfg.beta1);
        let b2 = S::from_f64(self.cfg.beta2);
        let one = S::one();
        let wd = S::from_f64(self.cfg.weight_decay);
        let alpha = S::from_f64(self.cfg.alpha);
        let eps = S::from_f64(self.cfg.eps);
        let bc1 = S::from_f64(1.0 - self.cfg.beta1.powi(self.t as i32));
        let bc2 = S::from_f64(1.0 - self.cfg.beta2.powi(self.t as i32));
        for (name, e) in params.entries.iter_mut() {
            if e.kind != ParamKind::Trainable {
                continue;
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(&e.value.shape));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(&e.value.shape));
            for i in 0..e.value.len() {
                let g = e.grad.data[i] + wd * e.value.data[i];
                m.data[i] = b1 * m.data[i] + (one - b1) * g;
                v.data[i] = b2 * v.data[i] + (one - b2) * g * g;
                let m_hat = m.data[i] / bc1;
                let v_hat = v.data[i] / bc2;
                e.value.data[i] -= alpha * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Scale all trainable gradients so their global L2 norm does not exceed
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm<S: Scalar>(params: &mut ParamSet<S>, max_norm: f64) -> f64 {
    let norm = params.grad_norm();
    if norm > max_norm && norm > 0.0 {
        let scale = S::from_f64(max_norm / norm);
        for e in params.entries.values_mut() {
            if e.kind == ParamKind::Trainable {
                for g in e.grad.data.iter_mut() {
                    *g *= scale;
                }
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::params::Group;

    fn one_param(value: Vec<f64>) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert("w", Group::Output, Tensor::vector(value)).unwrap();
        p
    }

    #[test]
    fn first_step_magnitude_is_alpha() {
        let mut p = one_param(vec![1.0, -2.0, 0.5]);
        p.get_mut("w").unwrap().grad = Tensor::vector(vec![0.3, -0.7, 4.0]);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(cfg).unwrap();
        adam.step(&mut p).unwrap();
        let w = &p.get("w").unwrap().value;
        let before = [1.0f64, -2.0, 0.5];
        let grads = [0.3f64, -0.7, 4.0];
        for i in 0..3 {
            let delta: f64 = w.data[i] - before[i];
            assert!((delta.abs() - 0.001).abs() < 1e-6, "delta {}", delta);
            assert_eq!(delta.signum(), -grads[i].signum());
        }
    }

    #[test]
    fn zero_grad_zero_decay_is_identity() {
        let mut p = one_param(vec![1.0, -2.0]);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(cfg).unwrap();
        adam.step(&mut p).unwrap();
        assert_eq!(p.get("w").unwrap().value.data, vec![1.0, -2.0]);
    }

    #[test]
    fn weight_decay_shrinks_value() {
        let mut p = one_param(vec![1.0]);
        let mut adam = AdamState::new(AdamConfig::default()).unwrap();
        adam.step(&mut p).unwrap();
        let w = p.get("w").unwrap().value.data[0];
        assert!(w < 1.0, "decayed value {}", w);
    }

    #[test]
    fn nonpositive_alpha_rejected() {
        let cfg = AdamConfig {
            alpha: 0.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::<f32>::new(cfg).is_err());
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut p = one_param(vec![0.0, 0.0]);
        p.get_mut("w").unwrap().grad = Tensor::vector(vec![3.0, 4.0]);
        let pre = clip_global_norm(&mut p, 1.0);
        assert!((pre - 5.0).abs() < 1e-12);
        let g = &p.get("w").unwrap().grad;
        let norm = (g.data[0] * g.data[0] + g.data[1] * g.data[1]).sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn clip_leaves_small_grads_alone() {
        let mut p = one_param(vec![0.0, 0.0]);
        p.get_mut("w").unwrap().grad = Tensor::vector(vec![0.3, 0.4]);
        clip_global_norm(&mut p, 5.0);
        assert_eq!(p.get("w").unwrap().grad.data, vec![0.3, 0.4]);
    }
}
