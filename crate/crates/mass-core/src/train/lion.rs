//! Lion optimizer: sign of interpolated momentum with decoupled weight
//! decay.
//!
//! Per coordinate: `u = sign(b1*m + (1-b1)*g)`,
//! `p <- p - lr*(u + wd*p)`, `m <- b2*m + (1-b2)*g`.

use serde::{Deserialize, Serialize};

use crate::error::{MassError, Result};
use crate::nn::{Binding, Gradients, ParamStore};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LionConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
}

impl Default for LionConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.99, weight_decay: 0.01 }
    }
}

/// Momentum buffers mirroring the parameter store, plus a step counter.
#[derive(Debug, Clone)]
pub struct OptimState<S: Scalar> {
    momentum: Vec<Vec<S>>,
    pub step: usize,
}

impl<S: Scalar> OptimState<S> {
    pub fn new(store: &ParamStore<S>) -> Self {
        Self {
            momentum: store.iter().map(|e| vec![S::zero(); e.data.len()]).collect(),
            step: 0,
        }
    }
}

fn sign<S: Scalar>(v: S) -> S {
    if v > S::zero() {
        S::one()
    } else if v < S::zero() {
        -S::one()
    } else {
        S::zero()
    }
}

/// One optimizer step at learning rate `lr_t`. Parameters without a
/// gradient in this graph are treated as having zero gradient.
pub fn lion_step<S: Scalar>(
    store: &mut ParamStore<S>,
    grads: &Gradients<S>,
    binding: &Binding,
    state: &mut OptimState<S>,
    cfg: &LionConfig,
    lr_t: f64,
) -> Result<()> {
    let b1 = S::from_f64_c(cfg.beta1);
    let b2 = S::from_f64_c(cfg.beta2);
    let wd = S::from_f64_c(cfg.weight_decay);
    let lr = S::from_f64_c(lr_t);
    for (id, node) in binding.iter() {
        let grad = grads.get(node);
        if let Some(gv) = grad {
            if gv.iter().any(|v| !v.is_finite()) {
                return Err(MassError::NonFiniteLoss {
                    step: state.step,
                    value: f64::NAN,
                });
            }
        }
        let m = &mut state.momentum[id];
        let p = &mut store.entry_mut(id).data;
        for i in 0..p.len() {
            let gi = grad.map_or(S::zero(), |gv| gv[i]);
            let update = sign(b1 * m[i] + (S::one() - b1) * gi);
            p[i] = p[i] - lr * (update + wd * p[i]);
            m[i] = b2 * m[i] + (S::one() - b2) * gi;
        }
    }
    state.step += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Graph;

    fn one_param_store(value: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("p", 1, 1, vec![value]);
        s
    }

    /// Build a graph whose loss is 0.5*p^2 so grad(p) = p.
    fn quadratic_step(
        store: &mut ParamStore<f64>,
        state: &mut OptimState<f64>,
        cfg: &LionConfig,
        lr: f64,
    ) {
        let mut g = Graph::new();
        let bind = store.bind(&mut g);
        let p = bind.node(0);
        let sq = g.mul(p, p);
        let s = g.sum_all(sq);
        let loss = g.scale(s, 0.5);
        let grads = g.backward(loss).unwrap();
        lion_step(store, &grads, &bind, state, cfg, lr).unwrap();
    }

    #[test]
    fn zero_grad_zero_momentum_is_pure_decay() {
        let mut store = one_param_store(2.0);
        let mut state = OptimState::new(&store);
        let cfg = LionConfig::default();
        let mut g = Graph::new();
        let bind = store.bind(&mut g);
        // loss independent of p: constant leaf
        let c = g.constant(1, 1, vec![1.0]);
        let loss = g.sum_all(c);
        let grads = g.backward(loss).unwrap();
        lion_step(&mut store, &grads, &bind, &mut state, &cfg, 0.1).unwrap();
        let want = 2.0 * (1.0 - 0.1 * cfg.weight_decay);
        assert!((store.entry(0).data[0] - want).abs() < 1e-15);
    }

    #[test]
    fn sign_update_has_unit_magnitude() {
        // with m = 0 and any g != 0: |dp + lr*wd*p| = lr
        let mut store = one_param_store(3.0);
        let mut state = OptimState::new(&store);
        let cfg = LionConfig::default();
        let lr = 1e-3;
        let before = store.entry(0).data[0];
        quadratic_step(&mut store, &mut state, &cfg, lr);
        let after = store.entry(0).data[0];
        let dp = after - before;
        assert!((dp + lr * cfg.weight_decay * before + lr).abs() < 1e-15, "dp {dp}");
    }

    #[test]
    fn two_step_quadratic_matches_closed_form() {
        // f(p) = p^2/2, grad = p, start p0 = 1, m0 = 0.
        let cfg = LionConfig::default();
        let lr = 0.1;
        let p0 = 1.0f64;

        // hand-computed trace
        let g0 = p0;
        let u0 = (cfg.beta1 * 0.0 + (1.0 - cfg.beta1) * g0).signum();
        let p1 = p0 - lr * (u0 + cfg.weight_decay * p0);
        let m1 = cfg.beta2 * 0.0 + (1.0 - cfg.beta2) * g0;
        let g1 = p1;
        let u1 = (cfg.beta1 * m1 + (1.0 - cfg.beta1) * g1).signum();
        let p2 = p1 - lr * (u1 + cfg.weight_decay * p1);
        let m2 = cfg.beta2 * m1 + (1.0 - cfg.beta2) * g1;

        let mut store = one_param_store(p0);
        let mut state = OptimState::new(&store);
        quadratic_step(&mut store, &mut state, &cfg, lr);
        assert!((store.entry(0).data[0] - p1).abs() < 1e-12);
        assert!((state.momentum[0][0] - m1).abs() < 1e-12);
        quadratic_step(&mut store, &mut state, &cfg, lr);
        assert!((store.entry(0).data[0] - p2).abs() < 1e-12);
        assert!((state.momentum[0][0] - m2).abs() < 1e-12);
        assert_eq!(state.step, 2);
    }

    #[test]
    fn update_magnitude_bounded() {
        let mut store = one_param_store(-4.0);
        let mut state = OptimState::new(&store);
        let cfg = LionConfig::default();
        let lr = 0.05;
        for _ in 0..10 {
            let before = store.entry(0).data[0];
            quadratic_step(&mut store, &mut state, &cfg, lr);
            let after = store.entry(0).data[0];
            let bound = lr * (1.0 + cfg.weight_decay * before.abs());
            assert!((after - before).abs() <= bound + 1e-12);
        }
    }
}
