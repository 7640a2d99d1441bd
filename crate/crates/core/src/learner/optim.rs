use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::net::DuelingNet;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(len: usize, lr: T) -> Self {
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let c1 = T::one() - self.beta1.powi(self.t);
        let c2 = T::one() - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (T::one() - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (T::one() - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// One Adam update on the squared TD error; returns the loss before the update.
///
/// Batch-norm running statistics are refreshed from this batch.
pub fn sgd_step<T: Real>(
    net: &mut DuelingNet<T>,
    opt: &mut Adam<T>,
    x: ArrayView2<T>,
    actions: &[usize],
    targets: &[T],
    l2: T,
) -> Result<T> {
    let (loss, grad, cache) = net.loss_and_grad(x, actions, targets, l2)?;
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        let bad_targets = targets.iter().filter(|t| !t.is_finite()).count();
        return Err(Error::Numerical(format!(
            "non-finite loss {loss} (batch {}, non-finite targets {bad_targets})",
            actions.len()
        )));
    }
    opt.step(&mut net.params, &grad);
    net.update_running(&cache);
    Ok(loss)
}
