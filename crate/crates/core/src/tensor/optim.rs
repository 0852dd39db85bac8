//! First-order optimizers over a [`ParamSet`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{ParamSet, Tensor};

pub trait Optimizer<T: Scalar> {
    /// Apply one update. Frozen parameters (`None` gradients) are left alone.
    fn step(&mut self, params: &mut ParamSet<T>, grads: &[Option<Tensor<T>>]) -> Result<()>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LookaheadConfig {
    pub k: usize,
    pub alpha: f64,
}

impl Default for LookaheadConfig {
    fn default() -> Self {
        Self { k: 5, alpha: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// RAdam variance rectification.
    pub rectify: bool,
    pub lookahead: Option<LookaheadConfig>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            rectify: false,
            lookahead: None,
        }
    }
}

impl OptimizerConfig {
    pub fn build<T: Scalar>(&self) -> Box<dyn Optimizer<T> + Send> {
        let adam = Adam::new(self);
        match self.lookahead {
            Some(la) => Box::new(Lookahead::new(adam, la.k, la.alpha)),
            None => Box::new(adam),
        }
    }
}

/// Adam with bias correction and optional RAdam rectification.
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    rectify: bool,
    t: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: &OptimizerConfig) -> Self {
        Self {
            lr: T::lit(cfg.lr),
            beta1: T::lit(cfg.beta1),
            beta2: T::lit(cfg.beta2),
            eps: T::lit(cfg.eps),
            rectify: cfg.rectify,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// RAdam rectification factor, or `None` while the variance estimate is
    /// not yet tractable (the update then falls back to momentum SGD).
    fn rectification(&self) -> Option<T> {
        let one = T::one();
        let two = T::lit(2.0);
        let four = T::lit(4.0);
        let rho_inf = two / (one - self.beta2) - one;
        let b2t = self.beta2.powi(self.t);
        let rho_t = rho_inf - two * T::lit(self.t as f64) * b2t / (one - b2t);
        if rho_t > four {
            Some(
                ((rho_t - four) * (rho_t - two) * rho_inf
                    / ((rho_inf - four) * (rho_inf - two) * rho_t))
                    .sqrt(),
            )
        } else {
            None
        }
    }
}

impl<T: Scalar> Optimizer<T> for Adam<T> {
    fn step(&mut self, params: &mut ParamSet<T>, grads: &[Option<Tensor<T>>]) -> Result<()> {
        assert_eq!(params.len(), grads.len(), "one gradient slot per parameter");
        for (p, g) in params.iter().zip(grads) {
            if let Some(g) = g {
                if !g.is_finite() {
                    return Err(Error::NonFiniteGradient {
                        name: p.name.clone(),
                    });
                }
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.value.numel()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let one = T::one();
        let bc1 = one - self.beta1.powi(self.t);
        let bc2 = one - self.beta2.powi(self.t);
        let rect = if self.rectify {
            self.rectification()
        } else {
            Some(one)
        };
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for ((w, &gi), (mi, vi)) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = self.beta1 * *mi + (one - self.beta1) * gi;
                *vi = self.beta2 * *vi + (one - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let update = match rect {
                    Some(r) => r * m_hat / ((*vi / bc2).sqrt() + self.eps),
                    None => m_hat,
                };
                *w -= self.lr * update;
            }
        }
        Ok(())
    }
}

/// Keeps slow weights and, every `k` inner steps, moves them a fraction
/// `alpha` toward the fast weights, then resets the fast weights to them.
pub struct Lookahead<T, O> {
    inner: O,
    k: usize,
    alpha: T,
    slow: Vec<Tensor<T>>,
    counter: usize,
}

impl<T: Scalar, O: Optimizer<T>> Lookahead<T, O> {
    pub fn new(inner: O, k: usize, alpha: f64) -> Self {
        Self {
            inner,
            k: k.max(1),
            alpha: T::lit(alpha),
            slow: Vec::new(),
            counter: 0,
        }
    }

    pub fn slow_weights(&self) -> &[Tensor<T>] {
        &self.slow
    }
}

impl<T: Scalar, O: Optimizer<T>> Optimizer<T> for Lookahead<T, O> {
    fn step(&mut self, params: &mut ParamSet<T>, grads: &[Option<Tensor<T>>]) -> Result<()> {
        if self.slow.is_empty() {
            self.slow = params.iter().map(|p| p.value.clone()).collect();
        }
        self.inner.step(params, grads)?;
        self.counter += 1;
        if self.counter.is_multiple_of(self.k) {
            for ((p, slow), g) in params.iter_mut().zip(&mut self.slow).zip(grads) {
                if g.is_none() {
                    continue;
                }
                for (s, f) in slow.data_mut().iter_mut().zip(p.value.data_mut()) {
                    *s += self.alpha * (*f - *s);
                    *f = *s;
                }
            }
        }
        Ok(())
    }
}
