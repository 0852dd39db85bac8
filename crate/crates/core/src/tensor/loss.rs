use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::graph::{slot, Graph, Op, Var};
use super::Tensor;

/// Predictions are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` inside the BCE log.
pub const BCE_CLAMP: f64 = 1e-7;
/// Additive smoothing in the dice numerator and denominator.
pub const DICE_SMOOTH: f64 = 1.0;

impl<T: Scalar> Graph<T> {
    /// Mean over pixels of `-log softmax(logits)[label]`.
    ///
    /// `labels` is `[N, H, W]` row-major class indices matching `logits` `[N, C, H, W]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[u8]) -> Result<Var> {
        let x = self.value(logits);
        let [n, c, h, w] = x.dims4()?;
        let plane = h * w;
        if labels.len() != n * plane {
            return Err(Error::shape(
                "cross_entropy",
                format!("{} labels for logits {:?}", labels.len(), x.shape()),
            ));
        }
        let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
        if let Some(bad) = labels.iter().position(|&l| l >= c) {
            let (i, p) = (bad / plane, bad % plane);
            return Err(Error::LabelOutOfRange {
                label: labels[bad],
                classes: c,
                n: i,
                y: p / w,
                x: p % w,
            });
        }
        let data = x.data();
        let mut probs = vec![T::zero(); data.len()];
        let mut total = T::zero();
        for i in 0..n {
            for p in 0..plane {
                let at = |ch: usize| (i * c + ch) * plane + p;
                let max = (0..c).map(|ch| data[at(ch)]).fold(T::neg_infinity(), T::max);
                let mut z = T::zero();
                for ch in 0..c {
                    let e = (data[at(ch)] - max).exp();
                    probs[at(ch)] = e;
                    z += e;
                }
                for ch in 0..c {
                    probs[at(ch)] /= z;
                }
                let l = labels[i * plane + p];
                total += z.ln() + max - data[at(l)];
            }
        }
        let count = T::from_usize(n * plane).expect("count fits");
        let rg = self.requires_grad(logits);
        Ok(self.push(
            Tensor::scalar(total / count),
            rg,
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            },
        ))
    }

    /// Mean binary cross-entropy of probabilities against a `{0,1}` target.
    pub fn bce_loss(&mut self, pred: Var, target: &[T]) -> Result<Var> {
        let p = self.value(pred);
        if p.numel() != target.len() {
            return Err(Error::shape(
                "bce_loss",
                format!("{} targets for prediction {:?}", target.len(), p.shape()),
            ));
        }
        let eps = T::lit(BCE_CLAMP);
        let one = T::one();
        let total: T = p
            .data()
            .iter()
            .zip(target)
            .map(|(&pi, &t)| {
                let pc = pi.max(eps).min(one - eps);
                -(t * pc.ln() + (one - t) * (one - pc).ln())
            })
            .sum();
        let count = T::from_usize(target.len()).expect("count fits");
        let rg = self.requires_grad(pred);
        Ok(self.push(
            Tensor::scalar(total / count),
            rg,
            Op::Bce {
                pred,
                target: target.to_vec(),
            },
        ))
    }

    /// Soft dice coefficient `(2 sum(p t) + s) / (sum(p) + sum(t) + s)`.
    pub fn dice_coefficient(&mut self, pred: Var, target: &[T]) -> Result<Var> {
        let p = self.value(pred);
        if p.numel() != target.len() {
            return Err(Error::shape(
                "dice_coefficient",
                format!("{} targets for prediction {:?}", target.len(), p.shape()),
            ));
        }
        let (inter, sp, st) = dice_sums(p.data(), target);
        let s = T::lit(DICE_SMOOTH);
        let two = T::lit(2.0);
        let value = (two * inter + s) / (sp + st + s);
        let rg = self.requires_grad(pred);
        Ok(self.push(
            Tensor::scalar(value),
            rg,
            Op::Dice {
                pred,
                target: target.to_vec(),
            },
        ))
    }
}

fn dice_sums<T: Scalar>(p: &[T], t: &[T]) -> (T, T, T) {
    p.iter().zip(t).fold(
        (T::zero(), T::zero(), T::zero()),
        |(i, sp, st), (&a, &b)| (i + a * b, sp + a, st + b),
    )
}

pub(crate) fn cross_entropy_backward<T: Scalar>(
    graph: &Graph<T>,
    logits: Var,
    labels: &[usize],
    probs: &[T],
    grad: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    if !graph.requires_grad(logits) {
        return;
    }
    let [n, c, h, w] = graph.value(logits).dims4().expect("validated");
    let plane = h * w;
    let scale = grad[0] / T::from_usize(n * plane).expect("count fits");
    let acc = slot(grads, logits, probs.len());
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * plane;
            for p in 0..plane {
                let hot = if labels[i * plane + p] == ch {
                    T::one()
                } else {
                    T::zero()
                };
                acc[off + p] += scale * (probs[off + p] - hot);
            }
        }
    }
}

pub(crate) fn bce_backward<T: Scalar>(
    graph: &Graph<T>,
    pred: Var,
    target: &[T],
    grad: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    if !graph.requires_grad(pred) {
        return;
    }
    let p = graph.value(pred).data();
    let eps = T::lit(BCE_CLAMP);
    let one = T::one();
    let scale = grad[0] / T::from_usize(target.len()).expect("count fits");
    let acc = slot(grads, pred, p.len());
    for ((a, &pi), &t) in acc.iter_mut().zip(p).zip(target) {
        if pi > eps && pi < one - eps {
            *a += scale * ((one - t) / (one - pi) - t / pi);
        }
    }
}

pub(crate) fn dice_backward<T: Scalar>(
    graph: &Graph<T>,
    pred: Var,
    target: &[T],
    grad: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    if !graph.requires_grad(pred) {
        return;
    }
    let p = graph.value(pred).data();
    let (inter, sp, st) = dice_sums(p, target);
    let s = T::lit(DICE_SMOOTH);
    let two = T::lit(2.0);
    let num = two * inter + s;
    let den = sp + st + s;
    let acc = slot(grads, pred, p.len());
    for (a, &t) in acc.iter_mut().zip(target) {
        *a += grad[0] * (two * t * den - num) / (den * den);
    }
}
