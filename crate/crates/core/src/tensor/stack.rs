use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::graph::{slot, Graph, Op, Var};
use super::Tensor;

impl<T: Scalar> Graph<T> {
    /// Softmax across a stack of equally shaped tensors, taken independently
    /// at every element position. Returns one weight tensor per input.
    pub fn softmax_over_stack(&mut self, inputs: &[Var]) -> Result<Vec<Var>> {
        let first_in = *inputs
            .first()
            .ok_or_else(|| Error::invalid("softmax_over_stack", "empty stack"))?;
        let shape = self.value(first_in).shape().to_vec();
        for &v in inputs {
            if self.value(v).shape() != shape.as_slice() {
                return Err(Error::shape(
                    "softmax_over_stack",
                    format!("{:?} vs {shape:?}", self.value(v).shape()),
                ));
            }
        }
        let k = inputs.len();
        let len = self.value(first_in).numel();
        let mut outs: Vec<Vec<T>> = vec![vec![T::zero(); len]; k];
        let mut exps = vec![T::zero(); k];
        for p in 0..len {
            let max = inputs
                .iter()
                .map(|&v| self.value(v).data()[p])
                .fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for (e, &v) in exps.iter_mut().zip(inputs) {
                *e = (self.value(v).data()[p] - max).exp();
                total += *e;
            }
            for (out, &e) in outs.iter_mut().zip(&exps) {
                out[p] = e / total;
            }
        }
        let rg = self.any_grad(inputs);
        let first = self.len();
        let inputs = inputs.to_vec();
        Ok(outs
            .into_iter()
            .enumerate()
            .map(|(slot, data)| {
                let value = Tensor {
                    shape: shape.clone(),
                    data,
                };
                self.push(
                    value,
                    rg,
                    Op::SoftmaxSlot {
                        inputs: inputs.clone(),
                        first,
                        slot,
                    },
                )
            })
            .collect())
    }

    /// `sum_j images[j] * weights[j]`, where each image is `[N,C,H,W]` and each
    /// weight map is `[N,1,H,W]`, broadcast across channels.
    pub fn weighted_sum(&mut self, images: &[Var], weights: &[Var]) -> Result<Var> {
        if images.is_empty() || images.len() != weights.len() {
            return Err(Error::invalid(
                "weighted_sum",
                format!("{} images vs {} weight maps", images.len(), weights.len()),
            ));
        }
        let [n, c, h, w] = self.value(images[0]).dims4()?;
        for (&im, &wt) in images.iter().zip(weights) {
            if self.value(im).shape() != [n, c, h, w] || self.value(wt).shape() != [n, 1, h, w] {
                return Err(Error::shape(
                    "weighted_sum",
                    format!(
                        "image {:?} / weight {:?}, expected [{n},{c},{h},{w}] / [{n},1,{h},{w}]",
                        self.value(im).shape(),
                        self.value(wt).shape()
                    ),
                ));
            }
        }
        let plane = h * w;
        let mut out = vec![T::zero(); n * c * plane];
        for (&im, &wt) in images.iter().zip(weights) {
            let (x, q) = (self.value(im).data(), self.value(wt).data());
            for i in 0..n {
                let qs = &q[i * plane..(i + 1) * plane];
                for ch in 0..c {
                    let off = (i * c + ch) * plane;
                    for ((o, &xv), &qv) in out[off..off + plane]
                        .iter_mut()
                        .zip(&x[off..off + plane])
                        .zip(qs)
                    {
                        *o += xv * qv;
                    }
                }
            }
        }
        let value = Tensor {
            shape: vec![n, c, h, w],
            data: out,
        };
        let rg = self.any_grad(images) || self.any_grad(weights);
        Ok(self.push(
            value,
            rg,
            Op::WeightedSum {
                images: images.to_vec(),
                weights: weights.to_vec(),
            },
        ))
    }
}

pub(crate) fn softmax_slot_backward<T: Scalar>(
    graph: &Graph<T>,
    inputs: &[Var],
    first: usize,
    j: usize,
    grad: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    let wj = graph.value(Var(first + j)).data();
    for (k, &input) in inputs.iter().enumerate() {
        if !graph.requires_grad(input) {
            continue;
        }
        let wk = graph.value(Var(first + k)).data();
        let acc = slot(grads, input, wj.len());
        if k == j {
            for p in 0..wj.len() {
                acc[p] += grad[p] * wj[p] * (T::one() - wj[p]);
            }
        } else {
            for p in 0..wj.len() {
                acc[p] -= grad[p] * wj[p] * wk[p];
            }
        }
    }
}

pub(crate) fn weighted_sum_backward<T: Scalar>(
    graph: &Graph<T>,
    images: &[Var],
    weights: &[Var],
    grad: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    let [n, c, h, w] = graph.value(images[0]).dims4().expect("validated");
    let plane = h * w;
    for (&im, &wt) in images.iter().zip(weights) {
        let (x, q) = (graph.value(im).data(), graph.value(wt).data());
        if graph.requires_grad(im) {
            let acc = slot(grads, im, n * c * plane);
            for i in 0..n {
                let qs = &q[i * plane..(i + 1) * plane];
                for ch in 0..c {
                    let off = (i * c + ch) * plane;
                    for p in 0..plane {
                        acc[off + p] += grad[off + p] * qs[p];
                    }
                }
            }
        }
        if graph.requires_grad(wt) {
            let acc = slot(grads, wt, n * plane);
            for i in 0..n {
                for ch in 0..c {
                    let off = (i * c + ch) * plane;
                    for p in 0..plane {
                        acc[i * plane + p] += grad[off + p] * x[off + p];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights_at(logits: &[f64]) -> Vec<f64> {
        let mut g = Graph::<f64>::new();
        let vars: Vec<_> = logits
            .iter()
            .map(|&l| g.constant(Tensor::scalar(l)))
            .collect();
        let ws = g.softmax_over_stack(&vars).unwrap();
        ws.iter().map(|&w| g.value(w).item()).collect()
    }

    #[test]
    fn equal_inputs_give_uniform_weights() {
        for w in weights_at(&[0.3, 0.3, 0.3]) {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_image_has_unit_weight() {
        assert_eq!(weights_at(&[0.77]), vec![1.0]);
    }

    #[test]
    fn two_image_weights_match_direct_evaluation() {
        let w = weights_at(&[0.2, 0.8]);
        assert!((w[0] - 0.35434).abs() < 1e-5);
        assert!((w[1] - 0.64566).abs() < 1e-5);
    }

    #[test]
    fn empty_stack_is_rejected() {
        let mut g = Graph::<f32>::new();
        assert!(g.softmax_over_stack(&[]).is_err());
    }

    #[test]
    fn mismatched_stack_is_rejected() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros(&[1, 1, 2, 2]));
        let b = g.constant(Tensor::zeros(&[1, 1, 2, 3]));
        assert!(g.softmax_over_stack(&[a, b]).is_err());
    }
}
