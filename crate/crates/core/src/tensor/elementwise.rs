use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::graph::{slot, Graph, Op, Var};
use super::Tensor;

/// Logistic function, stable for large `|x|`.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Graph<T> {
    pub fn relu(&mut self, input: Var) -> Var {
        let value = self.value(input).map(|x| x.max(T::zero()));
        let rg = self.requires_grad(input);
        self.push(value, rg, Op::Relu { input })
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        let value = self.value(input).map(sigmoid);
        let rg = self.requires_grad(input);
        self.push(value, rg, Op::Sigmoid { input })
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p + q).collect();
        let value = Tensor {
            shape: x.shape().to_vec(),
            data,
        };
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::Add { a, b }))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p * q).collect();
        let value = Tensor {
            shape: x.shape().to_vec(),
            data,
        };
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::Mul { a, b }))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, input: Var, scale: T, shift: T) -> Var {
        let value = self.value(input).map(|x| scale * x + shift);
        let rg = self.requires_grad(input);
        self.push(value, rg, Op::Affine { input, scale })
    }

    /// Concatenate two `[N,*,H,W]` tensors along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let [n, ca, h, w] = self.value(a).dims4()?;
        let [nb, cb, hb, wb] = self.value(b).dims4()?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(Error::shape(
                "concat_channels",
                format!(
                    "{:?} vs {:?}",
                    self.value(a).shape(),
                    self.value(b).shape()
                ),
            ));
        }
        let plane = h * w;
        let (xa, xb) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(n * (ca + cb) * plane);
        for i in 0..n {
            data.extend_from_slice(&xa[i * ca * plane..(i + 1) * ca * plane]);
            data.extend_from_slice(&xb[i * cb * plane..(i + 1) * cb * plane]);
        }
        let value = Tensor {
            shape: vec![n, ca + cb, h, w],
            data,
        };
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, rg, Op::ConcatChannels { a, b }))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, input: Var) -> Var {
        let total = self.value(input).data().iter().copied().sum::<T>();
        let rg = self.requires_grad(input);
        self.push(Tensor::scalar(total), rg, Op::Sum { input })
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean(&mut self, input: Var) -> Var {
        let n = T::from_usize(self.value(input).numel()).expect("count fits");
        let s = self.sum(input);
        self.affine(s, T::one() / n, T::zero())
    }
}

pub(crate) fn concat_backward<T: Scalar>(
    graph: &Graph<T>,
    a: Var,
    b: Var,
    grad: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    let [n, ca, h, w] = graph.value(a).dims4().expect("validated");
    let cb = graph.value(b).shape()[1];
    let plane = h * w;
    let stride = (ca + cb) * plane;
    if graph.requires_grad(a) {
        let acc = slot(grads, a, n * ca * plane);
        for i in 0..n {
            let src = &grad[i * stride..i * stride + ca * plane];
            for (d, &g) in acc[i * ca * plane..(i + 1) * ca * plane].iter_mut().zip(src) {
                *d += g;
            }
        }
    }
    if graph.requires_grad(b) {
        let acc = slot(grads, b, n * cb * plane);
        for i in 0..n {
            let src = &grad[i * stride + ca * plane..(i + 1) * stride];
            for (d, &g) in acc[i * cb * plane..(i + 1) * cb * plane].iter_mut().zip(src) {
                *d += g;
            }
        }
    }
}
