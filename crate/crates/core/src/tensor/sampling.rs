use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::graph::{slot, Graph, Op, Var};
use super::Tensor;

impl<T: Scalar> Graph<T> {
    /// Nearest-neighbour 2x upsampling: each pixel becomes a 2x2 block.
    pub fn upsample_nearest2x(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let [n, c, h, w] = x.dims4()?;
        let (h2, w2) = (2 * h, 2 * w);
        let mut out = vec![T::zero(); n * c * h2 * w2];
        for (plane, src) in out.chunks_exact_mut(h2 * w2).zip(x.data().chunks_exact(h * w)) {
            for y in 0..h2 {
                let row = &src[(y / 2) * w..(y / 2 + 1) * w];
                for (xo, v) in plane[y * w2..(y + 1) * w2].iter_mut().enumerate() {
                    *v = row[xo / 2];
                }
            }
        }
        let value = Tensor {
            shape: vec![n, c, h2, w2],
            data: out,
        };
        let rg = self.requires_grad(input);
        Ok(self.push(value, rg, Op::Upsample2x { input }))
    }

    /// 2x2 max pooling with stride 2. Spatial dims must be even.
    pub fn max_pool2x(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let [n, c, h, w] = x.dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape(
                "max_pool2x",
                format!("spatial dims {h}x{w} must be even"),
            ));
        }
        let (ho, wo) = (h / 2, w / 2);
        let mut out = vec![T::zero(); n * c * ho * wo];
        let mut argmax = vec![0usize; out.len()];
        let data = x.data();
        for p in 0..n * c {
            let base = p * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                    let o = p * ho * wo + oy * wo + ox;
                    out[o] = data[best];
                    argmax[o] = best;
                }
            }
        }
        let value = Tensor {
            shape: vec![n, c, ho, wo],
            data: out,
        };
        let rg = self.requires_grad(input);
        Ok(self.push(value, rg, Op::MaxPool2x { input, argmax }))
    }
}

pub(crate) fn upsample_backward<T: Scalar>(
    graph: &Graph<T>,
    input: Var,
    grad: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    if !graph.requires_grad(input) {
        return;
    }
    let x = graph.value(input);
    let [_, _, h, w] = x.dims4().expect("validated in forward");
    let w2 = 2 * w;
    let acc = slot(grads, input, x.numel());
    for (dst, src) in acc.chunks_exact_mut(h * w).zip(grad.chunks_exact(4 * h * w)) {
        for y in 0..2 * h {
            for xo in 0..w2 {
                dst[(y / 2) * w + xo / 2] += src[y * w2 + xo];
            }
        }
    }
}

pub(crate) fn maxpool_backward<T: Scalar>(
    graph: &Graph<T>,
    input: Var,
    argmax: &[usize],
    grad: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    if !graph.requires_grad(input) {
        return;
    }
    let acc = slot(grads, input, graph.value(input).numel());
    for (&idx, &g) in argmax.iter().zip(grad) {
        acc[idx] += g;
    }
}
