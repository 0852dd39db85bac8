use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::graph::{slot, Graph, Op, Var};
use super::Tensor;

struct ConvGeom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    k: usize,
    ho: usize,
    wo: usize,
    stride: usize,
    padding: usize,
}

impl ConvGeom {
    fn cols_rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn out_plane(&self) -> usize {
        self.ho * self.wo
    }
}

fn geometry<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<ConvGeom> {
    let [n, c, h, w] = input.dims4()?;
    let [f, wc, kh, kw] = weight
        .dims4()
        .map_err(|_| Error::shape("conv2d", format!("weight must be rank 4, got {:?}", weight.shape())))?;
    if wc != c {
        return Err(Error::shape(
            "conv2d",
            format!(
                "input has {c} channels but weight {:?} expects {wc}",
                weight.shape()
            ),
        ));
    }
    if kh != kw || kh % 2 == 0 {
        return Err(Error::shape(
            "conv2d",
            format!("kernel must be square and odd, got {kh}x{kw}"),
        ));
    }
    if bias.shape() != [f] {
        return Err(Error::shape(
            "conv2d",
            format!("bias shape {:?} does not match {f} filters", bias.shape()),
        ));
    }
    if stride == 0 {
        return Err(Error::invalid("conv2d", "stride must be >= 1"));
    }
    if h + 2 * padding < kh || w + 2 * padding < kh {
        return Err(Error::shape(
            "conv2d",
            format!("input {h}x{w} with padding {padding} smaller than kernel {kh}"),
        ));
    }
    Ok(ConvGeom {
        n,
        c,
        h,
        w,
        f,
        k: kh,
        ho: (h + 2 * padding - kh) / stride + 1,
        wo: (w + 2 * padding - kh) / stride + 1,
        stride,
        padding,
    })
}

/// Unfold one sample `[C, H, W]` into `[C*k*k, Ho*Wo]`.
fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let plane = g.out_plane();
    let (k, s, p) = (g.k, g.stride, g.padding as isize);
    for ch in 0..g.c {
        let src = &x[ch * g.h * g.w..(ch + 1) * g.h * g.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..g.ho {
                    let iy = (oy * s + ky) as isize - p;
                    let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src_row = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - p;
                        *v = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add `[C*k*k, Ho*Wo]` back onto one sample `[C, H, W]`.
fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let plane = g.out_plane();
    let (k, s, p) = (g.k, g.stride, g.padding as isize);
    for ch in 0..g.c {
        let dst = &mut dx[ch * g.h * g.w..(ch + 1) * g.h * g.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..g.ho {
                    let iy = (oy * s + ky) as isize - p;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let base = iy as usize * g.w;
                    for ox in 0..g.wo {
                        let ix = (ox * s + kx) as isize - p;
                        if ix >= 0 && ix < g.w as isize {
                            dst[base + ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Graph<T> {
    /// 2-D cross-correlation of `[N,C,H,W]` with `[F,C,k,k]` plus bias `[F]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let x = self.value(input);
        let wt = self.value(weight);
        let b = self.value(bias);
        let g = geometry(x, wt, b, stride, padding)?;
        let rows = g.cols_rows();
        let plane = g.out_plane();
        let in_len = g.c * g.h * g.w;
        let out_len = g.f * plane;

        let mut out = vec![T::zero(); g.n * out_len];
        let mut cols = vec![T::zero(); rows * plane];
        for n in 0..g.n {
            im2col(&x.data()[n * in_len..(n + 1) * in_len], &g, &mut cols);
            let dst = &mut out[n * out_len..(n + 1) * out_len];
            for (f, chunk) in dst.chunks_exact_mut(plane).enumerate() {
                chunk.fill(b.data()[f]);
            }
            T::gemm(
                g.f,
                rows,
                plane,
                T::one(),
                wt.data(),
                rows as isize,
                1,
                &cols,
                plane as isize,
                1,
                T::one(),
                dst,
                plane as isize,
                1,
            );
        }
        let value = Tensor {
            shape: vec![g.n, g.f, g.ho, g.wo],
            data: out,
        };
        let rg = self.any_grad(&[input, weight, bias]);
        Ok(self.push(
            value,
            rg,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
        ))
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Scalar>(
    graph: &Graph<T>,
    input: Var,
    weight: Var,
    bias: Var,
    stride: usize,
    padding: usize,
    grad: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    let x = graph.value(input);
    let wt = graph.value(weight);
    let b = graph.value(bias);
    let g = geometry(x, wt, b, stride, padding).expect("validated in forward");
    let rows = g.cols_rows();
    let plane = g.out_plane();
    let in_len = g.c * g.h * g.w;
    let out_len = g.f * plane;

    if graph.requires_grad(bias) {
        let db = slot(grads, bias, g.f);
        for n in 0..g.n {
            for (f, chunk) in grad[n * out_len..(n + 1) * out_len]
                .chunks_exact(plane)
                .enumerate()
            {
                db[f] += chunk.iter().copied().sum::<T>();
            }
        }
    }

    let need_w = graph.requires_grad(weight);
    let need_x = graph.requires_grad(input);
    if !need_w && !need_x {
        return;
    }
    let mut cols = vec![T::zero(); rows * plane];
    let mut dw = if need_w {
        Some(vec![T::zero(); g.f * rows])
    } else {
        None
    };
    let mut dx = if need_x {
        Some(vec![T::zero(); g.n * in_len])
    } else {
        None
    };
    for n in 0..g.n {
        let go = &grad[n * out_len..(n + 1) * out_len];
        if let Some(dw) = dw.as_mut() {
            im2col(&x.data()[n * in_len..(n + 1) * in_len], &g, &mut cols);
            // dW[F, rows] += dOut[F, plane] * cols^T
            T::gemm(
                g.f,
                plane,
                rows,
                T::one(),
                go,
                plane as isize,
                1,
                &cols,
                1,
                plane as isize,
                T::one(),
                dw,
                rows as isize,
                1,
            );
        }
        if let Some(dx) = dx.as_mut() {
            // dCols[rows, plane] = W^T * dOut
            T::gemm(
                rows,
                g.f,
                plane,
                T::one(),
                wt.data(),
                1,
                rows as isize,
                go,
                plane as isize,
                1,
                T::zero(),
                &mut cols,
                plane as isize,
                1,
            );
            col2im(&cols, &g, &mut dx[n * in_len..(n + 1) * in_len]);
        }
    }
    if let Some(dw) = dw {
        for (a, d) in slot(grads, weight, dw.len()).iter_mut().zip(dw) {
            *a += d;
        }
    }
    if let Some(dx) = dx {
        for (a, d) in slot(grads, input, dx.len()).iter_mut().zip(dx) {
            *a += d;
        }
    }
}
