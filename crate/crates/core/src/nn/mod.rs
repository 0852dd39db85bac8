//! Network definitions: the per-pixel quality U-Net and the land-cover
//! segmentation network.

pub mod checkpoint;
mod quality;
mod seg;

pub use quality::{Partition, QualityConfig, QualityNet, HEAD3_TAG};
pub use checkpoint::{load_quality, load_seg, save_checkpoint};
pub use seg::{SegConfig, SegNet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{Bindings, Graph, ParamId, ParamSet, Tensor, Var};

/// Square convolution with "same" padding for stride 1.
#[derive(Clone, Debug)]
pub(crate) struct ConvLayer {
    pub(crate) weight: ParamId,
    pub(crate) bias: ParamId,
    stride: usize,
    padding: usize,
}

/// How a layer's weights start out.
#[derive(Clone, Copy)]
pub(crate) enum Init {
    He,
    Zero,
}

impl ConvLayer {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new<T: Scalar>(
        params: &mut ParamSet<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        init: Init,
    ) -> Self {
        let fan_in = (cin * k * k) as f64;
        let std = (2.0 / fan_in).sqrt();
        let shape = [cout, cin, k, k];
        let w = match init {
            Init::He => Tensor::from_fn(&shape, |_| {
                let z: f64 = rng.sample(StandardNormal);
                T::lit(z * std)
            }),
            Init::Zero => Tensor::zeros(&shape),
        };
        let weight = params.push(format!("{name}.weight"), w);
        let bias = params.push(format!("{name}.bias"), Tensor::zeros(&[cout]));
        Self {
            weight,
            bias,
            stride,
            padding: k / 2,
        }
    }

    pub(crate) fn forward<T: Scalar>(&self, g: &mut Graph<T>, b: &Bindings, x: Var) -> Result<Var> {
        g.conv2d(x, b.var(self.weight), b.var(self.bias), self.stride, self.padding)
    }
}

/// Bind every parameter as a constant; used for inference-only passes.
pub(crate) fn bind_frozen<T: Scalar>(params: &ParamSet<T>, g: &mut Graph<T>) -> Bindings {
    let mut frozen = params.clone();
    frozen.set_all_trainable(false);
    frozen.bind(g)
}

/// Spatial sizes must survive `levels` halvings.
pub(crate) fn check_divisible<T: Scalar>(x: &Tensor<T>, factor: usize, op: &'static str) -> Result<()> {
    let [_, _, h, w] = x.dims4()?;
    if h % factor != 0 || w % factor != 0 {
        let ph = h.div_ceil(factor) * factor;
        let pw = w.div_ceil(factor) * factor;
        return Err(crate::Error::shape(
            op,
            format!(
                "spatial size {h}x{w} must be divisible by {factor}; pad to {ph}x{pw} (+{} rows, +{} cols)",
                ph - h,
                pw - w
            ),
        ));
    }
    Ok(())
}
