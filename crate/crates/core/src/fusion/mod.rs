//! Quality-weighted multi-image fusion and the end-to-end training loop
//! (quality net -> per-pixel softmax -> fused image -> segmentation -> CE).

mod train;

pub use train::{train_fusion, EpochRecord, TrainConfig, TrainOutcome, LOSS_LOG_FILE};

use std::path::{Path, PathBuf};

use crate::data::netpbm::{self, Raster};
use crate::data::ImageStack;
use crate::error::{Error, Result};
use crate::nn::QualityNet;
use crate::scalar::Scalar;
use crate::tensor::{Graph, Tensor, Var};

/// Output of [`fuse`] for one stack.
#[derive(Clone, Debug)]
pub struct FusedImage<T> {
    /// `[1, 3, H, W]`, a per-pixel convex combination of the stack.
    pub image: Tensor<T>,
    /// Per-image quality `Q_j`, each `[1, 1, H, W]`.
    pub quality: Vec<Tensor<T>>,
    /// Per-image fusion weights `Q*_j`, each `[1, 1, H, W]`, summing to 1.
    pub weights: Vec<Tensor<T>>,
}

/// Fusion as graph ops: softmax the qualities across the stack, then blend.
/// Returns `(fused, weights)`.
pub fn fuse_graph<T: Scalar>(
    g: &mut Graph<T>,
    images: &[Var],
    qualities: &[Var],
) -> Result<(Var, Vec<Var>)> {
    let weights = g.softmax_over_stack(qualities)?;
    let fused = g.weighted_sum(images, &weights)?;
    Ok((fused, weights))
}

/// Fuse a stack with a quality network, without recording gradients.
pub fn fuse<T: Scalar>(stack: &ImageStack, net: &QualityNet<T>) -> Result<FusedImage<T>> {
    stack.validate()?;
    if stack.k() == 0 {
        return Err(Error::invalid("fuse", "stack has no images"));
    }
    let mut g = Graph::new();
    let b = crate::nn::bind_frozen(&net.params, &mut g);
    let mut images = Vec::with_capacity(stack.k());
    let mut qualities = Vec::with_capacity(stack.k());
    for j in 0..stack.k() {
        let x = g.constant(stack.image_tensor(j));
        qualities.push(net.forward(&mut g, &b, x)?);
        images.push(x);
    }
    let (fused, weights) = fuse_graph(&mut g, &images, &qualities)?;
    Ok(FusedImage {
        image: g.value(fused).clone(),
        quality: qualities.iter().map(|&q| g.value(q).clone()).collect(),
        weights: weights.iter().map(|&w| g.value(w).clone()).collect(),
    })
}

fn to_byte<T: Scalar>(v: T) -> u8 {
    let x = v.to_f64().unwrap_or(0.0).clamp(0.0, 1.0);
    (x * 255.0).round() as u8
}

/// Write `quality_{j}.pgm` for each image and `fused.ppm` into `dir`.
/// Returns the written paths, masks first.
pub fn export_quality<T: Scalar>(
    stack: &ImageStack,
    net: &QualityNet<T>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let out = fuse(stack, net)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (w, h) = (stack.width, stack.height);
    let mut paths = Vec::with_capacity(out.quality.len() + 1);
    for (j, q) in out.quality.iter().enumerate() {
        let raster = Raster {
            width: w,
            height: h,
            channels: 1,
            data: q.data().iter().map(|&v| to_byte(v)).collect(),
        };
        let path = dir.join(format!("quality_{j}.pgm"));
        netpbm::write(&path, &raster)?;
        paths.push(path);
    }
    let plane = w * h;
    let src = out.image.data();
    let mut rgb = Vec::with_capacity(3 * plane);
    for p in 0..plane {
        for c in 0..3 {
            rgb.push(to_byte(src[c * plane + p]));
        }
    }
    let path = dir.join("fused.ppm");
    let raster = Raster {
        width: w,
        height: h,
        channels: 3,
        data: rgb,
    };
    netpbm::write(&path, &raster)?;
    paths.push(path);
    Ok(paths)
}
