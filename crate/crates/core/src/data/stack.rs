use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{netpbm, DatasetManifest, LocationEntry};

/// K co-registered RGB images of one location, with optional land-cover
/// labels and per-image cloud masks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageStack {
    pub location: String,
    pub width: usize,
    pub height: usize,
    /// Interleaved 8-bit RGB, `3 * width * height` bytes each.
    pub images: Vec<Vec<u8>>,
    /// Class index per pixel.
    pub labels: Option<Vec<u8>>,
    /// Per-image `{0, 1}` cloud masks.
    pub masks: Option<Vec<Vec<u8>>>,
}

impl ImageStack {
    pub fn k(&self) -> usize {
        self.images.len()
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn validate(&self) -> Result<()> {
        let px = self.pixels();
        if self.images.is_empty() {
            return Err(Error::invalid("image_stack", format!("{}: empty stack", self.location)));
        }
        if self.images.iter().any(|im| im.len() != 3 * px) {
            return Err(Error::shape("image_stack", format!("{}: image size mismatch", self.location)));
        }
        if self.labels.as_ref().is_some_and(|l| l.len() != px) {
            return Err(Error::shape("image_stack", format!("{}: label size mismatch", self.location)));
        }
        if let Some(m) = &self.masks {
            if m.len() != self.k() || m.iter().any(|m| m.len() != px) {
                return Err(Error::shape("image_stack", format!("{}: mask mismatch", self.location)));
            }
        }
        Ok(())
    }

    /// Image `j` as a `[1, 3, H, W]` tensor scaled to `[0, 1]`.
    pub fn image_tensor<T: Scalar>(&self, j: usize) -> Tensor<T> {
        Tensor::new(vec![1, 3, self.height, self.width], planar(&self.images[j], self.pixels()))
            .expect("validated stack")
    }

    /// Cloud mask `j` as `{0, 1}` scalars.
    pub fn mask_values<T: Scalar>(&self, j: usize) -> Option<Vec<T>> {
        self.masks
            .as_ref()
            .map(|m| m[j].iter().map(|&v| T::from_u8(v).expect("byte")).collect())
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(Error::invalid(
                "crop",
                format!(
                    "{width}x{height} at ({x0}, {y0}) exceeds {}x{} image",
                    self.width, self.height
                ),
            ));
        }
        let cut = |src: &[u8], ch: usize| -> Vec<u8> {
            (y0..y0 + height)
                .flat_map(|y| {
                    let start = (y * self.width + x0) * ch;
                    src[start..start + width * ch].iter().copied()
                })
                .collect()
        };
        Ok(Self {
            location: self.location.clone(),
            width,
            height,
            images: self.images.iter().map(|im| cut(im, 3)).collect(),
            labels: self.labels.as_ref().map(|l| cut(l, 1)),
            masks: self
                .masks
                .as_ref()
                .map(|ms| ms.iter().map(|m| cut(m, 1)).collect()),
        })
    }

    /// Square crop at a seeded offset, applied identically to every layer.
    pub fn random_crop(&self, size: usize, seed: u64) -> Result<Self> {
        if size > self.width || size > self.height || size == 0 {
            return Err(Error::invalid(
                "random_crop",
                format!("crop {size} larger than {}x{} image", self.width, self.height),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = rng.gen_range(0..=self.width - size);
        let y0 = rng.gen_range(0..=self.height - size);
        self.crop(x0, y0, size, size)
    }

    /// Keep `k` images sampled without replacement; chosen images retain
    /// their original relative order.
    pub fn sample_k(&self, k: usize, seed: u64) -> Result<Self> {
        if k == 0 || k > self.k() {
            return Err(Error::invalid(
                "sample_k",
                format!("cannot sample {k} of {} images", self.k()),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen = index::sample(&mut rng, self.k(), k).into_vec();
        chosen.sort_unstable();
        Ok(self.select(&chosen))
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            location: self.location.clone(),
            width: self.width,
            height: self.height,
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: self.labels.clone(),
            masks: self
                .masks
                .as_ref()
                .map(|m| indices.iter().map(|&i| m[i].clone()).collect()),
        }
    }
}

fn planar<T: Scalar>(rgb: &[u8], pixels: usize) -> Vec<T> {
    let full = T::lit(255.0);
    let mut out = vec![T::zero(); 3 * pixels];
    for (p, px) in rgb.chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * pixels + p] = T::from_u8(px[c]).expect("byte") / full;
        }
    }
    out
}

/// Image `j` of every stack, batched as `[B, 3, H, W]`.
pub fn batch_images<T: Scalar>(stacks: &[&ImageStack], j: usize) -> Result<Tensor<T>> {
    let parts: Vec<Tensor<T>> = stacks.iter().map(|s| s.image_tensor(j)).collect();
    let refs: Vec<&Tensor<T>> = parts.iter().collect();
    Tensor::concat_leading(&refs)
}

/// Read images, labels, and masks for one manifest entry.
pub fn load_stack(root: &Path, entry: &LocationEntry) -> Result<ImageStack> {
    let mut width = 0;
    let mut height = 0;
    let mut check = |r: &netpbm::Raster, path: &Path, channels: usize| -> Result<()> {
        if r.channels != channels {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!("expected {channels} channel(s)"),
            });
        }
        if width == 0 {
            (width, height) = (r.width, r.height);
        } else if (r.width, r.height) != (width, height) {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!("size {}x{} differs from stack {width}x{height}", r.width, r.height),
            });
        }
        Ok(())
    };
    let mut images = Vec::with_capacity(entry.images.len());
    let mut masks = Vec::new();
    for im in &entry.images {
        let path = root.join(&im.image);
        let r = netpbm::read(&path)?;
        check(&r, &path, 3)?;
        images.push(r.data);
        if let Some(m) = &im.mask {
            let path = root.join(m);
            let r = netpbm::read(&path)?;
            check(&r, &path, 1)?;
            masks.push(r.data.iter().map(|&v| u8::from(v > 127)).collect());
        }
    }
    let labels = match &entry.label {
        Some(l) => {
            let path = root.join(l);
            let r = netpbm::read(&path)?;
            check(&r, &path, 1)?;
            Some(r.data)
        }
        None => None,
    };
    let masks = if masks.is_empty() {
        None
    } else if masks.len() == images.len() {
        Some(masks)
    } else {
        return Err(Error::invalid(
            "load_stack",
            format!("{}: masks present for only some images", entry.id),
        ));
    };
    let stack = ImageStack {
        location: entry.id.clone(),
        width,
        height,
        images,
        labels,
        masks,
    };
    stack.validate()?;
    Ok(stack)
}

/// Load every stack listed in a dataset manifest, in manifest order.
pub fn load_dataset(path: &Path) -> Result<(DatasetManifest, Vec<ImageStack>)> {
    let (manifest, root) = DatasetManifest::load(path)?;
    let stacks = manifest
        .locations
        .iter()
        .map(|e| load_stack(&root, e))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, stacks))
}
