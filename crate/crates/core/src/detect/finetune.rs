use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{derive_seed, ImageStack};
use crate::error::{Error, Result};
use crate::nn::QualityNet;
use crate::scalar::Scalar;
use crate::tensor::optim::OptimizerConfig;
use crate::tensor::{Graph, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Read the network output directly as P(cloud) instead of `1 - output`.
    pub direct_output: bool,
    /// Stop after this many optimizer steps, if set.
    pub max_steps: Option<usize>,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-2,
            batch_size: 4,
            seed: 42,
            direct_output: false,
            max_steps: None,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be finite and non-negative, got {}", self.lr)));
        }
        Ok(())
    }
}

/// One image with its binary cloud mask (1 = cloud).
#[derive(Clone, Debug)]
pub struct LabeledImage<T> {
    /// `[1, 3, H, W]`.
    pub image: Tensor<T>,
    pub mask: Vec<T>,
}

/// Flatten masked stacks into individual labeled images.
pub fn labeled_images<T: Scalar>(stacks: &[ImageStack]) -> Result<Vec<LabeledImage<T>>> {
    let mut out = Vec::new();
    for s in stacks {
        if s.masks.is_none() {
            return Err(Error::Config(format!("location {} has no cloud masks", s.location)));
        }
        for j in 0..s.k() {
            out.push(LabeledImage {
                image: s.image_tensor(j),
                mask: s.mask_values(j).expect("checked above"),
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct FinetuneOutcome {
    /// Mean loss per completed epoch.
    pub log: Vec<f64>,
    pub steps: usize,
}

/// Train only the `head3` tail of `net` on cloud masks with
/// `bce + (1 - dice)`, leaving every other parameter untouched.
pub fn finetune<T: Scalar>(
    net: &mut QualityNet<T>,
    train: &[LabeledImage<T>],
    config: &FinetuneConfig,
) -> Result<FinetuneOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Config("fine-tuning set is empty".into()));
    }
    net.freeze_except_head3();
    let mut opt = OptimizerConfig {
        lr: config.lr,
        ..OptimizerConfig::default()
    }
    .build::<T>();

    let mut log = Vec::with_capacity(config.epochs);
    let mut steps = 0;
    'epochs: for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[epoch as u64])));
        let mut total = 0.0;
        let mut seen = 0;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            if config.max_steps.is_some_and(|m| steps >= m) {
                break 'epochs;
            }
            let parts: Vec<&Tensor<T>> = chunk.iter().map(|&i| &train[i].image).collect();
            let x = Tensor::concat_leading(&parts)?;
            let target: Vec<T> = chunk.iter().flat_map(|&i| train[i].mask.iter().copied()).collect();

            let mut g = Graph::new();
            let b = net.params.bind(&mut g);
            let x = g.constant(x);
            let out = net.forward(&mut g, &b, x)?;
            let p = if config.direct_output {
                out
            } else {
                g.affine(out, -T::one(), T::one())
            };
            let bce = g.bce_loss(p, &target)?;
            let dice = g.dice_coefficient(p, &target)?;
            let dice_loss = g.affine(dice, -T::one(), T::one());
            let loss = g.add(bce, dice_loss)?;
            let value = g.value(loss).item().to_f64().unwrap_or(f64::NAN);
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: batch_idx,
                });
            }
            total += value * chunk.len() as f64;
            seen += chunk.len();
            g.backward(loss)?;
            let grads = net.params.grads(&g, &b);
            opt.step(&mut net.params, &grads)?;
            steps += 1;
        }
        let mean = total / seen as f64;
        info!("fine-tune epoch {}/{}: mean loss {mean:.6}", epoch + 1, config.epochs);
        log.push(mean);
    }
    Ok(FinetuneOutcome { log, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::QualityConfig;
    use rand::Rng;

    fn toy(n: usize) -> Vec<LabeledImage<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        (0..n)
            .map(|_| {
                let mask: Vec<f32> = (0..64).map(|_| f32::from(rng.gen::<bool>())).collect();
                let mut img = Vec::with_capacity(192);
                for _ in 0..3 {
                    img.extend(mask.iter().map(|&m| 0.2 + 0.7 * m + rng.gen_range(-0.05..0.05)));
                }
                LabeledImage {
                    image: Tensor::new(vec![1, 3, 8, 8], img).unwrap(),
                    mask,
                }
            })
            .collect()
    }

    #[test]
    fn only_head3_changes_and_loss_falls() {
        let mut net = QualityNet::<f32>::new(QualityConfig::default(), 7).unwrap();
        let before = net.params.entries();
        let cfg = FinetuneConfig {
            epochs: 15,
            batch_size: 2,
            ..FinetuneConfig::default()
        };
        let out = finetune(&mut net, &toy(6), &cfg).unwrap();
        assert!(out.log.last().unwrap() < &out.log[0]);
        let head3 = net.params.tagged(crate::nn::HEAD3_TAG);
        let mut changed = 0;
        for ((name, old), (_, new)) in before.iter().zip(net.params.entries()) {
            if head3.contains(&name.as_str()) {
                changed += usize::from(old != &new);
            } else {
                let same = old.data().iter().zip(new.data()).all(|(a, b)| a.to_bits() == b.to_bits());
                assert!(same, "{name} moved");
            }
        }
        assert!(changed > 0);
    }

    #[test]
    fn step_cap_and_zero_lr() {
        let mut net = QualityNet::<f32>::new(QualityConfig::default(), 7).unwrap();
        let before = net.params.entries();
        let cfg = FinetuneConfig {
            lr: 0.0,
            batch_size: 1,
            max_steps: Some(4),
            ..FinetuneConfig::default()
        };
        let out = finetune(&mut net, &toy(3), &cfg).unwrap();
        assert_eq!(out.steps, 4);
        assert_eq!(net.params.entries(), before);
    }
}
