use std::fmt::Write as _;
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{batch_images, derive_seed, ImageStack};
use crate::error::{Error, Result};
use crate::nn::{save_checkpoint, QualityConfig, QualityNet, SegConfig, SegNet};
use crate::scalar::Scalar;
use crate::tensor::optim::{LookaheadConfig, OptimizerConfig};
use crate::tensor::Graph;

use super::fuse_graph;

pub const LOSS_LOG_FILE: &str = "loss_log.csv";
pub const LAST_CHECKPOINT: &str = "checkpoint_last.ftz";
pub const BEST_CHECKPOINT: &str = "checkpoint_best.ftz";

// Stream tags for derived seeds.
const SHUFFLE: u64 = 0;
const SAMPLE: u64 = 1;
const CROP: u64 = 2;
const QUALITY_INIT: u64 = 3;
const SEG_INIT: u64 = 4;

/// Fusion-training hyperparameters. Defaults are the desk-scale settings;
/// [`TrainConfig::full_scale`] gives the larger reference settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub crop: usize,
    /// Images sampled per location each epoch.
    pub k: usize,
    pub seed: u64,
    pub classes: usize,
    pub rectify: bool,
    pub lookahead: bool,
    pub lookahead_k: usize,
    pub lookahead_alpha: f64,
    pub quality: QualityConfig,
    pub seg: SegConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 4,
            epochs: 20,
            crop: 64,
            k: 4,
            seed: 42,
            classes: 6,
            rectify: false,
            lookahead: false,
            lookahead_k: 5,
            lookahead_alpha: 0.5,
            quality: QualityConfig::default(),
            seg: SegConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn full_scale() -> Self {
        Self {
            batch_size: 10,
            epochs: 100,
            crop: 416,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{what} must be positive")));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be finite and non-negative, got {}", self.lr)));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("crop", self.crop),
            ("k", self.k),
            ("classes", self.classes),
        ] {
            if v == 0 {
                return bad(name);
            }
        }
        if !self.crop.is_multiple_of(4) {
            return Err(Error::Config(format!("crop {} must be divisible by 4", self.crop)));
        }
        if self.lookahead && (self.lookahead_k == 0 || !(0.0..=1.0).contains(&self.lookahead_alpha)) {
            return Err(Error::Config("lookahead needs k > 0 and alpha in [0, 1]".into()));
        }
        self.quality.validate()?;
        self.seg_config().validate()?;
        let div = self.quality.spatial_divisor().max(self.seg.spatial_divisor());
        if !self.crop.is_multiple_of(div) {
            return Err(Error::Config(format!("crop {} must be divisible by {div}", self.crop)));
        }
        Ok(())
    }

    /// Segmentation config with the class count taken from `classes`.
    pub fn seg_config(&self) -> SegConfig {
        SegConfig {
            classes: self.classes,
            ..self.seg.clone()
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            lr: self.lr,
            rectify: self.rectify,
            lookahead: self.lookahead.then_some(LookaheadConfig {
                k: self.lookahead_k,
                alpha: self.lookahead_alpha,
            }),
            ..OptimizerConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
}

pub struct TrainOutcome<T> {
    pub quality: QualityNet<T>,
    pub seg: SegNet<T>,
    pub log: Vec<EpochRecord>,
}

fn loss_csv(log: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,mean_loss\n");
    for r in log {
        let _ = writeln!(s, "{},{}", r.epoch, r.mean_loss);
    }
    s
}

/// Train the quality and segmentation networks jointly from land-cover labels.
///
/// With `out_dir` set, writes `loss_log.csv` plus last and best checkpoints
/// after every epoch.
pub fn train_fusion<T: Scalar>(
    stacks: &[ImageStack],
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if stacks.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    for s in stacks {
        s.validate()?;
        if s.labels.is_none() {
            return Err(Error::Config(format!("location {} has no label map", s.location)));
        }
        if s.k() < config.k {
            return Err(Error::Config(format!(
                "location {} has {} images, k = {}",
                s.location,
                s.k(),
                config.k
            )));
        }
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let seed = config.seed;
    let mut quality = QualityNet::<T>::new(config.quality.clone(), derive_seed(seed, &[QUALITY_INIT]))?;
    let mut seg = SegNet::<T>::new(config.seg_config(), derive_seed(seed, &[SEG_INIT]))?;
    let opt_cfg = config.optimizer();
    let mut opt_q = opt_cfg.build::<T>();
    let mut opt_s = opt_cfg.build::<T>();

    let mut log = Vec::with_capacity(config.epochs);
    let mut best = f64::INFINITY;
    for epoch in 0..config.epochs {
        let e = epoch as u64;
        let mut order: Vec<usize> = (0..stacks.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[SHUFFLE, e])));

        let mut total = 0.0;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = chunk
                .iter()
                .map(|&i| {
                    let loc = i as u64;
                    stacks[i]
                        .sample_k(config.k, derive_seed(seed, &[SAMPLE, e, loc]))?
                        .random_crop(config.crop, derive_seed(seed, &[CROP, e, loc]))
                })
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&ImageStack> = batch.iter().collect();
            let labels: Vec<u8> = batch
                .iter()
                .flat_map(|s| s.labels.as_deref().expect("checked above").iter().copied())
                .collect();

            let mut g = Graph::<T>::new();
            let bq = quality.params.bind(&mut g);
            let bs = seg.params.bind(&mut g);
            let mut images = Vec::with_capacity(config.k);
            let mut qualities = Vec::with_capacity(config.k);
            for j in 0..config.k {
                let x = g.constant(batch_images(&refs, j)?);
                qualities.push(quality.forward(&mut g, &bq, x)?);
                images.push(x);
            }
            let (fused, _) = fuse_graph(&mut g, &images, &qualities)?;
            let logits = seg.forward(&mut g, &bs, fused)?;
            let loss = g.cross_entropy(logits, &labels)?;
            let value = g.value(loss).item().to_f64().unwrap_or(f64::NAN);
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: batch_idx,
                });
            }
            total += value * chunk.len() as f64;

            g.backward(loss)?;
            let gq = quality.params.grads(&g, &bq);
            let gs = seg.params.grads(&g, &bs);
            opt_q.step(&mut quality.params, &gq)?;
            opt_s.step(&mut seg.params, &gs)?;
        }
        let mean_loss = total / stacks.len() as f64;
        info!("epoch {}/{}: mean loss {mean_loss:.6}", epoch + 1, config.epochs);
        log.push(EpochRecord {
            epoch: epoch + 1,
            mean_loss,
        });

        if let Some(dir) = out_dir {
            save_checkpoint(&dir.join(LAST_CHECKPOINT), Some(&quality), Some(&seg))?;
            if mean_loss < best {
                save_checkpoint(&dir.join(BEST_CHECKPOINT), Some(&quality), Some(&seg))?;
            }
            let path = dir.join(LOSS_LOG_FILE);
            std::fs::write(&path, loss_csv(&log)).map_err(|e| Error::io(&path, e))?;
        }
        best = best.min(mean_loss);
    }
    Ok(TrainOutcome { quality, seg, log })
}
