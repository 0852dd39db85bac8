//! Detection metrics, the three-detector benchmark, and the training-size sweep.

mod metrics;

pub use metrics::{accumulate, metrics, roc_auc, ConfusionCounts, Metrics};

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{derive_seed, ImageStack};
use crate::detect::{
    detect_calibrated, detect_finetuned, detect_threshold, finetune, labeled_images, CalibrationParams,
    FinetuneConfig,
};
use crate::error::{Error, Result};
use crate::nn::QualityNet;
use crate::scalar::Scalar;

pub const CURVE_HEADER: &str = "n_train,accuracy,miou";

pub enum Detector<'a, T> {
    Threshold {
        net: &'a QualityNet<T>,
        tau: f64,
    },
    Calibrated {
        net: &'a QualityNet<T>,
        params: CalibrationParams,
        p_thresh: f64,
    },
    Finetuned {
        net: &'a QualityNet<T>,
        direct: bool,
    },
}

impl<T: Scalar> Detector<'_, T> {
    pub fn predict(&self, stack: &ImageStack, j: usize) -> Result<Vec<u8>> {
        let image = stack.image_tensor::<T>(j);
        match self {
            Self::Threshold { net, tau } => Ok(detect_threshold(net.quality_forward(&image)?.data(), *tau)),
            Self::Calibrated { net, params, p_thresh } => Ok(detect_calibrated(
                net.quality_forward(&image)?.data(),
                params,
                *p_thresh,
            )),
            Self::Finetuned { net, direct } => detect_finetuned(net, &image, *direct),
        }
    }
}

/// A named detector, or the reason it could not be constructed.
pub struct DetectorEntry<'a, T> {
    pub name: String,
    pub detector: std::result::Result<Detector<'a, T>, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageResult {
    pub location: String,
    pub image: usize,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub detector: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Metrics over all pixels pooled.
    pub pooled: Option<Metrics>,
    pub counts: Option<ConfusionCounts>,
    /// Mean of per-image metrics.
    pub per_image_mean: Option<Metrics>,
    pub per_image: Vec<ImageResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config_digest: String,
    pub images: usize,
    pub rows: Vec<BenchmarkRow>,
}

/// Hex sha256 of the JSON serialization of `config`.
pub fn config_digest(config: &impl Serialize) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(config)?))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::ThreadPool(e.to_string()))
}

fn masked_images(test: &[ImageStack]) -> Result<Vec<(usize, usize)>> {
    let mut items = Vec::new();
    for (s, stack) in test.iter().enumerate() {
        if stack.masks.is_none() {
            return Err(Error::Config(format!("location {} has no cloud masks", stack.location)));
        }
        items.extend((0..stack.k()).map(|j| (s, j)));
    }
    Ok(items)
}

/// Per-image tallies for one detector over every masked image, in stack order.
pub fn evaluate_detector<T: Scalar>(
    test: &[ImageStack],
    detector: &Detector<'_, T>,
    threads: usize,
) -> Result<Vec<ImageResult>> {
    let items = masked_images(test)?;
    pool(threads)?.install(|| {
        items
            .par_iter()
            .map(|&(s, j)| {
                let stack = &test[s];
                let pred = detector.predict(stack, j)?;
                let truth = &stack.masks.as_ref().expect("checked")[j];
                let counts = accumulate(&pred, truth)?;
                Ok(ImageResult {
                    location: stack.location.clone(),
                    image: j,
                    counts,
                    metrics: metrics(&counts),
                })
            })
            .collect()
    })
}

/// Evaluate each detector on the test stacks. A detector that failed to
/// load or run yields a row carrying the error; the rest still run.
pub fn run_benchmark<T: Scalar>(
    test: &[ImageStack],
    detectors: &[DetectorEntry<'_, T>],
    config_digest: String,
    threads: usize,
) -> Result<BenchmarkReport> {
    let images = masked_images(test)?.len();
    let rows = detectors
        .iter()
        .map(|entry| {
            let outcome = entry
                .detector
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|d| evaluate_detector(test, d, threads).map_err(|e| e.to_string()));
            match outcome {
                Ok(per_image) => {
                    let counts: ConfusionCounts = per_image.iter().map(|r| r.counts).sum();
                    let per: Vec<Metrics> = per_image.iter().map(|r| r.metrics).collect();
                    BenchmarkRow {
                        detector: entry.name.clone(),
                        error: None,
                        pooled: Some(metrics(&counts)),
                        counts: Some(counts),
                        per_image_mean: Metrics::mean(&per),
                        per_image,
                    }
                }
                Err(e) => BenchmarkRow {
                    detector: entry.name.clone(),
                    error: Some(e),
                    pooled: None,
                    counts: None,
                    per_image_mean: None,
                    per_image: Vec::new(),
                },
            }
        })
        .collect();
    Ok(BenchmarkReport {
        config_digest,
        images,
        rows,
    })
}

impl BenchmarkReport {
    /// Fixed-width table of pooled metrics in percent.
    pub fn table(&self) -> String {
        let width = self.rows.iter().map(|r| r.detector.len()).max().unwrap_or(0).max(8);
        let mut s = format!(
            "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}\n",
            "detector", "TPR", "TNR", "mIoU", "Accuracy"
        );
        for r in &self.rows {
            match (&r.pooled, &r.error) {
                (Some(m), _) => {
                    let _ = writeln!(
                        s,
                        "{:<width$}  {:>8.2}  {:>8.2}  {:>8.2}  {:>8.2}",
                        r.detector,
                        100.0 * m.tpr,
                        100.0 * m.tnr,
                        100.0 * m.miou,
                        100.0 * m.accuracy
                    );
                }
                (None, e) => {
                    let _ = writeln!(s, "{:<width$}  error: {}", r.detector, e.as_deref().unwrap_or("unknown"));
                }
            }
        }
        s
    }

    pub fn row(&self, name: &str) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.detector == name)
    }

    /// Write `report.json` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<[std::path::PathBuf; 2]> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
        let txt = dir.join("report.txt");
        std::fs::write(&txt, self.table()).map_err(|e| Error::io(&txt, e))?;
        Ok([json, txt])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n_train: usize,
    pub accuracy: f64,
    pub miou: f64,
}

pub fn curve_csv(points: &[SweepPoint]) -> String {
    let mut s = format!("{CURVE_HEADER}\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", p.n_train, p.accuracy, p.miou);
    }
    s
}

/// For each size `n`, fine-tune a copy of `base` on `n` training images drawn
/// (seeded, without replacement) from `pool`, then score it on `test`.
pub fn size_sweep<T: Scalar>(
    base: &QualityNet<T>,
    pool: &[ImageStack],
    test: &[ImageStack],
    sizes: &[usize],
    config: &FinetuneConfig,
    threads: usize,
) -> Result<Vec<SweepPoint>> {
    let images = labeled_images::<T>(pool)?;
    if let Some(&n) = sizes.iter().find(|&&n| n == 0 || n > images.len()) {
        return Err(Error::Config(format!(
            "training size {n} outside 1..={} available images",
            images.len()
        )));
    }
    let mut points = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[n as u64]));
        let mut pick = index::sample(&mut rng, images.len(), n).into_vec();
        pick.sort_unstable();
        let subset: Vec<_> = pick.iter().map(|&i| images[i].clone()).collect();
        let mut net = base.clone();
        finetune(&mut net, &subset, config)?;
        let det = Detector::Finetuned {
            net: &net,
            direct: config.direct_output,
        };
        let counts: ConfusionCounts = evaluate_detector(test, &det, threads)?.iter().map(|r| r.counts).sum();
        let m = metrics(&counts);
        log::info!("size sweep n={n}: accuracy {:.4} mIoU {:.4}", m.accuracy, m.miou);
        points.push(SweepPoint {
            n_train: n,
            accuracy: m.accuracy,
            miou: m.miou,
        });
    }
    Ok(points)
}
