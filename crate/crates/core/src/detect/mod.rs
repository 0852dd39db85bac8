//! Cloud detectors built on a trained quality network: a fixed threshold
//! on `Q`, a Platt-calibrated threshold, and a partially fine-tuned head.

mod finetune;
mod platt;

pub use finetune::{finetune, labeled_images, FinetuneConfig, FinetuneOutcome, LabeledImage};
pub use platt::{fit_platt, CalibrationParams, PlattFit, GRADIENT_TOLERANCE, MAX_ITERATIONS};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::ImageStack;
use crate::error::{Error, Result};
use crate::nn::QualityNet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Upper bound on the number of pixels used to fit calibration.
pub const MAX_CALIBRATION_POINTS: usize = 1_000_000;

/// 1 where `Q < tau` (strictly below counts as cloud).
pub fn detect_threshold<T: Scalar>(quality: &[T], tau: f64) -> Vec<u8> {
    quality
        .iter()
        .map(|q| u8::from(q.to_f64().unwrap_or(f64::NAN) < tau))
        .collect()
}

/// 1 where the calibrated cloud probability exceeds `p_thresh`.
pub fn detect_calibrated<T: Scalar>(quality: &[T], params: &CalibrationParams, p_thresh: f64) -> Vec<u8> {
    quality
        .iter()
        .map(|q| u8::from(params.probability(q.to_f64().unwrap_or(f64::NAN)) > p_thresh))
        .collect()
}

/// Per-pixel cloud probability from a fine-tuned network.
///
/// By default the network output keeps its quality meaning and cloud
/// probability is `1 - output`; `direct` reads the output as P(cloud).
pub fn cloud_probability<T: Scalar>(net: &QualityNet<T>, image: &Tensor<T>, direct: bool) -> Result<Tensor<T>> {
    let out = net.quality_forward(image)?;
    Ok(if direct { out } else { out.map(|v| T::one() - v) })
}

pub fn detect_finetuned<T: Scalar>(net: &QualityNet<T>, image: &Tensor<T>, direct: bool) -> Result<Vec<u8>> {
    let p = cloud_probability(net, image, direct)?;
    Ok(p.data()
        .iter()
        .map(|v| u8::from(v.to_f64().unwrap_or(f64::NAN) > DEFAULT_THRESHOLD))
        .collect())
}

/// `(Q, cloud label)` pairs over every masked image, subsampled without
/// replacement to at most `max_points`.
pub fn calibration_samples<T: Scalar>(
    net: &QualityNet<T>,
    stacks: &[ImageStack],
    max_points: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<u8>)> {
    let mut q = Vec::new();
    let mut y = Vec::new();
    for s in stacks {
        let masks = s
            .masks
            .as_ref()
            .ok_or_else(|| Error::Config(format!("location {} has no cloud masks", s.location)))?;
        for (j, m) in masks.iter().enumerate() {
            let out = net.quality_forward(&s.image_tensor::<T>(j))?;
            q.extend(out.data().iter().map(|v| v.to_f64().unwrap_or(f64::NAN)));
            y.extend_from_slice(m);
        }
    }
    if q.len() > max_points {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = index::sample(&mut rng, q.len(), max_points).into_vec();
        keep.sort_unstable();
        q = keep.iter().map(|&i| q[i]).collect();
        y = keep.iter().map(|&i| y[i]).collect();
    }
    Ok((q, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn threshold_boundaries() {
        assert!(detect_threshold(&[0.0f32; 9], 0.5).iter().all(|&m| m == 1));
        assert!(detect_threshold(&[0.5f64; 9], 0.5).iter().all(|&m| m == 0));
    }

    #[test]
    fn threshold_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let tau: f64 = rng.gen();
            let q: Vec<f64> = (0..256).map(|_| rng.gen()).collect();
            let got = detect_threshold(&q, tau);
            for (i, &v) in q.iter().enumerate() {
                assert_eq!(got[i] == 1, v < tau);
            }
        }
    }

    #[test]
    fn calibrated_equals_single_threshold_on_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let params = CalibrationParams {
                beta0: rng.gen_range(0.5..10.0),
                beta1: rng.gen_range(-8.0..0.0),
            };
            let cut = -params.beta1 / params.beta0;
            let q: Vec<f64> = (0..512).map(|_| rng.gen()).collect();
            let got = detect_calibrated(&q, &params, 0.5);
            for (i, &v) in q.iter().enumerate() {
                let brute = 1.0 / (1.0 + (params.beta0 * v + params.beta1).exp()) > 0.5;
                assert_eq!(got[i] == 1, brute);
                if (v - cut).abs() > 1e-9 {
                    assert_eq!(brute, v < cut);
                }
            }
        }
    }

    #[test]
    fn flat_calibration_is_all_clear() {
        let flat = CalibrationParams { beta0: 0.0, beta1: 0.0 };
        assert!(detect_calibrated(&[0.0, 0.3, 1.0], &flat, 0.5).iter().all(|&m| m == 0));
    }
}
