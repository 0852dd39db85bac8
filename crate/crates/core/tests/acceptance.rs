//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cloudfuse::data::{lonlat_to_tile, render_location, ImageStack, SceneRecipe};
use cloudfuse::detect::{
    calibration_samples, finetune, fit_platt, labeled_images, CalibrationParams, FinetuneConfig,
    MAX_CALIBRATION_POINTS,
};
use cloudfuse::eval::{
    accumulate, curve_csv, metrics, roc_auc, run_benchmark, size_sweep, ConfusionCounts, Detector,
    DetectorEntry,
};
use cloudfuse::fusion::{fuse_graph, train_fusion, TrainConfig, TrainOutcome, LOSS_LOG_FILE};
use cloudfuse::nn::{QualityConfig, QualityNet, HEAD3_TAG};
use cloudfuse::tensor::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Desk-scale fixture shared by the criteria that need trained networks.
struct Desk {
    train: Vec<ImageStack>,
    /// Held-out stacks used for scoring (four images each).
    test: Vec<ImageStack>,
    /// Masked stacks used to calibrate and fine-tune (four images each).
    pool: Vec<ImageStack>,
    trained: TrainOutcome<f32>,
    train_time: Duration,
}

fn stacks(recipe: &SceneRecipe, range: std::ops::Range<usize>, keep: Option<usize>) -> Vec<ImageStack> {
    range
        .filter_map(|i| render_location(recipe, i).expect("render"))
        .map(|r| {
            let s = r.to_stack(recipe.width, recipe.height);
            match keep {
                Some(k) => s.select(&(0..k).collect::<Vec<_>>()),
                None => s,
            }
        })
        .collect()
}

fn desk() -> Desk {
    let recipe = SceneRecipe {
        seed: 42,
        ..SceneRecipe::default()
    };
    let train = stacks(&recipe, 0..64, None);
    let test = stacks(&recipe, 64..80, Some(4));
    let pool = stacks(&recipe, 80..96, Some(4));
    let started = Instant::now();
    let trained = train_fusion::<f32>(&train, &TrainConfig::default(), None).expect("desk training");
    Desk {
        train,
        test,
        pool,
        trained,
        train_time: started.elapsed(),
    }
}

fn c1_gradients() -> Verdict {
    let started = Instant::now();
    let mut worst = (0.0, "");
    for (name, case) in common::op_cases() {
        for seed in 0..20 {
            let e = case(seed);
            if e.is_nan() || e > worst.0 {
                worst = (e, name);
            }
        }
    }
    let t = started.elapsed();
    verdict(
        worst.0 <= 1e-4 && t < Duration::from_secs(60),
        format!("worst relative error {:.2e} ({}), {:.1}s", worst.0, worst.1, t.as_secs_f64()),
    )
}

fn c2_fusion_algebra() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut sum_err, mut envelope, mut ratio) = (0.0f64, 0.0f64, 0.0f64);
    for trial in 0..100 {
        let k = 1 + trial % 6;
        let net = QualityNet::<f64>::new(QualityConfig::default(), trial as u64).unwrap();
        let mut g = Graph::<f64>::new();
        let b = net.params.bind(&mut g);
        let raw: Vec<Tensor<f64>> = (0..k)
            .map(|_| Tensor::from_fn(&[1, 3, 8, 8], |_| rng.gen()))
            .collect();
        let images: Vec<_> = raw.iter().map(|t| g.constant(t.clone())).collect();
        let qs: Vec<_> = images.iter().map(|&x| net.forward(&mut g, &b, x).unwrap()).collect();
        let (fused, weights) = fuse_graph(&mut g, &images, &qs).unwrap();
        for p in 0..64 {
            let w: Vec<f64> = weights.iter().map(|&v| g.value(v).data()[p]).collect();
            sum_err = sum_err.max((w.iter().sum::<f64>() - 1.0).abs());
            let (lo, hi) = w.iter().fold((f64::MAX, f64::MIN), |(l, h), &x| (l.min(x), h.max(x)));
            ratio = ratio.max(hi / lo);
            for c in 0..3 {
                let i = c * 64 + p;
                let f = g.value(fused).data()[i];
                let vals = raw.iter().map(|t| t.data()[i]);
                let mn = vals.clone().fold(f64::MAX, f64::min);
                let mx = vals.fold(f64::MIN, f64::max);
                envelope = envelope.max(mn - f).max(f - mx);
            }
        }
    }
    let e = std::f64::consts::E;
    verdict(
        sum_err <= 1e-6 && envelope <= 1e-6 && ratio <= e + 1e-6,
        format!("max |sum w - 1| {sum_err:.1e}, envelope excess {envelope:.1e}, max weight ratio {ratio:.4} (e = {e:.4})"),
    )
}

fn quality_scores(net: &QualityNet<f32>, test: &[ImageStack]) -> (Vec<f64>, Vec<u8>) {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for s in test {
        for j in 0..s.k() {
            let q = net.quality_forward(&s.image_tensor::<f32>(j)).unwrap();
            scores.extend(q.data().iter().map(|&v| 1.0 - f64::from(v)));
            labels.extend_from_slice(&s.masks.as_ref().unwrap()[j]);
        }
    }
    (scores, labels)
}

fn c3_emergent_quality(d: &Desk) -> Verdict {
    let (scores, labels) = quality_scores(&d.trained.quality, &d.test);
    let auc = roc_auc(&scores, &labels).unwrap();
    let first = d.trained.log.first().unwrap().mean_loss;
    let last = d.trained.log.last().unwrap().mean_loss;
    verdict(
        auc >= 0.80 && d.train_time < Duration::from_secs(15 * 60),
        format!(
            "ROC-AUC {auc:.4} on {} held-out stacks; {} locations, loss {first:.4} -> {last:.4}, trained in {:.0}s",
            d.test.len(),
            d.train.len(),
            d.train_time.as_secs_f64()
        ),
    )
}

fn c4_detector_ordering(d: &Desk) -> Verdict {
    let q = &d.trained.quality;
    let (qs, ys) = calibration_samples(q, &d.pool, MAX_CALIBRATION_POINTS, 42).unwrap();
    let cal = fit_platt(&qs, &ys).unwrap().params;
    let mut tuned = q.clone();
    finetune(&mut tuned, &labeled_images(&d.pool).unwrap(), &FinetuneConfig::default()).unwrap();
    let entries = vec![
        DetectorEntry {
            name: "threshold".into(),
            detector: Ok(Detector::Threshold { net: q, tau: 0.5 }),
        },
        DetectorEntry {
            name: "calibrated".into(),
            detector: Ok(Detector::Calibrated {
                net: q,
                params: cal,
                p_thresh: 0.5,
            }),
        },
        DetectorEntry {
            name: "finetuned".into(),
            detector: Ok(Detector::Finetuned {
                net: &tuned,
                direct: false,
            }),
        },
    ];
    let report = run_benchmark(&d.test, &entries, String::new(), 1).unwrap();
    let miou = |n: &str| report.row(n).unwrap().pooled.unwrap().miou;
    let (t, c, f) = (miou("threshold"), miou("calibrated"), miou("finetuned"));
    verdict(
        t < c && c < f && f >= t + 0.03,
        format!("mIoU threshold {:.2} < calibrated {:.2} < fine-tuned {:.2}", 100.0 * t, 100.0 * c, 100.0 * f),
    )
}

fn c5_platt_recovery() -> Verdict {
    let truth = CalibrationParams {
        beta0: 6.0,
        beta1: -3.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let q: Vec<f64> = (0..100_000).map(|_| rng.gen()).collect();
    let y: Vec<u8> = q
        .iter()
        .map(|&v| u8::from(rng.gen::<f64>() < truth.probability(v)))
        .collect();
    let fit = fit_platt(&q, &y).unwrap();
    let e0 = (fit.params.beta0 / truth.beta0 - 1.0).abs();
    let e1 = (fit.params.beta1 / truth.beta1 - 1.0).abs();
    let monotone = fit.history.windows(2).all(|w| w[1] >= w[0]);
    verdict(
        e0 <= 0.05 && e1 <= 0.05 && monotone,
        format!(
            "beta0 {:.4} (err {:.2}%), beta1 {:.4} (err {:.2}%), {} iterations, LL monotone: {monotone}",
            fit.params.beta0,
            100.0 * e0,
            fit.params.beta1,
            100.0 * e1,
            fit.iterations
        ),
    )
}

fn c6_metric_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 32 * 32;
    let mut pairs: Vec<(Vec<u8>, Vec<u8>)> = (0..100)
        .map(|_| {
            let density: f64 = rng.gen();
            let mut draw = || (0..n).map(|_| u8::from(rng.gen::<f64>() < density)).collect();
            (draw(), draw())
        })
        .collect();
    pairs.push((vec![1; n], vec![1; n]));
    pairs.push((vec![0; n], vec![0; n]));
    pairs.push((vec![1; n], vec![0; n]));
    pairs.push((vec![0; n], vec![1; n]));
    let mut mismatches = 0;
    for (pred, truth) in &pairs {
        let c = accumulate(pred, truth).unwrap();
        let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
        for i in 0..n {
            if pred[i] == 1 && truth[i] == 1 {
                tp += 1;
            } else if pred[i] == 1 {
                fp += 1;
            } else if truth[i] == 1 {
                fn_ += 1;
            } else {
                tn += 1;
            }
        }
        let frac = |a: u64, b: u64| if b == 0 { 1.0 } else { a as f64 / b as f64 };
        let iou_c = frac(tp, tp + fp + fn_);
        let iou_k = frac(tn, tn + fp + fn_);
        let want = (
            frac(tp, tp + fn_),
            frac(tn, tn + fp),
            frac(tp + tn, n as u64),
            (iou_c + iou_k) / 2.0,
        );
        let m = metrics(&c);
        if c != (ConfusionCounts { tp, fp, tn, fn_ }) || (m.tpr, m.tnr, m.accuracy, m.miou) != want {
            mismatches += 1;
        }
    }
    verdict(
        mismatches == 0,
        format!("{} mask pairs (4 degenerate), {mismatches} mismatches", pairs.len()),
    )
}

fn c7_freezing() -> Verdict {
    let recipe = SceneRecipe {
        seed: 7,
        width: 32,
        height: 32,
        k: 4,
        ..SceneRecipe::default()
    };
    let data = labeled_images::<f32>(&stacks(&recipe, 0..4, None)).unwrap();
    let mut net = QualityNet::<f32>::new(QualityConfig::default(), 7).unwrap();
    let before = net.params.entries();
    let cfg = FinetuneConfig {
        max_steps: Some(10),
        batch_size: 2,
        ..FinetuneConfig::default()
    };
    let out = finetune(&mut net, &data, &cfg).unwrap();
    let head3 = net.params.tagged(HEAD3_TAG);
    let (mut frozen_moved, mut frozen, mut head_moved) = (0, 0, 0);
    for ((name, old), (_, new)) in before.iter().zip(net.params.entries()) {
        let same = old
            .data()
            .iter()
            .zip(new.data())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if head3.contains(&name.as_str()) {
            head_moved += usize::from(!same);
        } else {
            frozen += 1;
            frozen_moved += usize::from(!same);
        }
    }
    verdict(
        out.steps == 10 && frozen_moved == 0 && head_moved > 0,
        format!(
            "{} steps; {frozen_moved}/{frozen} frozen tensors changed, {head_moved}/{} head tensors changed",
            out.steps,
            head3.len()
        ),
    )
}

fn c8_size_sweep(d: &Desk) -> Verdict {
    let cfg = FinetuneConfig {
        epochs: 30,
        ..FinetuneConfig::default()
    };
    let points = size_sweep(&d.trained.quality, &d.pool, &d.test, &[4, 16, 64], &cfg, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("curve.csv");
    std::fs::write(&csv_path, curve_csv(&points)).unwrap();
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let acc = |n: usize| points.iter().find(|p| p.n_train == n).unwrap().accuracy;
    let summary: Vec<String> = points
        .iter()
        .map(|p| format!("n={} acc {:.2}", p.n_train, 100.0 * p.accuracy))
        .collect();
    verdict(
        acc(64) > acc(4) && csv.lines().count() == 4,
        format!("{}; curve CSV {} rows", summary.join(", "), csv.lines().count() - 1),
    )
}

fn c9_determinism() -> Verdict {
    let recipe = SceneRecipe {
        seed: 9,
        width: 32,
        height: 32,
        k: 4,
        ..SceneRecipe::default()
    };
    let train = stacks(&recipe, 0..8, None);
    let test = stacks(&recipe, 8..11, None);
    let cfg = TrainConfig {
        epochs: 2,
        crop: 32,
        lr: 1e-3,
        ..TrainConfig::default()
    };
    let run = || -> (Vec<Vec<u8>>, String) {
        let dir = tempfile::tempdir().unwrap();
        let out = train_fusion::<f32>(&train, &cfg, Some(dir.path())).unwrap();
        let mut tuned = out.quality.clone();
        let ft = FinetuneConfig {
            epochs: 2,
            ..FinetuneConfig::default()
        };
        finetune(&mut tuned, &labeled_images(&train).unwrap(), &ft).unwrap();
        let ft_path = dir.path().join("finetuned.ftz");
        cloudfuse::nn::save_checkpoint(&ft_path, Some(&tuned), None).unwrap();
        let entries = vec![
            DetectorEntry {
                name: "threshold".into(),
                detector: Ok(Detector::Threshold { net: &out.quality, tau: 0.5 }),
            },
            DetectorEntry {
                name: "finetuned".into(),
                detector: Ok(Detector::Finetuned { net: &tuned, direct: false }),
            },
        ];
        let report = run_benchmark(&test, &entries, "digest".into(), 2).unwrap();
        report.write(dir.path()).unwrap();
        let files = [
            "checkpoint_last.ftz",
            "checkpoint_best.ftz",
            "checkpoint_last.json",
            LOSS_LOG_FILE,
            "finetuned.ftz",
            "report.json",
            "report.txt",
        ];
        let bytes = files.iter().map(|f| std::fs::read(dir.path().join(f)).unwrap()).collect();
        (bytes, files.join(", "))
    };
    let (a, names) = run();
    let (b, _) = run();
    let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    verdict(same == a.len(), format!("{same}/{} artifacts byte-identical ({names})", a.len()))
}

fn c10_tiles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let max_lat = 85.0511;
    let mut mismatches = 0;
    for _ in 0..1000 {
        let lon: f64 = rng.gen_range(-180.0..180.0);
        let lat: f64 = rng.gen_range(-max_lat..max_lat);
        let z: u8 = rng.gen_range(0..=15);
        let n = f64::from(1u32 << z);
        let phi = lat.to_radians();
        let x = ((lon + 180.0) / 360.0 * n).floor() as u32;
        let y = ((1.0 - phi.tan().asinh() / std::f64::consts::PI) / 2.0 * n).floor() as u32;
        let t = lonlat_to_tile(lon, lat, z).unwrap();
        if (t.x, t.y, t.z) != (x, y, z) {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("1000 coordinates, z in 0..=15, {mismatches} mismatches"))
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, v: Verdict| {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} [{tag}] {name}: {}", v.detail);
        failures += usize::from(!v.pass);
    };
    report(1, "gradient fidelity", c1_gradients());
    report(2, "fusion algebra", c2_fusion_algebra());
    report(5, "Platt recovery", c5_platt_recovery());
    report(6, "metric oracle", c6_metric_oracle());
    report(7, "freezing contract", c7_freezing());
    report(9, "determinism", c9_determinism());
    report(10, "tile math", c10_tiles());
    let d = desk();
    report(3, "emergent quality", c3_emergent_quality(&d));
    report(4, "detector ordering", c4_detector_ordering(&d));
    report(8, "size-sweep shape", c8_size_sweep(&d));
    println!("acceptance: {} of 10 criteria passed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
