//! Golden-file checks for seeded, untrained networks. Regenerate with
//! `CLOUDFUSE_BLESS=1 cargo test -p cloudfuse-core --test golden`.

use std::path::{Path, PathBuf};

use cloudfuse::data::{netpbm, render_location, SceneRecipe};
use cloudfuse::fusion::export_quality;
use cloudfuse::nn::{QualityConfig, QualityNet, SegConfig, SegNet};
use cloudfuse::tensor::{read_ftz, write_ftz};
use cloudfuse::Tensor32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Kernel selection in the gemm backend can differ per CPU, so tensors are
// compared with a small tolerance and 8-bit images within one level.
const TOL: f32 = 1e-5;

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn bless() -> bool {
    std::env::var_os("CLOUDFUSE_BLESS").is_some()
}

fn input() -> Tensor32 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    Tensor32::from_fn(&[1, 3, 32, 32], |_| rng.gen())
}

fn check_tensor(name: &str, got: &Tensor32) {
    let path = golden_dir().join(name);
    if bless() {
        std::fs::create_dir_all(golden_dir()).unwrap();
        write_ftz(&path, &[("output".to_string(), got.clone())]).unwrap();
    }
    let stored = read_ftz::<f32>(&path).unwrap();
    let want = &stored[0].1;
    assert_eq!(want.shape(), got.shape());
    let worst = want
        .data()
        .iter()
        .zip(got.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f32::max);
    assert!(worst <= TOL, "{name}: max deviation {worst}");
}

#[test]
fn quality_forward_matches_golden() {
    let net = QualityNet::<f32>::new(QualityConfig::default(), 7).unwrap();
    check_tensor("quality_forward.ftz", &net.quality_forward(&input()).unwrap());
}

#[test]
fn seg_forward_matches_golden() {
    let cfg = SegConfig {
        zero_init_head: false,
        ..SegConfig::default()
    };
    let net = SegNet::<f32>::new(cfg, 7).unwrap();
    check_tensor("seg_forward.ftz", &net.seg_forward(&input()).unwrap());
}

#[test]
fn export_quality_matches_golden() {
    let recipe = SceneRecipe {
        seed: 5,
        width: 32,
        height: 32,
        k: 3,
        ..SceneRecipe::default()
    };
    let stack = render_location(&recipe, 0).unwrap().unwrap().to_stack(32, 32);
    let net = QualityNet::<f32>::new(QualityConfig::default(), 7).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let paths = export_quality(&stack, &net, tmp.path()).unwrap();
    assert_eq!(paths.len(), stack.k() + 1);

    let dir = golden_dir().join("export");
    for p in &paths {
        let name = p.file_name().unwrap();
        if bless() {
            std::fs::create_dir_all(&dir).unwrap();
            std::fs::copy(p, dir.join(name)).unwrap();
        }
        let got = netpbm::read(p).unwrap();
        let want = netpbm::read(&dir.join(name)).unwrap();
        assert_eq!((got.width, got.height, got.channels), (want.width, want.height, want.channels));
        for (a, b) in got.data.iter().zip(&want.data) {
            assert!(a.abs_diff(*b) <= 1, "{name:?} differs beyond one level");
        }
    }
}
