//! Procedural stand-in for a multi-temporal satellite collection: one
//! land-cover map per location, rendered K times under independent clouds.

use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::netpbm::{self, Raster};
use super::noise::{fbm, smoothstep};
use super::{
    derive_seed, tiles_in_bbox, BoundingBox, DatasetManifest, ImageEntry, ImageStack, LocationEntry,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassStyle {
    pub color: [f64; 3],
    /// Peak-to-peak amplitude of the ground texture.
    pub texture: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneRecipe {
    pub seed: u64,
    pub classes: usize,
    pub k: usize,
    pub width: usize,
    pub height: usize,
    /// Explicit class styles; derived from the seed when empty.
    pub palette: Vec<ClassStyle>,
    pub cloud_octaves: usize,
    pub cloud_persistence: f64,
    /// Half-width of the noise band over which cloud alpha ramps 0 -> 1.
    pub cloud_ramp: f64,
    /// Cloud brightness band before texture noise.
    pub cloud_brightness: [f64; 2],
    pub cloud_texture: f64,
    pub coverage_target: f64,
    pub coverage_min: f64,
    pub coverage_max: f64,
    pub max_attempts: usize,
    pub zoom: u8,
    pub bbox: BoundingBox,
}

impl Default for SceneRecipe {
    fn default() -> Self {
        Self {
            seed: 0,
            classes: 6,
            k: 6,
            width: 64,
            height: 64,
            palette: Vec::new(),
            cloud_octaves: 4,
            cloud_persistence: 0.5,
            cloud_ramp: 0.05,
            cloud_brightness: [0.75, 0.95],
            cloud_texture: 0.1,
            coverage_target: 0.30,
            coverage_min: 0.10,
            coverage_max: 0.50,
            max_attempts: 50,
            zoom: 13,
            bbox: BoundingBox::DELAWARE,
        }
    }
}

/// Dark-to-mid land-cover colours loosely modelled on water, tree canopy,
/// low vegetation, barren land, impervious surfaces and roads.
pub fn default_palette(classes: usize, seed: u64) -> Vec<ClassStyle> {
    let base = [
        ([0.10, 0.18, 0.32], 0.04),
        ([0.12, 0.30, 0.12], 0.10),
        ([0.36, 0.48, 0.20], 0.10),
        ([0.52, 0.42, 0.30], 0.08),
        ([0.44, 0.40, 0.42], 0.06),
        ([0.24, 0.24, 0.27], 0.04),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xc0105]));
    (0..classes)
        .map(|c| match base.get(c) {
            Some(&(color, texture)) => ClassStyle { color, texture },
            None => ClassStyle {
                color: [
                    rng.gen_range(0.08..0.55),
                    rng.gen_range(0.08..0.55),
                    rng.gen_range(0.08..0.55),
                ],
                texture: rng.gen_range(0.03..0.1),
            },
        })
        .collect()
}

impl SceneRecipe {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.classes < 2 || self.classes > 256 {
            return fail(format!("classes must be in [2, 256], got {}", self.classes));
        }
        if self.k == 0 || self.width == 0 || self.height == 0 {
            return fail("k, width and height must be positive".into());
        }
        if !(0.0 < self.coverage_min
            && self.coverage_min <= self.coverage_target
            && self.coverage_target <= self.coverage_max
            && self.coverage_max < 1.0)
        {
            return fail(format!(
                "coverage must satisfy 0 < min <= target <= max < 1, got {} / {} / {}",
                self.coverage_min, self.coverage_target, self.coverage_max
            ));
        }
        if !self.palette.is_empty() && self.palette.len() != self.classes {
            return fail(format!("palette has {} styles for {} classes", self.palette.len(), self.classes));
        }
        if self.cloud_brightness[0] > self.cloud_brightness[1] || self.cloud_ramp <= 0.0 {
            return fail("invalid cloud brightness band or ramp".into());
        }
        if self.max_attempts == 0 {
            return fail("max_attempts must be positive".into());
        }
        Ok(())
    }

    pub fn styles(&self) -> Vec<ClassStyle> {
        if self.palette.is_empty() {
            default_palette(self.classes, self.seed)
        } else {
            self.palette.clone()
        }
    }
}

/// Cloud layer of one rendered image, kept for inspection.
#[derive(Clone, Debug)]
pub struct CloudLayer {
    pub alpha: Vec<f64>,
    /// Brightness drawn from the recipe band, before texture noise.
    pub brightness: f64,
    pub coverage: f64,
    pub attempts: usize,
}

#[derive(Clone, Debug)]
pub struct RenderedLocation {
    pub index: usize,
    pub labels: Vec<u8>,
    /// Interleaved 8-bit RGB per image.
    pub images: Vec<Vec<u8>>,
    /// `{0, 1}` per image.
    pub masks: Vec<Vec<u8>>,
    /// Clear-sky ground per image, interleaved RGB in `[0, 1]`.
    pub ground: Vec<Vec<f64>>,
    /// Cloud colour per image, interleaved RGB in `[0, 1]`.
    pub cloud_rgb: Vec<Vec<f64>>,
    pub clouds: Vec<CloudLayer>,
}

impl RenderedLocation {
    /// In-memory view matching what [`load_stack`](super::load_stack) reads back.
    pub fn to_stack(&self, width: usize, height: usize) -> ImageStack {
        ImageStack {
            location: format!("loc_{:04}", self.index),
            width,
            height,
            images: self.images.clone(),
            labels: Some(self.labels.clone()),
            masks: Some(self.masks.clone()),
        }
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn mask_fraction(noise: &[f64], threshold: f64, ramp: f64) -> f64 {
    let on = noise
        .iter()
        .filter(|&&n| smoothstep(threshold - ramp, threshold + ramp, n) > 0.5)
        .count();
    on as f64 / noise.len() as f64
}

/// Threshold whose mask fraction is closest to `target` (fraction decreases
/// monotonically in the threshold).
fn fit_threshold(noise: &[f64], target: f64, ramp: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (-ramp, 1.0 + ramp);
    let mut best = (lo, mask_fraction(noise, lo, ramp));
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        let frac = mask_fraction(noise, mid, ramp);
        if (frac - target).abs() < (best.1 - target).abs() {
            best = (mid, frac);
        }
        if frac > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best
}

/// Render one location. Returns `None` if some image cannot reach the
/// coverage band within the attempt budget.
pub fn render_location(recipe: &SceneRecipe, index: usize) -> Result<Option<RenderedLocation>> {
    recipe.validate()?;
    let (w, h) = (recipe.width, recipe.height);
    let px = w * h;
    let styles = recipe.styles();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(recipe.seed, &[index as u64]));

    // Land cover: argmax over one smooth field per class.
    let fields: Vec<Vec<f64>> = (0..recipe.classes)
        .map(|_| fbm(&mut rng, w, h, 3, 3, 0.5))
        .collect();
    let labels: Vec<u8> = (0..px)
        .map(|p| {
            let mut best = 0;
            for c in 1..recipe.classes {
                if fields[c][p] > fields[best][p] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    let texture = fbm(&mut rng, w, h, 8, 3, 0.5);

    let mut out = RenderedLocation {
        index,
        labels,
        images: Vec::new(),
        masks: Vec::new(),
        ground: Vec::new(),
        cloud_rgb: Vec::new(),
        clouds: Vec::new(),
    };
    for _ in 0..recipe.k {
        let gain = rng.gen_range(0.9..1.1);
        let mut ground = vec![0.0; 3 * px];
        for p in 0..px {
            let style = &styles[out.labels[p] as usize];
            let t = style.texture * (texture[p] - 0.5);
            for c in 0..3 {
                let jitter = rng.gen_range(-0.02..0.02);
                ground[3 * p + c] = ((style.color[c] + t) * gain + jitter).clamp(0.0, 1.0);
            }
        }

        let lo = (recipe.coverage_target - 0.2).max(recipe.coverage_min);
        let hi = (recipe.coverage_target + 0.2).min(recipe.coverage_max);
        let target = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let mut layer = None;
        for attempt in 1..=recipe.max_attempts {
            let noise = fbm(&mut rng, w, h, 3, recipe.cloud_octaves, recipe.cloud_persistence);
            let (threshold, coverage) = fit_threshold(&noise, target, recipe.cloud_ramp);
            if (recipe.coverage_min..=recipe.coverage_max).contains(&coverage) {
                let alpha = noise
                    .iter()
                    .map(|&n| smoothstep(threshold - recipe.cloud_ramp, threshold + recipe.cloud_ramp, n))
                    .collect();
                layer = Some((alpha, coverage, attempt));
                break;
            }
        }
        let Some((alpha, coverage, attempts)) = layer else {
            return Ok(None);
        };
        let alpha: Vec<f64> = alpha;
        let [b_lo, b_hi] = recipe.cloud_brightness;
        let brightness = if b_hi > b_lo { rng.gen_range(b_lo..b_hi) } else { b_lo };
        let cloud_tex = fbm(&mut rng, w, h, 6, 2, 0.5);
        let mut cloud_rgb = vec![0.0; 3 * px];
        let mut image = vec![0u8; 3 * px];
        for p in 0..px {
            let v = (brightness + recipe.cloud_texture * (cloud_tex[p] - 0.5)).clamp(0.0, 1.0);
            for c in 0..3 {
                cloud_rgb[3 * p + c] = v;
                let mixed = (1.0 - alpha[p]) * ground[3 * p + c] + alpha[p] * v;
                image[3 * p + c] = quantize(mixed);
            }
        }
        out.masks.push(alpha.iter().map(|&a| u8::from(a > 0.5)).collect());
        out.images.push(image);
        out.ground.push(ground);
        out.cloud_rgb.push(cloud_rgb);
        out.clouds.push(CloudLayer {
            alpha,
            brightness,
            coverage,
            attempts,
        });
    }
    Ok(Some(out))
}

/// Render `n_locations` stacks into `out_dir` and write the manifest.
pub fn generate_dataset(
    recipe: &SceneRecipe,
    n_locations: usize,
    out_dir: &Path,
    threads: usize,
) -> Result<DatasetManifest> {
    recipe.validate()?;
    if n_locations == 0 {
        return Err(Error::Config("n_locations must be positive".into()));
    }
    let tiles = tiles_in_bbox(&recipe.bbox, recipe.zoom)?;
    if n_locations > tiles.len() {
        return Err(Error::Config(format!(
            "bounding box holds {} tiles at zoom {}, {} locations requested",
            tiles.len(),
            recipe.zoom,
            n_locations
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::ThreadPool(e.to_string()))?;
    let rendered: Vec<Result<Option<LocationEntry>>> = pool.install(|| {
        (0..n_locations)
            .into_par_iter()
            .map(|i| {
                let Some(loc) = render_location(recipe, i)? else {
                    warn!("location {i}: cloud coverage unattainable, skipped");
                    return Ok(None);
                };
                Ok(Some(write_location(&loc, recipe, out_dir, tiles[i])?))
            })
            .collect()
    });

    let mut manifest = DatasetManifest::new(recipe.width, recipe.height, recipe.classes);
    manifest.recipe = Some(recipe.clone());
    for r in rendered {
        if let Some(entry) = r? {
            manifest.locations.push(entry);
        }
    }
    if manifest.locations.is_empty() {
        return Err(Error::Config("no location reached the coverage constraint".into()));
    }
    manifest.save(out_dir)?;
    Ok(manifest)
}

fn write_location(
    loc: &RenderedLocation,
    recipe: &SceneRecipe,
    out_dir: &Path,
    tile: super::TileCoord,
) -> Result<LocationEntry> {
    let id = format!("loc_{:04}", loc.index);
    let dir = out_dir.join(&id);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let (width, height) = (recipe.width, recipe.height);
    let grey = |data: Vec<u8>| Raster {
        width,
        height,
        channels: 1,
        data,
    };
    netpbm::write(&dir.join("label.pgm"), &grey(loc.labels.clone()))?;
    let mut images = Vec::with_capacity(loc.images.len());
    for (j, (image, mask)) in loc.images.iter().zip(&loc.masks).enumerate() {
        let img_name = format!("img_{j}.ppm");
        let mask_name = format!("mask_{j}.pgm");
        netpbm::write(
            &dir.join(&img_name),
            &Raster {
                width,
                height,
                channels: 3,
                data: image.clone(),
            },
        )?;
        netpbm::write(&dir.join(&mask_name), &grey(mask.iter().map(|&m| m * 255).collect()))?;
        images.push(ImageEntry {
            image: format!("{id}/{img_name}"),
            mask: Some(format!("{id}/{mask_name}")),
            coverage: Some(loc.clouds[j].coverage),
        });
    }
    Ok(LocationEntry {
        id: id.clone(),
        index: loc.index,
        tile: Some(tile),
        label: Some(format!("{id}/label.pgm")),
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SceneRecipe {
        SceneRecipe {
            seed: 9,
            k: 3,
            width: 32,
            height: 24,
            ..Default::default()
        }
    }

    #[test]
    fn coverage_stays_in_band() {
        let r = small();
        for i in 0..6 {
            let loc = render_location(&r, i).unwrap().unwrap();
            for (m, c) in loc.masks.iter().zip(&loc.clouds) {
                let frac = m.iter().filter(|&&v| v == 1).count() as f64 / m.len() as f64;
                assert_eq!(frac, c.coverage);
                assert!((0.10..=0.50).contains(&frac), "{frac}");
            }
        }
    }

    #[test]
    fn cloud_pixels_use_the_cloud_band() {
        let r = small();
        let loc = render_location(&r, 2).unwrap().unwrap();
        for j in 0..r.k {
            let layer = &loc.clouds[j];
            assert!(layer.brightness >= 0.7);
            for p in 0..r.width * r.height {
                assert_eq!(loc.masks[j][p], u8::from(layer.alpha[p] > 0.5));
                for c in 0..3 {
                    let a = layer.alpha[p];
                    let expect = (1.0 - a) * loc.ground[j][3 * p + c] + a * loc.cloud_rgb[j][3 * p + c];
                    assert_eq!(loc.images[j][3 * p + c], quantize(expect));
                }
                if loc.masks[j][p] == 1 {
                    // composite lies at least halfway toward a >= 0.7 - texture cloud
                    let v = loc.images[j][3 * p] as f64 / 255.0;
                    assert!(v >= 0.5 * (layer.brightness - 0.5 * r.cloud_texture) - 1.0 / 255.0);
                }
            }
        }
    }

    #[test]
    fn labels_stay_in_class_range() {
        let r = SceneRecipe {
            classes: 9,
            ..small()
        };
        let loc = render_location(&r, 0).unwrap().unwrap();
        assert!(loc.labels.iter().all(|&l| (l as usize) < 9));
        assert!(loc.labels.iter().any(|&l| l > 0));
    }

    #[test]
    fn invalid_recipes_are_rejected() {
        assert!(SceneRecipe { coverage_min: 0.6, ..small() }.validate().is_err());
        assert!(SceneRecipe { classes: 1, ..small() }.validate().is_err());
        assert!(SceneRecipe { k: 0, ..small() }.validate().is_err());
    }

    #[test]
    fn unattainable_coverage_skips_location() {
        // A 1x1 image can only be 0% or 100% cloud.
        let r = SceneRecipe {
            width: 1,
            height: 1,
            max_attempts: 3,
            ..small()
        };
        assert!(render_location(&r, 0).unwrap().is_none());
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            generate_dataset(&r, 2, dir.path(), 1),
            Err(Error::Config(_))
        ));
    }
}
