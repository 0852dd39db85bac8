//! Synthetic multi-temporal scenes, tile geometry, and dataset file I/O.

mod manifest;
pub mod netpbm;
pub mod noise;
mod stack;
mod synth;
mod tile;

pub use manifest::{DatasetManifest, ImageEntry, LocationEntry, MANIFEST_FILE};
pub use stack::{batch_images, load_dataset, load_stack, ImageStack};
pub use synth::{
    default_palette, generate_dataset, render_location, ClassStyle, CloudLayer, RenderedLocation,
    SceneRecipe,
};
pub use tile::{lonlat_to_tile, tiles_in_bbox, BoundingBox, TileCoord, MAX_LATITUDE};

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent seed from a base seed and a path of indices.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(base), |acc, &p| mix64(acc ^ mix64(p)))
}
