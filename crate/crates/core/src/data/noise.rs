//! Seeded multi-octave value noise.

use rand::Rng;

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Hermite smoothstep between two edges, clamped to `[0, 1]`.
pub fn smoothstep(edge0: f64, edge1: f64, x: f64) -> f64 {
    smooth(((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0))
}

/// Fractal value noise on a `width x height` grid, normalised to `[0, 1]`.
///
/// Octave `o` uses a lattice of `base_cells * 2^o` cells per axis and weight
/// `persistence^o`.
pub fn fbm(
    rng: &mut impl Rng,
    width: usize,
    height: usize,
    base_cells: usize,
    octaves: usize,
    persistence: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; width * height];
    let mut amplitude = 1.0;
    let mut total = 0.0;
    for o in 0..octaves {
        let cells = base_cells.max(1) << o;
        let stride = cells + 1;
        let lattice: Vec<f64> = (0..stride * stride).map(|_| rng.gen::<f64>()).collect();
        for y in 0..height {
            let fy = (y as f64 + 0.5) / height as f64 * cells as f64;
            let (iy, ty) = (fy.floor() as usize, smooth(fy.fract()));
            let iy = iy.min(cells - 1);
            for x in 0..width {
                let fx = (x as f64 + 0.5) / width as f64 * cells as f64;
                let (ix, tx) = (fx.floor() as usize, smooth(fx.fract()));
                let ix = ix.min(cells - 1);
                let v00 = lattice[iy * stride + ix];
                let v01 = lattice[iy * stride + ix + 1];
                let v10 = lattice[(iy + 1) * stride + ix];
                let v11 = lattice[(iy + 1) * stride + ix + 1];
                let top = v00 + (v01 - v00) * tx;
                let bottom = v10 + (v11 - v10) * tx;
                out[y * width + x] += amplitude * (top + (bottom - top) * ty);
            }
        }
        total += amplitude;
        amplitude *= persistence;
    }
    if total > 0.0 {
        for v in &mut out {
            *v /= total;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bounded_and_seeded() {
        let a = fbm(&mut ChaCha8Rng::seed_from_u64(1), 40, 30, 4, 4, 0.5);
        let b = fbm(&mut ChaCha8Rng::seed_from_u64(1), 40, 30, 4, 4, 0.5);
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let spread = a.iter().cloned().fold(f64::MIN, f64::max) - a.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread > 0.2);
    }

    #[test]
    fn smoothstep_midpoint() {
        assert_eq!(smoothstep(0.0, 1.0, 0.5), 0.5);
        assert_eq!(smoothstep(0.2, 0.4, 0.0), 0.0);
        assert_eq!(smoothstep(0.2, 0.4, 1.0), 1.0);
    }
}
