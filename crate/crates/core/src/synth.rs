//! Seeded synthetic light fields for tests and demonstrations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::lightfield::{Dims, LightField4D};

/// Every sample equal to `value`.
pub fn constant(dims: Dims, planes: usize, bit_depth: u8, value: u16) -> Result<LightField4D> {
    LightField4D::new(dims, planes, bit_depth, vec![value; planes * dims.pixels()])
}

/// Independent uniform samples over the full range.
pub fn noise(dims: Dims, planes: usize, bit_depth: u8, seed: u64) -> Result<LightField4D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max = (1u32 << bit_depth) - 1;
    let samples = (0..planes * dims.pixels()).map(|_| rng.gen_range(0..=max) as u16).collect();
    LightField4D::new(dims, planes, bit_depth, samples)
}

/// Smooth random texture: a few random sinusoids plus blurred noise, in `[0, 1]`.
fn texture(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.gen_range(0.02..0.35),
                rng.gen_range(0.02..0.35),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.3..1.0),
            )
        })
        .collect();
    let raw: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut img = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            let mut n = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (yy, xx) = (y as i64 + dy, x as i64 + dx);
                    if (0..h as i64).contains(&yy) && (0..w as i64).contains(&xx) {
                        acc += raw[yy as usize * w + xx as usize];
                        n += 1.0;
                    }
                }
            }
            let s: f64 = waves
                .iter()
                .map(|&(fy, fx, ph, a)| a * (fy * y as f64 + fx * x as f64 + ph).sin())
                .sum();
            img[y * w + x] = s + 1.5 * acc / n;
        }
    }
    let lo = img.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = img.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    img.iter().map(|&x| (x - lo) / (hi - lo).max(1e-9)).collect()
}

/// Views of one textured scene: SAI `(t, s)` is the base image shifted by
/// `disparity · (t − T/2, s − S/2)` pixels, plus uniform noise of amplitude
/// `noise_amplitude`. Colour planes use independent textures.
pub fn shifted(
    dims: Dims,
    planes: usize,
    bit_depth: u8,
    disparity: usize,
    noise_amplitude: u16,
    seed: u64,
) -> Result<LightField4D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max = (1u32 << bit_depth) - 1;
    let margin_v = disparity * dims.t;
    let margin_u = disparity * dims.s;
    let (h, w) = (dims.v + 2 * margin_v, dims.u + 2 * margin_u);
    let n = dims.pixels();
    let mut samples = vec![0u16; planes * n];
    for p in 0..planes {
        let base = texture(&mut rng, h, w);
        for i in 0..n {
            let (t, s, v, u) = dims.coords(i);
            let y = (v + margin_v) as i64 + disparity as i64 * (t as i64 - dims.t as i64 / 2);
            let x = (u + margin_u) as i64 + disparity as i64 * (s as i64 - dims.s as i64 / 2);
            let value = base[y as usize * w + x as usize] * (max as f64 * 0.9) + max as f64 * 0.05;
            let jitter = if noise_amplitude > 0 {
                rng.gen_range(-(noise_amplitude as i64)..=noise_amplitude as i64)
            } else {
                0
            };
            samples[p * n + i] = (value.round() as i64 + jitter).clamp(0, max as i64) as u16;
        }
    }
    LightField4D::new(dims, planes, bit_depth, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_seeded() {
        let d = Dims::new(3, 3, 16, 16);
        assert_eq!(noise(d, 1, 8, 4).unwrap(), noise(d, 1, 8, 4).unwrap());
        assert_ne!(noise(d, 1, 8, 4).unwrap(), noise(d, 1, 8, 5).unwrap());
        assert_eq!(shifted(d, 3, 10, 1, 1, 2).unwrap(), shifted(d, 3, 10, 1, 1, 2).unwrap());
    }

    #[test]
    fn shifted_views_are_translates() {
        let d = Dims::new(1, 3, 8, 12);
        let lf = shifted(d, 1, 8, 1, 0, 11).unwrap();
        for v in 0..8 {
            for u in 0..11 {
                assert_eq!(lf.get(0, 0, 1, v, u + 1), lf.get(0, 0, 2, v, u));
            }
        }
    }
}
