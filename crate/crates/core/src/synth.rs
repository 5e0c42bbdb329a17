//! Seeded procedural test scenes: gradients, antialiased shapes, stripes and
//! checkers. They give the training loop and the tests edge-rich content
//! without shipping image files.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::imaging::{save_image, ImagePlanar};

// Coverage is estimated on an SxS grid of sub-samples per pixel.
const SUPERSAMPLE: usize = 4;

enum Shape {
    Disc { cx: f64, cy: f64, r: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64, angle: f64 },
    Stripes { period: f64, angle: f64, duty: f64 },
    Checker { size: f64, angle: f64 },
    Ring { cx: f64, cy: f64, r: f64, width: f64 },
}

impl Shape {
    fn inside(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Shape::Ring { cx, cy, r, width } => {
                let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                (d - r).abs() <= width / 2.0
            }
            Shape::Rect {
                x0,
                y0,
                x1,
                y1,
                angle,
            } => {
                let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
                let (s, c) = angle.sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
                u.abs() <= (x1 - x0) / 2.0 && v.abs() <= (y1 - y0) / 2.0
            }
            Shape::Stripes {
                period,
                angle,
                duty,
            } => {
                let (s, c) = angle.sin_cos();
                (c * x + s * y).rem_euclid(period) < duty * period
            }
            Shape::Checker { size, angle } => {
                let (s, c) = angle.sin_cos();
                let u = ((c * x + s * y) / size).floor() as i64;
                let v = ((-s * x + c * y) / size).floor() as i64;
                (u + v).rem_euclid(2) == 0
            }
        }
    }
}

fn color(rng: &mut impl Rng) -> [f64; 3] {
    [rng.gen(), rng.gen(), rng.gen()]
}

/// An `h x w` RGB scene fully determined by `seed`.
pub fn scene(seed: u64, h: usize, w: usize) -> Result<ImagePlanar> {
    if h == 0 || w == 0 {
        return Err(invalid!("empty scene size {h}x{w}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hf, wf) = (h as f64, w as f64);
    let size = hf.min(wf);

    // linear background gradient between two colors
    let (c0, c1) = (color(&mut rng), color(&mut rng));
    let ga: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (gs, gc) = ga.sin_cos();
    let mut img = ImagePlanar::from_fn(3, h, w, |ch, y, x| {
        let t = ((gc * (x as f64 / wf - 0.5) + gs * (y as f64 / hf - 0.5)) + 0.5).clamp(0.0, 1.0);
        ((1.0 - t) * c0[ch] + t * c1[ch]) as f32
    })?;

    let count = rng.gen_range(5..10);
    for _ in 0..count {
        let shape = match rng.gen_range(0..5) {
            0 => Shape::Disc {
                cx: rng.gen_range(0.0..wf),
                cy: rng.gen_range(0.0..hf),
                r: rng.gen_range(0.05..0.25) * size,
            },
            1 => {
                let (x0, y0) = (rng.gen_range(-0.1..0.8) * wf, rng.gen_range(-0.1..0.8) * hf);
                Shape::Rect {
                    x0,
                    y0,
                    x1: x0 + rng.gen_range(0.1..0.5) * wf,
                    y1: y0 + rng.gen_range(0.1..0.5) * hf,
                    angle: rng.gen_range(-0.6..0.6),
                }
            }
            2 => Shape::Stripes {
                period: rng.gen_range(3.0..14.0),
                angle: rng.gen_range(0.0..std::f64::consts::PI),
                duty: rng.gen_range(0.3..0.7),
            },
            3 => Shape::Checker {
                size: rng.gen_range(3.0..12.0),
                angle: rng.gen_range(0.0..std::f64::consts::FRAC_PI_2),
            },
            _ => Shape::Ring {
                cx: rng.gen_range(0.0..wf),
                cy: rng.gen_range(0.0..hf),
                r: rng.gen_range(0.1..0.35) * size,
                width: rng.gen_range(1.5..6.0),
            },
        };
        // textures are confined to a window so scenes keep flat regions
        let window = match shape {
            Shape::Stripes { .. } | Shape::Checker { .. } => {
                let (x0, y0) = (rng.gen_range(0.0..0.6) * wf, rng.gen_range(0.0..0.6) * hf);
                Some((x0, y0, x0 + rng.gen_range(0.2..0.4) * wf, y0 + rng.gen_range(0.2..0.4) * hf))
            }
            _ => None,
        };
        let col = color(&mut rng);
        let alpha: f64 = rng.gen_range(0.6..1.0);
        paint(&mut img, &shape, window, col, alpha);
    }
    Ok(img)
}

fn paint(
    img: &mut ImagePlanar,
    shape: &Shape,
    window: Option<(f64, f64, f64, f64)>,
    col: [f64; 3],
    alpha: f64,
) {
    let (h, w) = img.dims();
    let n = SUPERSAMPLE;
    for y in 0..h {
        for x in 0..w {
            let mut hits = 0;
            for sy in 0..n {
                for sx in 0..n {
                    let px = x as f64 + (sx as f64 + 0.5) / n as f64;
                    let py = y as f64 + (sy as f64 + 0.5) / n as f64;
                    let in_window = window
                        .map(|(x0, y0, x1, y1)| px >= x0 && px < x1 && py >= y0 && py < y1)
                        .unwrap_or(true);
                    if in_window && shape.inside(px, py) {
                        hits += 1;
                    }
                }
            }
            if hits == 0 {
                continue;
            }
            let a = alpha * hits as f64 / (n * n) as f64;
            for (c, &v) in col.iter().enumerate() {
                let old = img.get(c, y, x) as f64;
                img.set(c, y, x, ((1.0 - a) * old + a * v) as f32);
            }
        }
    }
}

/// Writes `count` scenes as `scene_000.png`, ... into `dir`. Scene `i` uses
/// seed `seed + i`.
pub fn write_scenes(
    dir: impl AsRef<Path>,
    count: usize,
    h: usize,
    w: usize,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    (0..count)
        .map(|i| {
            let path = dir.join(format!("scene_{i:03}.png"));
            save_image(&scene(seed + i as u64, h, w)?, &path)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = scene(7, 40, 52).unwrap();
        assert_eq!(a, scene(7, 40, 52).unwrap());
        assert_ne!(a, scene(8, 40, 52).unwrap());
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(scene(1, 0, 4).is_err());
    }

    #[test]
    fn scenes_have_edges() {
        let a = scene(3, 64, 64).unwrap();
        let grad: f32 = (0..64)
            .flat_map(|y| (1..64).map(move |x| (y, x)))
            .map(|(y, x)| (a.get(1, y, x) - a.get(1, y, x - 1)).abs())
            .sum();
        assert!(grad / (64.0 * 63.0) > 0.01);
    }
}
