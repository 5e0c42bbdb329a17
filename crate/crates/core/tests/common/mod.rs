//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use asdn::imaging::ImagePlanar;
use rand::Rng;

/// Keys cubic, a = -0.5, written out from its piecewise definition.
pub fn keys(t: f64) -> f64 {
    let t = t.abs();
    if t < 1.0 {
        1.5 * t * t * t - 2.5 * t * t + 1.0
    } else if t < 2.0 {
        -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0
    } else {
        0.0
    }
}

/// Brute-force 2-D resize: every output pixel sums the full 2-D kernel
/// footprint with edge-clamped sources and one joint normalization.
pub fn oracle_resize(img: &ImagePlanar, scale: f64, out_h: usize, out_w: usize) -> Vec<f64> {
    let (c, h, w) = (img.channels(), img.height(), img.width());
    let k = if scale < 1.0 { scale } else { 1.0 };
    let support = 2.0 / k;
    let mut out = vec![0.0; c * out_h * out_w];
    for y in 0..out_h {
        let uy = (y as f64 + 0.5) / scale - 0.5;
        let (y0, y1) = ((uy - support).floor() as i64, (uy + support).ceil() as i64);
        for x in 0..out_w {
            let ux = (x as f64 + 0.5) / scale - 0.5;
            let (x0, x1) = ((ux - support).floor() as i64, (ux + support).ceil() as i64);
            let mut total = 0.0;
            let mut acc = vec![0.0; c];
            for i in y0..=y1 {
                for j in x0..=x1 {
                    let wgt = keys(k * (uy - i as f64)) * keys(k * (ux - j as f64));
                    if wgt == 0.0 {
                        continue;
                    }
                    total += wgt;
                    let si = i.clamp(0, h as i64 - 1) as usize;
                    let sj = j.clamp(0, w as i64 - 1) as usize;
                    for (ch, a) in acc.iter_mut().enumerate() {
                        *a += wgt * img.get(ch, si, sj) as f64;
                    }
                }
            }
            for (ch, a) in acc.iter().enumerate() {
                out[(ch * out_h + y) * out_w + x] = a / total;
            }
        }
    }
    out
}

pub fn random_image(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> ImagePlanar {
    let data = (0..c * h * w).map(|_| rng.gen::<f32>()).collect();
    ImagePlanar::new(c, h, w, data).unwrap()
}

/// Largest absolute per-pixel difference of the library resize against the
/// oracle for a random case, downscaling or upscaling.
pub fn resize_case_error(rng: &mut impl Rng, down: bool) -> (String, f64) {
    let h = rng.gen_range(3..24);
    let w = rng.gen_range(3..24);
    let scale = if down {
        rng.gen_range(0.3..0.99)
    } else {
        rng.gen_range(1.01..4.0)
    };
    let scale = (scale * 1000.0f64).round() / 1000.0;
    let img = random_image(rng, 3, h, w);
    let out_h = ((h as f64 * scale).ceil() as usize).max(1);
    let out_w = ((w as f64 * scale).ceil() as usize).max(1);
    let ours = asdn::resample::resize_to(&img, asdn::resample::ResizeSpec::new(scale), out_h, out_w).unwrap();
    let want = oracle_resize(&img, scale, out_h, out_w);
    let err = ours
        .data()
        .iter()
        .zip(&want)
        .map(|(&a, &b)| (a as f64 - b).abs())
        .fold(0.0, f64::max);
    (format!("{w}x{h} by {scale}"), err)
}
