//! PSNR and SSIM on `[0, 1]` images.

use crate::error::{shape_err, Result};
use crate::imaging::{rgb_to_luma, shave_border, ImagePlanar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Luma of the 8-bit studio-swing conversion, the usual SR convention.
    Luma,
    Rgb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shave {
    /// `ceil(scale)` pixels.
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalProtocol {
    pub channel: Channel,
    pub shave: Shave,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self::luma_shave()
    }
}

impl EvalProtocol {
    pub fn luma_shave() -> Self {
        Self {
            channel: Channel::Luma,
            shave: Shave::Auto,
        }
    }

    pub fn rgb_full() -> Self {
        Self {
            channel: Channel::Rgb,
            shave: Shave::Fixed(0),
        }
    }

    pub fn shave_for(&self, scale: f64) -> usize {
        match self.shave {
            Shave::Auto => (scale - 1e-9).ceil().max(0.0) as usize,
            Shave::Fixed(n) => n,
        }
    }

    /// Clamps to `[0, 1]`, selects the metric channel(s) and shaves the border.
    pub fn prepare(&self, img: &ImagePlanar, scale: f64) -> Result<ImagePlanar> {
        let img = img.clamped();
        let img = match self.channel {
            Channel::Luma if img.channels() == 3 => rgb_to_luma(&img)?,
            _ => img,
        };
        shave_border(&img, self.shave_for(scale))
    }
}

/// Mean squared error over all samples, accumulated in `f64`.
pub fn mse(a: &ImagePlanar, b: &ImagePlanar) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(shape_err!(
            "cannot compare {}x{}x{} with {}x{}x{}",
            a.channels(),
            a.height(),
            a.width(),
            b.channels(),
            b.height(),
            b.width()
        ));
    }
    if a.data().is_empty() {
        return Err(shape_err!("cannot compare empty images"));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// PSNR for peak 1 on already prepared images; `+inf` when they are equal.
pub fn psnr_prepared(a: &ImagePlanar, b: &ImagePlanar) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / m).log10())
}

pub fn psnr(a: &ImagePlanar, b: &ImagePlanar, protocol: &EvalProtocol, scale: f64) -> Result<f64> {
    psnr_prepared(&protocol.prepare(a, scale)?, &protocol.prepare(b, scale)?)
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - mid;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Separable Gaussian filter with valid output.
fn filter_valid(plane: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let k = SSIM_WINDOW;
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = row[x..x + k].iter().zip(g).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| tmp[(y + i) * ow + x] * g[i]).sum();
        }
    }
    out
}

/// Mean SSIM over one channel pair.
fn ssim_plane(a: &[f32], b: &[f32], h: usize, w: usize) -> f64 {
    let g = gaussian_window();
    let a: Vec<f64> = a.iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = b.iter().map(|&v| v as f64).collect();
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter_valid(&a, h, w, &g);
    let mu_b = filter_valid(&b, h, w, &g);
    let aa = filter_valid(&prod(&a, &a), h, w, &g);
    let bb = filter_valid(&prod(&b, &b), h, w, &g);
    let ab = filter_valid(&prod(&a, &b), h, w, &g);
    let n = mu_a.len();
    let mut sum = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        sum += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
    }
    sum / n as f64
}

/// SSIM on already prepared images, averaged over channels.
pub fn ssim_prepared(a: &ImagePlanar, b: &ImagePlanar) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(shape_err!("SSIM of differently sized images"));
    }
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(shape_err!(
            "{w}x{h} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        ));
    }
    let c = a.channels();
    Ok((0..c)
        .map(|ch| ssim_plane(a.plane(ch), b.plane(ch), h, w))
        .sum::<f64>()
        / c as f64)
}

pub fn ssim(a: &ImagePlanar, b: &ImagePlanar, protocol: &EvalProtocol, scale: f64) -> Result<f64> {
    ssim_prepared(&protocol.prepare(a, scale)?, &protocol.prepare(b, scale)?)
}
