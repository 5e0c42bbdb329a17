//! Bicubic resampling to arbitrary decimal factors.
//!
//! Follows the `imresize` convention used by super-resolution benchmarks: a
//! cubic kernel with `a = -0.5`, half-pixel-centred coordinate mapping and, on
//! downscale, a kernel stretched by `1/scale` so the filter also antialiases.
//! Taps falling outside the image are clamped to the edge and weights are
//! renormalized per output sample.

use crate::error::{invalid, Error, Result};
use crate::imaging::{crop, ImagePlanar};

/// Sharpness of the cubic convolution kernel.
pub const CUBIC_A: f64 = -0.5;

/// Cubic convolution kernel evaluated at offset `x` (source pixels).
pub fn kernel_weight(x: f64) -> f64 {
    let a = CUBIC_A;
    let ax = x.abs();
    if ax <= 1.0 {
        ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0
    } else if ax < 2.0 {
        ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResizeSpec {
    pub scale: f64,
    /// Stretch the kernel on downscale. Ignored when `scale >= 1`.
    pub antialias: bool,
}

impl ResizeSpec {
    pub fn new(scale: f64) -> Self {
        Self {
            scale,
            antialias: true,
        }
    }

    pub fn output_dim(&self, input: usize) -> usize {
        scaled_dim(input, self.scale)
    }
}

const SNAP: f64 = 1e-9;

/// `ceil(x)`, except that values within rounding noise of an integer snap to it.
pub(crate) fn ceil_snap(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= SNAP * x.abs().max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

pub(crate) fn floor_snap(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= SNAP * x.abs().max(1.0) {
        r as usize
    } else {
        x.floor() as usize
    }
}

/// Output size along one axis: `ceil(input * scale)`.
pub fn scaled_dim(input: usize, scale: f64) -> usize {
    ceil_snap(input as f64 * scale)
}

/// Per-output tap lists for one axis. Every output sample has the same tap
/// count; indices are already clamped into the source range.
#[derive(Debug, Clone)]
pub struct AxisWeights {
    pub taps: usize,
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl AxisWeights {
    pub fn new(in_len: usize, out_len: usize, scale: f64, antialias: bool) -> Self {
        let kscale = if antialias && scale < 1.0 { scale } else { 1.0 };
        let width = 4.0 / kscale;
        let taps = width.ceil() as usize + 2;
        let mut indices = Vec::with_capacity(out_len * taps);
        let mut weights = Vec::with_capacity(out_len * taps);
        let last = in_len as i64 - 1;
        for d in 0..out_len {
            let u = (d as f64 + 0.5) / scale - 0.5;
            let left = (u - width / 2.0).floor() as i64;
            let start = weights.len();
            for j in 0..taps as i64 {
                let idx = left + j;
                weights.push(kscale * kernel_weight(kscale * (u - idx as f64)));
                indices.push(idx.clamp(0, last) as usize);
            }
            let sum: f64 = weights[start..].iter().sum();
            for w in &mut weights[start..] {
                *w /= sum;
            }
        }
        Self {
            taps,
            indices,
            weights,
        }
    }

    #[inline]
    pub fn row(&self, d: usize) -> (&[usize], &[f64]) {
        let r = d * self.taps..(d + 1) * self.taps;
        (&self.indices[r.clone()], &self.weights[r])
    }
}

/// Resizes to `ceil(dim * scale)` on both axes.
pub fn resize(img: &ImagePlanar, spec: ResizeSpec) -> Result<ImagePlanar> {
    if !(spec.scale > 0.0) || !spec.scale.is_finite() {
        return Err(invalid!("resize scale must be positive, got {}", spec.scale));
    }
    let out_h = spec.output_dim(img.height());
    let out_w = spec.output_dim(img.width());
    resize_to(img, spec, out_h, out_w)
}

/// Resizes with the coordinate mapping of `spec.scale` but an explicit output
/// size. Used where a size rule other than `ceil(dim * scale)` applies.
pub fn resize_to(
    img: &ImagePlanar,
    spec: ResizeSpec,
    out_h: usize,
    out_w: usize,
) -> Result<ImagePlanar> {
    if !(spec.scale > 0.0) || !spec.scale.is_finite() {
        return Err(invalid!("resize scale must be positive, got {}", spec.scale));
    }
    if out_h == 0 || out_w == 0 {
        return Err(invalid!(
            "resize of {}x{} by {} gives an empty image",
            img.width(),
            img.height(),
            spec.scale
        ));
    }
    if spec.scale == 1.0 && out_h == img.height() && out_w == img.width() {
        return Ok(img.clone());
    }
    let (in_h, in_w) = img.dims();
    let wx = AxisWeights::new(in_w, out_w, spec.scale, spec.antialias);
    let wy = AxisWeights::new(in_h, out_h, spec.scale, spec.antialias);

    let channels = img.channels();
    let mut out = vec![0f32; channels * out_h * out_w];
    let mut tmp = vec![0f64; in_h * out_w];
    for c in 0..channels {
        let plane = img.plane(c);
        // horizontal pass
        for y in 0..in_h {
            let src = &plane[y * in_w..(y + 1) * in_w];
            let dst = &mut tmp[y * out_w..(y + 1) * out_w];
            for (x, d) in dst.iter_mut().enumerate() {
                let (idx, w) = wx.row(x);
                *d = idx.iter().zip(w).map(|(&i, &w)| w * src[i] as f64).sum();
            }
        }
        // vertical pass
        let dst = &mut out[c * out_h * out_w..(c + 1) * out_h * out_w];
        for y in 0..out_h {
            let (idx, w) = wy.row(y);
            let row = &mut dst[y * out_w..(y + 1) * out_w];
            for (x, o) in row.iter_mut().enumerate() {
                let mut acc = 0f64;
                for (&i, &w) in idx.iter().zip(w) {
                    acc += w * tmp[i * out_w + x];
                }
                *o = acc as f32;
            }
        }
    }
    ImagePlanar::new(channels, out_h, out_w, out)
}

/// Dimensions `(lr_h, lr_w, ref_h, ref_w)` produced by [`degrade_pair`].
pub fn degrade_dims(hr_h: usize, hr_w: usize, scale: f64) -> Result<(usize, usize, usize, usize)> {
    if !(scale > 1.0) || !scale.is_finite() {
        return Err(invalid!("degradation scale must exceed 1, got {scale}"));
    }
    let lr_h = floor_snap(hr_h as f64 / scale);
    let lr_w = floor_snap(hr_w as f64 / scale);
    if lr_h == 0 || lr_w == 0 {
        return Err(invalid!(
            "{hr_w}x{hr_h} image is too small for scale {scale}"
        ));
    }
    let ref_h = scaled_dim(lr_h, scale).min(hr_h);
    let ref_w = scaled_dim(lr_w, scale).min(hr_w);
    Ok((lr_h, lr_w, ref_h, ref_w))
}

/// Builds a benchmark pair: the low-resolution image for `scale` and the
/// top-left crop of `hr` that an upscale of it by `scale` must match.
pub fn degrade_pair(hr: &ImagePlanar, scale: f64) -> Result<(ImagePlanar, ImagePlanar)> {
    let (lr_h, lr_w, ref_h, ref_w) = degrade_dims(hr.height(), hr.width(), scale)?;
    let hr_ref = crop(hr, 0, 0, ref_w, ref_h)?;
    let lr = resize_to(&hr_ref, ResizeSpec::new(1.0 / scale), lr_h, lr_w)?;
    Ok((lr, hr_ref))
}

/// Upscales by `scale` and crops or checks against explicit target dims.
pub fn upscale_to(img: &ImagePlanar, scale: f64, out_h: usize, out_w: usize) -> Result<ImagePlanar> {
    let spec = ResizeSpec::new(scale);
    if spec.output_dim(img.height()) < out_h || spec.output_dim(img.width()) < out_w {
        return Err(Error::ShapeMismatch(format!(
            "upscale of {}x{} by {scale} cannot cover {out_w}x{out_h}",
            img.width(),
            img.height()
        )));
    }
    resize_to(img, spec, out_h, out_w)
}
