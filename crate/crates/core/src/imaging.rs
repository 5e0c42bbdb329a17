//! Planar float images, PNG I/O, color conversion, cropping and patch augmentation.
//!
//! All images are `f32` planar (channel-major) with a nominal range of `[0, 1]`.
//! Values may leave that range inside the pipeline; they are clamped only when
//! saving and before computing metrics.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;

use rand::Rng;

use crate::error::{invalid, Error, Result};

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

/// A float image with planar channel layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlanar {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ImagePlanar {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(invalid!(
                "image dimensions must be positive, got {channels}x{height}x{width}"
            ));
        }
        if data.len() != channels * height * width {
            return Err(invalid!(
                "data length {} does not match {channels}x{height}x{width}",
                data.len()
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(
            channels,
            height,
            width,
            vec![value; channels * height * width],
        )
    }

    /// Builds an image by evaluating `f(channel, y, x)` at every sample.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn clamped(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImagePlanar> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut sig = [0u8; 8];
    let n = read_up_to(&mut file, &mut sig).map_err(|e| Error::io(path, e))?;
    if n < sig.len() || sig != PNG_SIGNATURE {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "not a PNG file".into(),
        });
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |reason: String| Error::CorruptImage {
        path: path.to_path_buf(),
        reason,
    };

    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| corrupt(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| corrupt("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| corrupt(e.to_string()))?;
    let (height, width) = (info.height as usize, info.width as usize);

    let src_channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: "unexpanded palette image".into(),
            })
        }
    };
    let (bytes_per_sample, max) = match info.bit_depth {
        png::BitDepth::Eight => (1, 255.0f32),
        png::BitDepth::Sixteen => (2, 65535.0f32),
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("bit depth {other:?}"),
            })
        }
    };
    let stride = info.line_size;
    let sample = |y: usize, x: usize, c: usize| -> f32 {
        let off = y * stride + (x * src_channels + c) * bytes_per_sample;
        let v = if bytes_per_sample == 1 {
            buf[off] as u32
        } else {
            u16::from_be_bytes([buf[off], buf[off + 1]]) as u32
        };
        v as f32 / max
    };

    let color = src_channels >= 3;
    ImagePlanar::from_fn(3, height, width, |c, y, x| {
        sample(y, x, if color { c } else { 0 })
    })
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

/// Quantizes a float sample to a byte: clamp to `[0, 1]`, then round half up.
#[inline]
pub fn quantize_u8(v: f32) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0 + 0.5).floor() as u8
}

pub fn save_image(img: &ImagePlanar, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let color = match img.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => return Err(invalid!("cannot save a {c}-channel image as PNG")),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        img.width as u32,
        img.height as u32,
    );
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    };
    let mut writer = encoder.write_header().map_err(to_io)?;

    let mut bytes = Vec::with_capacity(img.data.len());
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..img.channels {
                bytes.push(quantize_u8(img.get(c, y, x)));
            }
        }
    }
    writer.write_image_data(&bytes).map_err(to_io)?;
    writer.finish().map_err(to_io)
}

/// BT.601 studio-swing luma of an RGB image in `[0, 1]`.
pub fn rgb_to_luma(img: &ImagePlanar) -> Result<ImagePlanar> {
    if img.channels != 3 {
        return Err(invalid!(
            "luma conversion needs 3 channels, got {}",
            img.channels
        ));
    }
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let data = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| {
            let y = 65.481 * r as f64 + 128.553 * g as f64 + 24.966 * b as f64 + 16.0;
            (y / 255.0) as f32
        })
        .collect();
    ImagePlanar::new(1, img.height, img.width, data)
}

pub fn crop(img: &ImagePlanar, x0: usize, y0: usize, w: usize, h: usize) -> Result<ImagePlanar> {
    if w == 0 || h == 0 || x0 + w > img.width || y0 + h > img.height {
        return Err(Error::OutOfBounds(format!(
            "crop ({x0},{y0}) {w}x{h} from {}x{} image",
            img.width, img.height
        )));
    }
    let mut data = Vec::with_capacity(img.channels * w * h);
    for c in 0..img.channels {
        let plane = img.plane(c);
        for y in y0..y0 + h {
            let row = y * img.width;
            data.extend_from_slice(&plane[row + x0..row + x0 + w]);
        }
    }
    ImagePlanar::new(img.channels, h, w, data)
}

/// Removes `n` pixels from every side.
pub fn shave_border(img: &ImagePlanar, n: usize) -> Result<ImagePlanar> {
    if 2 * n >= img.height.min(img.width) {
        return Err(Error::OutOfBounds(format!(
            "border {n} exceeds {}x{} image",
            img.width, img.height
        )));
    }
    crop(img, n, n, img.width - 2 * n, img.height - 2 * n)
}

/// Input/target pair for training. Both images share dimensions because the
/// input has already been upscaled to the target size.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub input: ImagePlanar,
    pub target: ImagePlanar,
    pub scale: f64,
}

/// One of the eight dihedral transforms of a square patch: an optional
/// horizontal flip followed by `rotation` quarter turns counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dihedral {
    pub hflip: bool,
    pub rotation: u8,
}

impl Dihedral {
    pub const IDENTITY: Self = Self {
        hflip: false,
        rotation: 0,
    };

    pub fn random(rng: &mut impl Rng) -> Self {
        let k: u8 = rng.gen_range(0..8);
        Self {
            hflip: k & 1 == 1,
            rotation: k >> 1,
        }
    }

    /// Source coordinate `(y, x)` read for destination `(y, x)` in an `n x n` patch.
    #[inline]
    fn source(self, n: usize, y: usize, x: usize) -> (usize, usize) {
        // undo rotation, then undo flip
        let (y, x) = match self.rotation % 4 {
            0 => (y, x),
            // dst(y, x) = src(x, n-1-y) for a counter-clockwise quarter turn
            1 => (x, n - 1 - y),
            2 => (n - 1 - y, n - 1 - x),
            _ => (n - 1 - x, y),
        };
        if self.hflip {
            (y, n - 1 - x)
        } else {
            (y, x)
        }
    }

    pub fn apply(self, img: &ImagePlanar) -> Result<ImagePlanar> {
        if self == Self::IDENTITY {
            return Ok(img.clone());
        }
        if !self.rotation.is_multiple_of(4) && img.height != img.width {
            return Err(invalid!(
                "rotation needs a square patch, got {}x{}",
                img.width,
                img.height
            ));
        }
        if self.rotation.is_multiple_of(4) {
            // flip only
            return ImagePlanar::from_fn(img.channels, img.height, img.width, |c, y, x| {
                img.get(c, y, img.width - 1 - x)
            });
        }
        let n = img.width;
        ImagePlanar::from_fn(img.channels, n, n, |c, y, x| {
            let (sy, sx) = self.source(n, y, x);
            img.get(c, sy, sx)
        })
    }
}

/// Applies one uniformly drawn dihedral transform to both halves of the pair.
pub fn augment(pair: &PatchPair, rng: &mut impl Rng) -> Result<PatchPair> {
    augment_with(pair, Dihedral::random(rng))
}

pub fn augment_with(pair: &PatchPair, t: Dihedral) -> Result<PatchPair> {
    Ok(PatchPair {
        input: t.apply(&pair.input)?,
        target: t.apply(&pair.target)?,
        scale: pair.scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(c: usize, h: usize, w: usize) -> ImagePlanar {
        ImagePlanar::from_fn(c, h, w, |c, y, x| (c * 100 + y * 10 + x) as f32).unwrap()
    }

    #[test]
    fn luma_endpoints() {
        let black = ImagePlanar::filled(3, 1, 1, 0.0).unwrap();
        let white = ImagePlanar::filled(3, 1, 1, 1.0).unwrap();
        assert!((rgb_to_luma(&black).unwrap().get(0, 0, 0) - 16.0 / 255.0).abs() < 1e-7);
        assert!((rgb_to_luma(&white).unwrap().get(0, 0, 0) - 235.0 / 255.0).abs() < 1e-6);
        for v in [0.1f32, 0.37, 0.5, 0.93] {
            let g = ImagePlanar::filled(3, 1, 1, v).unwrap();
            let want = (219.0 * v as f64 + 16.0) / 255.0;
            assert!((rgb_to_luma(&g).unwrap().get(0, 0, 0) as f64 - want).abs() < 1e-6);
        }
        assert!(rgb_to_luma(&ImagePlanar::filled(1, 2, 2, 0.5).unwrap()).is_err());
    }

    #[test]
    fn crop_identity_and_composition() {
        let img = ramp(3, 7, 9);
        assert_eq!(crop(&img, 0, 0, 9, 7).unwrap(), img);
        let px = crop(&img, 4, 3, 1, 1).unwrap();
        assert_eq!(px.data(), &[34.0, 134.0, 234.0]);
        let nested = crop(&crop(&img, 1, 1, 4, 4).unwrap(), 1, 1, 2, 2).unwrap();
        assert_eq!(nested, crop(&img, 2, 2, 2, 2).unwrap());
        assert!(matches!(crop(&img, 8, 0, 2, 1), Err(Error::OutOfBounds(_))));
    }

    #[test]
    fn shave_matches_crop() {
        let img = ramp(1, 10, 10);
        assert_eq!(shave_border(&img, 0).unwrap(), img);
        let s = shave_border(&img, 2).unwrap();
        assert_eq!(s.dims(), (6, 6));
        assert_eq!(s, crop(&img, 2, 2, 6, 6).unwrap());
        assert!(shave_border(&img, 5).is_err());
    }

    #[test]
    fn hflip_is_involution() {
        let img = ramp(2, 5, 5);
        let f = Dihedral {
            hflip: true,
            rotation: 0,
        };
        assert_ne!(f.apply(&img).unwrap(), img);
        assert_eq!(f.apply(&f.apply(&img).unwrap()).unwrap(), img);
    }

    #[test]
    fn quarter_turn_moves_marked_pixel() {
        // counter-clockwise quarter turn: (r, c) -> (n-1-c, r)
        let n = 6;
        let (r, c) = (1, 4);
        let img = ImagePlanar::from_fn(1, n, n, |_, y, x| if (y, x) == (r, c) { 1.0 } else { 0.0 })
            .unwrap();
        let rot = Dihedral {
            hflip: false,
            rotation: 1,
        }
        .apply(&img)
        .unwrap();
        assert_eq!(rot.get(0, n - 1 - c, r), 1.0);
        assert_eq!(rot.data().iter().sum::<f32>(), 1.0);
        let full = (0..4).fold(img.clone(), |acc, _| {
            Dihedral {
                hflip: false,
                rotation: 1,
            }
            .apply(&acc)
            .unwrap()
        });
        assert_eq!(full, img);
    }

    #[test]
    fn augment_applies_same_transform_and_rejects_non_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = ramp(3, 4, 4);
        let pair = PatchPair {
            input: a.clone(),
            target: a.map(|v| v * 2.0),
            scale: 1.5,
        };
        for _ in 0..16 {
            let out = augment(&pair, &mut rng).unwrap();
            assert_eq!(out.target, out.input.map(|v| v * 2.0));
        }
        assert_eq!(augment_with(&pair, Dihedral::IDENTITY).unwrap(), pair);

        let rect = PatchPair {
            input: ramp(1, 3, 4),
            target: ramp(1, 3, 4),
            scale: 1.5,
        };
        let rot = Dihedral {
            hflip: false,
            rotation: 3,
        };
        assert!(augment_with(&rect, rot).is_err());
    }

    #[test]
    fn save_quantizes_half_up_and_clamps() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let img = ImagePlanar::from_fn(3, 2, 2, |_, y, x| match (y, x) {
            (0, 0) => 0.5,
            (0, 1) => 1.2,
            (1, 0) => -0.3,
            _ => 1.0,
        })
        .unwrap();
        save_image(&img, &p).unwrap();
        let back = load_image(&p).unwrap();
        assert_eq!(back.get(0, 0, 0), 128.0 / 255.0);
        assert_eq!(back.get(1, 0, 1), 1.0);
        assert_eq!(back.get(2, 1, 0), 0.0);
    }

    #[test]
    fn load_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_image(dir.path().join("nope.png")),
            Err(Error::MissingFile(_))
        ));
        let txt = dir.path().join("x.png");
        std::fs::write(&txt, b"hello, not a png").unwrap();
        assert!(matches!(
            load_image(&txt),
            Err(Error::UnsupportedFormat { .. })
        ));
        let bad = dir.path().join("bad.png");
        let mut bytes = PNG_SIGNATURE.to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 13, b'I', b'H', b'D', b'R', 1, 2]);
        std::fs::write(&bad, bytes).unwrap();
        assert!(matches!(load_image(&bad), Err(Error::CorruptImage { .. })));
    }

    #[test]
    fn gray_png_expands_to_three_channels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        let img = ImagePlanar::from_fn(1, 2, 3, |_, y, x| (y * 3 + x) as f32 * 40.0 / 255.0)
            .unwrap();
        save_image(&img, &p).unwrap();
        let back = load_image(&p).unwrap();
        assert_eq!(back.channels(), 3);
        for c in 0..3 {
            assert_eq!(back.plane(c), img.plane(0));
        }
    }
}
