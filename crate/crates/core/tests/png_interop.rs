//! PNG reading and writing checked against an independent codec.

use asdn::imaging::{load_image, quantize_u8, save_image, ImagePlanar};
use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage, Rgba, RgbaImage};

fn pattern(x: u32, y: u32, k: u32) -> u8 {
    ((x * 37 + y * 11 + k * 101) % 256) as u8
}

#[test]
fn saved_rgb_decodes_to_quantized_samples() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.png");
    let img = ImagePlanar::from_fn(3, 7, 9, |c, y, x| (c * 63 + y * 9 + x) as f32 / 300.0 - 0.05).unwrap();
    save_image(&img, &path).unwrap();
    let back = image::open(&path).unwrap().to_rgb8();
    assert_eq!(back.dimensions(), (9, 7));
    for (x, y, px) in back.enumerate_pixels() {
        for c in 0..3 {
            assert_eq!(px[c], quantize_u8(img.get(c, y as usize, x as usize)));
        }
    }
}

#[test]
fn reads_rgb_rgba_gray_and_16_bit() {
    let dir = tempfile::tempdir().unwrap();
    let (w, h) = (6, 5);
    let rgb = RgbImage::from_fn(w, h, |x, y| Rgb([pattern(x, y, 0), pattern(x, y, 1), pattern(x, y, 2)]));
    let rgba = RgbaImage::from_fn(w, h, |x, y| Rgba([pattern(x, y, 0), pattern(x, y, 1), pattern(x, y, 2), 77]));
    let gray = GrayImage::from_fn(w, h, |x, y| Luma([pattern(x, y, 0)]));
    let wide: ImageBuffer<Rgb<u16>, Vec<u16>> =
        ImageBuffer::from_fn(w, h, |x, y| Rgb([pattern(x, y, 0) as u16 * 257, pattern(x, y, 1) as u16 * 257, pattern(x, y, 2) as u16 * 257]));
    rgb.save(dir.path().join("rgb.png")).unwrap();
    rgba.save(dir.path().join("rgba.png")).unwrap();
    gray.save(dir.path().join("gray.png")).unwrap();
    wide.save(dir.path().join("wide.png")).unwrap();

    let expect = |img: &ImagePlanar, grey: bool| {
        assert_eq!((img.channels(), img.height(), img.width()), (3, 5, 6));
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    let k = if grey { 0 } else { c as u32 };
                    let want = pattern(x, y, k) as f32 / 255.0;
                    assert!((img.get(c, y as usize, x as usize) - want).abs() < 1e-6);
                }
            }
        }
    };
    expect(&load_image(dir.path().join("rgb.png")).unwrap(), false);
    expect(&load_image(dir.path().join("rgba.png")).unwrap(), false);
    expect(&load_image(dir.path().join("gray.png")).unwrap(), true);
    expect(&load_image(dir.path().join("wide.png")).unwrap(), false);
}

#[test]
fn non_png_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.png");
    std::fs::write(&path, b"GIF89a not really").unwrap();
    assert!(matches!(load_image(&path), Err(asdn::Error::UnsupportedFormat { .. })));
}
