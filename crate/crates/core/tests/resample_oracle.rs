mod common;

use asdn::resample::{kernel_weight, resize, ResizeSpec};
use common::{keys, oracle_resize, random_image, resize_case_error};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn kernel_matches_piecewise_form() {
    for i in -250..=250 {
        let t = i as f64 / 100.0;
        assert!((kernel_weight(t) - keys(t)).abs() < 1e-12, "t={t}");
    }
}

#[test]
fn separable_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..40 {
        let (case, err) = resize_case_error(&mut rng, i % 2 == 0);
        assert!(err < 1e-6, "{case}: {err}");
    }
}

#[test]
fn decimal_scales_on_a_fixed_image() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let img = random_image(&mut rng, 1, 17, 13);
    for scale in [1.1, 1.5, 1.9, 2.0, 3.0, 0.5, 1.0 / 1.7] {
        let out = resize(&img, ResizeSpec::new(scale)).unwrap();
        let want = oracle_resize(&img, scale, out.height(), out.width());
        for (a, b) in out.data().iter().zip(&want) {
            assert!((*a as f64 - b).abs() < 1e-6, "scale {scale}");
        }
    }
}

#[test]
fn constant_images_stay_constant() {
    let img = asdn::imaging::ImagePlanar::filled(3, 9, 11, 0.375).unwrap();
    for scale in [0.4, 1.3, 2.0, 3.7] {
        let out = resize(&img, ResizeSpec::new(scale)).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.375).abs() < 1e-6));
    }
}
