use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use asdn::imaging::ImagePlanar;
use asdn::model::{Asdn, Checkpoint, ModelConfig};
use asdn::resample::{resize, ResizeSpec};
use asdn_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    // SAFETY: always a valid C string.
    unsafe { CStr::from_ptr(asdn_last_error()) }.to_string_lossy().into_owned()
}

fn gradient(h: usize, w: usize) -> Vec<f32> {
    (0..3 * h * w).map(|i| (i % 97) as f32 / 96.0).collect()
}

fn new_image(h: usize, w: usize, data: &[f32]) -> *mut AsdnImage {
    let mut img = ptr::null_mut();
    // SAFETY: `data` holds 3*h*w floats.
    let s = unsafe { asdn_image_new(3, h, w, data.as_ptr(), &mut img) };
    assert_eq!(s, AsdnStatus::Ok, "{}", last_error());
    img
}

fn read_all(img: *const AsdnImage) -> (usize, usize, usize, Vec<f32>) {
    let (mut c, mut h, mut w) = (0, 0, 0);
    // SAFETY: live handle and writable outputs.
    unsafe {
        assert_eq!(asdn_image_dims(img, &mut c, &mut h, &mut w), AsdnStatus::Ok);
        let mut buf = vec![0f32; c * h * w];
        assert_eq!(asdn_image_read(img, buf.as_mut_ptr(), buf.len()), AsdnStatus::Ok);
        (c, h, w, buf)
    }
}

#[test]
fn bicubic_upscale_matches_library() {
    let data = gradient(10, 12);
    let img = new_image(10, 12, &data);
    let mut out = ptr::null_mut();
    // SAFETY: null model selects bicubic.
    let s = unsafe { asdn_upscale(ptr::null(), img, 1.5, &mut out) };
    assert_eq!(s, AsdnStatus::Ok);
    let (c, h, w, buf) = read_all(out);
    let want = resize(
        &ImagePlanar::new(3, 10, 12, data).unwrap(),
        ResizeSpec::new(1.5),
    )
    .unwrap();
    assert_eq!((c, h, w), (3, 15, 18));
    assert_eq!(buf, want.data());
    // SAFETY: handles from this library, freed once.
    unsafe {
        asdn_image_free(out);
        asdn_image_free(img);
    }
}

#[test]
fn model_handle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.asdn");
    let mut cfg = ModelConfig::desk();
    cfg.num_blocks = 1;
    cfg.level_count = 5;
    let model = Asdn::<f32>::build(&cfg).unwrap();
    Checkpoint::new(model, 0, false).save(&path).unwrap();

    let mut m = ptr::null_mut();
    let p = cstr(&path);
    // SAFETY: valid path and output.
    unsafe {
        assert_eq!(asdn_model_load(p.as_ptr(), &mut m), AsdnStatus::Ok);
        let mut levels = 0;
        assert_eq!(asdn_model_level_count(m, &mut levels), AsdnStatus::Ok);
        assert_eq!(levels, 5);
    }
    let img = new_image(8, 8, &gradient(8, 8));
    let mut out = ptr::null_mut();
    // SAFETY: live handles.
    let s = unsafe { asdn_upscale(m, img, 3.0, &mut out) };
    assert_eq!(s, AsdnStatus::Ok, "{}", last_error());
    let (_, h, w, buf) = read_all(out);
    assert_eq!((h, w), (24, 24));
    assert!(buf.iter().all(|v| v.is_finite()));
    // SAFETY: freed once each.
    unsafe {
        asdn_image_free(out);
        asdn_image_free(img);
        asdn_model_free(m);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut m = ptr::null_mut();
    let missing = CString::new("/nonexistent/model.asdn").unwrap();
    // SAFETY: valid arguments; the file is absent.
    let s = unsafe { asdn_model_load(missing.as_ptr(), &mut m) };
    assert_eq!(s, AsdnStatus::Io);
    assert!(m.is_null());
    assert!(!last_error().is_empty());

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.asdn");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let p = cstr(&junk);
    // SAFETY: as above.
    assert_eq!(unsafe { asdn_model_load(p.as_ptr(), &mut m) }, AsdnStatus::Checkpoint);

    let img = new_image(4, 4, &gradient(4, 4));
    let mut out = ptr::null_mut();
    // SAFETY: live image; an invalid scale must be rejected.
    assert_eq!(
        unsafe { asdn_upscale(ptr::null(), img, -1.0, &mut out) },
        AsdnStatus::InvalidArgument
    );
    let mut small = [0f32; 4];
    // SAFETY: capacity states the real buffer size.
    assert_eq!(
        unsafe { asdn_image_read(img, small.as_mut_ptr(), small.len()) },
        AsdnStatus::BufferTooSmall
    );
    // SAFETY: null handles are reported, not dereferenced.
    assert_eq!(
        unsafe { asdn_image_dims(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) },
        AsdnStatus::NullPointer
    );
    // SAFETY: freed once.
    unsafe { asdn_image_free(img) };
}

#[test]
fn success_clears_last_error() {
    let mut count = 0;
    // SAFETY: writable output.
    unsafe {
        asdn_plan(0.5, ptr::null_mut(), 0, &mut count);
        assert!(!last_error().is_empty());
        let mut steps = [0f64; 4];
        assert_eq!(asdn_plan(3.0, steps.as_mut_ptr(), 4, &mut count), AsdnStatus::Ok);
        assert_eq!(&steps[..count], &[2.0, 1.5]);
    }
    assert!(last_error().is_empty());
}

#[test]
fn plan_reports_required_capacity() {
    let mut count = 0;
    // SAFETY: zero capacity with a null buffer is allowed.
    let s = unsafe { asdn_plan(9.0, ptr::null_mut(), 0, &mut count) };
    assert_eq!(s, AsdnStatus::BufferTooSmall);
    assert_eq!(count, 4);
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (src, dst) = (dir.path().join("in.png"), dir.path().join("out.png"));
    let data = gradient(9, 7);
    let img = new_image(9, 7, &data);
    let (s, d) = (cstr(&src), cstr(&dst));
    // SAFETY: live handle, valid paths.
    unsafe {
        assert_eq!(asdn_image_save(img, s.as_ptr()), AsdnStatus::Ok);
        assert_eq!(asdn_upscale_file(ptr::null(), s.as_ptr(), d.as_ptr(), 2.0), AsdnStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(asdn_image_load(d.as_ptr(), &mut back), AsdnStatus::Ok);
        let (c, h, w, _) = read_all(back);
        assert_eq!((c, h, w), (3, 18, 14));
        asdn_image_free(back);
        asdn_image_free(img);
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/asdn.h");
    let src = include_str!("../src/lib.rs");
    for line in src.lines() {
        let Some(rest) = line.split("extern \"C\" fn ").nth(1) else {
            continue;
        };
        let name = rest.split('(').next().unwrap();
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct AsdnModel AsdnModel;"));
    assert!(header.contains("ASDN_STATUS_BUFFER_TOO_SMALL = 7"));
}

#[test]
fn header_compiles_as_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let dir = tempfile::tempdir().unwrap();
    let main = dir.path().join("main.c");
    std::fs::write(
        &main,
        "#include \"asdn.h\"\nint main(void) { AsdnImage *img = 0; return asdn_image_dims(img, 0, 0, 0) == ASDN_STATUS_NULL_POINTER ? 0 : 1; }\n",
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", include])
        .arg(&main)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "C compiler rejected the header"),
        Err(e) => eprintln!("skipping: no C compiler ({e})"),
    }
}
