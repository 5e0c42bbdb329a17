//! C ABI over the `asdn` crate.
//!
//! Models and images are opaque handles created and destroyed through this
//! interface. Every function returns an [`AsdnStatus`]; on failure a
//! description is available from [`asdn_last_error`] on the same thread.
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use asdn::imaging::{load_image, save_image, ImagePlanar};
use asdn::model::{Asdn, Checkpoint};
use asdn::resample::{resize, ResizeSpec};
use asdn::scheduler::{execute, plan};
use asdn::Error;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsdnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A file could not be read or written.
    Io = 3,
    /// Unsupported or corrupt image data.
    Image = 4,
    Checkpoint = 5,
    ShapeMismatch = 6,
    /// The output buffer is too small.
    BufferTooSmall = 7,
    Internal = 8,
    Panic = 9,
}

/// A loaded network. Opaque to C.
pub struct AsdnModel {
    model: Asdn<f32>,
}

/// A planar float image with values nominally in `[0, 1]`. Opaque to C.
pub struct AsdnImage {
    image: ImagePlanar,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(AsdnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::MissingFile(_) | Error::Io { .. } => AsdnStatus::Io,
            Error::UnsupportedFormat { .. } | Error::CorruptImage { .. } => AsdnStatus::Image,
            Error::Checkpoint(_) | Error::Config(_) => AsdnStatus::Checkpoint,
            Error::ShapeMismatch(_) => AsdnStatus::ShapeMismatch,
            Error::InvalidArgument(_) | Error::OutOfBounds(_) => AsdnStatus::InvalidArgument,
            _ => AsdnStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: AsdnStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, records any error message and converts panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AsdnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AsdnStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AsdnStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or point to a NUL-terminated string.
unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return fail(AsdnStatus::NullPointer, format!("{what} is null"));
    }
    // SAFETY: non-null and NUL-terminated per the caller contract.
    let s = unsafe { CStr::from_ptr(p) };
    match s.to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => fail(AsdnStatus::InvalidArgument, format!("{what} is not UTF-8")),
    }
}

fn out_arg<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return fail(AsdnStatus::NullPointer, "output pointer is null");
    }
    Ok(())
}

/// # Safety
/// `p` must be null or a live handle from this library.
unsafe fn image_ref<'a>(p: *const AsdnImage) -> Result<&'a AsdnImage, Failure> {
    // SAFETY: caller contract.
    unsafe { p.as_ref() }.ok_or(Failure(AsdnStatus::NullPointer, "image is null".into()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn asdn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next call into the library on this
/// thread.
#[no_mangle]
pub extern "C" fn asdn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a checkpoint into a new model handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn asdn_model_load(path: *const c_char, out: *mut *mut AsdnModel) -> AsdnStatus {
    guard(|| {
        out_arg(out)?;
        // SAFETY: forwarded caller contract.
        let path = unsafe { path_arg(path, "path") }?;
        let ck = Checkpoint::load(path)?;
        let handle = Box::new(AsdnModel { model: ck.model });
        // SAFETY: `out` checked non-null above.
        unsafe { *out = Box::into_raw(handle) };
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from [`asdn_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn asdn_model_free(model: *mut AsdnModel) {
    if !model.is_null() {
        // SAFETY: ownership returns to Rust exactly once per the contract.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Number of pyramid levels of a model.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn asdn_model_level_count(model: *const AsdnModel, out: *mut usize) -> AsdnStatus {
    guard(|| {
        // SAFETY: caller contract.
        let m = unsafe { model.as_ref() }.ok_or(Failure(AsdnStatus::NullPointer, "model is null".into()))?;
        if out.is_null() {
            return fail(AsdnStatus::NullPointer, "output pointer is null");
        }
        // SAFETY: checked non-null.
        unsafe { *out = m.model.level_count() };
        Ok(())
    })
}

/// Creates an image from planar float data (`channels * height * width`
/// values, channel-major).
///
/// # Safety
/// `data` must point to that many readable floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn asdn_image_new(
    channels: usize,
    height: usize,
    width: usize,
    data: *const f32,
    out: *mut *mut AsdnImage,
) -> AsdnStatus {
    guard(|| {
        out_arg(out)?;
        if data.is_null() {
            return fail(AsdnStatus::NullPointer, "data is null");
        }
        let len = channels
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or(Failure(AsdnStatus::InvalidArgument, "image too large".into()))?;
        // SAFETY: the caller guarantees `len` readable floats.
        let values = unsafe { std::slice::from_raw_parts(data, len) }.to_vec();
        let image = ImagePlanar::new(channels, height, width, values)?;
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(Box::new(AsdnImage { image })) };
        Ok(())
    })
}

/// Reads a PNG file as a 3-channel image.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn asdn_image_load(path: *const c_char, out: *mut *mut AsdnImage) -> AsdnStatus {
    guard(|| {
        out_arg(out)?;
        // SAFETY: forwarded caller contract.
        let path = unsafe { path_arg(path, "path") }?;
        let image = load_image(path)?;
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(Box::new(AsdnImage { image })) };
        Ok(())
    })
}

/// Writes an image as an 8-bit PNG.
///
/// # Safety
/// `image` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn asdn_image_save(image: *const AsdnImage, path: *const c_char) -> AsdnStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let (img, path) = unsafe { (image_ref(image)?, path_arg(path, "path")?) };
        save_image(&img.image, path)?;
        Ok(())
    })
}

/// Reports the dimensions of an image. Any output pointer may be null.
///
/// # Safety
/// `image` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn asdn_image_dims(
    image: *const AsdnImage,
    channels: *mut usize,
    height: *mut usize,
    width: *mut usize,
) -> AsdnStatus {
    guard(|| {
        // SAFETY: caller contract.
        let img = unsafe { image_ref(image) }?;
        let i = &img.image;
        for (p, v) in [(channels, i.channels()), (height, i.height()), (width, i.width())] {
            if !p.is_null() {
                // SAFETY: non-null outputs are writable per the contract.
                unsafe { *p = v };
            }
        }
        Ok(())
    })
}

/// Copies the planar data of an image into `out`, which holds `capacity`
/// floats.
///
/// # Safety
/// `image` must be a live handle; `out` must have room for `capacity` floats.
#[no_mangle]
pub unsafe extern "C" fn asdn_image_read(image: *const AsdnImage, out: *mut f32, capacity: usize) -> AsdnStatus {
    guard(|| {
        // SAFETY: caller contract.
        let img = unsafe { image_ref(image) }?;
        if out.is_null() {
            return fail(AsdnStatus::NullPointer, "output buffer is null");
        }
        let data = img.image.data();
        if capacity < data.len() {
            return fail(
                AsdnStatus::BufferTooSmall,
                format!("need {} floats, buffer holds {capacity}", data.len()),
            );
        }
        // SAFETY: `out` has room for at least `data.len()` floats.
        unsafe { ptr::copy_nonoverlapping(data.as_ptr(), out, data.len()) };
        Ok(())
    })
}

/// Releases an image. Null is ignored.
///
/// # Safety
/// `image` must be null or a live handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn asdn_image_free(image: *mut AsdnImage) {
    if !image.is_null() {
        // SAFETY: ownership returns to Rust exactly once per the contract.
        drop(unsafe { Box::from_raw(image) });
    }
}

/// Upscales `input` by `scale`. With a null `model` the result is plain
/// bicubic; otherwise the model runs once per recursive deployment step.
///
/// # Safety
/// `model` must be null or a live handle; `input` a live handle; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn asdn_upscale(
    model: *const AsdnModel,
    input: *const AsdnImage,
    scale: f64,
    out: *mut *mut AsdnImage,
) -> AsdnStatus {
    guard(|| {
        out_arg(out)?;
        // SAFETY: caller contract.
        let (img, model) = unsafe { (image_ref(input)?, model.as_ref()) };
        let image = match model {
            None => resize(&img.image, ResizeSpec::new(scale))?,
            Some(m) => execute(&plan(scale)?, &img.image, &m.model)?,
        };
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(Box::new(AsdnImage { image })) };
        Ok(())
    })
}

/// Loads a PNG, upscales it as [`asdn_upscale`] does and writes a PNG.
///
/// # Safety
/// `model` must be null or a live handle; both paths NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn asdn_upscale_file(
    model: *const AsdnModel,
    input: *const c_char,
    output: *const c_char,
    scale: f64,
) -> AsdnStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let (src, dst, model) =
            unsafe { (path_arg(input, "input")?, path_arg(output, "output")?, model.as_ref()) };
        let img = load_image(src)?;
        let image = match model {
            None => resize(&img, ResizeSpec::new(scale))?,
            Some(m) => execute(&plan(scale)?, &img, &m.model)?,
        };
        save_image(&image, dst)?;
        Ok(())
    })
}

/// Writes the recursive deployment ratios for `scale` into `steps`. `count`
/// receives the number of ratios even when `capacity` is too small.
///
/// # Safety
/// `steps` must have room for `capacity` doubles (it may be null when
/// `capacity` is 0); `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn asdn_plan(scale: f64, steps: *mut f64, capacity: usize, count: *mut usize) -> AsdnStatus {
    guard(|| {
        if count.is_null() {
            return fail(AsdnStatus::NullPointer, "count is null");
        }
        let p = plan(scale)?;
        // SAFETY: checked non-null.
        unsafe { *count = p.steps.len() };
        if capacity < p.steps.len() {
            return fail(
                AsdnStatus::BufferTooSmall,
                format!("plan has {} steps, buffer holds {capacity}", p.steps.len()),
            );
        }
        if steps.is_null() {
            return fail(AsdnStatus::NullPointer, "steps is null");
        }
        // SAFETY: room for `capacity >= len` doubles.
        unsafe { ptr::copy_nonoverlapping(p.steps.as_ptr(), steps, p.steps.len()) };
        Ok(())
    })
}
