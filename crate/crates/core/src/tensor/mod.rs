//! A small deterministic tensor engine: NCHW tensors, the layers the network
//! needs with hand-written backward passes, L1 loss, Adam, and a finite
//! difference gradient checker.
//!
//! Everything is generic over [`Scalar`] so the same code runs in `f32` for
//! training and in `f64` for gradient checks.

mod adam;
pub mod gradcheck;
mod loss;
pub mod ops;
mod param;

use std::fmt::Debug;

pub use adam::{adam_step, OptimizerConfig};
pub use loss::l1_loss;
pub use param::Parameter;

use crate::error::{shape_err, Result};
use crate::imaging::ImagePlanar;

pub trait Scalar:
    num_like::Float + Default + Debug + Send + Sync + 'static + std::iter::Sum
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `c = a * b + beta * c`; `a` and `b` take (row, column) strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_row_stride: isize,
    );
}

/// Minimal float trait, enough for the layers here.
pub mod num_like {
    use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

    pub trait Float:
        Copy
        + PartialOrd
        + Add<Output = Self>
        + Sub<Output = Self>
        + Mul<Output = Self>
        + Div<Output = Self>
        + Neg<Output = Self>
        + AddAssign
        + SubAssign
        + MulAssign
    {
        const ZERO: Self;
        const ONE: Self;
        fn exp(self) -> Self;
        fn sqrt(self) -> Self;
        fn abs(self) -> Self;
        fn is_finite(self) -> bool;
    }

    macro_rules! impl_float {
        ($t:ty) => {
            impl Float for $t {
                const ZERO: Self = 0.0;
                const ONE: Self = 1.0;
                #[inline]
                fn exp(self) -> Self {
                    <$t>::exp(self)
                }
                #[inline]
                fn sqrt(self) -> Self {
                    <$t>::sqrt(self)
                }
                #[inline]
                fn abs(self) -> Self {
                    <$t>::abs(self)
                }
                #[inline]
                fn is_finite(self) -> bool {
                    <$t>::is_finite(self)
                }
            }
        };
    }
    impl_float!(f32);
    impl_float!(f64);
}

fn check_gemm_bounds(
    len: usize,
    rows: usize,
    cols: usize,
    strides: (isize, isize),
    what: &str,
) {
    let last = (rows.saturating_sub(1)) as isize * strides.0 + (cols.saturating_sub(1)) as isize * strides.1;
    assert!(
        strides.0 >= 0 && strides.1 >= 0 && (rows == 0 || cols == 0 || (last as usize) < len),
        "gemm operand {what} out of bounds"
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
                c_row_stride: isize,
            ) {
                check_gemm_bounds(a.len(), m, k, a_strides, "a");
                check_gemm_bounds(b.len(), k, n, b_strides, "b");
                check_gemm_bounds(c.len(), m, n, (c_row_stride, 1), "c");
                // SAFETY: every element addressed by the strides lies inside
                // the slices (checked above), and `c` does not alias `a`/`b`.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        c_row_stride,
                        1,
                    )
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// Batch of feature maps, NCHW layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T = f32> {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![T::ZERO; n * c * h * w],
        }
    }

    pub fn filled(n: usize, c: usize, h: usize, w: usize, v: T) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![v; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(shape_err!(
                "{} values for a {n}x{c}x{h}x{w} tensor",
                data.len()
            ));
        }
        Ok(Self { n, c, h, w, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn c(&self) -> usize {
        self.c
    }
    pub fn h(&self) -> usize {
        self.h
    }
    pub fn w(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// The `c*h*w` slice of batch item `i`.
    pub fn item(&self, i: usize) -> &[T] {
        let s = self.c * self.h * self.w;
        &self.data[i * s..(i + 1) * s]
    }

    pub fn item_mut(&mut self, i: usize) -> &mut [T] {
        let s = self.c * self.h * self.w;
        &mut self.data[i * s..(i + 1) * s]
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[((n * self.c + c) * self.h + y) * self.w + x]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_f64(&self) -> f64 {
        self.data.iter().map(|v| v.to_f64()).sum()
    }

    #[inline]
    pub(crate) fn debug_check_finite(&self, what: &str) {
        debug_assert!(self.all_finite(), "non-finite values in {what}");
    }

    /// Wraps a single image as a batch of one.
    pub fn from_image(img: &ImagePlanar) -> Self {
        Self {
            n: 1,
            c: img.channels(),
            h: img.height(),
            w: img.width(),
            data: img.data().iter().map(|&v| T::from_f64(v as f64)).collect(),
        }
    }

    /// Stacks equally sized images into a batch.
    pub fn from_images<'a>(imgs: impl IntoIterator<Item = &'a ImagePlanar>) -> Result<Self> {
        let mut out: Option<Self> = None;
        for img in imgs {
            let t = Self::from_image(img);
            match &mut out {
                None => out = Some(t),
                Some(o) => {
                    if o.c != t.c || o.h != t.h || o.w != t.w {
                        return Err(shape_err!("cannot batch images of different sizes"));
                    }
                    o.data.extend_from_slice(&t.data);
                    o.n += 1;
                }
            }
        }
        out.ok_or_else(|| shape_err!("empty image batch"))
    }

    /// Batch item `i` as an image.
    pub fn to_image(&self, i: usize) -> Result<ImagePlanar> {
        ImagePlanar::new(
            self.c,
            self.h,
            self.w,
            self.item(i).iter().map(|v| v.to_f64() as f32).collect(),
        )
    }
}
