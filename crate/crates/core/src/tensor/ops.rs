//! Layer primitives with forward and backward passes.
//!
//! Convolution is cross-correlation (no kernel flip) implemented as im2col
//! followed by a GEMM per batch item. Batch items are processed in order and
//! every reduction has a fixed summation order, so results do not depend on
//! scheduling.

use super::{Scalar, Tensor4};
use crate::error::{invalid, shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding that keeps the spatial size.
    Same,
    /// No padding.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub padding: Padding,
}

impl ConvShape {
    pub fn new(cin: usize, cout: usize, kernel: usize) -> Self {
        Self {
            cin,
            cout,
            kernel,
            padding: Padding::Same,
        }
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.cout, self.cin, self.kernel, self.kernel]
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.kernel * self.kernel
    }

    fn pad(&self) -> usize {
        match self.padding {
            Padding::Same => self.kernel / 2,
            Padding::None => 0,
        }
    }

    fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let p = self.pad();
        let k = self.kernel;
        if h + 2 * p < k || w + 2 * p < k {
            return Err(shape_err!("{h}x{w} input smaller than {k}x{k} kernel"));
        }
        Ok((h + 2 * p - k + 1, w + 2 * p - k + 1))
    }

    fn validate<T: Scalar>(&self, x: &Tensor4<T>, weight: &[T], bias: &[T]) -> Result<()> {
        if self.kernel.is_multiple_of(2) {
            return Err(invalid!("kernel size must be odd, got {}", self.kernel));
        }
        if x.c() != self.cin {
            return Err(shape_err!(
                "conv expects {} input channels, got {}",
                self.cin,
                x.c()
            ));
        }
        if weight.len() != self.weight_len() || bias.len() != self.cout {
            return Err(shape_err!(
                "conv parameters have {} weights / {} biases, expected {} / {}",
                weight.len(),
                bias.len(),
                self.weight_len(),
                self.cout
            ));
        }
        Ok(())
    }

    fn direct(&self) -> bool {
        self.kernel == 1
    }
}

/// Unfolds one `cin x h x w` item into a `(cin*k*k) x (oh*ow)` matrix.
fn im2col<T: Scalar>(
    x: &[T],
    cs: &ConvShape,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    col: &mut [T],
) {
    let k = cs.kernel;
    let p = cs.pad() as isize;
    let ohw = oh * ow;
    for ci in 0..cs.cin {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * ohw..][..ohw];
                for oy in 0..oh {
                    let iy = oy as isize + ky as isize - p;
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        dst.iter_mut().for_each(|v| *v = T::ZERO);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = ox as isize + kx as isize - p;
                        *d = if ix < 0 || ix >= w as isize {
                            T::ZERO
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into an image.
fn col2im<T: Scalar>(
    col: &[T],
    cs: &ConvShape,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    dx: &mut [T],
) {
    let k = cs.kernel;
    let p = cs.pad() as isize;
    let ohw = oh * ow;
    for ci in 0..cs.cin {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * ohw..][..ohw];
                for oy in 0..oh {
                    let iy = oy as isize + ky as isize - p;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src = &row[oy * ow..(oy + 1) * ow];
                    for (ox, &g) in src.iter().enumerate() {
                        let ix = ox as isize + kx as isize - p;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += g;
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Scalar>(
    x: &Tensor4<T>,
    weight: &[T],
    bias: &[T],
    cs: &ConvShape,
) -> Result<Tensor4<T>> {
    cs.validate(x, weight, bias)?;
    let (h, w) = (x.h(), x.w());
    let (oh, ow) = cs.out_hw(h, w)?;
    let ohw = oh * ow;
    let kk = cs.cin * cs.kernel * cs.kernel;
    let mut out = Tensor4::zeros(x.n(), cs.cout, oh, ow);
    let mut col = if cs.direct() {
        Vec::new()
    } else {
        vec![T::ZERO; kk * ohw]
    };
    for i in 0..x.n() {
        let xi = x.item(i);
        let oi = out.item_mut(i);
        for (co, b) in bias.iter().enumerate() {
            oi[co * ohw..(co + 1) * ohw].iter_mut().for_each(|v| *v = *b);
        }
        let colm: &[T] = if cs.direct() {
            xi
        } else {
            im2col(xi, cs, h, w, oh, ow, &mut col);
            &col
        };
        T::gemm(
            cs.cout,
            kk,
            ohw,
            weight,
            (kk as isize, 1),
            colm,
            (ohw as isize, 1),
            T::ONE,
            oi,
            ohw as isize,
        );
    }
    out.debug_check_finite("conv2d output");
    Ok(out)
}

/// Accumulates weight and bias gradients into `dw` / `db` and returns the input
/// gradient when `need_dx` is set.
pub fn conv2d_backward_into<T: Scalar>(
    x: &Tensor4<T>,
    weight: &[T],
    cs: &ConvShape,
    dy: &Tensor4<T>,
    dw: &mut [T],
    db: &mut [T],
    need_dx: bool,
) -> Result<Option<Tensor4<T>>> {
    cs.validate(x, weight, db)?;
    let (h, w) = (x.h(), x.w());
    let (oh, ow) = cs.out_hw(h, w)?;
    if dy.shape() != [x.n(), cs.cout, oh, ow] {
        return Err(shape_err!(
            "conv output gradient {:?}, expected {:?}",
            dy.shape(),
            [x.n(), cs.cout, oh, ow]
        ));
    }
    if dw.len() != cs.weight_len() {
        return Err(shape_err!("weight gradient buffer has wrong length"));
    }
    let ohw = oh * ow;
    let kk = cs.cin * cs.kernel * cs.kernel;
    let mut col = if cs.direct() {
        Vec::new()
    } else {
        vec![T::ZERO; kk * ohw]
    };
    let mut dcol = vec![T::ZERO; kk * ohw];
    let mut dx = need_dx.then(|| Tensor4::zeros(x.n(), cs.cin, h, w));
    for i in 0..x.n() {
        let dyi = dy.item(i);
        for (co, g) in db.iter_mut().enumerate() {
            let s: f64 = dyi[co * ohw..(co + 1) * ohw].iter().map(|v| v.to_f64()).sum();
            *g += T::from_f64(s);
        }
        let colm: &[T] = if cs.direct() {
            x.item(i)
        } else {
            im2col(x.item(i), cs, h, w, oh, ow, &mut col);
            &col
        };
        // dW += dY * col^T
        T::gemm(
            cs.cout,
            ohw,
            kk,
            dyi,
            (ohw as isize, 1),
            colm,
            (1, ohw as isize),
            T::ONE,
            dw,
            kk as isize,
        );
        if let Some(dx) = dx.as_mut() {
            // dcol = W^T * dY
            T::gemm(
                kk,
                cs.cout,
                ohw,
                weight,
                (1, kk as isize),
                dyi,
                (ohw as isize, 1),
                T::ZERO,
                &mut dcol,
                ohw as isize,
            );
            let dxi = dx.item_mut(i);
            if cs.direct() {
                dxi.copy_from_slice(&dcol);
            } else {
                col2im(&dcol, cs, h, w, oh, ow, dxi);
            }
        }
    }
    Ok(dx)
}

/// Gradients of a convolution: `(grad_x, grad_w, grad_b)`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor4<T>,
    weight: &[T],
    cs: &ConvShape,
    dy: &Tensor4<T>,
) -> Result<(Tensor4<T>, Vec<T>, Vec<T>)> {
    let mut dw = vec![T::ZERO; cs.weight_len()];
    let mut db = vec![T::ZERO; cs.cout];
    let dx = conv2d_backward_into(x, weight, cs, dy, &mut dw, &mut db, true)?
        .expect("dx requested");
    Ok((dx, dw, db))
}

pub fn relu<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| if v > T::ZERO { v } else { T::ZERO })
}

/// Backward of ReLU given its forward input or output (same sign pattern).
pub fn relu_backward<T: Scalar>(x: &Tensor4<T>, dy: &Tensor4<T>) -> Tensor4<T> {
    let mut dx = dy.clone();
    for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if v <= T::ZERO {
            *g = T::ZERO;
        }
    }
    dx
}

pub fn sigmoid<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| T::ONE / (T::ONE + (-v).exp()))
}

/// Backward of the sigmoid given its output `y`.
pub fn sigmoid_backward<T: Scalar>(y: &Tensor4<T>, dy: &Tensor4<T>) -> Tensor4<T> {
    let mut dx = dy.clone();
    for (g, &s) in dx.data_mut().iter_mut().zip(y.data()) {
        *g *= s * (T::ONE - s);
    }
    dx
}

pub fn add<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    if a.shape() != b.shape() {
        return Err(shape_err!("add {:?} + {:?}", a.shape(), b.shape()));
    }
    let mut out = a.clone();
    out.add_assign(b);
    Ok(out)
}

/// How the second operand of [`mul`] broadcasts against the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Broadcast {
    Full,
    /// `n x c x 1 x 1` gate per channel.
    PerChannel,
    /// `n x 1 x h x w` gate per pixel.
    PerPixel,
}

fn broadcast_kind<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Broadcast> {
    let [n, c, h, w] = a.shape();
    match b.shape() {
        s if s == [n, c, h, w] => Ok(Broadcast::Full),
        s if s == [n, c, 1, 1] => Ok(Broadcast::PerChannel),
        s if s == [n, 1, h, w] => Ok(Broadcast::PerPixel),
        s => Err(shape_err!("cannot multiply {:?} by {:?}", a.shape(), s)),
    }
}

pub fn mul<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    let kind = broadcast_kind(a, b)?;
    let [n, c, h, w] = a.shape();
    let hw = h * w;
    let mut out = a.clone();
    let od = out.data_mut();
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * hw;
            let dst = &mut od[base..base + hw];
            match kind {
                Broadcast::Full => {
                    for (o, &g) in dst.iter_mut().zip(&b.data()[base..base + hw]) {
                        *o *= g;
                    }
                }
                Broadcast::PerChannel => {
                    let g = b.data()[i * c + ch];
                    dst.iter_mut().for_each(|o| *o *= g);
                }
                Broadcast::PerPixel => {
                    for (o, &g) in dst.iter_mut().zip(&b.data()[i * hw..(i + 1) * hw]) {
                        *o *= g;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of `a * b` (with broadcasting of `b`).
pub fn mul_backward<T: Scalar>(
    a: &Tensor4<T>,
    b: &Tensor4<T>,
    dy: &Tensor4<T>,
) -> Result<(Tensor4<T>, Tensor4<T>)> {
    let kind = broadcast_kind(a, b)?;
    if dy.shape() != a.shape() {
        return Err(shape_err!("mul gradient shape {:?}", dy.shape()));
    }
    let da = mul(dy, b)?;
    let [n, c, h, w] = a.shape();
    let hw = h * w;
    let mut db = Tensor4::zeros(b.n(), b.c(), b.h(), b.w());
    let (ad, gd) = (a.data(), dy.data());
    match kind {
        Broadcast::Full => {
            for ((d, &x), &g) in db.data_mut().iter_mut().zip(ad).zip(gd) {
                *d = x * g;
            }
        }
        Broadcast::PerChannel => {
            for i in 0..n {
                for ch in 0..c {
                    let base = (i * c + ch) * hw;
                    let s: f64 = ad[base..base + hw]
                        .iter()
                        .zip(&gd[base..base + hw])
                        .map(|(&x, &g)| (x * g).to_f64())
                        .sum();
                    db.data_mut()[i * c + ch] = T::from_f64(s);
                }
            }
        }
        Broadcast::PerPixel => {
            for i in 0..n {
                let dst = &mut db.data_mut()[i * hw..(i + 1) * hw];
                for ch in 0..c {
                    let base = (i * c + ch) * hw;
                    for ((d, &x), &g) in dst
                        .iter_mut()
                        .zip(&ad[base..base + hw])
                        .zip(&gd[base..base + hw])
                    {
                        *d += x * g;
                    }
                }
            }
        }
    }
    Ok((da, db))
}

pub fn concat_channels<T: Scalar>(parts: &[&Tensor4<T>]) -> Result<Tensor4<T>> {
    let first = parts.first().ok_or_else(|| shape_err!("concat of nothing"))?;
    let [n, _, h, w] = first.shape();
    if parts.iter().any(|p| p.n() != n || p.h() != h || p.w() != w) {
        return Err(shape_err!("concat of tensors with different n/h/w"));
    }
    let c: usize = parts.iter().map(|p| p.c()).sum();
    let mut data = Vec::with_capacity(n * c * h * w);
    for i in 0..n {
        for p in parts {
            data.extend_from_slice(p.item(i));
        }
    }
    Tensor4::from_vec(n, c, h, w, data)
}

/// Splits along channels into pieces of the given sizes.
pub fn split_channels<T: Scalar>(x: &Tensor4<T>, sizes: &[usize]) -> Result<Vec<Tensor4<T>>> {
    if sizes.iter().sum::<usize>() != x.c() {
        return Err(shape_err!(
            "split sizes {:?} do not sum to {} channels",
            sizes,
            x.c()
        ));
    }
    let [n, _, h, w] = x.shape();
    let hw = h * w;
    let mut out: Vec<Vec<T>> = sizes.iter().map(|&s| Vec::with_capacity(n * s * hw)).collect();
    for i in 0..n {
        let item = x.item(i);
        let mut off = 0;
        for (o, &s) in out.iter_mut().zip(sizes) {
            o.extend_from_slice(&item[off * hw..(off + s) * hw]);
            off += s;
        }
    }
    out.into_iter()
        .zip(sizes)
        .map(|(d, &s)| Tensor4::from_vec(n, s, h, w, d))
        .collect()
}

pub fn global_avg_pool<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    let [n, c, h, w] = x.shape();
    let hw = h * w;
    let data = x
        .data()
        .chunks(hw)
        .map(|p| T::from_f64(p.iter().map(|v| v.to_f64()).sum::<f64>() / hw as f64))
        .collect();
    Tensor4::from_vec(n, c, 1, 1, data).expect("pool shape")
}

pub fn global_avg_pool_backward<T: Scalar>(dy: &Tensor4<T>, h: usize, w: usize) -> Tensor4<T> {
    let [n, c, _, _] = dy.shape();
    let hw = h * w;
    let scale = T::from_f64(1.0 / hw as f64);
    let mut data = Vec::with_capacity(n * c * hw);
    for &g in dy.data() {
        data.extend(std::iter::repeat_n(g * scale, hw));
    }
    Tensor4::from_vec(n, c, h, w, data).expect("pool shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, c: usize, h: usize, w: usize, rng: &mut impl Rng) -> Tensor4<f64> {
        let data = (0..n * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor4::from_vec(n, c, h, w, data).unwrap()
    }

    /// Quadruple-loop reference cross-correlation.
    fn conv_oracle(x: &Tensor4<f64>, wt: &[f64], b: &[f64], cs: &ConvShape) -> Tensor4<f64> {
        let k = cs.kernel as isize;
        let p = match cs.padding {
            Padding::Same => k / 2,
            Padding::None => 0,
        };
        let [n, _, h, w] = x.shape();
        let oh = h as isize + 2 * p - k + 1;
        let ow = w as isize + 2 * p - k + 1;
        let mut out = Vec::new();
        for i in 0..n {
            for co in 0..cs.cout {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b[co];
                        for ci in 0..cs.cin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = oy + ky - p;
                                    let ix = ox + kx - p;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let wi = ((co * cs.cin + ci) * cs.kernel + ky as usize)
                                        * cs.kernel
                                        + kx as usize;
                                    acc += wt[wi] * x.at(i, ci, iy as usize, ix as usize);
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        Tensor4::from_vec(n, cs.cout, oh as usize, ow as usize, out).unwrap()
    }

    #[test]
    fn identity_1x1() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(2, 3, 4, 5, &mut rng);
        let cs = ConvShape::new(3, 3, 1);
        let mut wt = vec![0.0; 9];
        for c in 0..3 {
            wt[c * 3 + c] = 1.0;
        }
        let y = conv2d_forward(&x, &wt, &[0.0; 3], &cs).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_on_one_hot() {
        let mut x = Tensor4::<f64>::zeros(1, 1, 5, 5);
        x.data_mut()[2 * 5 + 2] = 1.0;
        let cs = ConvShape::new(1, 1, 3);
        let y = conv2d_forward(&x, &[1.0; 9], &[0.0], &cs).unwrap();
        for yy in 0..5 {
            for xx in 0..5 {
                let inside = (1..=3).contains(&yy) && (1..=3).contains(&xx);
                assert_eq!(y.at(0, 0, yy, xx), if inside { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn conv_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (cin, cout, k, pad, h, w) in [
            (3, 4, 3, Padding::Same, 5, 6),
            (2, 5, 1, Padding::Same, 4, 3),
            (3, 2, 3, Padding::None, 6, 5),
            (1, 1, 3, Padding::Same, 1, 1),
        ] {
            let cs = ConvShape {
                cin,
                cout,
                kernel: k,
                padding: pad,
            };
            let x = random(2, cin, h, w, &mut rng);
            let wt: Vec<f64> = (0..cs.weight_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = conv2d_forward(&x, &wt, &b, &cs).unwrap();
            let want = conv_oracle(&x, &wt, &b, &cs);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-5);
            }
            // f32 path agrees as well
            let got32 = conv2d_forward(
                &x.cast::<f32>(),
                &wt.iter().map(|&v| v as f32).collect::<Vec<_>>(),
                &b.iter().map(|&v| v as f32).collect::<Vec<_>>(),
                &cs,
            )
            .unwrap();
            for (a, b) in got32.data().iter().zip(want.data()) {
                assert!((*a as f64 - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn conv_channel_mismatch() {
        let x = Tensor4::<f32>::zeros(1, 2, 3, 3);
        let cs = ConvShape::new(3, 1, 3);
        assert!(conv2d_forward(&x, &[0.0; 27], &[0.0], &cs).is_err());
    }

    #[test]
    fn conv_backward_zero_and_single_pixel() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cs = ConvShape::new(2, 3, 3);
        let x = random(1, 2, 5, 5, &mut rng);
        let wt: Vec<f64> = (0..cs.weight_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dy = Tensor4::zeros(1, 3, 5, 5);
        let (dx, dw, db) = conv2d_backward(&x, &wt, &cs, &dy).unwrap();
        assert!(dx.data().iter().chain(&dw).chain(&db).all(|&v| v == 0.0));

        // one-hot output gradient at (co=1, y=2, x=3): dW[1] equals the input window
        let mut dy = Tensor4::zeros(1, 3, 5, 5);
        dy.data_mut()[(5 + 2) * 5 + 3] = 1.0;
        let (_, dw, db) = conv2d_backward(&x, &wt, &cs, &dy).unwrap();
        assert_eq!(db, vec![0.0, 1.0, 0.0]);
        for co in 0..3 {
            for ci in 0..2 {
                for ky in 0..3 {
                    for kx in 0..3 {
                        let g = dw[((co * 2 + ci) * 3 + ky) * 3 + kx];
                        let want = if co == 1 { x.at(0, ci, 1 + ky, 2 + kx) } else { 0.0 };
                        assert_eq!(g, want);
                    }
                }
            }
        }
    }

    #[test]
    fn conv_backward_is_adjoint() {
        // <conv(x), dy> == <x, conv^T(dy)> for the linear part
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cs = ConvShape::new(3, 2, 3);
        let x = random(2, 3, 4, 6, &mut rng);
        let wt: Vec<f64> = (0..cs.weight_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = conv2d_forward(&x, &wt, &[0.0; 2], &cs).unwrap();
        let dy = random(2, 2, 4, 6, &mut rng);
        let (dx, dw, _) = conv2d_backward(&x, &wt, &cs, &dy).unwrap();
        let lhs: f64 = y.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(dx.data()).map(|(a, b)| a * b).sum();
        let rhs_w: f64 = wt.iter().zip(&dw).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        assert!((lhs - rhs_w).abs() < 1e-10);
    }

    #[test]
    fn pointwise_basics() {
        let x = Tensor4::from_vec(1, 1, 1, 3, vec![-1.0f64, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(sigmoid(&Tensor4::<f64>::zeros(1, 1, 1, 1)).data(), &[0.5]);
        let c = Tensor4::<f64>::filled(2, 3, 4, 5, 0.7);
        let p = global_avg_pool(&c);
        assert_eq!(p.shape(), [2, 3, 1, 1]);
        assert!(p.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
        assert!(add(&c, &Tensor4::zeros(2, 3, 4, 4)).is_err());
    }

    #[test]
    fn concat_split_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random(2, 1, 3, 3, &mut rng);
        let b = random(2, 4, 3, 3, &mut rng);
        let c = random(2, 2, 3, 3, &mut rng);
        let cat = concat_channels(&[&a, &b, &c]).unwrap();
        assert_eq!(cat.shape(), [2, 7, 3, 3]);
        let parts = split_channels(&cat, &[1, 4, 2]).unwrap();
        assert_eq!(parts, vec![a, b, c]);
        assert!(split_channels(&cat, &[3, 3]).is_err());
    }

    #[test]
    fn mul_broadcasts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random(2, 3, 2, 2, &mut rng);
        let gc = random(2, 3, 1, 1, &mut rng);
        let gp = random(2, 1, 2, 2, &mut rng);
        let y = mul(&a, &gc).unwrap();
        assert_eq!(y.at(1, 2, 1, 0), a.at(1, 2, 1, 0) * gc.at(1, 2, 0, 0));
        let y = mul(&a, &gp).unwrap();
        assert_eq!(y.at(1, 2, 1, 0), a.at(1, 2, 1, 0) * gp.at(1, 0, 1, 0));
        assert!(mul(&a, &Tensor4::zeros(2, 2, 1, 1)).is_err());

        // gradient of sum(a*g) wrt g is the per-channel / per-pixel sum of a
        let ones = Tensor4::filled(2, 3, 2, 2, 1.0);
        let (_, dgc) = mul_backward(&a, &gc, &ones).unwrap();
        let s: f64 = (0..2).flat_map(|y| (0..2).map(move |x| (y, x))).map(|(y, x)| a.at(0, 1, y, x)).sum();
        assert!((dgc.at(0, 1, 0, 0) - s).abs() < 1e-12);
        let (_, dgp) = mul_backward(&a, &gp, &ones).unwrap();
        let s: f64 = (0..3).map(|c| a.at(1, c, 0, 1)).sum();
        assert!((dgp.at(1, 0, 0, 1) - s).abs() < 1e-12);
    }
}
