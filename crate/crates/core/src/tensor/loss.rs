use super::{Scalar, Tensor4};
use crate::error::{shape_err, Result};

/// Mean absolute error and its gradient `sign(pred - target) / count`, with
/// `sign(0) = 0`. The loss is accumulated in `f64`.
pub fn l1_loss<T: Scalar>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<(f64, Tensor4<T>)> {
    if pred.shape() != target.shape() {
        return Err(shape_err!(
            "l1 loss on {:?} vs {:?}",
            pred.shape(),
            target.shape()
        ));
    }
    let count = pred.len() as f64;
    let inv = T::from_f64(1.0 / count);
    let mut sum = 0f64;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p - t;
        sum += d.to_f64().abs();
        grad.push(if d > T::ZERO {
            inv
        } else if d < T::ZERO {
            -inv
        } else {
            T::ZERO
        });
    }
    let [n, c, h, w] = pred.shape();
    Ok((sum / count, Tensor4::from_vec(n, c, h, w, grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_inputs_give_zero() {
        let a = Tensor4::<f32>::filled(2, 3, 4, 4, 0.3);
        let (l, g) = l1_loss(&a, &a).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_offset() {
        let t = Tensor4::<f64>::filled(1, 2, 3, 5, 0.25);
        let p = t.map(|v| v + 0.5);
        let (l, g) = l1_loss(&p, &t).unwrap();
        assert!((l - 0.5).abs() < 1e-12);
        assert!(g.data().iter().all(|&v| (v - 1.0 / 30.0).abs() < 1e-15));
    }

    #[test]
    fn permutation_invariant() {
        let p: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let t: Vec<f64> = (0..12).map(|i| (i as f64 * 0.11).cos()).collect();
        let perm = [5, 2, 11, 0, 7, 1, 9, 3, 10, 4, 8, 6];
        let pa = Tensor4::from_vec(1, 1, 3, 4, p.clone()).unwrap();
        let ta = Tensor4::from_vec(1, 1, 3, 4, t.clone()).unwrap();
        let pb = Tensor4::from_vec(1, 1, 3, 4, perm.iter().map(|&i| p[i]).collect()).unwrap();
        let tb = Tensor4::from_vec(1, 1, 3, 4, perm.iter().map(|&i| t[i]).collect()).unwrap();
        let (la, _) = l1_loss(&pa, &ta).unwrap();
        let (lb, _) = l1_loss(&pb, &tb).unwrap();
        assert!((la - lb).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let a = Tensor4::<f32>::zeros(1, 1, 2, 2);
        let b = Tensor4::<f32>::zeros(1, 1, 2, 3);
        assert!(l1_loss(&a, &b).is_err());
    }
}
