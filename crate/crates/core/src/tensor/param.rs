use rand::Rng;

use super::Scalar;

/// A trainable tensor with its gradient and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T = f32> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            value: vec![T::ZERO; n],
            grad: vec![T::ZERO; n],
            m: vec![T::ZERO; n],
            v: vec![T::ZERO; n],
        }
    }

    /// He-uniform initialization: `U(-b, b)` with `b = gain * sqrt(6 / fan_in)`.
    pub fn he_uniform(
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        gain: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut p = Self::zeros(name, shape);
        let bound = gain * (6.0 / fan_in as f64).sqrt();
        for v in &mut p.value {
            *v = T::from_f64(rng.gen_range(-bound..bound));
        }
        p
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::ZERO);
    }

    pub fn reset_optimizer_state(&mut self) {
        self.m.iter_mut().for_each(|g| *g = T::ZERO);
        self.v.iter_mut().for_each(|g| *g = T::ZERO);
    }

    pub fn cast<U: Scalar>(&self) -> Parameter<U> {
        let conv = |s: &[T]| s.iter().map(|&x| U::from_f64(x.to_f64())).collect();
        Parameter {
            name: self.name.clone(),
            shape: self.shape.clone(),
            value: conv(&self.value),
            grad: conv(&self.grad),
            m: conv(&self.m),
            v: conv(&self.v),
        }
    }
}
