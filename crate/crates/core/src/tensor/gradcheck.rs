//! Central-difference gradient checking in `f64`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Parameter;
use crate::error::{invalid, Error, Result};

/// A small differentiable computation with a scalar loss over its parameters.
pub trait GradFragment {
    fn name(&self) -> String;
    fn parameters(&mut self) -> Vec<&mut Parameter<f64>>;
    /// Forward only.
    fn loss(&self) -> Result<f64>;
    /// Forward and backward; gradients are accumulated into the parameters.
    fn loss_and_grad(&mut self) -> Result<f64>;

    fn param_count(&mut self) -> usize {
        self.parameters().iter().map(|p| p.numel()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Entries sampled per parameter tensor; smaller tensors are checked fully.
    pub samples_per_param: usize,
    /// Lower bound of the relative-error denominator, so entries whose true
    /// gradient vanishes are compared absolutely.
    pub floor: f64,
    pub seed: u64,
    pub max_params: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            samples_per_param: 24,
            floor: 1e-6,
            seed: 0,
            max_params: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub fragment: String,
    pub max_rel_error: f64,
    /// `parameter[index]` where the worst error occurred.
    pub worst: String,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

/// Compares analytic parameter gradients with central differences and returns
/// the largest relative error over the sampled entries.
pub fn finite_diff_check(
    frag: &mut dyn GradFragment,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let total = frag.param_count();
    if total >= opts.max_params {
        return Err(invalid!(
            "fragment has {total} parameters; gradient checks are limited to {}",
            opts.max_params
        ));
    }
    for p in frag.parameters() {
        p.zero_grad();
    }
    let base = frag.loss_and_grad()?;
    if !base.is_finite() {
        return Err(Error::NonFiniteLoss { step: 0 });
    }
    let analytic: Vec<Vec<f64>> = frag.parameters().iter().map(|p| p.grad.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut report = GradCheckReport {
        fragment: frag.name(),
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let n_params = analytic.len();
    for pi in 0..n_params {
        let numel = analytic[pi].len();
        let picks: Vec<usize> = if numel <= opts.samples_per_param {
            (0..numel).collect()
        } else {
            let mut v = sample(&mut rng, numel, opts.samples_per_param).into_vec();
            v.sort_unstable();
            v
        };
        for idx in picks {
            let original = frag.parameters()[pi].value[idx];
            frag.parameters()[pi].value[idx] = original + opts.step;
            let plus = frag.loss()?;
            frag.parameters()[pi].value[idx] = original - opts.step;
            let minus = frag.loss()?;
            frag.parameters()[pi].value[idx] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFiniteLoss { step: 0 });
            }
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic[pi][idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            report.checked += 1;
            if report.worst.is_empty() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                let name = &frag.parameters()[pi].name;
                report.worst = format!("{name}[{idx}] analytic {a:.6e} numeric {numeric:.6e}");
            }
        }
    }
    Ok(report)
}

/// Wraps a fragment and scales its analytic gradients, for negative controls.
pub struct Corrupted<F> {
    pub inner: F,
    pub factor: f64,
}

impl<F: GradFragment> GradFragment for Corrupted<F> {
    fn name(&self) -> String {
        format!("corrupted({})", self.inner.name())
    }

    fn parameters(&mut self) -> Vec<&mut Parameter<f64>> {
        self.inner.parameters()
    }

    fn loss(&self) -> Result<f64> {
        self.inner.loss()
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        let l = self.inner.loss_and_grad()?;
        for p in self.inner.parameters() {
            p.grad.iter_mut().for_each(|g| *g *= self.factor);
        }
        Ok(l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// loss = sum_i c_i * x_i^2 (smooth, exact gradient 2 c_i x_i)
    struct Quadratic {
        p: Parameter<f64>,
        c: Vec<f64>,
        wrong: bool,
    }

    impl GradFragment for Quadratic {
        fn name(&self) -> String {
            "quadratic".into()
        }
        fn parameters(&mut self) -> Vec<&mut Parameter<f64>> {
            vec![&mut self.p]
        }
        fn loss(&self) -> Result<f64> {
            Ok(self.p.value.iter().zip(&self.c).map(|(x, c)| c * x * x).sum())
        }
        fn loss_and_grad(&mut self) -> Result<f64> {
            for i in 0..self.c.len() {
                let g = 2.0 * self.c[i] * self.p.value[i];
                self.p.grad[i] += if self.wrong && i == 3 { g * 1.5 } else { g };
            }
            self.loss()
        }
    }

    fn quad(wrong: bool) -> Quadratic {
        let mut p = Parameter::zeros("x", &[6]);
        p.value = vec![0.3, -1.2, 2.0, 0.7, -0.1, 1.1];
        Quadratic {
            p,
            c: vec![1.0, 0.5, -2.0, 3.0, 0.25, 1.5],
            wrong,
        }
    }

    #[test]
    fn exact_gradient_passes() {
        let r = finite_diff_check(&mut quad(false), &GradCheckOptions::default()).unwrap();
        assert_eq!(r.checked, 6);
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let r = finite_diff_check(&mut quad(true), &GradCheckOptions::default()).unwrap();
        assert!(r.max_rel_error > 0.3);
        assert!(r.worst.starts_with("x[3]"));
        let mut c = Corrupted {
            inner: quad(false),
            factor: 1.1,
        };
        let r = finite_diff_check(&mut c, &GradCheckOptions::default()).unwrap();
        assert!(r.max_rel_error > 1e-2);
    }
}
