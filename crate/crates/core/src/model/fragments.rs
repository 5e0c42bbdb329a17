//! Small `f64` computations for gradient checking: each network unit followed
//! by an L1 loss against a fixed target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    ChannelAttention, ChannelAttentionCache, Conv2d, DabCache, DenseAttentionBlock,
    SpatialAttention, SpatialAttentionCache,
};
use super::{Asdn, ModelConfig, TrainCache};
use crate::error::Result;
use crate::tensor::gradcheck::GradFragment;
use crate::tensor::{l1_loss, Parameter, Tensor4};

/// A unit with parameter gradients, viewed as a map from one tensor to another.
pub trait Differentiable {
    type Cache;
    fn forward(&self, x: &Tensor4<f64>) -> Result<(Tensor4<f64>, Self::Cache)>;
    fn backward(&mut self, x: &Tensor4<f64>, c: &Self::Cache, dy: &Tensor4<f64>) -> Result<()>;
    fn params_mut(&mut self) -> Vec<&mut Parameter<f64>>;
}

impl Differentiable for Conv2d<f64> {
    type Cache = ();
    fn forward(&self, x: &Tensor4<f64>) -> Result<(Tensor4<f64>, ())> {
        Ok((Conv2d::forward(self, x)?, ()))
    }
    fn backward(&mut self, x: &Tensor4<f64>, _: &(), dy: &Tensor4<f64>) -> Result<()> {
        Conv2d::backward(self, x, dy, false).map(|_| ())
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter<f64>> {
        Conv2d::params_mut(self).into_iter().collect()
    }
}

impl Differentiable for ChannelAttention<f64> {
    type Cache = ChannelAttentionCache<f64>;
    fn forward(&self, x: &Tensor4<f64>) -> Result<(Tensor4<f64>, Self::Cache)> {
        ChannelAttention::forward(self, x.clone())
    }
    fn backward(&mut self, _: &Tensor4<f64>, c: &Self::Cache, dy: &Tensor4<f64>) -> Result<()> {
        ChannelAttention::backward(self, c, dy).map(|_| ())
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter<f64>> {
        ChannelAttention::params_mut(self)
    }
}

impl Differentiable for SpatialAttention<f64> {
    type Cache = SpatialAttentionCache<f64>;
    fn forward(&self, x: &Tensor4<f64>) -> Result<(Tensor4<f64>, Self::Cache)> {
        SpatialAttention::forward(self, x.clone())
    }
    fn backward(&mut self, _: &Tensor4<f64>, c: &Self::Cache, dy: &Tensor4<f64>) -> Result<()> {
        SpatialAttention::backward(self, c, dy).map(|_| ())
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter<f64>> {
        SpatialAttention::params_mut(self)
    }
}

impl Differentiable for DenseAttentionBlock<f64> {
    type Cache = DabCache<f64>;
    fn forward(&self, x: &Tensor4<f64>) -> Result<(Tensor4<f64>, Self::Cache)> {
        DenseAttentionBlock::forward(self, x.clone())
    }
    fn backward(&mut self, _: &Tensor4<f64>, c: &Self::Cache, dy: &Tensor4<f64>) -> Result<()> {
        DenseAttentionBlock::backward(self, c, dy).map(|_| ())
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter<f64>> {
        DenseAttentionBlock::params_mut(self)
    }
}

/// The whole network evaluated at one level.
pub struct AsdnLevel {
    pub model: Asdn<f64>,
    pub level: usize,
}

impl Differentiable for AsdnLevel {
    type Cache = TrainCache<f64>;
    fn forward(&self, x: &Tensor4<f64>) -> Result<(Tensor4<f64>, Self::Cache)> {
        self.model.forward_train(x, self.level)
    }
    fn backward(&mut self, _: &Tensor4<f64>, c: &Self::Cache, dy: &Tensor4<f64>) -> Result<()> {
        self.model.backward(c, dy)
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter<f64>> {
        self.model.params_mut()
    }
}

/// `loss = mean |unit(x) - target|`.
pub struct Fragment<U> {
    pub name: String,
    pub unit: U,
    pub input: Tensor4<f64>,
    pub target: Tensor4<f64>,
}

impl<U: Differentiable> Fragment<U> {
    /// The target is the initial output shifted by `0.5..1.0` with random
    /// sign per element, so small parameter steps never cross the L1 kink.
    pub fn new(name: &str, unit: U, input: Tensor4<f64>, rng: &mut impl Rng) -> Result<Self> {
        let (mut target, _) = unit.forward(&input)?;
        for v in target.data_mut() {
            let off: f64 = rng.gen_range(0.5..1.0);
            *v += if rng.gen::<bool>() { off } else { -off };
        }
        Ok(Self {
            name: name.to_string(),
            unit,
            input,
            target,
        })
    }
}

impl<U: Differentiable> GradFragment for Fragment<U> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn parameters(&mut self) -> Vec<&mut Parameter<f64>> {
        self.unit.params_mut()
    }

    fn loss(&self) -> Result<f64> {
        let (y, _) = self.unit.forward(&self.input)?;
        Ok(l1_loss(&y, &self.target)?.0)
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        let (y, cache) = self.unit.forward(&self.input)?;
        let (loss, dy) = l1_loss(&y, &self.target)?;
        self.unit.backward(&self.input, &cache, &dy)?;
        Ok(loss)
    }
}

fn random_input(n: usize, c: usize, h: usize, w: usize, rng: &mut impl Rng) -> Tensor4<f64> {
    let data = (0..n * c * h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
    Tensor4::from_vec(n, c, h, w, data).expect("sized")
}

pub fn conv_fragment(seed: u64) -> Result<Fragment<Conv2d<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conv = Conv2d::new("conv", 4, 5, 3, 1.0, &mut rng);
    let x = random_input(2, 4, 6, 7, &mut rng);
    Fragment::new("conv3x3", conv, x, &mut rng)
}

pub fn ca_fragment(seed: u64) -> Result<Fragment<ChannelAttention<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ca = ChannelAttention::new("ca", 8, 2, &mut rng);
    let x = random_input(2, 8, 5, 5, &mut rng);
    Fragment::new("channel attention", ca, x, &mut rng)
}

pub fn sa_fragment(seed: u64) -> Result<Fragment<SpatialAttention<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sa = SpatialAttention::new("sa", 3, 3, &mut rng);
    let x = random_input(2, 3, 6, 5, &mut rng);
    Fragment::new("spatial attention", sa, x, &mut rng)
}

pub fn dab_fragment(seed: u64) -> Result<Fragment<DenseAttentionBlock<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dab = DenseAttentionBlock::new("dab", 4, 4, 2, Some(2), &mut rng);
    let x = random_input(2, 4, 6, 6, &mut rng);
    Fragment::new("dense attention block", dab, x, &mut rng)
}

/// The whole network at `config`, trained at `level`.
pub fn asdn_fragment(config: &ModelConfig, level: usize, seed: u64) -> Result<Fragment<AsdnLevel>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = Asdn::<f64>::build(config)?;
    let x = random_input(1, 3, 10, 9, &mut rng);
    Fragment::new(
        &format!("asdn level {level}"),
        AsdnLevel { model, level },
        x,
        &mut rng,
    )
}

/// Every unit plus the desk-scale network.
pub fn standard_fragments(seed: u64) -> Result<Vec<Box<dyn GradFragment>>> {
    Ok(vec![
        Box::new(conv_fragment(seed)?),
        Box::new(ca_fragment(seed)?),
        Box::new(sa_fragment(seed)?),
        Box::new(dab_fragment(seed)?),
        Box::new(asdn_fragment(&ModelConfig::desk(), 4, seed)?),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{finite_diff_check, GradCheckOptions};

    #[test]
    fn units_pass() {
        let opts = GradCheckOptions::default();
        for mut f in standard_fragments(1).unwrap() {
            let r = finite_diff_check(f.as_mut(), &opts).unwrap();
            assert!(r.passed(1e-4), "{r:?}");
            assert!(r.checked > 10);
        }
    }
}
