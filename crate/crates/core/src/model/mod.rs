//! The multi-branch network: a shared feature mapping branch of densely
//! connected attention blocks, feeding one reconstruction branch per pyramid
//! level.

mod checkpoint;
mod config;
pub mod fragments;
pub mod layers;

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{param_count, unit_counts, ModelConfig, UnitCounts};

use crate::error::{invalid, shape_err, Result};
use crate::imaging::ImagePlanar;
use crate::lfr::{LevelPredictor, PyramidOutputs};
use crate::tensor::ops::concat_channels;
use crate::tensor::{Parameter, Scalar, Tensor4};
use layers::{
    BranchCache, Conv2d, DabCache, DenseAttentionBlock, ReconstructionBranch, LINEAR_GAIN,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Asdn<T: Scalar = f32> {
    config: ModelConfig,
    head: Conv2d<T>,
    blocks: Vec<DenseAttentionBlock<T>>,
    /// `fuse[k]` compresses the head output and the first `k + 1` block
    /// outputs. The last one produces the shared features.
    fuse: Vec<Conv2d<T>>,
    branches: Vec<ReconstructionBranch<T>>,
}

/// Everything a backward pass for one level needs.
pub struct TrainCache<T: Scalar> {
    level: usize,
    input: Tensor4<T>,
    head: Tensor4<T>,
    block_out: Vec<Tensor4<T>>,
    blocks: Vec<DabCache<T>>,
    features: Tensor4<T>,
    branch: BranchCache<T>,
}

impl<T: Scalar> Asdn<T> {
    /// Deterministic initialization from `config.seed`.
    pub fn build(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let c = config.base_channels;
        let head = Conv2d::new("head", 3, c, 3, LINEAR_GAIN, &mut rng);
        let ca = config.ca_enabled.then_some(config.ca_reduction);
        let blocks = (0..config.num_blocks)
            .map(|b| {
                DenseAttentionBlock::new(
                    &format!("blocks.{b}"),
                    c,
                    config.growth_channels,
                    config.dense_layers,
                    ca,
                    &mut rng,
                )
            })
            .collect();
        let fuse = (1..=config.num_blocks)
            .map(|k| Conv2d::new(&format!("fuse.{k}"), (k + 1) * c, c, 1, LINEAR_GAIN, &mut rng))
            .collect();
        let sa = config.sa_enabled.then_some(config.sa_channels);
        let branches = (0..config.level_count)
            .map(|l| {
                ReconstructionBranch::new(&format!("irb.{l}"), c, sa, config.sc_enabled, &mut rng)
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            head,
            blocks,
            fuse,
            branches,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn level_count(&self) -> usize {
        self.branches.len()
    }

    /// All parameters in a fixed order with unique names.
    pub fn params(&self) -> Vec<&Parameter<T>> {
        let mut v: Vec<&Parameter<T>> = self.head.params().to_vec();
        for b in &self.blocks {
            v.extend(b.params());
        }
        for f in &self.fuse {
            v.extend(f.params());
        }
        for br in &self.branches {
            v.extend(br.params());
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v: Vec<&mut Parameter<T>> = self.head.params_mut().into_iter().collect();
        for b in &mut self.blocks {
            v.extend(b.params_mut());
        }
        for f in &mut self.fuse {
            v.extend(f.params_mut());
        }
        for br in &mut self.branches {
            v.extend(br.params_mut());
        }
        v
    }

    /// Parameters of one reconstruction branch.
    pub fn branch_params(&self, level: usize) -> Vec<&Parameter<T>> {
        self.branches[level].params()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Sets every weight and bias to zero.
    pub fn zero_parameters(&mut self) {
        for p in self.params_mut() {
            p.value.iter_mut().for_each(|v| *v = T::ZERO);
        }
    }

    pub fn cast<U: Scalar>(&self) -> Asdn<U> {
        Asdn {
            config: self.config.clone(),
            head: self.head.cast(),
            blocks: self.blocks.iter().map(|b| b.cast()).collect(),
            fuse: self.fuse.iter().map(|f| f.cast()).collect(),
            branches: self.branches.iter().map(|b| b.cast()).collect(),
        }
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        if x.c() != 3 {
            return Err(shape_err!("model input needs 3 channels, got {}", x.c()));
        }
        if x.is_empty() {
            return Err(shape_err!("empty model input"));
        }
        Ok(())
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level >= self.branches.len() {
            return Err(invalid!(
                "level {level} out of range for {} levels",
                self.branches.len()
            ));
        }
        Ok(())
    }

    /// Shared features. Block caches are kept only when `keep` is set.
    fn fmb(
        &self,
        x: &Tensor4<T>,
        keep: bool,
    ) -> Result<(Tensor4<T>, Option<FmbCache<T>>)> {
        let head = self.head.forward(x)?;
        let mut block_out: Vec<Tensor4<T>> = Vec::with_capacity(self.blocks.len());
        let mut caches = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            let input = if b == 0 {
                head.clone()
            } else {
                self.fuse_forward(b - 1, &head, &block_out)?
            };
            let (y, cache) = block.forward(input)?;
            if keep {
                caches.push(cache);
            }
            block_out.push(y);
        }
        let features = self.fuse_forward(self.blocks.len() - 1, &head, &block_out)?;
        let cache = keep.then_some(FmbCache {
            head,
            block_out,
            blocks: caches,
        });
        Ok((features, cache))
    }

    fn fuse_forward(
        &self,
        k: usize,
        head: &Tensor4<T>,
        outs: &[Tensor4<T>],
    ) -> Result<Tensor4<T>> {
        let mut parts = vec![head];
        parts.extend(&outs[..=k]);
        self.fuse[k].forward(&concat_channels(&parts)?)
    }

    /// Evaluates the shared branch once and the requested level branches.
    pub fn forward(&self, x: &Tensor4<T>, levels: &[usize]) -> Result<BTreeMap<usize, Tensor4<T>>> {
        self.check_input(x)?;
        if levels.is_empty() {
            return Err(invalid!("no levels requested"));
        }
        for &l in levels {
            self.check_level(l)?;
        }
        let (features, _) = self.fmb(x, false)?;
        let mut out = BTreeMap::new();
        for &l in levels {
            if let Entry::Vacant(e) = out.entry(l) {
                let (y, _) = self.branches[l].forward(&features, x)?;
                e.insert(y);
            }
        }
        Ok(out)
    }

    /// Forward pass for one level that keeps what [`backward`](Self::backward) needs.
    pub fn forward_train(&self, x: &Tensor4<T>, level: usize) -> Result<(Tensor4<T>, TrainCache<T>)> {
        self.check_input(x)?;
        self.check_level(level)?;
        let (features, fmb) = self.fmb(x, true)?;
        let fmb = fmb.expect("kept");
        let (y, branch) = self.branches[level].forward(&features, x)?;
        Ok((
            y,
            TrainCache {
                level,
                input: x.clone(),
                head: fmb.head,
                block_out: fmb.block_out,
                blocks: fmb.blocks,
                features,
                branch,
            },
        ))
    }

    /// Accumulates parameter gradients of a loss whose gradient with respect
    /// to the level output is `dy`. Only the cached level's branch is touched.
    pub fn backward(&mut self, cache: &TrainCache<T>, dy: &Tensor4<T>) -> Result<()> {
        let c = self.config.base_channels;
        let nb = self.blocks.len();
        let dfeat = self.branches[cache.level].backward(&cache.branch, &cache.features, dy)?;

        // Gradients flowing into the head output and each block output.
        let mut dhead = Tensor4::zeros(cache.head.n(), c, cache.head.h(), cache.head.w());
        let mut dout: Vec<Tensor4<T>> = (0..nb).map(|_| dhead.clone()).collect();

        let fuse_back = |this: &mut Self,
                             k: usize,
                             dy: &Tensor4<T>,
                             dhead: &mut Tensor4<T>,
                             dout: &mut [Tensor4<T>]|
         -> Result<()> {
            let mut parts = vec![&cache.head];
            parts.extend(&cache.block_out[..=k]);
            let cat = concat_channels(&parts)?;
            let dcat = this.fuse[k].backward(&cat, dy, true)?.expect("dx");
            let pieces = crate::tensor::ops::split_channels(&dcat, &vec![c; k + 2])?;
            dhead.add_assign(&pieces[0]);
            for (acc, p) in dout.iter_mut().zip(&pieces[1..]) {
                acc.add_assign(p);
            }
            Ok(())
        };

        fuse_back(self, nb - 1, &dfeat, &mut dhead, &mut dout)?;
        for b in (0..nb).rev() {
            let dx = self.blocks[b].backward(&cache.blocks[b], &dout[b])?;
            if b == 0 {
                dhead.add_assign(&dx);
            } else {
                fuse_back(self, b - 1, &dx, &mut dhead, &mut dout)?;
            }
        }
        self.head.backward(&cache.input, &dhead, false)?;
        Ok(())
    }
}

struct FmbCache<T: Scalar> {
    head: Tensor4<T>,
    block_out: Vec<Tensor4<T>>,
    blocks: Vec<DabCache<T>>,
}

impl LevelPredictor for Asdn<f32> {
    fn level_count(&self) -> usize {
        self.branches.len()
    }

    fn predict_levels(&self, input: &ImagePlanar, levels: &[usize]) -> Result<PyramidOutputs> {
        let x = Tensor4::<f32>::from_image(input);
        let mut out = PyramidOutputs::new();
        for (l, t) in self.forward(&x, levels)? {
            out.insert(l, t.to_image(0)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::l1_loss;
    use rand::Rng;

    fn tiny() -> ModelConfig {
        ModelConfig {
            num_blocks: 2,
            dense_layers: 2,
            base_channels: 8,
            growth_channels: 8,
            level_count: 11,
            ca_reduction: 4,
            ..ModelConfig::desk()
        }
    }

    fn input(seed: u64) -> Tensor4<f32> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..3 * 12 * 10).map(|_| r.gen_range(0.0..1.0)).collect();
        Tensor4::from_vec(1, 3, 12, 10, data).unwrap()
    }

    #[test]
    fn build_matches_closed_form_count() {
        for cfg in [tiny(), ModelConfig::desk(), ModelConfig::full()] {
            let m = Asdn::<f32>::build(&cfg).unwrap();
            assert_eq!(m.num_params(), param_count(&cfg));
        }
    }

    #[test]
    fn names_are_unique() {
        let m = Asdn::<f32>::build(&tiny()).unwrap();
        let mut names: Vec<_> = m.params().iter().map(|p| p.name.clone()).collect();
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n);
    }

    #[test]
    fn zero_weights_with_skip_is_identity() {
        let mut m = Asdn::<f32>::build(&tiny()).unwrap();
        m.zero_parameters();
        let x = input(1);
        for (_, y) in m.forward(&x, &[0, 5, 10]).unwrap() {
            assert_eq!(y, x);
        }
    }

    #[test]
    fn zero_weights_without_skip_is_bias_image() {
        let cfg = ModelConfig {
            sc_enabled: false,
            sa_enabled: false,
            ..tiny()
        };
        let mut m = Asdn::<f32>::build(&cfg).unwrap();
        m.zero_parameters();
        m.branches[4].restore.bias.value = vec![0.25, -0.5, 1.0];
        let y = m.forward(&input(2), &[4]).unwrap().remove(&4).unwrap();
        for c in 0..3 {
            for &v in &y.item(0)[c * 120..(c + 1) * 120] {
                assert_eq!(v, [0.25, -0.5, 1.0][c]);
            }
        }
    }

    #[test]
    fn branches_are_independent() {
        let m = Asdn::<f32>::build(&tiny()).unwrap();
        let x = input(3);
        let a = m.forward(&x, &[3]).unwrap();
        let b = m.forward(&x, &[3, 7]).unwrap();
        assert_eq!(a[&3], b[&3]);
        assert_ne!(b[&3], b[&7]);
        assert!(m.forward(&x, &[]).is_err());
        assert!(m.forward(&x, &[11]).is_err());
        let (y, _) = m.forward_train(&x, 3).unwrap();
        assert_eq!(y, a[&3]);
    }

    #[test]
    fn starts_near_input() {
        let m = Asdn::<f32>::build(&ModelConfig::desk()).unwrap();
        let x = input(4);
        for (_, y) in m.forward(&x, &(0..11).collect::<Vec<_>>()).unwrap() {
            for (a, b) in y.data().iter().zip(x.data()) {
                assert!((a - b).abs() < 0.2, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn gradient_reaches_only_selected_branch() {
        let mut m = Asdn::<f32>::build(&tiny()).unwrap();
        let x = input(5);
        let (y, cache) = m.forward_train(&x, 6).unwrap();
        let target = y.map(|v| v + 0.5);
        let (_, dy) = l1_loss(&y, &target).unwrap();
        m.backward(&cache, &dy).unwrap();
        for l in 0..11 {
            let nonzero = m
                .branch_params(l)
                .iter()
                .any(|p| p.grad.iter().any(|&g| g != 0.0));
            assert_eq!(nonzero, l == 6, "level {l}");
        }
        assert!(m.head.weight.grad.iter().any(|&g| g != 0.0));
        assert!(m.blocks[0].params()[0].grad.iter().any(|&g| g != 0.0));
    }
}
