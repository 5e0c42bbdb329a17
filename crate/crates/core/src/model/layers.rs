//! Network units. Each `forward` returns its output together with whatever the
//! matching `backward` needs; `backward` accumulates parameter gradients and
//! returns the input gradient.

use rand::Rng;

use crate::error::Result;
use crate::tensor::ops::{
    concat_channels, conv2d_backward_into, conv2d_forward, global_avg_pool,
    global_avg_pool_backward, mul, mul_backward, relu, relu_backward, sigmoid, sigmoid_backward,
    split_channels, ConvShape,
};
use crate::tensor::{Parameter, Scalar, Tensor4};

/// Init gain for convolutions not followed by a ReLU, so activations keep
/// their variance through the linear layers.
pub const LINEAR_GAIN: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T: Scalar = f32> {
    pub shape: ConvShape,
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
}

impl<T: Scalar> Conv2d<T> {
    /// He-uniform weights scaled by `gain`, zero bias.
    pub fn new(
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        gain: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let shape = ConvShape::new(cin, cout, kernel);
        Self {
            weight: Parameter::he_uniform(
                format!("{name}.weight"),
                &shape.weight_shape(),
                cin * kernel * kernel,
                gain,
                rng,
            ),
            bias: Parameter::zeros(format!("{name}.bias"), &[cout]),
            shape,
        }
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        conv2d_forward(x, &self.weight.value, &self.bias.value, &self.shape)
    }

    pub fn backward(
        &mut self,
        x: &Tensor4<T>,
        dy: &Tensor4<T>,
        need_dx: bool,
    ) -> Result<Option<Tensor4<T>>> {
        conv2d_backward_into(
            x,
            &self.weight.value,
            &self.shape,
            dy,
            &mut self.weight.grad,
            &mut self.bias.grad,
            need_dx,
        )
    }

    pub fn params(&self) -> [&Parameter<T>; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn cast<U: Scalar>(&self) -> Conv2d<U> {
        Conv2d {
            shape: self.shape,
            weight: self.weight.cast(),
            bias: self.bias.cast(),
        }
    }
}

/// Two 1x1 convolutions with a ReLU between them, ending in a sigmoid gate.
#[derive(Debug, Clone, PartialEq)]
struct Gate<T: Scalar> {
    reduce: Conv2d<T>,
    expand: Conv2d<T>,
}

struct GateCache<T: Scalar> {
    input: Tensor4<T>,
    hidden: Tensor4<T>,
    act: Tensor4<T>,
    gate: Tensor4<T>,
}

impl<T: Scalar> Gate<T> {
    fn new(name: &str, cin: usize, hidden: usize, cout: usize, rng: &mut impl Rng) -> Self {
        Self {
            reduce: Conv2d::new(&format!("{name}.reduce"), cin, hidden, 1, 1.0, rng),
            expand: Conv2d::new(&format!("{name}.expand"), hidden, cout, 1, 1.0, rng),
        }
    }

    fn forward(&self, input: Tensor4<T>) -> Result<GateCache<T>> {
        let hidden = self.reduce.forward(&input)?;
        let act = relu(&hidden);
        let gate = sigmoid(&self.expand.forward(&act)?);
        Ok(GateCache {
            input,
            hidden,
            act,
            gate,
        })
    }

    fn backward(&mut self, c: &GateCache<T>, dgate: &Tensor4<T>) -> Result<Tensor4<T>> {
        let dz = sigmoid_backward(&c.gate, dgate);
        let dact = self.expand.backward(&c.act, &dz, true)?.expect("dx");
        let dhidden = relu_backward(&c.hidden, &dact);
        Ok(self.reduce.backward(&c.input, &dhidden, true)?.expect("dx"))
    }

    fn params(&self) -> Vec<&Parameter<T>> {
        let mut v = self.reduce.params().to_vec();
        v.extend(self.expand.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v: Vec<_> = self.reduce.params_mut().into_iter().collect();
        v.extend(self.expand.params_mut());
        v
    }

    fn cast<U: Scalar>(&self) -> Gate<U> {
        Gate {
            reduce: self.reduce.cast(),
            expand: self.expand.cast(),
        }
    }
}

/// Per-channel gating from globally pooled features.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAttention<T: Scalar = f32> {
    gate: Gate<T>,
}

pub struct ChannelAttentionCache<T: Scalar> {
    x: Tensor4<T>,
    gate: GateCache<T>,
}

impl<T: Scalar> ChannelAttention<T> {
    pub fn new(name: &str, channels: usize, reduction: usize, rng: &mut impl Rng) -> Self {
        Self {
            gate: Gate::new(name, channels, channels / reduction, channels, rng),
        }
    }

    pub fn forward(&self, x: Tensor4<T>) -> Result<(Tensor4<T>, ChannelAttentionCache<T>)> {
        let gate = self.gate.forward(global_avg_pool(&x))?;
        let y = mul(&x, &gate.gate)?;
        Ok((y, ChannelAttentionCache { x, gate }))
    }

    /// The `n x c x 1 x 1` gate a forward pass applies.
    pub fn gate_of(c: &ChannelAttentionCache<T>) -> &Tensor4<T> {
        &c.gate.gate
    }

    pub fn backward(
        &mut self,
        c: &ChannelAttentionCache<T>,
        dy: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let (mut dx, dgate) = mul_backward(&c.x, &c.gate.gate, dy)?;
        let dpool = self.gate.backward(&c.gate, &dgate)?;
        dx.add_assign(&global_avg_pool_backward(&dpool, c.x.h(), c.x.w()));
        Ok(dx)
    }

    pub fn params(&self) -> Vec<&Parameter<T>> {
        self.gate.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        self.gate.params_mut()
    }

    pub fn cast<U: Scalar>(&self) -> ChannelAttention<U> {
        ChannelAttention {
            gate: self.gate.cast(),
        }
    }
}

/// Per-pixel gating of an image by a single-channel map.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialAttention<T: Scalar = f32> {
    gate: Gate<T>,
}

pub struct SpatialAttentionCache<T: Scalar> {
    gate: GateCache<T>,
}

impl<T: Scalar> SpatialAttention<T> {
    pub fn new(name: &str, channels: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            gate: Gate::new(name, channels, hidden, 1, rng),
        }
    }

    pub fn forward(&self, x: Tensor4<T>) -> Result<(Tensor4<T>, SpatialAttentionCache<T>)> {
        let gate = self.gate.forward(x)?;
        let y = mul(&gate.input, &gate.gate)?;
        Ok((y, SpatialAttentionCache { gate }))
    }

    pub fn map_of(c: &SpatialAttentionCache<T>) -> &Tensor4<T> {
        &c.gate.gate
    }

    pub fn backward(
        &mut self,
        c: &SpatialAttentionCache<T>,
        dy: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let (mut dx, dmap) = mul_backward(&c.gate.input, &c.gate.gate, dy)?;
        dx.add_assign(&self.gate.backward(&c.gate, &dmap)?);
        Ok(dx)
    }

    pub fn params(&self) -> Vec<&Parameter<T>> {
        self.gate.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        self.gate.params_mut()
    }

    pub fn cast<U: Scalar>(&self) -> SpatialAttention<U> {
        SpatialAttention {
            gate: self.gate.cast(),
        }
    }
}

/// Densely connected 3x3 conv+ReLU layers, a 1x1 compression back to the
/// block width, then optional channel attention.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseAttentionBlock<T: Scalar = f32> {
    dense: Vec<Conv2d<T>>,
    compress: Conv2d<T>,
    ca: Option<ChannelAttention<T>>,
    channels: usize,
    growth: usize,
}

pub struct DabCache<T: Scalar> {
    /// Block input followed by every dense layer's activation.
    feats: Vec<Tensor4<T>>,
    /// Pre-activation of each dense layer.
    pre: Vec<Tensor4<T>>,
    ca: Option<ChannelAttentionCache<T>>,
}

impl<T: Scalar> DenseAttentionBlock<T> {
    pub fn new(
        name: &str,
        channels: usize,
        growth: usize,
        layers: usize,
        ca_reduction: Option<usize>,
        rng: &mut impl Rng,
    ) -> Self {
        let dense = (0..layers)
            .map(|j| {
                Conv2d::new(
                    &format!("{name}.dense.{j}"),
                    channels + j * growth,
                    growth,
                    3,
                    1.0,
                    rng,
                )
            })
            .collect();
        let compress = Conv2d::new(
            &format!("{name}.compress"),
            channels + layers * growth,
            channels,
            1,
            LINEAR_GAIN,
            rng,
        );
        let ca = ca_reduction.map(|r| ChannelAttention::new(&format!("{name}.ca"), channels, r, rng));
        Self {
            dense,
            compress,
            ca,
            channels,
            growth,
        }
    }

    pub fn forward(&self, x: Tensor4<T>) -> Result<(Tensor4<T>, DabCache<T>)> {
        let mut feats = vec![x];
        let mut pre = Vec::with_capacity(self.dense.len());
        for conv in &self.dense {
            let cat = concat_channels(&feats.iter().collect::<Vec<_>>())?;
            let h = conv.forward(&cat)?;
            feats.push(relu(&h));
            pre.push(h);
        }
        let cat = concat_channels(&feats.iter().collect::<Vec<_>>())?;
        let out = self.compress.forward(&cat)?;
        drop(cat);
        let (y, ca) = match &self.ca {
            Some(ca) => {
                let (y, c) = ca.forward(out)?;
                (y, Some(c))
            }
            None => (out, None),
        };
        Ok((y, DabCache { feats, pre, ca }))
    }

    fn split_sizes(&self, layers: usize) -> Vec<usize> {
        let mut s = vec![self.channels];
        s.extend(std::iter::repeat_n(self.growth, layers));
        s
    }

    pub fn backward(&mut self, c: &DabCache<T>, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let dout = match (&mut self.ca, &c.ca) {
            (Some(ca), Some(cc)) => ca.backward(cc, dy)?,
            _ => dy.clone(),
        };
        let d = self.dense.len();
        let cat = concat_channels(&c.feats.iter().collect::<Vec<_>>())?;
        let dcat = self.compress.backward(&cat, &dout, true)?.expect("dx");
        drop(cat);
        let mut dfeats = split_channels(&dcat, &self.split_sizes(d))?;
        for j in (0..d).rev() {
            let dh = relu_backward(&c.pre[j], &dfeats[j + 1]);
            let cat = concat_channels(&c.feats[..=j].iter().collect::<Vec<_>>())?;
            let dcat = self.dense[j].backward(&cat, &dh, true)?.expect("dx");
            for (acc, part) in dfeats.iter_mut().zip(split_channels(&dcat, &self.split_sizes(j))?) {
                acc.add_assign(&part);
            }
        }
        Ok(dfeats.swap_remove(0))
    }

    pub fn params(&self) -> Vec<&Parameter<T>> {
        let mut v: Vec<&Parameter<T>> = self.dense.iter().flat_map(|c| c.params()).collect();
        v.extend(self.compress.params());
        if let Some(ca) = &self.ca {
            v.extend(ca.params());
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v: Vec<&mut Parameter<T>> =
            self.dense.iter_mut().flat_map(|c| c.params_mut()).collect();
        v.extend(self.compress.params_mut());
        if let Some(ca) = &mut self.ca {
            v.extend(ca.params_mut());
        }
        v
    }

    pub fn cast<U: Scalar>(&self) -> DenseAttentionBlock<U> {
        DenseAttentionBlock {
            dense: self.dense.iter().map(|c| c.cast()).collect(),
            compress: self.compress.cast(),
            ca: self.ca.as_ref().map(|c| c.cast()),
            channels: self.channels,
            growth: self.growth,
        }
    }
}

/// Per-level head: 3x3 conv to RGB, optional spatial attention, optional
/// addition of the interpolated input.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionBranch<T: Scalar = f32> {
    pub(crate) restore: Conv2d<T>,
    sa: Option<SpatialAttention<T>>,
    skip: bool,
}

pub struct BranchCache<T: Scalar> {
    sa: Option<SpatialAttentionCache<T>>,
}

// Keeps the untrained residual small so outputs start near the input.
const RESTORE_GAIN: f64 = 0.1;

impl<T: Scalar> ReconstructionBranch<T> {
    pub fn new(
        name: &str,
        channels: usize,
        sa_hidden: Option<usize>,
        skip: bool,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            restore: Conv2d::new(&format!("{name}.restore"), channels, 3, 3, RESTORE_GAIN, rng),
            sa: sa_hidden.map(|s| SpatialAttention::new(&format!("{name}.sa"), 3, s, rng)),
            skip,
        }
    }

    pub fn forward(
        &self,
        features: &Tensor4<T>,
        input: &Tensor4<T>,
    ) -> Result<(Tensor4<T>, BranchCache<T>)> {
        let r = self.restore.forward(features)?;
        let (mut y, sa) = match &self.sa {
            Some(sa) => {
                let (y, c) = sa.forward(r)?;
                (y, Some(c))
            }
            None => (r, None),
        };
        if self.skip {
            if y.shape() != input.shape() {
                return Err(crate::error::shape_err!(
                    "branch output {:?} vs input {:?}",
                    y.shape(),
                    input.shape()
                ));
            }
            y.add_assign(input);
        }
        Ok((y, BranchCache { sa }))
    }

    /// Returns the gradient with respect to the shared features.
    pub fn backward(
        &mut self,
        c: &BranchCache<T>,
        features: &Tensor4<T>,
        dy: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let dr = match (&mut self.sa, &c.sa) {
            (Some(sa), Some(sc)) => sa.backward(sc, dy)?,
            _ => dy.clone(),
        };
        Ok(self.restore.backward(features, &dr, true)?.expect("dx"))
    }

    pub fn params(&self) -> Vec<&Parameter<T>> {
        let mut v = self.restore.params().to_vec();
        if let Some(sa) = &self.sa {
            v.extend(sa.params());
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v: Vec<_> = self.restore.params_mut().into_iter().collect();
        if let Some(sa) = &mut self.sa {
            v.extend(sa.params_mut());
        }
        v
    }

    pub fn cast<U: Scalar>(&self) -> ReconstructionBranch<U> {
        ReconstructionBranch {
            restore: self.restore.cast(),
            sa: self.sa.as_ref().map(|s| s.cast()),
            skip: self.skip,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    fn random(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Tensor4<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * c * h * w).map(|_| r.gen_range(0.0..1.0)).collect();
        Tensor4::from_vec(n, c, h, w, data).unwrap()
    }

    fn zero_all(ps: Vec<&mut Parameter<f64>>) {
        for p in ps {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    #[test]
    fn ca_zero_expand_halves() {
        let mut ca = ChannelAttention::<f64>::new("ca", 8, 4, &mut rng());
        zero_all(ca.gate.expand.params_mut().into_iter().collect());
        let x = random(2, 8, 5, 4, 1);
        let (y, _) = ca.forward(x.clone()).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert_eq!(*a, b / 2.0);
        }
    }

    #[test]
    fn ca_saturated_is_identity() {
        let mut ca = ChannelAttention::<f64>::new("ca", 8, 2, &mut rng());
        ca.gate.expand.bias.value.iter_mut().for_each(|b| *b = 40.0);
        zero_all(vec![&mut ca.gate.expand.weight]);
        let x = random(1, 8, 6, 6, 2);
        let (y, _) = ca.forward(x.clone()).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn ca_gate_depends_on_channel_means_only() {
        let ca = ChannelAttention::<f64>::new("ca", 4, 2, &mut rng());
        let x = random(1, 4, 6, 6, 5);
        // same per-channel means: reverse each plane
        let mut y = x.clone();
        for c in 0..4 {
            y.data_mut()[c * 36..(c + 1) * 36].reverse();
        }
        let (_, cx) = ca.forward(x).unwrap();
        let (_, cy) = ca.forward(y).unwrap();
        let (gx, gy) = (ChannelAttention::gate_of(&cx), ChannelAttention::gate_of(&cy));
        for (a, b) in gx.data().iter().zip(gy.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn sa_zero_final_halves_and_is_pixel_local() {
        let mut sa = SpatialAttention::<f64>::new("sa", 3, 3, &mut rng());
        let x = random(1, 3, 4, 5, 7);
        // permuting columns permutes the output
        let perm = [3usize, 0, 4, 1, 2];
        let permute = |t: &Tensor4<f64>| {
            let mut o = t.clone();
            for c in 0..3 {
                for y in 0..4 {
                    for (dst, &src) in perm.iter().enumerate() {
                        o.data_mut()[(c * 4 + y) * 5 + dst] = t.at(0, c, y, src);
                    }
                }
            }
            o
        };
        let (a, _) = sa.forward(permute(&x)).unwrap();
        let (b, _) = sa.forward(x.clone()).unwrap();
        assert_eq!(a, permute(&b));

        zero_all(sa.gate.expand.params_mut().into_iter().collect());
        let (y, _) = sa.forward(x.clone()).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert_eq!(*a, b / 2.0);
        }
        sa.gate.expand.bias.value[0] = 40.0;
        let (y, _) = sa.forward(x.clone()).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn dab_shapes_and_param_names() {
        let dab = DenseAttentionBlock::<f64>::new("b0", 6, 4, 3, Some(2), &mut rng());
        let x = random(2, 6, 5, 5, 9);
        let (y, c) = dab.forward(x).unwrap();
        assert_eq!(y.shape(), [2, 6, 5, 5]);
        assert_eq!(c.feats.len(), 4);
        let names: Vec<_> = dab.params().iter().map(|p| p.name.clone()).collect();
        assert_eq!(names[0], "b0.dense.0.weight");
        assert!(names.contains(&"b0.ca.reduce.weight".to_string()));
        assert_eq!(dab.params()[4].shape, vec![4, 14, 3, 3]);
    }
}
