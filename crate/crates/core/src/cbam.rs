//! Convolutional Block Attention Module: a channel gate followed by a
//! spatial gate, both multiplicative.

use rand::Rng;

use crate::error::{contract, Result};
use crate::tensor::{canonical_sum, conv2d, global_pool, ConvSpec, PoolKind, Shape, Tensor};

pub const DEFAULT_REDUCTION: usize = 16;
pub const DEFAULT_SPATIAL_KERNEL: usize = 7;

/// Parameters of one CBAM block over `channels` feature maps.
///
/// `mlp_w1` is (hidden x channels) and `mlp_w2` is (channels x hidden), both
/// row-major, with `hidden = channels / reduction`.
#[derive(Debug, Clone, PartialEq)]
pub struct CbamParams {
    pub channels: usize,
    pub reduction: usize,
    pub mlp_w1: Vec<f32>,
    pub mlp_b1: Vec<f32>,
    pub mlp_w2: Vec<f32>,
    pub mlp_b2: Vec<f32>,
    pub spatial: ConvSpec,
}

impl CbamParams {
    pub fn new(
        channels: usize,
        reduction: usize,
        mlp_w1: Vec<f32>,
        mlp_b1: Vec<f32>,
        mlp_w2: Vec<f32>,
        mlp_b2: Vec<f32>,
        spatial: ConvSpec,
    ) -> Result<Self> {
        let hidden = hidden_width(channels, reduction)?;
        if mlp_w1.len() != hidden * channels || mlp_w2.len() != hidden * channels {
            contract!("CBAM MLP weights must hold {} values", hidden * channels);
        }
        if mlp_b1.len() != hidden || mlp_b2.len() != channels {
            contract!("CBAM MLP bias lengths must be {hidden} and {channels}");
        }
        let k = spatial.kernel_size;
        if spatial.in_channels != 2 || spatial.out_channels != 1 || spatial.groups != 1 {
            contract!("CBAM spatial conv must map 2 channels to 1");
        }
        if k % 2 == 0 || spatial.padding != (k - 1) / 2 || spatial.stride != 1 {
            contract!("CBAM spatial conv needs an odd kernel, stride 1 and same padding");
        }
        Ok(Self { channels, reduction, mlp_w1, mlp_b1, mlp_w2, mlp_b2, spatial })
    }

    /// All weights and biases zero; both gates are then exactly 0.5.
    pub fn zeros(channels: usize, reduction: usize, spatial_kernel: usize) -> Result<Self> {
        Self::filled(channels, reduction, spatial_kernel, || 0.0)
    }

    pub fn random(channels: usize, reduction: usize, spatial_kernel: usize, rng: &mut impl Rng, bound: f32) -> Result<Self> {
        Self::filled(channels, reduction, spatial_kernel, || rng.gen_range(-bound..=bound))
    }

    fn filled(channels: usize, reduction: usize, k: usize, mut f: impl FnMut() -> f32) -> Result<Self> {
        let hidden = hidden_width(channels, reduction)?;
        let mut v = |len: usize| (0..len).map(|_| f()).collect::<Vec<f32>>();
        let w1 = v(hidden * channels);
        let b1 = v(hidden);
        let w2 = v(channels * hidden);
        let b2 = v(channels);
        let sw = v(2 * k * k);
        let sb = v(1);
        let spatial = ConvSpec::new(2, 1, k, 1, k.saturating_sub(1) / 2, 1, sw, sb)?;
        Self::new(channels, reduction, w1, b1, w2, b2, spatial)
    }

    pub fn hidden(&self) -> usize {
        self.channels / self.reduction
    }

    fn mlp(&self, v: &[f32]) -> Vec<f32> {
        let (c, h) = (self.channels, self.hidden());
        let hidden: Vec<f32> = (0..h)
            .map(|j| {
                let row = &self.mlp_w1[j * c..(j + 1) * c];
                let z = row.iter().zip(v).fold(self.mlp_b1[j], |acc, (w, x)| acc + w * x);
                z.max(0.0)
            })
            .collect();
        (0..c)
            .map(|i| {
                let row = &self.mlp_w2[i * h..(i + 1) * h];
                row.iter().zip(&hidden).fold(self.mlp_b2[i], |acc, (w, x)| acc + w * x)
            })
            .collect()
    }
}

fn hidden_width(channels: usize, reduction: usize) -> Result<usize> {
    if reduction == 0 || channels == 0 || channels % reduction != 0 {
        contract!("CBAM channels {channels} not divisible by reduction ratio {reduction}");
    }
    Ok(channels / reduction)
}

/// Sigmoid clamped into the open unit interval.
#[inline]
fn gate(x: f32) -> f32 {
    crate::tensor::sigmoid(x).clamp(f32::MIN_POSITIVE, 1.0 - f32::EPSILON / 2.0)
}

/// Per-channel gate Mc of shape (n, c, 1, 1).
pub fn channel_attention(x: &Tensor, p: &CbamParams) -> Result<Tensor> {
    let s = x.shape();
    if s.c != p.channels {
        contract!("CBAM expects {} channels, input has {}", p.channels, s.c);
    }
    let avg = global_pool(x, PoolKind::Avg);
    let max = global_pool(x, PoolKind::Max);
    let mut out = Vec::with_capacity(s.n * s.c);
    for n in 0..s.n {
        let a = p.mlp(&avg.data()[n * s.c..(n + 1) * s.c]);
        let m = p.mlp(&max.data()[n * s.c..(n + 1) * s.c]);
        out.extend(a.iter().zip(&m).map(|(a, m)| gate(a + m)));
    }
    Tensor::new(Shape::new(s.n, s.c, 1, 1)?, out)
}

/// Per-position gate Ms of shape (n, 1, h, w).
pub fn spatial_attention(x: &Tensor, p: &CbamParams) -> Result<Tensor> {
    let s = x.shape();
    let plane = s.plane();
    let mut pooled = vec![0f32; s.n * 2 * plane];
    let mut column = vec![0f32; s.c];
    for n in 0..s.n {
        for i in 0..plane {
            for (c, slot) in column.iter_mut().enumerate() {
                *slot = x.data()[s.index(n, c, 0, 0) + i];
            }
            let mean = (canonical_sum(&column) / s.c as f64) as f32;
            let max = column.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            pooled[(n * 2) * plane + i] = mean;
            pooled[(n * 2 + 1) * plane + i] = max;
        }
    }
    let pooled = Tensor::new(Shape::new(s.n, 2, s.h, s.w)?, pooled)?;
    let logits = conv2d(&pooled, &p.spatial)?;
    Ok(logits.map(gate))
}

/// `y = Ms(x') * x'` with `x' = Mc(x) * x`.
pub fn cbam_forward(x: &Tensor, p: &CbamParams) -> Result<Tensor> {
    let s = x.shape();
    let mc = channel_attention(x, p)?;
    let plane = s.plane();
    let mut refined = x.clone();
    for n in 0..s.n {
        for c in 0..s.c {
            let g = mc.data()[n * s.c + c];
            let off = s.index(n, c, 0, 0);
            for v in &mut refined.data_mut()[off..off + plane] {
                *v *= g;
            }
        }
    }
    let ms = spatial_attention(&refined, p)?;
    for n in 0..s.n {
        let gates = &ms.data()[n * plane..(n + 1) * plane];
        for c in 0..s.c {
            let off = s.index(n, c, 0, 0);
            for (v, g) in refined.data_mut()[off..off + plane].iter_mut().zip(gates) {
                *v *= g;
            }
        }
    }
    Ok(refined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(-2.0..2.0))
    }

    #[test]
    fn zero_params_give_half_gates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = CbamParams::zeros(32, 16, 7).unwrap();
        let x = random_tensor(Shape::new(1, 32, 5, 6).unwrap(), &mut rng);
        assert!(channel_attention(&x, &p).unwrap().data().iter().all(|&g| g == 0.5));
        assert!(spatial_attention(&x, &p).unwrap().data().iter().all(|&g| g == 0.5));
        let y = cbam_forward(&x, &p).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert_eq!(*a, 0.25 * b);
        }
    }

    #[test]
    fn constant_channels_make_branches_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = CbamParams::random(16, 4, 3, &mut rng, 0.5).unwrap();
        let values: Vec<f32> = (0..16).map(|c| c as f32 * 0.1 - 0.7).collect();
        let x = Tensor::from_fn(Shape::new(1, 16, 3, 3).unwrap(), |_, c, _, _| values[c]);
        let mc = channel_attention(&x, &p).unwrap();
        let m = p.mlp(&values);
        for (g, z) in mc.data().iter().zip(&m) {
            assert_eq!(*g, gate(z + z));
        }
    }

    #[test]
    fn constant_input_gives_constant_spatial_gate_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = CbamParams::random(8, 2, 3, &mut rng, 0.5).unwrap();
        let x = Tensor::full(Shape::new(1, 8, 6, 6).unwrap(), 0.7);
        // zero padding breaks translation symmetry at the border, so compare
        // against a bias-only kernel where it does not matter
        let mut flat = p.clone();
        flat.spatial.weights.iter_mut().for_each(|w| *w = 0.0);
        let ms = spatial_attention(&x, &flat).unwrap();
        assert!(ms.data().iter().all(|&g| g == ms.data()[0]));
        let ms = spatial_attention(&x, &p).unwrap();
        let centre: Vec<f32> = (1..5).flat_map(|y| (1..5).map(move |x| (y, x))).map(|(y, x)| ms.at(0, 0, y, x)).collect();
        assert!(centre.iter().all(|&g| g == centre[0]));
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = CbamParams::random(16, 16, 7, &mut rng, 0.1).unwrap();
        let x = Tensor::zeros(Shape::new(1, 16, 4, 4).unwrap());
        assert!(cbam_forward(&x, &p).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_configuration() {
        assert!(CbamParams::zeros(30, 16, 7).is_err());
        assert!(CbamParams::zeros(32, 16, 6).is_err());
        let p = CbamParams::zeros(32, 16, 7).unwrap();
        let x = Tensor::zeros(Shape::new(1, 16, 4, 4).unwrap());
        assert!(channel_attention(&x, &p).is_err());
        assert!(cbam_forward(&x, &p).is_err());
    }
}
