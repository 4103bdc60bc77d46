use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::{
    complex_bn_backward, complex_bn_forward, complex_conv2d, complex_conv2d_backward, complex_relu,
    complex_relu_backward, init_complex_bn, init_complex_conv, BatchStats, ComplexBnParams, ComplexConvParams,
};
use crate::tensor::{ComplexTensor, Real, Tensor};

/// Bias-free complex convolution followed by complex batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBn<T> {
    pub conv: ComplexConvParams<T>,
    pub bn: ComplexBnParams<T>,
}

#[derive(Debug, Clone)]
pub struct ConvBnCache<T> {
    pub input: ComplexTensor<T>,
    pub conv_out: ComplexTensor<T>,
    pub stats: Option<BatchStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBnGrad<T> {
    pub kernel_re: Tensor<T>,
    pub kernel_im: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

impl<T: Real> ConvBn<T> {
    pub fn init<R: Rng + ?Sized>(cout: usize, cin: usize, kernel: usize, stride: usize, rng: &mut R) -> Self {
        Self {
            conv: init_complex_conv(cout, cin, kernel, stride, kernel / 2, rng),
            bn: init_complex_bn(cout),
        }
    }

    pub fn forward(&self, x: &ComplexTensor<T>, training: bool) -> Result<(ComplexTensor<T>, ConvBnCache<T>)> {
        let conv_out = complex_conv2d(x, &self.conv)?;
        let (out, stats) = complex_bn_forward(&conv_out, &self.bn, training)?;
        Ok((
            out,
            ConvBnCache {
                input: x.clone(),
                conv_out,
                stats,
            },
        ))
    }

    pub fn backward(&self, cache: &ConvBnCache<T>, grad_out: &ComplexTensor<T>) -> Result<(ComplexTensor<T>, ConvBnGrad<T>)> {
        let bn = complex_bn_backward(&cache.conv_out, &self.bn, grad_out)?;
        let conv = complex_conv2d_backward(&cache.input, &self.conv, &bn.input)?;
        Ok((
            conv.input,
            ConvBnGrad {
                kernel_re: conv.kernel_re,
                kernel_im: conv.kernel_im,
                gamma: bn.gamma,
                beta: bn.beta,
            },
        ))
    }

    pub fn apply_stats(&mut self, cache: &ConvBnCache<T>) {
        if let Some(stats) = &cache.stats {
            self.bn.update_running(stats);
        }
    }

    pub(crate) fn params(&self) -> [&Tensor<T>; 4] {
        [&self.conv.kernel_re, &self.conv.kernel_im, &self.bn.gamma, &self.bn.beta]
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Tensor<T>; 4] {
        [&mut self.conv.kernel_re, &mut self.conv.kernel_im, &mut self.bn.gamma, &mut self.bn.beta]
    }

    pub(crate) fn buffers(&self) -> [&Tensor<T>; 2] {
        [&self.bn.running_mean, &self.bn.running_cov]
    }
}

impl<T> ConvBnGrad<T> {
    pub(crate) fn into_array(self) -> [Tensor<T>; 4] {
        [self.kernel_re, self.kernel_im, self.gamma, self.beta]
    }
}

pub(crate) const PARAM_NAMES: [&str; 4] = ["conv.kernel_re", "conv.kernel_im", "bn.gamma", "bn.beta"];
pub(crate) const BUFFER_NAMES: [&str; 2] = ["bn.running_mean", "bn.running_cov"];

/// Post-activation residual block with two 3x3 complex convolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock<T> {
    pub first: ConvBn<T>,
    pub second: ConvBn<T>,
    /// 1x1 projection shortcut, present iff the block changes shape.
    pub projection: Option<ConvBn<T>>,
}

#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    first: ConvBnCache<T>,
    first_out: ComplexTensor<T>,
    second: ConvBnCache<T>,
    projection: Option<ConvBnCache<T>>,
    sum: ComplexTensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrad<T> {
    pub first: ConvBnGrad<T>,
    pub second: ConvBnGrad<T>,
    pub projection: Option<ConvBnGrad<T>>,
}

impl<T: Real> ResidualBlock<T> {
    pub fn init<R: Rng + ?Sized>(cin: usize, cout: usize, stride: usize, rng: &mut R) -> Self {
        let first = ConvBn::init(cout, cin, 3, stride, rng);
        let second = ConvBn::init(cout, cout, 3, 1, rng);
        let projection = (stride != 1 || cin != cout).then(|| ConvBn::init(cout, cin, 1, stride, rng));
        Self { first, second, projection }
    }

    pub fn in_channels(&self) -> usize {
        self.first.conv.in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.second.conv.out_channels()
    }

    pub fn forward(&self, x: &ComplexTensor<T>, training: bool) -> Result<(ComplexTensor<T>, BlockCache<T>)> {
        let (_, c, _, _) = x.shape().nchw()?;
        if c != self.in_channels() {
            return Err(Error::shape("block_forward input", x.shape(), self.first.conv.kernel_re.shape()));
        }
        let (a, first) = self.first.forward(x, training)?;
        let (b, second) = self.second.forward(&complex_relu(&a), training)?;
        let (shortcut, projection) = match &self.projection {
            Some(p) => {
                let (s, cache) = p.forward(x, training)?;
                (s, Some(cache))
            }
            None => (x.clone(), None),
        };
        let sum = shortcut.add(&b)?;
        let out = complex_relu(&sum);
        Ok((
            out,
            BlockCache {
                first,
                first_out: a,
                second,
                projection,
                sum,
            },
        ))
    }

    pub fn backward(&self, cache: &BlockCache<T>, grad_out: &ComplexTensor<T>) -> Result<(ComplexTensor<T>, BlockGrad<T>)> {
        let g_sum = complex_relu_backward(&cache.sum, grad_out)?;
        let (g_mid, second) = self.second.backward(&cache.second, &g_sum)?;
        let g_a = complex_relu_backward(&cache.first_out, &g_mid)?;
        let (mut g_x, first) = self.first.backward(&cache.first, &g_a)?;
        let projection = match (&self.projection, &cache.projection) {
            (Some(p), Some(pc)) => {
                let (g_short, grad) = p.backward(pc, &g_sum)?;
                g_x.add_assign(&g_short)?;
                Some(grad)
            }
            _ => {
                g_x.add_assign(&g_sum)?;
                None
            }
        };
        Ok((g_x, BlockGrad { first, second, projection }))
    }

    pub fn apply_stats(&mut self, cache: &BlockCache<T>) {
        self.first.apply_stats(&cache.first);
        self.second.apply_stats(&cache.second);
        if let (Some(p), Some(pc)) = (&mut self.projection, &cache.projection) {
            p.apply_stats(pc);
        }
    }

    pub(crate) fn units(&self) -> Vec<(&'static str, &ConvBn<T>)> {
        let mut v = vec![("first", &self.first), ("second", &self.second)];
        if let Some(p) = &self.projection {
            v.push(("projection", p));
        }
        v
    }

    pub(crate) fn units_mut(&mut self) -> Vec<&mut ConvBn<T>> {
        let mut v = vec![&mut self.first, &mut self.second];
        if let Some(p) = &mut self.projection {
            v.push(p);
        }
        v
    }
}

impl<T> BlockGrad<T> {
    pub(crate) fn into_units(self) -> Vec<ConvBnGrad<T>> {
        let mut v = vec![self.first, self.second];
        v.extend(self.projection);
        v
    }
}

/// Free-function form of [`ResidualBlock::forward`] in eval mode.
pub fn block_forward<T: Real>(x: &ComplexTensor<T>, block: &ResidualBlock<T>) -> Result<ComplexTensor<T>> {
    Ok(block.forward(x, false)?.0)
}
