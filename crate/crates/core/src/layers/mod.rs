//! Complex-valued layers with forward and reverse-mode passes.
//!
//! Every layer is a pair of free functions over explicit parameters, so
//! each can be checked against finite differences in isolation. Gradients
//! treat real and imaginary planes as independent real channels.

pub mod bn;
pub mod bridge;
pub mod conv;
pub mod linear;
pub mod pool;
pub mod relu;

#[cfg(test)]
pub(crate) mod testing;

pub use bn::{
    complex_bn_backward, complex_bn_forward, inv_sqrt_2x2, sqrt_and_inv_sqrt_2x2, BatchStats, BnGrad,
    ComplexBnParams, Sym2,
};
pub use bridge::{bridge_backward, bridge_forward, BridgeMode};
pub use conv::{complex_conv2d, complex_conv2d_backward, conv_output_size, ComplexConvParams, ConvGrad};
pub use linear::{linear_real, linear_real_backward, LinearGrad, LinearParams};
pub use pool::{
    complex_avg_pool2d, complex_avg_pool2d_backward, complex_global_avg_pool, complex_global_avg_pool_backward,
};
pub use relu::{complex_relu, complex_relu_backward};

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::shape;
use crate::tensor::{Real, Tensor};

/// Kernel banks `c` and `d` drawn independently from `N(0, 1 / (2 fan_in))`,
/// so the complex kernel has expected squared magnitude `1 / fan_in`.
pub fn init_complex_conv<T: Real, R: Rng + ?Sized>(
    cout: usize,
    cin: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    rng: &mut R,
) -> ComplexConvParams<T> {
    let fan_in = (cin * kernel * kernel) as f64;
    let normal = Normal::new(0.0, (1.0 / (2.0 * fan_in)).sqrt()).expect("positive std");
    let s = shape![cout, cin, kernel, kernel];
    let re = Tensor::from_fn(s.clone(), |_| T::of(normal.sample(rng)));
    let im = Tensor::from_fn(s, |_| T::of(normal.sample(rng)));
    ComplexConvParams::new(re, im, stride, padding).expect("consistent kernel shapes")
}

/// Complex BN with `gamma = I / sqrt(2)` and `beta = 0`.
pub fn init_complex_bn<T: Real>(channels: usize) -> ComplexBnParams<T> {
    ComplexBnParams::new(channels, std::f64::consts::FRAC_1_SQRT_2)
}

/// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` weights and bias.
pub fn init_linear<T: Real, R: Rng + ?Sized>(out_features: usize, in_features: usize, rng: &mut R) -> LinearParams<T> {
    let bound = 1.0 / (in_features as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let weight = Tensor::from_fn(shape![out_features, in_features], |_| T::of(dist.sample(rng)));
    let bias = Tensor::from_fn(shape![out_features], |_| T::of(dist.sample(rng)));
    LinearParams::new(weight, bias).expect("consistent linear shapes")
}
