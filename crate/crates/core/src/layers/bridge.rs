//! Complex-to-real conversion in front of the classifier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shape;
use crate::tensor::{ComplexTensor, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BridgeMode {
    /// `|z|` per feature.
    #[default]
    Magnitude,
    /// `Re(z)` per feature.
    Real,
    /// `[Re(z), Im(z)]`, doubling the feature count.
    Concat,
}

impl BridgeMode {
    pub fn out_features(self, features: usize) -> usize {
        match self {
            BridgeMode::Concat => 2 * features,
            _ => features,
        }
    }
}

fn rows<T: Real>(x: &ComplexTensor<T>) -> Result<(usize, usize)> {
    match x.shape().dims() {
        &[b, f] => Ok((b, f)),
        _ => Err(Error::InvalidShape {
            shape: x.shape().clone(),
            reason: "bridge expects (batch, features)".into(),
        }),
    }
}

pub fn bridge_forward<T: Real>(x: &ComplexTensor<T>, mode: BridgeMode) -> Result<Tensor<T>> {
    let (b, f) = rows(x)?;
    match mode {
        BridgeMode::Magnitude => Ok(x.magnitude()),
        BridgeMode::Real => Ok(x.re().clone()),
        BridgeMode::Concat => {
            let mut out = Vec::with_capacity(2 * b * f);
            for n in 0..b {
                out.extend_from_slice(&x.re().data()[n * f..(n + 1) * f]);
                out.extend_from_slice(&x.im().data()[n * f..(n + 1) * f]);
            }
            Tensor::new(shape![b, 2 * f], out)
        }
    }
}

/// Gradient w.r.t. the complex features. The magnitude's gradient at
/// `z = 0` is taken as 0.
pub fn bridge_backward<T: Real>(x: &ComplexTensor<T>, mode: BridgeMode, grad_out: &Tensor<T>) -> Result<ComplexTensor<T>> {
    let (b, f) = rows(x)?;
    let expected = shape![b, mode.out_features(f)];
    if grad_out.shape() != &expected {
        return Err(Error::shape("bridge_backward", grad_out.shape(), &expected));
    }
    let g = grad_out.data();
    match mode {
        BridgeMode::Magnitude => {
            let n = x.len();
            let mut re = Vec::with_capacity(n);
            let mut im = Vec::with_capacity(n);
            for (k, &gk) in g.iter().enumerate() {
                let (a, c) = x.get(k);
                let m = a.hypot(c);
                if m > T::zero() {
                    re.push(gk * a / m);
                    im.push(gk * c / m);
                } else {
                    re.push(T::zero());
                    im.push(T::zero());
                }
            }
            ComplexTensor::from_parts(x.shape().clone(), re, im)
        }
        BridgeMode::Real => Ok(ComplexTensor::from_real(grad_out.clone())),
        BridgeMode::Concat => {
            let mut re = Vec::with_capacity(b * f);
            let mut im = Vec::with_capacity(b * f);
            for row in g.chunks(2 * f) {
                re.extend_from_slice(&row[..f]);
                im.extend_from_slice(&row[f..]);
            }
            ComplexTensor::from_parts(x.shape().clone(), re, im)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::testing::{central_difference, random_complex, random_real, rel_error};

    #[test]
    fn modes_produce_expected_features() {
        let x = ComplexTensor::from_parts(shape![1, 2], vec![3.0, 1.0], vec![4.0, -2.0]).unwrap();
        assert_eq!(bridge_forward(&x, BridgeMode::Magnitude).unwrap().data(), &[5.0, 5f64.sqrt()]);
        assert_eq!(bridge_forward(&x, BridgeMode::Real).unwrap().data(), &[3.0, 1.0]);
        assert_eq!(bridge_forward(&x, BridgeMode::Concat).unwrap().data(), &[3.0, 1.0, 4.0, -2.0]);
    }

    #[test]
    fn zero_magnitude_has_zero_gradient() {
        let x = ComplexTensor::<f64>::zeros(shape![1, 1]);
        let g = bridge_backward(&x, BridgeMode::Magnitude, &Tensor::full(shape![1, 1], 1.0)).unwrap();
        assert_eq!(g.get(0), (0.0, 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let x = random_complex(shape![3, 4], 1);
        for mode in [BridgeMode::Magnitude, BridgeMode::Real, BridgeMode::Concat] {
            let w = random_real(shape![3, mode.out_features(4)], 2);
            let g = bridge_backward(&x, mode, &w).unwrap();
            let analytic: Vec<f64> = g.re().data().iter().chain(g.im().data()).copied().collect();
            let numeric = central_difference(2 * x.len(), 1e-6, |i, h| {
                let mut xp = x.clone();
                let (re, im) = xp.parts_mut();
                if i < re.len() { re[i] += h } else { im[i - re.len()] += h }
                bridge_forward(&xp, mode).unwrap().mul(&w).unwrap().sum()
            });
            assert!(rel_error(&analytic, &numeric) < 1e-6, "{mode:?}");
        }
    }
}
