//! Average pooling on complex activations; real and imaginary parts are
//! pooled independently.

use crate::error::{Error, Result};
use crate::shape;
use crate::tensor::{ComplexTensor, Real, Tensor};

/// Non-overlapping `factor x factor` mean pooling.
pub fn complex_avg_pool2d<T: Real>(x: &ComplexTensor<T>, factor: usize) -> Result<ComplexTensor<T>> {
    let (n, c, h, w) = x.shape().nchw()?;
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::InvalidShape {
            shape: x.shape().clone(),
            reason: format!("spatial dims must be divisible by pooling factor {factor}"),
        });
    }
    let (ho, wo) = (h / factor, w / factor);
    let scale = T::of(1.0 / (factor * factor) as f64);
    let pool = |src: &[T]| {
        let mut out = vec![T::zero(); n * c * ho * wo];
        for p in 0..n * c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = T::zero();
                    for dy in 0..factor {
                        let row = p * h * w + (oy * factor + dy) * w + ox * factor;
                        acc += src[row..row + factor].iter().copied().sum::<T>();
                    }
                    out[(p * ho + oy) * wo + ox] = acc * scale;
                }
            }
        }
        out
    };
    ComplexTensor::from_parts(shape![n, c, ho, wo], pool(x.re().data()), pool(x.im().data()))
}

pub fn complex_avg_pool2d_backward<T: Real>(
    input_shape: &crate::tensor::Shape,
    factor: usize,
    grad_out: &ComplexTensor<T>,
) -> Result<ComplexTensor<T>> {
    let (n, c, h, w) = input_shape.nchw()?;
    let expected = shape![n, c, h / factor, w / factor];
    if grad_out.shape() != &expected {
        return Err(Error::shape("complex_avg_pool2d_backward", grad_out.shape(), &expected));
    }
    let (ho, wo) = (h / factor, w / factor);
    let scale = T::of(1.0 / (factor * factor) as f64);
    let spread = |g: &[T]| {
        let mut out = vec![T::zero(); n * c * h * w];
        for p in 0..n * c {
            for y in 0..h {
                for x in 0..w {
                    out[(p * h + y) * w + x] = g[(p * ho + y / factor) * wo + x / factor] * scale;
                }
            }
        }
        out
    };
    ComplexTensor::from_parts(input_shape.clone(), spread(grad_out.re().data()), spread(grad_out.im().data()))
}

/// Global spatial mean: `(N, C, H, W)` to `(N, C)`.
pub fn complex_global_avg_pool<T: Real>(x: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
    let (n, c, h, w) = x.shape().nchw()?;
    let plane = h * w;
    let scale = T::of(1.0 / plane as f64);
    let reduce = |t: &Tensor<T>| -> Vec<T> {
        t.data().chunks(plane).map(|p| p.iter().copied().sum::<T>() * scale).collect()
    };
    ComplexTensor::from_parts(shape![n, c], reduce(x.re()), reduce(x.im()))
}

pub fn complex_global_avg_pool_backward<T: Real>(
    input_shape: &crate::tensor::Shape,
    grad_out: &ComplexTensor<T>,
) -> Result<ComplexTensor<T>> {
    let (n, c, h, w) = input_shape.nchw()?;
    if grad_out.shape().dims() != [n, c] {
        return Err(Error::shape("complex_global_avg_pool_backward", grad_out.shape(), &shape![n, c]));
    }
    let plane = h * w;
    let scale = T::of(1.0 / plane as f64);
    let spread = |g: &[T]| g.iter().flat_map(|&v| std::iter::repeat_n(v * scale, plane)).collect();
    ComplexTensor::from_parts(input_shape.clone(), spread(grad_out.re().data()), spread(grad_out.im().data()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::testing::{central_difference, random_complex, rel_error};

    #[test]
    fn constant_stays_constant() {
        let x = ComplexTensor::new(Tensor::full(shape![1, 2, 4, 4], 3.0), Tensor::full(shape![1, 2, 4, 4], -1.0)).unwrap();
        let y = complex_avg_pool2d(&x, 2).unwrap();
        assert!(y.re().data().iter().all(|&v| v == 3.0));
        assert!(y.im().data().iter().all(|&v| v == -1.0));
        let g = complex_global_avg_pool(&x).unwrap();
        assert_eq!(g.get(1), (3.0, -1.0));
    }

    #[test]
    fn window_mean() {
        let x = ComplexTensor::from_real(Tensor::new(shape![1, 1, 2, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap());
        let y = complex_avg_pool2d(&x, 2).unwrap();
        assert_eq!(y.get(0), (4.0, 0.0));
    }

    #[test]
    fn matches_windowed_mean_oracle() {
        let x = random_complex(shape![2, 3, 6, 6], 1);
        let y = complex_avg_pool2d(&x, 3).unwrap();
        for n in 0..2 {
            for c in 0..3 {
                for oy in 0..2 {
                    for ox in 0..2 {
                        let (mut sr, mut si) = (0.0, 0.0);
                        for dy in 0..3 {
                            for dx in 0..3 {
                                let (r, i) = x.get(((n * 3 + c) * 6 + oy * 3 + dy) * 6 + ox * 3 + dx);
                                sr += r;
                                si += i;
                            }
                        }
                        let (r, i) = y.get(((n * 3 + c) * 2 + oy) * 2 + ox);
                        assert!((r - sr / 9.0).abs() < 1e-14 && (i - si / 9.0).abs() < 1e-14);
                    }
                }
            }
        }
        assert!(complex_avg_pool2d(&x, 4).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let x = random_complex(shape![2, 2, 4, 4], 2);
        let w = random_complex(shape![2, 2, 2, 2], 3);
        let wg = random_complex(shape![2, 2], 4);
        let loss = |x: &ComplexTensor<f64>| {
            let y = complex_avg_pool2d(x, 2).unwrap();
            let g = complex_global_avg_pool(x).unwrap();
            y.re().mul(w.re()).unwrap().sum() + y.im().mul(w.im()).unwrap().sum()
                + g.re().mul(wg.re()).unwrap().sum() + g.im().mul(wg.im()).unwrap().sum()
        };
        let mut a = complex_avg_pool2d_backward(x.shape(), 2, &w).unwrap();
        a.add_assign(&complex_global_avg_pool_backward(x.shape(), &wg).unwrap()).unwrap();
        let analytic: Vec<f64> = a.re().data().iter().chain(a.im().data()).copied().collect();
        let numeric = central_difference(2 * x.len(), 1e-6, |i, h| {
            let mut xp = x.clone();
            let (re, im) = xp.parts_mut();
            if i < re.len() { re[i] += h } else { im[i - re.len()] += h }
            loss(&xp)
        });
        assert!(rel_error(&analytic, &numeric) < 1e-6);
    }
}
