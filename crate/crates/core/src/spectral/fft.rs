//! 2D discrete Fourier transforms on complex planes.
//!
//! [`dft2_naive`] evaluates the defining double sum directly and is kept as
//! the reference. [`fft2`] is an iterative radix-2 Cooley-Tukey transform,
//! applied to rows and then columns. Bins are in natural DFT order.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::{ComplexTensor, Real};

fn plane_dims<T: Real>(x: &ComplexTensor<T>, op: &'static str) -> Result<(usize, usize)> {
    match x.shape().dims() {
        &[h, w] => Ok((h, w)),
        _ => Err(Error::InvalidShape {
            shape: x.shape().clone(),
            reason: format!("{op} expects a 2-d plane"),
        }),
    }
}

/// Direct `O(H^2 W^2)` evaluation of
/// `X[u, v] = sum_{x, y} f[x, y] exp(-j 2 pi (u x / H + v y / W))`.
pub fn dft2_naive<T: Real>(input: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
    let (h, w) = plane_dims(input, "dft2_naive")?;
    let (re_in, im_in) = (input.re().data(), input.im().data());
    let mut re = vec![T::zero(); h * w];
    let mut im = vec![T::zero(); h * w];
    for u in 0..h {
        for v in 0..w {
            let mut acc_re = 0.0f64;
            let mut acc_im = 0.0f64;
            for x in 0..h {
                for y in 0..w {
                    // Reduce the phase exactly before scaling to radians.
                    let frac = ((u * x) % h) as f64 / h as f64 + ((v * y) % w) as f64 / w as f64;
                    let (s, c) = (-2.0 * PI * frac).sin_cos();
                    let a = re_in[x * w + y].as_f64();
                    let b = im_in[x * w + y].as_f64();
                    acc_re += a * c - b * s;
                    acc_im += a * s + b * c;
                }
            }
            re[u * w + v] = T::of(acc_re);
            im[u * w + v] = T::of(acc_im);
        }
    }
    ComplexTensor::from_parts(input.shape().clone(), re, im)
}

/// Forward 2D FFT of a power-of-two plane.
pub fn fft2<T: Real>(input: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
    transform(input, false, "fft2")
}

/// Inverse of [`fft2`], normalized by `1 / (H W)`.
pub fn idft2<T: Real>(spectrum: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
    transform(spectrum, true, "idft2")
}

fn transform<T: Real>(input: &ComplexTensor<T>, inverse: bool, op: &'static str) -> Result<ComplexTensor<T>> {
    let (h, w) = plane_dims(input, op)?;
    let plan = Fft2Plan::new(h, w).map_err(|_| Error::NotPowerOfTwo { op, rows: h, cols: w })?;
    let mut out = input.clone();
    let (re, im) = out.parts_mut();
    plan.run(re, im, inverse);
    Ok(out)
}

/// Precomputed twiddles for a radix-2 transform of length `n`.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo { op: "fft", rows: 1, cols: n });
        }
        let half = n / 2;
        let (sin, cos) = (0..half).map(|k| (-2.0 * PI * k as f64 / n as f64).sin_cos()).unzip();
        Ok(Self { n, cos, sin })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place unnormalized transform. `inverse` flips the twiddle sign.
    pub fn run<T: Real>(&self, re: &mut [T], im: &mut [T], inverse: bool) {
        let n = self.n;
        debug_assert!(re.len() == n && im.len() == n);
        if n == 1 {
            return;
        }
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let sign = if inverse { -1.0 } else { 1.0 };
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let wr = T::of(self.cos[k * step]);
                    let wi = T::of(sign * self.sin[k * step]);
                    let (a, b) = (start + k, start + k + half);
                    let tr = re[b] * wr - im[b] * wi;
                    let ti = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - tr;
                    im[b] = im[a] - ti;
                    re[a] += tr;
                    im[a] += ti;
                }
            }
            len <<= 1;
        }
    }
}

/// Row/column plans for a fixed `H x W` plane, reusable across many patches.
#[derive(Debug, Clone)]
pub struct Fft2Plan {
    rows: FftPlan,
    cols: FftPlan,
}

impl Fft2Plan {
    pub fn new(h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 || !h.is_power_of_two() || !w.is_power_of_two() {
            return Err(Error::NotPowerOfTwo { op: "fft2", rows: h, cols: w });
        }
        Ok(Self {
            rows: FftPlan::new(h)?,
            cols: FftPlan::new(w)?,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }

    /// Transform one row-major `H x W` plane in place.
    pub fn run<T: Real>(&self, re: &mut [T], im: &mut [T], inverse: bool) {
        let (h, w) = self.dims();
        assert_eq!(re.len(), h * w);
        assert_eq!(im.len(), h * w);
        for r in 0..h {
            self.cols.run(&mut re[r * w..(r + 1) * w], &mut im[r * w..(r + 1) * w], inverse);
        }
        let mut col_re = vec![T::zero(); h];
        let mut col_im = vec![T::zero(); h];
        for c in 0..w {
            for r in 0..h {
                col_re[r] = re[r * w + c];
                col_im[r] = im[r * w + c];
            }
            self.rows.run(&mut col_re, &mut col_im, inverse);
            for r in 0..h {
                re[r * w + c] = col_re[r];
                im[r * w + c] = col_im[r];
            }
        }
        if inverse {
            let scale = T::of(1.0 / (h * w) as f64);
            re.iter_mut().for_each(|v| *v *= scale);
            im.iter_mut().for_each(|v| *v *= scale);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape;
    use crate::tensor::Tensor;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(h: usize, w: usize, seed: u64) -> ComplexTensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let re = (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let im = (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ComplexTensor::from_parts(shape![h, w], re, im).unwrap()
    }

    /// Term-by-term evaluation of the DFT sum with `num_complex`, written
    /// independently of `dft2_naive`.
    fn scalar_dft(x: &ComplexTensor<f64>) -> Vec<Complex64> {
        let (h, w) = (x.shape().dim(0), x.shape().dim(1));
        let mut out = vec![Complex64::new(0.0, 0.0); h * w];
        for u in 0..h {
            for v in 0..w {
                for xx in 0..h {
                    for yy in 0..w {
                        let (a, b) = x.get(xx * w + yy);
                        let ang = -2.0 * PI * ((u * xx) as f64 / h as f64 + (v * yy) as f64 / w as f64);
                        out[u * w + v] += Complex64::new(a, b) * Complex64::from_polar(1.0, ang);
                    }
                }
            }
        }
        out
    }

    fn max_abs_diff(a: &ComplexTensor<f64>, b: &ComplexTensor<f64>) -> f64 {
        (0..a.len())
            .map(|k| {
                let (ar, ai) = a.get(k);
                let (br, bi) = b.get(k);
                (ar - br).abs().max((ai - bi).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn constant_image_is_dc_only() {
        let (m, n, c) = (4, 6, 0.7);
        let x = ComplexTensor::from_real(Tensor::full(shape![m, n], c));
        let y = dft2_naive(&x).unwrap();
        assert!((y.get(0).0 - c * (m * n) as f64).abs() < 1e-12);
        for k in 1..m * n {
            let (r, i) = y.get(k);
            assert!(r.abs() < 1e-12 && i.abs() < 1e-12, "bin {k}: {r} {i}");
        }
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let mut re = vec![0.0; 25];
        re[0] = 1.0;
        let x = ComplexTensor::from_parts(shape![5, 5], re, vec![0.0; 25]).unwrap();
        let y = dft2_naive(&x).unwrap();
        for k in 0..25 {
            assert_eq!(y.get(k), (1.0, 0.0));
        }
    }

    #[test]
    fn naive_matches_scalar_sum() {
        let x = random(8, 8, 11);
        let y = dft2_naive(&x).unwrap();
        for (k, z) in scalar_dft(&x).iter().enumerate() {
            let (r, i) = y.get(k);
            assert!((r - z.re).abs() < 1e-10 && (i - z.im).abs() < 1e-10);
        }
    }

    #[test]
    fn fft_matches_naive_f64() {
        for seed in 0..5 {
            let x = random(16, 16, seed);
            assert!(max_abs_diff(&fft2(&x).unwrap(), &dft2_naive(&x).unwrap()) < 1e-10);
        }
        let x = random(4, 32, 99);
        assert!(max_abs_diff(&fft2(&x).unwrap(), &dft2_naive(&x).unwrap()) < 1e-10);
    }

    #[test]
    fn fft_matches_naive_f32() {
        let x64 = random(16, 16, 5);
        let x32: ComplexTensor<f32> = x64.cast();
        let fast = fft2(&x32).unwrap().cast::<f64>();
        let slow = dft2_naive(&x32).unwrap().cast::<f64>();
        // 16x16 sums of unit-scale values reach ~|16|; 1e-6 relative to that scale.
        assert!(max_abs_diff(&fast, &slow) < 1e-6 * 256.0, "{}", max_abs_diff(&fast, &slow));
    }

    #[test]
    fn rejects_non_power_of_two() {
        let x = random(6, 8, 0);
        let err = fft2(&x).unwrap_err();
        assert!(matches!(err, Error::NotPowerOfTwo { rows: 6, cols: 8, .. }));
        assert!(err.to_string().contains("resize"));
        assert!(idft2(&x).is_err());
    }

    #[test]
    fn inverse_of_dc_only_spectrum_is_constant() {
        let (m, n, c) = (8, 4, 0.25);
        let mut re = vec![0.0; m * n];
        re[0] = c * (m * n) as f64;
        let spec = ComplexTensor::from_parts(shape![m, n], re, vec![0.0; m * n]).unwrap();
        let img = idft2(&spec).unwrap();
        for k in 0..m * n {
            let (r, i) = img.get(k);
            assert!((r - c).abs() < 1e-15 && i.abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn round_trip(seed in any::<u64>(), lh in 0u32..5, lw in 0u32..5) {
            let x = random(1 << lh, 1 << lw, seed);
            let back = idft2(&fft2(&x).unwrap()).unwrap();
            prop_assert!(max_abs_diff(&x, &back) < 1e-12);
        }

        #[test]
        fn parseval(seed in any::<u64>()) {
            let x = random(16, 16, seed);
            let y = fft2(&x).unwrap();
            let e_time: f64 = x.magnitude().data().iter().map(|m| m * m).sum();
            let e_freq: f64 = y.magnitude().data().iter().map(|m| m * m).sum::<f64>() / 256.0;
            prop_assert!((e_time - e_freq).abs() <= 1e-6 * e_time);
        }

        #[test]
        fn linearity(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let x = random(8, 16, seed);
            let y = random(8, 16, seed ^ 7);
            let lhs = fft2(&x.scale(alpha).add(&y.scale(beta)).unwrap()).unwrap();
            let rhs = fft2(&x).unwrap().scale(alpha).add(&fft2(&y).unwrap().scale(beta)).unwrap();
            let scale = rhs.magnitude().data().iter().fold(1.0f64, |m, v| m.max(*v));
            prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-6 * scale);
        }
    }
}
