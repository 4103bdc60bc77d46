//! Complex 2D convolution built from two real kernel banks.
//!
//! For input `a + bi` and kernel `c + di`:
//!
//! ```text
//! out.re = a * c - b * d
//! out.im = a * d + b * c
//! ```
//!
//! where `*` is real cross-correlation with zero padding. Both parts are
//! produced by one GEMM against the stacked weight matrix
//! `[[c, -d], [d, c]]` applied to the stacked patches `[col(a); col(b)]`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::shape;
use crate::tensor::{ComplexTensor, Real, Shape, Tensor};

/// Samples per gradient-reduction chunk. Fixed so the summation order of
/// kernel gradients never depends on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexConvParams<T> {
    /// Real kernel bank `c`, `(Cout, Cin, k, k)`.
    pub kernel_re: Tensor<T>,
    /// Imaginary kernel bank `d`, `(Cout, Cin, k, k)`.
    pub kernel_im: Tensor<T>,
    /// Optional complex bias, `(Cout)`.
    pub bias: Option<ComplexTensor<T>>,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrad<T> {
    pub input: ComplexTensor<T>,
    pub kernel_re: Tensor<T>,
    pub kernel_im: Tensor<T>,
    pub bias: Option<ComplexTensor<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Geometry {
    batch: usize,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn ckk(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn out_plane(&self) -> usize {
        self.ho * self.wo
    }
}

pub fn conv_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

impl<T: Real> ComplexConvParams<T> {
    pub fn new(kernel_re: Tensor<T>, kernel_im: Tensor<T>, stride: usize, padding: usize) -> Result<Self> {
        if kernel_re.shape() != kernel_im.shape() {
            return Err(Error::shape("complex conv kernels", kernel_re.shape(), kernel_im.shape()));
        }
        let dims = kernel_re.shape().dims();
        if dims.len() != 4 || dims[2] != dims[3] {
            return Err(Error::InvalidShape {
                shape: kernel_re.shape().clone(),
                reason: "kernel must be (Cout, Cin, k, k)".into(),
            });
        }
        if stride == 0 {
            return Err(Error::Config("convolution stride must be >= 1".into()));
        }
        Ok(Self {
            kernel_re,
            kernel_im,
            bias: None,
            stride,
            padding,
        })
    }

    pub fn with_bias(mut self, bias: ComplexTensor<T>) -> Result<Self> {
        if bias.shape().dims() != [self.out_channels()] {
            return Err(Error::shape("complex conv bias", bias.shape(), &shape![self.out_channels()]));
        }
        self.bias = Some(bias);
        Ok(self)
    }

    pub fn out_channels(&self) -> usize {
        self.kernel_re.shape().dim(0)
    }

    pub fn in_channels(&self) -> usize {
        self.kernel_re.shape().dim(1)
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_re.shape().dim(2)
    }

    fn geometry(&self, x: &Shape) -> Result<Geometry> {
        let (batch, cin, h, w) = x.nchw()?;
        if cin != self.in_channels() {
            return Err(Error::ShapeMismatch {
                op: "complex_conv2d input channels",
                left: x.clone(),
                right: self.kernel_re.shape().clone(),
            });
        }
        let k = self.kernel_size();
        let ho = conv_output_size(h, k, self.stride, self.padding);
        let wo = conv_output_size(w, k, self.stride, self.padding);
        let (Some(ho), Some(wo)) = (ho, wo) else {
            return Err(Error::ShapeMismatch {
                op: "complex_conv2d spatial dims",
                left: x.clone(),
                right: self.kernel_re.shape().clone(),
            });
        };
        Ok(Geometry {
            batch,
            cin,
            cout: self.out_channels(),
            h,
            w,
            k,
            stride: self.stride,
            pad: self.padding,
            ho,
            wo,
        })
    }

    /// Stacked `(2 Cout) x (2 Cin k k)` real matrix `[[c, -d], [d, c]]`.
    fn stacked_weights(&self) -> Vec<T> {
        let cout = self.out_channels();
        let ckk = self.kernel_re.len() / cout;
        let (c, d) = (self.kernel_re.data(), self.kernel_im.data());
        let mut w = vec![T::zero(); 4 * cout * ckk];
        let row = 2 * ckk;
        for o in 0..cout {
            for j in 0..ckk {
                let (cv, dv) = (c[o * ckk + j], d[o * ckk + j]);
                w[o * row + j] = cv;
                w[o * row + ckk + j] = -dv;
                w[(cout + o) * row + j] = dv;
                w[(cout + o) * row + ckk + j] = cv;
            }
        }
        w
    }
}

/// Fill `col` (`2 Cin k k` rows by `Ho Wo` cols) from one sample.
fn im2col<T: Real>(g: &Geometry, re: &[T], im: &[T], col: &mut [T]) {
    let plane = g.out_plane();
    let ckk = g.ckk();
    for (part, src) in [re, im].into_iter().enumerate() {
        for ci in 0..g.cin {
            let chan = &src[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let row = part * ckk + (ci * g.k + ky) * g.k + kx;
                    let dst = &mut col[row * plane..(row + 1) * plane];
                    for oy in 0..g.ho {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                        if iy < 0 || iy >= g.h as isize {
                            line.fill(T::zero());
                            continue;
                        }
                        let base = iy as usize * g.w;
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            *v = if ix < 0 || ix >= g.w as isize {
                                T::zero()
                            } else {
                                chan[base + ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add `col` back into one sample's input gradient.
fn col2im<T: Real>(g: &Geometry, col: &[T], re: &mut [T], im: &mut [T]) {
    let plane = g.out_plane();
    let ckk = g.ckk();
    for (part, dst) in [re, im].into_iter().enumerate() {
        for ci in 0..g.cin {
            let chan = &mut dst[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let row = part * ckk + (ci * g.k + ky) * g.k + kx;
                    let src = &col[row * plane..(row + 1) * plane];
                    for oy in 0..g.ho {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let base = iy as usize * g.w;
                        for ox in 0..g.wo {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                chan[base + ix as usize] += src[oy * g.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Forward complex convolution of a `(N, Cin, H, W)` batch.
pub fn complex_conv2d<T: Real>(x: &ComplexTensor<T>, params: &ComplexConvParams<T>) -> Result<ComplexTensor<T>> {
    let g = params.geometry(x.shape())?;
    let weights = params.stacked_weights();
    let plane = g.out_plane();
    let ckk2 = 2 * g.ckk();
    let in_len = g.cin * g.h * g.w;
    let out_len = g.cout * plane;
    let mut out = ComplexTensor::zeros(shape![g.batch, g.cout, g.ho, g.wo]);
    let (xr, xi) = (x.re().data(), x.im().data());
    {
        let (out_re, out_im) = out.parts_mut();
        out_re
            .par_chunks_mut(out_len)
            .zip(out_im.par_chunks_mut(out_len))
            .enumerate()
            .for_each_init(
                || vec![T::zero(); ckk2 * plane],
                |col, (n, (ore, oim))| {
                    im2col(&g, &xr[n * in_len..(n + 1) * in_len], &xi[n * in_len..(n + 1) * in_len], col);
                    let half = g.cout * ckk2;
                    T::gemm(g.cout, ckk2, plane, T::one(), &weights[..half], ckk2 as isize, 1, col, plane as isize, 1, T::zero(), ore, plane as isize, 1);
                    T::gemm(g.cout, ckk2, plane, T::one(), &weights[half..], ckk2 as isize, 1, col, plane as isize, 1, T::zero(), oim, plane as isize, 1);
                    if let Some(bias) = &params.bias {
                        for o in 0..g.cout {
                            let (br, bi) = bias.get(o);
                            ore[o * plane..(o + 1) * plane].iter_mut().for_each(|v| *v += br);
                            oim[o * plane..(o + 1) * plane].iter_mut().for_each(|v| *v += bi);
                        }
                    }
                },
            );
    }
    Ok(out)
}

/// Reverse-mode pass of [`complex_conv2d`], treating real and imaginary
/// planes as independent real channels.
pub fn complex_conv2d_backward<T: Real>(
    x: &ComplexTensor<T>,
    params: &ComplexConvParams<T>,
    grad_out: &ComplexTensor<T>,
) -> Result<ConvGrad<T>> {
    let g = params.geometry(x.shape())?;
    let expected = shape![g.batch, g.cout, g.ho, g.wo];
    if grad_out.shape() != &expected {
        return Err(Error::shape("complex_conv2d_backward grad_out", grad_out.shape(), &expected));
    }
    let weights = params.stacked_weights();
    let plane = g.out_plane();
    let ckk = g.ckk();
    let ckk2 = 2 * ckk;
    let in_len = g.cin * g.h * g.w;
    let out_len = g.cout * plane;
    let half = g.cout * ckk2;
    let (xr, xi) = (x.re().data(), x.im().data());
    let (gr, gi) = (grad_out.re().data(), grad_out.im().data());

    let mut grad_in = ComplexTensor::zeros(x.shape().clone());
    let mut grad_w = vec![T::zero(); 2 * half];
    {
        let (dxr, dxi) = grad_in.parts_mut();
        let samples: Vec<(usize, &mut [T], &mut [T])> = dxr
            .chunks_mut(in_len)
            .zip(dxi.chunks_mut(in_len))
            .enumerate()
            .map(|(n, (a, b))| (n, a, b))
            .collect();
        let mut samples = samples;
        for chunk in samples.chunks_mut(GRAD_CHUNK) {
            let partials: Vec<Vec<T>> = chunk
                .par_iter_mut()
                .map(|(n, dre, dim)| {
                    let n = *n;
                    let go_re = &gr[n * out_len..(n + 1) * out_len];
                    let go_im = &gi[n * out_len..(n + 1) * out_len];
                    let mut col = vec![T::zero(); ckk2 * plane];
                    // Input gradient: dcol = W_top^T g_re + W_bot^T g_im.
                    T::gemm(ckk2, g.cout, plane, T::one(), &weights[..half], 1, ckk2 as isize, go_re, plane as isize, 1, T::zero(), &mut col, plane as isize, 1);
                    T::gemm(ckk2, g.cout, plane, T::one(), &weights[half..], 1, ckk2 as isize, go_im, plane as isize, 1, T::one(), &mut col, plane as isize, 1);
                    col2im(&g, &col, dre, dim);
                    // Weight gradient: dW = [g_re; g_im] col^T.
                    im2col(&g, &xr[n * in_len..(n + 1) * in_len], &xi[n * in_len..(n + 1) * in_len], &mut col);
                    let mut dw = vec![T::zero(); 2 * half];
                    let (top, bottom) = dw.split_at_mut(half);
                    T::gemm(g.cout, plane, ckk2, T::one(), go_re, plane as isize, 1, &col, 1, plane as isize, T::zero(), top, ckk2 as isize, 1);
                    T::gemm(g.cout, plane, ckk2, T::one(), go_im, plane as isize, 1, &col, 1, plane as isize, T::zero(), bottom, ckk2 as isize, 1);
                    dw
                })
                .collect();
            for dw in partials {
                for (acc, v) in grad_w.iter_mut().zip(dw) {
                    *acc += v;
                }
            }
        }
    }

    // Fold the stacked gradient back onto the two kernel banks.
    let mut dc = vec![T::zero(); g.cout * ckk];
    let mut dd = vec![T::zero(); g.cout * ckk];
    for o in 0..g.cout {
        let top = &grad_w[o * ckk2..(o + 1) * ckk2];
        let bottom = &grad_w[(g.cout + o) * ckk2..(g.cout + o + 1) * ckk2];
        for j in 0..ckk {
            dc[o * ckk + j] = top[j] + bottom[ckk + j];
            dd[o * ckk + j] = bottom[j] - top[ckk + j];
        }
    }

    let bias = params.bias.as_ref().map(|_| {
        let mut br = vec![T::zero(); g.cout];
        let mut bi = vec![T::zero(); g.cout];
        for n in 0..g.batch {
            for o in 0..g.cout {
                let s = n * out_len + o * plane;
                br[o] += gr[s..s + plane].iter().copied().sum::<T>();
                bi[o] += gi[s..s + plane].iter().copied().sum::<T>();
            }
        }
        ComplexTensor::from_parts(shape![g.cout], br, bi).expect("bias gradient shape")
    });

    let kshape = params.kernel_re.shape().clone();
    Ok(ConvGrad {
        input: grad_in,
        kernel_re: Tensor::new(kshape.clone(), dc)?,
        kernel_im: Tensor::new(kshape, dd)?,
        bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::testing::{central_difference, rel_error, random_complex, random_real};
    use num_complex::Complex64;

    fn params(cout: usize, cin: usize, k: usize, stride: usize, pad: usize, seed: u64) -> ComplexConvParams<f64> {
        ComplexConvParams::new(
            random_real(shape![cout, cin, k, k], seed),
            random_real(shape![cout, cin, k, k], seed + 1),
            stride,
            pad,
        )
        .unwrap()
    }

    /// Per-output-element complex multiply-accumulate, independent of the
    /// im2col/GEMM path.
    fn oracle(x: &ComplexTensor<f64>, p: &ComplexConvParams<f64>) -> Vec<Complex64> {
        let (n, cin, h, w) = x.shape().nchw().unwrap();
        let (cout, k, s, pad) = (p.out_channels(), p.kernel_size(), p.stride, p.padding);
        let ho = (h + 2 * pad - k) / s + 1;
        let wo = (w + 2 * pad - k) / s + 1;
        let mut out = Vec::new();
        for b in 0..n {
            for o in 0..cout {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = match &p.bias {
                            Some(bias) => Complex64::new(bias.get(o).0, bias.get(o).1),
                            None => Complex64::new(0.0, 0.0),
                        };
                        for c in 0..cin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * s + ky) as isize - pad as isize;
                                    let ix = (ox * s + kx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let xi = ((b * cin + c) * h + iy as usize) * w + ix as usize;
                                    let ki = ((o * cin + c) * k + ky) * k + kx;
                                    let pv = Complex64::new(x.re().data()[xi], x.im().data()[xi]);
                                    let qv = Complex64::new(p.kernel_re.data()[ki], p.kernel_im.data()[ki]);
                                    acc += pv * qv;
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        out
    }

    fn max_oracle_error(x: &ComplexTensor<f64>, p: &ComplexConvParams<f64>) -> f64 {
        let y = complex_conv2d(x, p).unwrap();
        oracle(x, p)
            .iter()
            .enumerate()
            .map(|(i, z)| (y.get(i).0 - z.re).abs().max((y.get(i).1 - z.im).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn unit_kernel_is_identity() {
        let p = ComplexConvParams::new(Tensor::full(shape![1, 1, 1, 1], 1.0), Tensor::zeros(shape![1, 1, 1, 1]), 1, 0).unwrap();
        let x = random_complex(shape![2, 1, 3, 4], 1);
        assert_eq!(complex_conv2d(&x, &p).unwrap(), x);
    }

    #[test]
    fn imaginary_unit_kernel_rotates() {
        let p = ComplexConvParams::new(Tensor::zeros(shape![1, 1, 1, 1]), Tensor::full(shape![1, 1, 1, 1], 1.0), 1, 0).unwrap();
        let x = random_complex(shape![1, 1, 2, 2], 2);
        let y = complex_conv2d(&x, &p).unwrap();
        for k in 0..4 {
            let (a, b) = x.get(k);
            assert_eq!(y.get(k), (-b, a));
        }
    }

    #[test]
    fn matches_complex_oracle() {
        let x = random_complex(shape![2, 2, 8, 8], 3);
        assert!(max_oracle_error(&x, &params(3, 2, 3, 1, 1, 10)) <= 1e-10);
        assert!(max_oracle_error(&x, &params(4, 2, 3, 2, 1, 11)) <= 1e-10);
        assert!(max_oracle_error(&x, &params(2, 2, 1, 2, 0, 12)) <= 1e-10);
        let biased = params(2, 2, 3, 1, 0, 13).with_bias(random_complex(shape![2], 14)).unwrap();
        assert!(max_oracle_error(&x, &biased) <= 1e-10);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let p = params(2, 3, 3, 1, 1, 0);
        assert!(complex_conv2d(&random_complex(shape![1, 2, 4, 4], 0), &p).is_err());
        assert!(complex_conv2d(&random_complex(shape![1, 3, 1, 1], 0), &params(2, 3, 3, 1, 0, 0)).is_err());
        let x = random_complex(shape![1, 3, 4, 4], 0);
        assert!(complex_conv2d_backward(&x, &p, &random_complex(shape![1, 2, 3, 3], 0)).is_err());
    }

    #[test]
    fn zero_grad_out_gives_zero_gradients() {
        let p = params(2, 2, 3, 1, 1, 5).with_bias(random_complex(shape![2], 6)).unwrap();
        let x = random_complex(shape![2, 2, 4, 4], 7);
        let gr = complex_conv2d_backward(&x, &p, &ComplexTensor::zeros(shape![2, 2, 4, 4])).unwrap();
        assert!(gr.input.re().data().iter().chain(gr.input.im().data()).all(|&v| v == 0.0));
        assert!(gr.kernel_re.data().iter().chain(gr.kernel_im.data()).all(|&v| v == 0.0));
        let b = gr.bias.unwrap();
        assert!(b.re().data().iter().chain(b.im().data()).all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_passes_gradient_through() {
        let p = ComplexConvParams::new(Tensor::full(shape![1, 1, 1, 1], 1.0), Tensor::zeros(shape![1, 1, 1, 1]), 1, 0).unwrap();
        let x = random_complex(shape![1, 1, 3, 3], 8);
        let g = random_complex(shape![1, 1, 3, 3], 9);
        assert_eq!(complex_conv2d_backward(&x, &p, &g).unwrap().input, g);
    }

    /// Scalar loss `sum(w_re * y.re + w_im * y.im)` with random weights.
    fn check_gradients(cout: usize, cin: usize, hw: usize, k: usize, stride: usize, pad: usize, seed: u64) -> f64 {
        let p = params(cout, cin, k, stride, pad, seed).with_bias(random_complex(shape![cout], seed + 2)).unwrap();
        let x = random_complex(shape![2, cin, hw, hw], seed + 3);
        let y = complex_conv2d(&x, &p).unwrap();
        let w = random_complex(y.shape().clone(), seed + 4);
        let loss = |x: &ComplexTensor<f64>, p: &ComplexConvParams<f64>| {
            let y = complex_conv2d(x, p).unwrap();
            y.re().mul(w.re()).unwrap().sum() + y.im().mul(w.im()).unwrap().sum()
        };
        let grads = complex_conv2d_backward(&x, &p, &w).unwrap();
        let mut worst = 0.0f64;
        let analytic: Vec<f64> = grads.input.re().data().iter().chain(grads.input.im().data()).copied().collect();
        let numeric = central_difference(x.len() * 2, 1e-6, |i, h| {
            let mut xp = x.clone();
            let (re, im) = xp.parts_mut();
            if i < re.len() { re[i] += h } else { im[i - re.len()] += h }
            loss(&xp, &p)
        });
        worst = worst.max(rel_error(&analytic, &numeric));
        for bank in 0..2 {
            let analytic = if bank == 0 { grads.kernel_re.data() } else { grads.kernel_im.data() };
            let numeric = central_difference(analytic.len(), 1e-6, |i, h| {
                let mut pp = p.clone();
                let t = if bank == 0 { &mut pp.kernel_re } else { &mut pp.kernel_im };
                t.data_mut()[i] += h;
                loss(&x, &pp)
            });
            worst = worst.max(rel_error(analytic, &numeric));
        }
        let gb = grads.bias.unwrap();
        let analytic: Vec<f64> = gb.re().data().iter().chain(gb.im().data()).copied().collect();
        let numeric = central_difference(2 * cout, 1e-6, |i, h| {
            let mut pp = p.clone();
            let b = pp.bias.as_mut().unwrap();
            let (re, im) = b.parts_mut();
            if i < cout { re[i] += h } else { im[i - cout] += h }
            loss(&x, &pp)
        });
        worst.max(rel_error(&analytic, &numeric))
    }

    #[test]
    fn backward_matches_finite_differences() {
        assert!(check_gradients(1, 1, 2, 2, 1, 0, 20) < 1e-4);
        assert!(check_gradients(2, 3, 5, 3, 1, 1, 21) < 1e-4);
        assert!(check_gradients(3, 2, 6, 3, 2, 1, 22) < 1e-4);
        assert!(check_gradients(2, 2, 4, 1, 2, 0, 23) < 1e-4);
    }

    #[test]
    fn gradient_is_independent_of_thread_count() {
        let p = params(4, 3, 3, 1, 1, 30);
        let x = random_complex(shape![19, 3, 6, 6], 31);
        let g = random_complex(shape![19, 4, 6, 6], 32);
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let multi = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = single.install(|| complex_conv2d_backward(&x, &p, &g).unwrap());
        let b = multi.install(|| complex_conv2d_backward(&x, &p, &g).unwrap());
        assert_eq!(a, b);
    }
}
