use crate::error::{Error, Result};
use crate::shape;
use crate::tensor::{Real, Tensor};

/// Real affine classifier, `y = x W^T + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams<T> {
    /// `(out_features, in_features)`.
    pub weight: Tensor<T>,
    /// `(out_features)`.
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrad<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> LinearParams<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.shape().rank() != 2 || bias.shape().dims() != [weight.shape().dim(0)] {
            return Err(Error::shape("linear parameters", weight.shape(), bias.shape()));
        }
        Ok(Self { weight, bias })
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape().dim(1)
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape().dim(0)
    }

    fn batch(&self, x: &Tensor<T>) -> Result<usize> {
        match x.shape().dims() {
            &[b, f] if f == self.in_features() => Ok(b),
            _ => Err(Error::shape("linear_real input", x.shape(), self.weight.shape())),
        }
    }
}

pub fn linear_real<T: Real>(x: &Tensor<T>, params: &LinearParams<T>) -> Result<Tensor<T>> {
    let b = params.batch(x)?;
    let (fin, fout) = (params.in_features(), params.out_features());
    let mut out: Vec<T> = (0..b).flat_map(|_| params.bias.data().iter().copied()).collect();
    T::gemm(b, fin, fout, T::one(), x.data(), fin as isize, 1, params.weight.data(), 1, fin as isize, T::one(), &mut out, fout as isize, 1);
    Tensor::new(shape![b, fout], out)
}

pub fn linear_real_backward<T: Real>(
    x: &Tensor<T>,
    params: &LinearParams<T>,
    grad_out: &Tensor<T>,
) -> Result<LinearGrad<T>> {
    let b = params.batch(x)?;
    let (fin, fout) = (params.in_features(), params.out_features());
    if grad_out.shape().dims() != [b, fout] {
        return Err(Error::shape("linear_real_backward grad_out", grad_out.shape(), &shape![b, fout]));
    }
    let g = grad_out.data();
    let mut dx = vec![T::zero(); b * fin];
    T::gemm(b, fout, fin, T::one(), g, fout as isize, 1, params.weight.data(), fin as isize, 1, T::zero(), &mut dx, fin as isize, 1);
    let mut dw = vec![T::zero(); fout * fin];
    T::gemm(fout, b, fin, T::one(), g, 1, fout as isize, x.data(), fin as isize, 1, T::zero(), &mut dw, fin as isize, 1);
    let mut db = vec![T::zero(); fout];
    for row in g.chunks(fout) {
        for (acc, &v) in db.iter_mut().zip(row) {
            *acc += v;
        }
    }
    Ok(LinearGrad {
        input: Tensor::new(x.shape().clone(), dx)?,
        weight: Tensor::new(params.weight.shape().clone(), dw)?,
        bias: Tensor::new(params.bias.shape().clone(), db)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::testing::{central_difference, random_real, rel_error};

    #[test]
    fn identity_weights_pass_input_through() {
        let eye = Tensor::from_fn(shape![3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        let p = LinearParams::new(eye, Tensor::zeros(shape![3])).unwrap();
        let x = random_real(shape![2, 3], 1);
        assert_eq!(linear_real(&x, &p).unwrap(), x);
    }

    #[test]
    fn zero_input_gives_bias() {
        let p = LinearParams::new(random_real(shape![4, 3], 2), random_real(shape![4], 3)).unwrap();
        let y = linear_real(&Tensor::zeros(shape![2, 3]), &p).unwrap();
        assert_eq!(&y.data()[..4], p.bias.data());
        assert_eq!(&y.data()[4..], p.bias.data());
    }

    #[test]
    fn rejects_wrong_width() {
        let p = LinearParams::new(random_real(shape![4, 3], 2), random_real(shape![4], 3)).unwrap();
        assert!(linear_real(&Tensor::zeros(shape![2, 5]), &p).is_err());
        assert!(LinearParams::new(random_real(shape![4, 3], 2), random_real(shape![3], 3)).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let p = LinearParams::new(random_real(shape![4, 5], 4), random_real(shape![4], 5)).unwrap();
        let x = random_real(shape![3, 5], 6);
        let w = random_real(shape![3, 4], 7);
        let loss = |x: &Tensor<f64>, p: &LinearParams<f64>| linear_real(x, p).unwrap().mul(&w).unwrap().sum();
        let g = linear_real_backward(&x, &p, &w).unwrap();
        let nx = central_difference(x.len(), 1e-6, |i, h| {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            loss(&xp, &p)
        });
        let nw = central_difference(p.weight.len(), 1e-6, |i, h| {
            let mut pp = p.clone();
            pp.weight.data_mut()[i] += h;
            loss(&x, &pp)
        });
        let nb = central_difference(p.bias.len(), 1e-6, |i, h| {
            let mut pp = p.clone();
            pp.bias.data_mut()[i] += h;
            loss(&x, &pp)
        });
        assert!(rel_error(g.input.data(), &nx) < 1e-6);
        assert!(rel_error(g.weight.data(), &nw) < 1e-6);
        assert!(rel_error(g.bias.data(), &nb) < 1e-6);
    }
}
