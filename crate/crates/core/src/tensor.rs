//! Dense real and complex tensors.
//!
//! Complex tensors use split storage: one real plane for the real parts and
//! one for the imaginary parts. Activations are row-major
//! `(batch, channel, height, width)`.

use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, Range, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Precision::F32 => f.write_str("f32"),
            Precision::F64 => f.write_str("f64"),
        }
    }
}

/// Floating-point scalar used by every kernel in the crate.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + fmt::Debug
    + fmt::Display
    + 'static
{
    const PRECISION: Precision;

    /// `c = alpha * a * b + beta * c` with `a: m x k`, `b: k x n`, `c: m x n`,
    /// all described by element strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite float converts to f64")
    }
}

fn strided_extent(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    (rows - 1) * rs.unsigned_abs() + (cols - 1) * cs.unsigned_abs() + 1
}

macro_rules! impl_real {
    ($t:ty, $prec:expr, $gemm:path) => {
        impl Real for $t {
            const PRECISION: Precision = $prec;

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                assert!(rsa >= 0 && csa >= 0 && rsb >= 0 && csb >= 0 && rsc >= 0 && csc >= 0);
                assert!(a.len() >= strided_extent(m, k, rsa, csa), "gemm: lhs too short");
                assert!(b.len() >= strided_extent(k, n, rsb, csb), "gemm: rhs too short");
                assert!(c.len() >= strided_extent(m, n, rsc, csc), "gemm: output too short");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every accessed offset lies inside the slices, checked above.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }
        }
    };
}

impl_real!(f32, Precision::F32, matrixmultiply::sgemm);
impl_real!(f64, Precision::F64, matrixmultiply::dgemm);

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        let shape = Shape(dims);
        if shape.0.is_empty() {
            return Err(Error::InvalidShape {
                shape,
                reason: "rank must be at least 1".into(),
            });
        }
        if shape.0.contains(&0) {
            return Err(Error::InvalidShape {
                shape,
                reason: "every dimension must be >= 1".into(),
            });
        }
        let mut count: usize = 1;
        for &d in &shape.0 {
            count = match count.checked_mul(d) {
                Some(c) => c,
                None => {
                    return Err(Error::InvalidShape {
                        shape,
                        reason: "element count overflows".into(),
                    })
                }
            };
        }
        Ok(shape)
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.0[axis]
    }

    /// `(batch, channels, height, width)` for a rank-4 shape.
    pub fn nchw(&self) -> Result<(usize, usize, usize, usize)> {
        match self.0.as_slice() {
            &[n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::InvalidShape {
                shape: self.clone(),
                reason: "expected (batch, channel, height, width)".into(),
            }),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("x")?;
            }
            write!(f, "{d}")?;
        }
        f.write_str("]")
    }
}

/// Construct a shape from literal dims; panics on zero dims.
#[macro_export]
macro_rules! shape {
    ($($d:expr),+ $(,)?) => {
        $crate::tensor::Shape::new(vec![$($d),+]).expect("valid literal shape")
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::InvalidShape {
                reason: format!("data length {} does not match element count {}", data.len(), shape.numel()),
                shape,
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: Shape, value: T) -> Self {
        let data = vec![value; shape.numel()];
        Self { shape, data }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize) -> T) -> Self {
        let data = (0..shape.numel()).map(&mut f).collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape("add_assign", &self.shape, &other.shape));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    /// Reinterpret the data under a new shape with the same element count.
    pub fn reshape(&self, shape: Shape) -> Result<Self> {
        if shape.numel() != self.shape.numel() {
            return Err(Error::InvalidShape {
                reason: format!("cannot reshape {} into a different element count", self.shape),
                shape,
            });
        }
        Ok(Self {
            shape,
            data: self.data.clone(),
        })
    }

    /// Copy the sub-range `range` along `axis`.
    pub fn slice(&self, axis: usize, range: Range<usize>) -> Result<Self> {
        let dims = self.shape.dims();
        if axis >= dims.len() {
            return Err(Error::OutOfBounds(format!("axis {axis} for shape {}", self.shape)));
        }
        if range.start >= range.end || range.end > dims[axis] {
            return Err(Error::OutOfBounds(format!(
                "range {}..{} on axis {axis} of shape {}",
                range.start, range.end, self.shape
            )));
        }
        let outer: usize = dims[..axis].iter().product();
        let inner: usize = dims[axis + 1..].iter().product();
        let len = range.end - range.start;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dims[axis] * inner;
            data.extend_from_slice(&self.data[base + range.start * inner..base + range.end * inner]);
        }
        let mut new_dims = dims.to_vec();
        new_dims[axis] = len;
        Ok(Self {
            shape: Shape(new_dims),
            data,
        })
    }

    /// Concatenate tensors along `axis`; all other dims must agree.
    pub fn concat(parts: &[&Self], axis: usize) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::OutOfBounds("concat of zero tensors".into()))?;
        let dims = first.shape.dims();
        if axis >= dims.len() {
            return Err(Error::OutOfBounds(format!("axis {axis} for shape {}", first.shape)));
        }
        for p in &parts[1..] {
            let pd = p.shape.dims();
            let compatible = pd.len() == dims.len() && pd.iter().zip(dims).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", &first.shape, &p.shape));
            }
        }
        let outer: usize = dims[..axis].iter().product();
        let inner: usize = dims[axis + 1..].iter().product();
        let total_axis: usize = parts.iter().map(|p| p.shape.dim(axis)).sum();
        let mut data = Vec::with_capacity(outer * total_axis * inner);
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape.dim(axis) * inner;
                data.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut new_dims = dims.to_vec();
        new_dims[axis] = total_axis;
        Ok(Self {
            shape: Shape(new_dims),
            data,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor<T> {
    re: Tensor<T>,
    im: Tensor<T>,
}

impl<T: Real> ComplexTensor<T> {
    pub fn new(re: Tensor<T>, im: Tensor<T>) -> Result<Self> {
        if re.shape != im.shape {
            return Err(Error::shape("complex", &re.shape, &im.shape));
        }
        Ok(Self { re, im })
    }

    pub fn from_parts(shape: Shape, re: Vec<T>, im: Vec<T>) -> Result<Self> {
        Self::new(Tensor::new(shape.clone(), re)?, Tensor::new(shape, im)?)
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            re: Tensor::zeros(shape.clone()),
            im: Tensor::zeros(shape),
        }
    }

    pub fn from_real(re: Tensor<T>) -> Self {
        let im = Tensor::zeros(re.shape.clone());
        Self { re, im }
    }

    pub fn shape(&self) -> &Shape {
        &self.re.shape
    }

    pub fn re(&self) -> &Tensor<T> {
        &self.re
    }

    pub fn im(&self) -> &Tensor<T> {
        &self.im
    }

    pub fn parts_mut(&mut self) -> (&mut [T], &mut [T]) {
        (&mut self.re.data, &mut self.im.data)
    }

    pub fn into_parts(self) -> (Tensor<T>, Tensor<T>) {
        (self.re, self.im)
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn get(&self, index: usize) -> (T, T) {
        (self.re.data[index], self.im.data[index])
    }

    pub fn all_finite(&self) -> bool {
        self.re.all_finite() && self.im.all_finite()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::shape("complex add", self.shape(), other.shape()));
        }
        Ok(Self {
            re: self.re.add(&other.re)?,
            im: self.im.add(&other.im)?,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::shape("complex sub", self.shape(), other.shape()));
        }
        Ok(Self {
            re: self.re.sub(&other.re)?,
            im: self.im.sub(&other.im)?,
        })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape("complex add_assign", self.shape(), other.shape()));
        }
        self.re.add_assign(&other.re)?;
        self.im.add_assign(&other.im)
    }

    /// Elementwise complex product.
    pub fn cmul(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::shape("cmul", self.shape(), other.shape()));
        }
        let n = self.len();
        let (a, b) = (&self.re.data, &self.im.data);
        let (c, d) = (&other.re.data, &other.im.data);
        let mut re = Vec::with_capacity(n);
        let mut im = Vec::with_capacity(n);
        for k in 0..n {
            re.push(a[k] * c[k] - b[k] * d[k]);
            im.push(a[k] * d[k] + b[k] * c[k]);
        }
        Ok(Self {
            re: Tensor { shape: self.shape().clone(), data: re },
            im: Tensor { shape: self.shape().clone(), data: im },
        })
    }

    pub fn scale(&self, k: T) -> Self {
        Self {
            re: self.re.scale(k),
            im: self.im.scale(k),
        }
    }

    pub fn magnitude(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape().clone(),
            data: self.re.data.iter().zip(&self.im.data).map(|(&r, &i)| r.hypot(i)).collect(),
        }
    }

    pub fn phase(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape().clone(),
            data: self.re.data.iter().zip(&self.im.data).map(|(&r, &i)| i.atan2(r)).collect(),
        }
    }

    pub fn reshape(&self, shape: Shape) -> Result<Self> {
        Ok(Self {
            re: self.re.reshape(shape.clone())?,
            im: self.im.reshape(shape)?,
        })
    }

    pub fn slice(&self, axis: usize, range: Range<usize>) -> Result<Self> {
        Ok(Self {
            re: self.re.slice(axis, range.clone())?,
            im: self.im.slice(axis, range)?,
        })
    }

    pub fn concat(parts: &[&Self], axis: usize) -> Result<Self> {
        let re: Vec<&Tensor<T>> = parts.iter().map(|p| &p.re).collect();
        let im: Vec<&Tensor<T>> = parts.iter().map(|p| &p.im).collect();
        Ok(Self {
            re: Tensor::concat(&re, axis)?,
            im: Tensor::concat(&im, axis)?,
        })
    }

    /// Concatenate rank-4 activations along the channel axis.
    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        for p in parts {
            p.shape().nchw()?;
        }
        Self::concat(parts, 1)
    }

    pub fn cast<U: Real>(&self) -> ComplexTensor<U> {
        ComplexTensor {
            re: self.re.cast(),
            im: self.im.cast(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c1(re: f64, im: f64) -> ComplexTensor<f64> {
        ComplexTensor::from_parts(shape![1], vec![re], vec![im]).unwrap()
    }

    fn random(shape: Shape, seed: u64) -> ComplexTensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.numel();
        let re = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let im = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        ComplexTensor::from_parts(shape, re, im).unwrap()
    }

    #[test]
    fn shape_rejects_zero_dims() {
        assert!(Shape::new(vec![2, 0]).is_err());
        assert!(Shape::new(Vec::<usize>::new()).is_err());
        assert!(Shape::new(vec![usize::MAX, 2]).is_err());
    }

    #[test]
    fn add_examples() {
        assert_eq!(c1(1.0, 2.0).add(&c1(0.0, 0.0)).unwrap(), c1(1.0, 2.0));
        assert_eq!(c1(1.0, 2.0).add(&c1(3.0, -2.0)).unwrap(), c1(4.0, 0.0));
    }

    #[test]
    fn add_matches_scalar_loop() {
        let x = random(shape![4, 4], 1);
        let y = random(shape![4, 4], 2);
        let z = x.add(&y).unwrap();
        for k in 0..16 {
            let (a, b) = x.get(k);
            let (c, d) = y.get(k);
            assert_eq!(z.get(k), (a + c, b + d));
        }
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let err = random(shape![2, 3], 0).add(&random(shape![3, 2], 0)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2x3]") && msg.contains("[3x2]"), "{msg}");
        assert!(random(shape![2], 0).cmul(&random(shape![3], 0)).is_err());
    }

    #[test]
    fn cmul_examples() {
        assert_eq!(c1(1.5, -2.5).cmul(&c1(1.0, 0.0)).unwrap(), c1(1.5, -2.5));
        assert_eq!(c1(0.0, 1.0).cmul(&c1(0.0, 1.0)).unwrap(), c1(-1.0, 0.0));
    }

    #[test]
    fn cmul_matches_complex_oracle() {
        let x = random(shape![3, 5], 3);
        let y = random(shape![3, 5], 4);
        let z = x.cmul(&y).unwrap();
        for k in 0..15 {
            let (a, b) = x.get(k);
            let (c, d) = y.get(k);
            let expected = Complex64::new(a, b) * Complex64::new(c, d);
            let (r, i) = z.get(k);
            assert!((r - expected.re).abs() < 1e-14 && (i - expected.im).abs() < 1e-14);
        }
    }

    #[test]
    fn magnitude_examples() {
        assert_eq!(c1(3.0, 4.0).magnitude().data(), &[5.0]);
        assert_eq!(c1(0.0, 0.0).magnitude().data(), &[0.0]);
        let x = random(shape![4, 4], 5);
        let m = x.magnitude();
        for k in 0..16 {
            let (a, b) = x.get(k);
            assert!((m.data()[k] - a.hypot(b)).abs() < 1e-15);
        }
    }

    #[test]
    fn reshape_preserves_row_major_order() {
        let t = Tensor::from_fn(shape![2, 6], |i| i as f64);
        let r = t.reshape(shape![3, 4]).unwrap();
        assert_eq!(r.data(), t.data());
        assert_eq!(r.shape().dims(), &[3, 4]);
        assert!(t.reshape(shape![5, 2]).is_err());
    }

    #[test]
    fn slice_bounds_are_checked() {
        let t = Tensor::<f64>::zeros(shape![2, 3]);
        assert!(t.slice(1, 2..4).is_err());
        assert!(t.slice(2, 0..1).is_err());
        assert!(t.slice(0, 1..1).is_err());
    }

    #[test]
    fn slice_then_concat_reproduces_input() {
        let x = random(shape![2, 6, 3, 3], 6);
        let a = x.slice(1, 0..2).unwrap();
        let b = x.slice(1, 2..6).unwrap();
        assert_eq!(ComplexTensor::concat_channels(&[&a, &b]).unwrap(), x);
    }

    proptest! {
        #[test]
        fn slice_concat_round_trip_is_bitwise(
            n in 1usize..3, c in 2usize..6, hw in 1usize..4, split_frac in 0.0f64..1.0, seed in any::<u64>()
        ) {
            let x = random(shape![n, c, hw, hw], seed);
            let split = 1 + ((c - 1) as f64 * split_frac) as usize;
            let split = split.min(c - 1);
            let a = x.slice(1, 0..split).unwrap();
            let b = x.slice(1, split..c).unwrap();
            let y = ComplexTensor::concat_channels(&[&a, &b]).unwrap();
            prop_assert_eq!(y, x);
        }

        #[test]
        fn cmul_commutes_and_has_identity(seed in any::<u64>()) {
            let x = random(shape![3, 4], seed);
            let y = random(shape![3, 4], seed.wrapping_add(1));
            prop_assert_eq!(x.cmul(&y).unwrap(), y.cmul(&x).unwrap());
            let ones = ComplexTensor::from_real(Tensor::full(shape![3, 4], 1.0));
            prop_assert_eq!(x.cmul(&ones).unwrap(), x.clone());
        }

        #[test]
        fn magnitude_is_multiplicative(seed in any::<u64>()) {
            let x = random(shape![16], seed);
            let y = random(shape![16], seed ^ 0xdead);
            let lhs = x.cmul(&y).unwrap().magnitude();
            let rhs = x.magnitude().mul(&y.magnitude()).unwrap();
            for (a, b) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-300));
            }
        }

        #[test]
        fn finite_inputs_stay_finite(seed in any::<u64>()) {
            let x = random(shape![8], seed).scale(1e150);
            let y = random(shape![8], seed ^ 1).scale(1e150);
            prop_assert!(x.add(&y).unwrap().all_finite());
            let small = random(shape![8], seed ^ 2);
            prop_assert!(small.cmul(&random(shape![8], seed ^ 3)).unwrap().all_finite());
        }
    }
}
