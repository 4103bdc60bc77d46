use crate::error::{Error, Result};
use crate::tensor::{ComplexTensor, Real, Tensor};

/// Component-wise complex ReLU: `relu(a) + relu(b) i`.
pub fn complex_relu<T: Real>(x: &ComplexTensor<T>) -> ComplexTensor<T> {
    let relu = |v: T| if v > T::zero() { v } else { T::zero() };
    ComplexTensor::new(x.re().map(relu), x.im().map(relu)).expect("same shapes")
}

/// Gradient gate of [`complex_relu`]. Each component passes its gradient
/// where that component of `x` is strictly positive; the kink maps to 0.
pub fn complex_relu_backward<T: Real>(x: &ComplexTensor<T>, grad_out: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
    if x.shape() != grad_out.shape() {
        return Err(Error::shape("complex_relu_backward", x.shape(), grad_out.shape()));
    }
    let gate = |v: &Tensor<T>, g: &Tensor<T>| v.zip_map(g, "relu gate", |v, g| if v > T::zero() { g } else { T::zero() });
    ComplexTensor::new(gate(x.re(), grad_out.re())?, gate(x.im(), grad_out.im())?)
}
