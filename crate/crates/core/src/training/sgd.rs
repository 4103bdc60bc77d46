use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Momentum buffers mirroring the parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd<T> {
    pub momentum: f64,
    velocity: Vec<Tensor<T>>,
}

impl<T: Real> Sgd<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>, momentum: f64) -> Self {
        Self {
            momentum,
            velocity: params.into_iter().map(|p| Tensor::zeros(p.shape().clone())).collect(),
        }
    }

    pub fn velocity(&self) -> &[Tensor<T>] {
        &self.velocity
    }

    /// `v = momentum * v + g`, then `theta -= lr * v`.
    pub fn step(&mut self, params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>], lr: f64) -> Result<()> {
        if params.len() != self.velocity.len() || grads.len() != self.velocity.len() {
            return Err(Error::Config(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.velocity.len(),
                params.len(),
                grads.len()
            )));
        }
        let mu = T::of(self.momentum);
        let lr = T::of(lr);
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocity) {
            if p.shape() != g.shape() || p.shape() != v.shape() {
                return Err(Error::shape("sgd_step", p.shape(), g.shape()));
            }
            for ((theta, &gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vi = mu * *vi + gi;
                *theta -= lr * *vi;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape;

    #[test]
    fn single_vanilla_step() {
        let mut theta = Tensor::<f64>::zeros(shape![1]);
        let mut opt = Sgd::new([&theta], 0.0);
        opt.step(vec![&mut theta], &[Tensor::full(shape![1], 1.0)], 0.1).unwrap();
        assert!((theta.data()[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn momentum_recurrence() {
        let mut theta = Tensor::<f64>::zeros(shape![2]);
        let mut opt = Sgd::new([&theta], 0.9);
        let g = [Tensor::full(shape![2], 1.0)];
        opt.step(vec![&mut theta], &g, 0.1).unwrap();
        opt.step(vec![&mut theta], &g, 0.1).unwrap();
        assert!((theta.data()[0] + 0.1 * 2.9).abs() < 1e-15);
        assert!((opt.velocity()[0].data()[1] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn zero_gradients_leave_parameters() {
        let mut theta = Tensor::from_fn(shape![3], |i| i as f32);
        let before = theta.clone();
        let mut opt = Sgd::new([&theta], 0.9);
        opt.step(vec![&mut theta], &[Tensor::zeros(shape![3])], 0.1).unwrap();
        assert_eq!(theta, before);
    }

    #[test]
    fn rejects_mismatched_lists() {
        let mut theta = Tensor::<f64>::zeros(shape![2]);
        let mut opt = Sgd::new([&theta], 0.9);
        assert!(opt.step(vec![&mut theta], &[Tensor::zeros(shape![3])], 0.1).is_err());
        assert!(opt.step(vec![], &[], 0.1).is_err());
    }
}
