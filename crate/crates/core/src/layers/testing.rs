use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use crate::gradcheck::{central_difference, rel_error};
use crate::tensor::{ComplexTensor, Shape, Tensor};

pub fn random_real(shape: Shape, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

pub fn random_complex(shape: Shape, seed: u64) -> ComplexTensor<f64> {
    ComplexTensor::new(random_real(shape.clone(), seed), random_real(shape, seed ^ 0x5eed)).unwrap()
}
