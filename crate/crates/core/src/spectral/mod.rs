//! Patch spectra: DFT/FFT kernels, the patch shuffling pipeline and the
//! on-disk spectral cache.

pub mod cache;
pub mod fft;
pub mod psm;

pub use fft::{dft2_naive, fft2, idft2, Fft2Plan, FftPlan};
pub use psm::{
    apply_psm, arrange, assemble, draw_shuffle, partition, patch_spectra, permute_patches, shuffle_patches,
    PatchLayout, PsmConfig, PsmOutput, Shuffle, SpectralSample,
};

use crate::error::Result;
use crate::tensor::{ComplexTensor, Real};

/// Circularly shift the spectrum so the DC bin sits in the centre.
/// Only used for inspection images; the model always sees natural order.
pub fn fftshift<T: Real>(plane: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
    let dims = plane.shape().dims();
    let (h, w) = (dims[dims.len() - 2], dims[dims.len() - 1]);
    let planes = plane.len() / (h * w);
    let mut out = ComplexTensor::zeros(plane.shape().clone());
    let (re, im) = (plane.re().data(), plane.im().data());
    let (ore, oim) = out.parts_mut();
    for p in 0..planes {
        for r in 0..h {
            for c in 0..w {
                let src = p * h * w + r * w + c;
                let dst = p * h * w + ((r + h / 2) % h) * w + (c + w / 2) % w;
                ore[dst] = re[src];
                oim[dst] = im[src];
            }
        }
    }
    Ok(out)
}
