//! Patch shuffling: dice an image into `K x K` patches, take each patch to
//! the frequency domain and, during training, permute patch positions with
//! probability `p`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::fft::Fft2Plan;
use crate::error::{Error, Result};
use crate::rng;
use crate::shape;
use crate::tensor::{ComplexTensor, Real, Shape, Tensor};

/// How the `K^2` patch spectra of each channel are presented to the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PatchLayout {
    /// Stack patches along the channel axis: `(C K^2, H/K, W/K)`.
    #[default]
    Channels,
    /// Tile patch spectra back into an `H x W` mosaic: `(C, H, W)`.
    Mosaic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsmConfig {
    /// Patches per side (`K`).
    pub patches: usize,
    /// Shuffle probability (`p`).
    pub shuffle_prob: f64,
    /// Base of the shuffle stream; set from the run seed, never parsed.
    #[serde(skip)]
    pub seed: u64,
    pub layout: PatchLayout,
}

impl Default for PsmConfig {
    fn default() -> Self {
        Self {
            patches: 4,
            shuffle_prob: 0.3,
            seed: 0,
            layout: PatchLayout::Channels,
        }
    }
}

impl PsmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patches == 0 {
            return Err(Error::Config("psm.patches must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.shuffle_prob) {
            return Err(Error::Config(format!(
                "psm.shuffle_prob must lie in [0, 1], got {}",
                self.shuffle_prob
            )));
        }
        Ok(())
    }

    /// Check the config against an `H x W` image.
    pub fn validate_for(&self, height: usize, width: usize) -> Result<()> {
        self.validate()?;
        let k = self.patches;
        if k > height.min(width) {
            return Err(Error::Config(format!("psm.patches = {k} exceeds image size {height}x{width}")));
        }
        if !height.is_multiple_of(k) || !width.is_multiple_of(k) {
            return Err(Error::Config(format!(
                "image size {height}x{width} is not divisible by psm.patches = {k}"
            )));
        }
        Ok(())
    }

    /// `(channels, height, width)` of the network input for a `C x H x W` image.
    pub fn input_dims(&self, channels: usize, height: usize, width: usize) -> (usize, usize, usize) {
        let k = self.patches;
        match self.layout {
            PatchLayout::Channels => (channels * k * k, height / k, width / k),
            PatchLayout::Mosaic => (channels, height, width),
        }
    }
}

/// Outcome of one shuffle draw. `permutation[dst] = src`: the patch found at
/// position `dst` after shuffling came from position `src`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shuffle {
    pub permutation: Vec<usize>,
    pub triggered: bool,
}

impl Shuffle {
    pub fn identity(n: usize) -> Self {
        Self {
            permutation: (0..n).collect(),
            triggered: false,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.permutation.iter().enumerate().all(|(i, &p)| i == p)
    }
}

/// A preprocessed image: patch spectra plus label and source id.
#[derive(Debug, Clone)]
pub struct SpectralSample<T> {
    pub spectrum: ComplexTensor<T>,
    pub label: usize,
    pub permutation: Vec<usize>,
    pub source_id: String,
}

fn chw<T: Real>(image: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match image.shape().dims() {
        &[c, h, w] => Ok((c, h, w)),
        _ => Err(Error::InvalidShape {
            shape: image.shape().clone(),
            reason: "expected a (channel, height, width) image".into(),
        }),
    }
}

/// Split a `C x H x W` image into `K^2` patches per channel, returned as
/// `C x K^2 x H/K x W/K` with patch `(i, j)` at index `i K + j`.
pub fn partition<T: Real>(image: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
    let (c, h, w) = chw(image)?;
    if k == 0 || h % k != 0 || w % k != 0 {
        return Err(Error::InvalidShape {
            shape: image.shape().clone(),
            reason: format!("height and width must be divisible by K = {k}"),
        });
    }
    let (ph, pw) = (h / k, w / k);
    let src = image.data();
    let mut out = Vec::with_capacity(src.len());
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for i in 0..k {
            for j in 0..k {
                for r in 0..ph {
                    let row = (i * ph + r) * w + j * pw;
                    out.extend_from_slice(&plane[row..row + pw]);
                }
            }
        }
    }
    Tensor::new(Shape::new(vec![c, k * k, ph, pw])?, out)
}

/// Inverse of [`partition`]: tile `C x K^2 x Hp x Wp` back into `C x H x W`.
pub fn assemble<T: Real>(patches: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
    let (c, kk, ph, pw) = match patches.shape().dims() {
        &[c, kk, ph, pw] if kk == k * k => (c, kk, ph, pw),
        _ => {
            return Err(Error::InvalidShape {
                shape: patches.shape().clone(),
                reason: format!("expected (C, {}, Hp, Wp)", k * k),
            })
        }
    };
    let (h, w) = (ph * k, pw * k);
    let src = patches.data();
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for m in 0..kk {
            let (i, j) = (m / k, m % k);
            let base = (ch * kk + m) * ph * pw;
            for r in 0..ph {
                let dst = ch * h * w + (i * ph + r) * w + j * pw;
                out[dst..dst + pw].copy_from_slice(&src[base + r * pw..base + (r + 1) * pw]);
            }
        }
    }
    Tensor::new(shape![c, h, w], out)
}

/// Partition then 2D FFT every patch: `C x K^2 x Hp x Wp` complex spectra.
pub fn patch_spectra<T: Real>(image: &Tensor<T>, k: usize) -> Result<ComplexTensor<T>> {
    let patches = partition(image, k)?;
    let dims = patches.shape().dims().to_vec();
    let (ph, pw) = (dims[2], dims[3]);
    let plan = Fft2Plan::new(ph, pw)?;
    let mut spec = ComplexTensor::from_real(patches);
    let (re, im) = spec.parts_mut();
    for (pr, pi) in re.chunks_mut(ph * pw).zip(im.chunks_mut(ph * pw)) {
        plan.run(pr, pi, false);
    }
    Ok(spec)
}

/// Apply a patch permutation (`permutation[dst] = src`) to `C x K^2 x Hp x Wp`
/// spectra, identically for every channel.
pub fn permute_patches<T: Real>(patches: &ComplexTensor<T>, permutation: &[usize]) -> Result<ComplexTensor<T>> {
    let (c, kk, ph, pw) = match patches.shape().dims() {
        &[c, kk, ph, pw] => (c, kk, ph, pw),
        _ => {
            return Err(Error::InvalidShape {
                shape: patches.shape().clone(),
                reason: "expected (C, K^2, Hp, Wp)".into(),
            })
        }
    };
    if permutation.len() != kk {
        return Err(Error::OutOfBounds(format!(
            "permutation of length {} for {kk} patches",
            permutation.len()
        )));
    }
    let plane = ph * pw;
    let mut out = ComplexTensor::zeros(patches.shape().clone());
    let (src_re, src_im) = (patches.re().data(), patches.im().data());
    let (dst_re, dst_im) = out.parts_mut();
    for ch in 0..c {
        for (dst, &src) in permutation.iter().enumerate() {
            let s = (ch * kk + src) * plane;
            let d = (ch * kk + dst) * plane;
            dst_re[d..d + plane].copy_from_slice(&src_re[s..s + plane]);
            dst_im[d..d + plane].copy_from_slice(&src_im[s..s + plane]);
        }
    }
    Ok(out)
}

/// With probability `p`, draw a uniformly random permutation of the patch
/// positions; otherwise keep the identity.
pub fn shuffle_patches<T: Real, R: Rng + ?Sized>(
    patches: &ComplexTensor<T>,
    p: f64,
    rng: &mut R,
) -> Result<(ComplexTensor<T>, Shuffle)> {
    let kk = match patches.shape().dims() {
        &[_, kk, _, _] => kk,
        _ => {
            return Err(Error::InvalidShape {
                shape: patches.shape().clone(),
                reason: "expected (C, K^2, Hp, Wp)".into(),
            })
        }
    };
    let shuffle = draw_shuffle(kk, p, rng);
    if !shuffle.triggered {
        return Ok((patches.clone(), shuffle));
    }
    Ok((permute_patches(patches, &shuffle.permutation)?, shuffle))
}

pub fn draw_shuffle<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Shuffle {
    let mut shuffle = Shuffle::identity(n);
    if p > 0.0 && rng.gen_bool(p.min(1.0)) {
        shuffle.permutation.shuffle(rng);
        shuffle.triggered = true;
    }
    shuffle
}

#[derive(Debug, Clone)]
pub struct PsmOutput<T> {
    /// Network-ready spectrum in the configured layout (no batch axis).
    pub spectrum: ComplexTensor<T>,
    pub shuffle: Shuffle,
}

/// Full patch-shuffling pipeline for one `C x H x W` image.
///
/// Dicing and the DFT always run; shuffling only when `training` is set.
/// The shuffle stream is derived from `(cfg.seed, sample_index, epoch)`.
pub fn apply_psm<T: Real>(
    image: &Tensor<T>,
    cfg: &PsmConfig,
    training: bool,
    sample_index: u64,
    epoch: u64,
) -> Result<PsmOutput<T>> {
    let (c, h, w) = chw(image)?;
    cfg.validate_for(h, w)?;
    let k = cfg.patches;
    let spectra = patch_spectra(image, k)?;
    let (spectra, shuffle) = if training {
        let mut rng = rng::stream(cfg.seed, "psm", &[sample_index, epoch]);
        shuffle_patches(&spectra, cfg.shuffle_prob, &mut rng)?
    } else {
        (spectra, Shuffle::identity(k * k))
    };
    let spectrum = arrange(spectra, cfg.layout, k)?;
    debug_assert_eq!(spectrum.shape().dims()[0], cfg.input_dims(c, h, w).0);
    Ok(PsmOutput { spectrum, shuffle })
}

/// Convert `C x K^2 x Hp x Wp` spectra to the network layout.
pub fn arrange<T: Real>(spectra: ComplexTensor<T>, layout: PatchLayout, k: usize) -> Result<ComplexTensor<T>> {
    let dims = spectra.shape().dims().to_vec();
    match layout {
        PatchLayout::Channels => spectra.reshape(Shape::new(vec![dims[0] * dims[1], dims[2], dims[3]])?),
        PatchLayout::Mosaic => {
            let (re, im) = spectra.into_parts();
            ComplexTensor::new(assemble(&re, k)?, assemble(&im, k)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::fft::{dft2_naive, fft2};
    use proptest::prelude::{any, prop, prop_assert_eq, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image(c: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape![c, h, w], |_| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn partition_with_one_patch_is_identity() {
        let img = image(3, 8, 8, 1);
        let p = partition(&img, 1).unwrap();
        assert_eq!(p.shape().dims(), &[3, 1, 8, 8]);
        assert_eq!(p.data(), img.data());
    }

    #[test]
    fn partition_matches_manual_slicing() {
        let img = Tensor::from_fn(shape![1, 4, 4], |i| i as f64);
        let p = partition(&img, 2).unwrap();
        // Independent index arithmetic: patch (i, j), local (r, c) -> pixel (2i + r, 2j + c).
        for i in 0..2 {
            for j in 0..2 {
                for r in 0..2 {
                    for c in 0..2 {
                        let expected = ((2 * i + r) * 4 + (2 * j + c)) as f64;
                        assert_eq!(p.data()[(i * 2 + j) * 4 + r * 2 + c], expected);
                    }
                }
            }
        }
        assert_eq!(&p.data()[..4], &[0.0, 1.0, 4.0, 5.0]);
    }

    #[test]
    fn partition_rejects_indivisible_dims() {
        assert!(partition(&image(1, 6, 8, 0), 4).is_err());
        assert!(PsmConfig { patches: 3, ..Default::default() }.validate_for(8, 8).is_err());
        assert!(PsmConfig { patches: 16, ..Default::default() }.validate_for(8, 8).is_err());
        assert!(PsmConfig { shuffle_prob: 1.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn zero_probability_never_shuffles() {
        let spec = patch_spectra(&image(2, 8, 8, 3), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let (out, s) = shuffle_patches(&spec, 0.0, &mut rng).unwrap();
            assert!(!s.triggered && s.is_identity());
            assert_eq!(out, spec);
        }
    }

    #[test]
    fn certain_shuffle_is_reproducible() {
        // Golden value: first draw of the "psm" stream for seed 42, sample 0, epoch 0.
        let draw = || {
            let mut rng = rng::stream(42, "psm", &[0, 0]);
            draw_shuffle(4, 1.0, &mut rng)
        };
        let s = draw();
        assert!(s.triggered);
        assert_eq!(s, draw());
        assert_eq!(s.permutation, GOLDEN_PERMUTATION);
    }

    const GOLDEN_PERMUTATION: [usize; 4] = [3, 2, 1, 0];

    #[test]
    fn shuffle_moves_whole_patches_across_all_channels() {
        let spec = patch_spectra(&image(3, 8, 8, 4), 2).unwrap();
        let perm = [2, 0, 3, 1];
        let out = permute_patches(&spec, &perm).unwrap();
        for ch in 0..3 {
            for (dst, &src) in perm.iter().enumerate() {
                let a = out.slice(0, ch..ch + 1).unwrap().slice(1, dst..dst + 1).unwrap();
                let b = spec.slice(0, ch..ch + 1).unwrap().slice(1, src..src + 1).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn trigger_rate_matches_probability() {
        let mut triggered = 0;
        for i in 0..10_000u64 {
            let mut rng = rng::stream(7, "psm", &[i, 0]);
            if draw_shuffle(16, 0.3, &mut rng).triggered {
                triggered += 1;
            }
        }
        let rate = triggered as f64 / 10_000.0;
        assert!((0.28..=0.32).contains(&rate), "{rate}");
    }

    #[test]
    fn eval_mode_is_always_identity() {
        let cfg = PsmConfig { shuffle_prob: 1.0, ..Default::default() };
        let img = image(1, 16, 16, 5);
        for i in 0..50 {
            let out = apply_psm(&img, &cfg, false, i, i).unwrap();
            assert!(out.shuffle.is_identity() && !out.shuffle.triggered);
        }
    }

    #[test]
    fn single_patch_eval_equals_whole_image_fft() {
        let cfg = PsmConfig { patches: 1, ..Default::default() };
        let img = image(1, 16, 8, 6);
        let out = apply_psm(&img, &cfg, false, 0, 0).unwrap();
        let plane = ComplexTensor::from_real(img.reshape(shape![16, 8]).unwrap());
        let expected = fft2(&plane).unwrap();
        assert_eq!(out.spectrum.reshape(shape![16, 8]).unwrap(), expected);
    }

    #[test]
    fn brightness_shift_only_moves_dc_bins() {
        let cfg = PsmConfig { patches: 4, ..Default::default() };
        let img = image(2, 16, 16, 8);
        let delta = 0.125;
        let shifted = img.map(|v| v + delta);
        let a = apply_psm(&img, &cfg, false, 0, 0).unwrap().spectrum;
        let b = apply_psm(&shifted, &cfg, false, 0, 0).unwrap().spectrum;
        let (ph, pw) = (4, 4);
        for k in 0..a.len() {
            let (ar, ai) = a.get(k);
            let (br, bi) = b.get(k);
            if k % (ph * pw) == 0 {
                assert!((br - ar - delta * (ph * pw) as f64).abs() < 1e-12);
                assert!((bi - ai).abs() < 1e-12);
            } else {
                assert!((br - ar).abs() <= 1e-9 && (bi - ai).abs() <= 1e-9);
            }
        }
        // Cross-check the brightness step with the direct DFT of one patch.
        let patch = partition(&shifted, 4).unwrap().slice(1, 0..1).unwrap().slice(0, 0..1).unwrap();
        let direct = dft2_naive(&ComplexTensor::from_real(patch.reshape(shape![4, 4]).unwrap())).unwrap();
        assert!((direct.get(0).0 - b.get(0).0).abs() < 1e-10);
    }

    #[test]
    fn mosaic_layout_tiles_spectra() {
        let cfg = PsmConfig { patches: 2, layout: PatchLayout::Mosaic, ..Default::default() };
        let img = image(1, 8, 8, 9);
        let out = apply_psm(&img, &cfg, false, 0, 0).unwrap().spectrum;
        assert_eq!(out.shape().dims(), &[1, 8, 8]);
        let spectra = patch_spectra(&img, 2).unwrap();
        // Patch 1 = top-right tile.
        assert_eq!(out.get(4), spectra.get(16));
    }

    proptest! {
        #[test]
        fn partition_assemble_round_trip(c in 1usize..4, k in prop::sample::select(vec![1usize, 2, 4]), seed in any::<u64>()) {
            let img = image(c, 8, 16, seed);
            prop_assert_eq!(assemble(&partition(&img, k).unwrap(), k).unwrap(), img);
        }

        #[test]
        fn shuffle_is_a_bijection(seed in any::<u64>(), k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = draw_shuffle(k * k, 1.0, &mut rng);
            let mut sorted = s.permutation.clone();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..k * k).collect::<Vec<_>>());
        }

        #[test]
        fn apply_psm_is_deterministic(seed in any::<u64>(), idx in 0u64..100, epoch in 0u64..10) {
            let cfg = PsmConfig { seed, shuffle_prob: 0.5, ..Default::default() };
            let img = image(1, 16, 16, idx);
            let a = apply_psm(&img, &cfg, true, idx, epoch).unwrap();
            let b = apply_psm(&img, &cfg, true, idx, epoch).unwrap();
            prop_assert_eq!(a.spectrum, b.spectrum);
            prop_assert_eq!(a.shuffle, b.shuffle);
        }
    }
}
