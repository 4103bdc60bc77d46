use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            horizontal_flip: true,
            vertical_flip: true,
        }
    }
}

fn dims<T: Real>(image: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match image.shape().dims() {
        &[c, h, w] => Ok((c, h, w)),
        _ => Err(Error::InvalidShape {
            shape: image.shape().clone(),
            reason: "augmentation expects (channels, height, width)".into(),
        }),
    }
}

/// Mirrors a `(C, H, W)` image left-right and/or top-bottom.
pub fn flip<T: Real>(image: &Tensor<T>, horizontal: bool, vertical: bool) -> Result<Tensor<T>> {
    let (_, h, w) = dims(image)?;
    let src = image.data();
    Ok(Tensor::from_fn(image.shape().clone(), |i| {
        let (plane, y, x) = (i / (h * w), (i / w) % h, i % w);
        let y = if vertical { h - 1 - y } else { y };
        let x = if horizontal { w - 1 - x } else { x };
        src[(plane * h + y) * w + x]
    }))
}

/// Applies each enabled flip independently with probability 1/2. Both
/// coins are always drawn so the stream position never depends on `cfg`.
pub fn augment<T: Real, R: Rng + ?Sized>(image: &Tensor<T>, rng: &mut R, cfg: &AugmentConfig) -> Result<Tensor<T>> {
    let horizontal = rng.gen_bool(0.5) && cfg.horizontal_flip;
    let vertical = rng.gen_bool(0.5) && cfg.vertical_flip;
    if horizontal || vertical {
        flip(image, horizontal, vertical)
    } else {
        dims(image)?;
        Ok(image.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::shape;

    fn image() -> Tensor<f64> {
        Tensor::from_fn(shape![2, 3, 4], |i| i as f64)
    }

    #[test]
    fn both_flips_reverse_each_plane() {
        let img = image();
        let out = flip(&img, true, true).unwrap();
        for p in 0..2 {
            let plane: Vec<f64> = img.data()[p * 12..(p + 1) * 12].iter().rev().copied().collect();
            assert_eq!(&out.data()[p * 12..(p + 1) * 12], plane.as_slice());
        }
    }

    #[test]
    fn flips_are_involutions() {
        let img = image();
        for (h, v) in [(true, false), (false, true), (true, true)] {
            assert_eq!(flip(&flip(&img, h, v).unwrap(), h, v).unwrap(), img);
        }
    }

    #[test]
    fn disabled_flags_keep_image() {
        let cfg = AugmentConfig {
            horizontal_flip: false,
            vertical_flip: false,
        };
        let mut rng = stream(0, "t", &[]);
        for _ in 0..10 {
            assert_eq!(augment(&image(), &mut rng, &cfg).unwrap(), image());
        }
    }

    #[test]
    fn flip_rates_are_one_half() {
        let img = Tensor::from_fn(shape![1, 2, 2], |i| i as f64);
        let h_only = flip(&img, true, false).unwrap();
        let v_only = flip(&img, false, true).unwrap();
        let both = flip(&img, true, true).unwrap();
        let mut rng = stream(11, "t", &[]);
        let (mut h, mut v) = (0, 0);
        let n = 10_000;
        for _ in 0..n {
            let out = augment(&img, &mut rng, &AugmentConfig::default()).unwrap();
            if out == h_only || out == both {
                h += 1;
            }
            if out == v_only || out == both {
                v += 1;
            }
        }
        for count in [h, v] {
            let rate = count as f64 / n as f64;
            assert!((0.48..=0.52).contains(&rate), "{rate}");
        }
    }
}
