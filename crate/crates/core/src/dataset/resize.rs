use crate::error::{Error, Result};
use crate::shape;
use crate::tensor::Tensor;

/// Source sample positions and weights for one output axis, with pixel
/// centres aligned (`src = (dst + 0.5) * in / out - 0.5`, clamped).
fn taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Bilinear resize of a `(C, H, W)` image.
pub fn resize(image: &Tensor<f32>, height: usize, width: usize) -> Result<Tensor<f32>> {
    let (c, h, w) = match image.shape().dims() {
        &[c, h, w] => (c, h, w),
        _ => {
            return Err(Error::InvalidShape {
                shape: image.shape().clone(),
                reason: "resize expects (channels, height, width)".into(),
            })
        }
    };
    if height == 0 || width == 0 {
        return Err(Error::Config(format!("resize target must be positive, got {height}x{width}")));
    }
    if (h, w) == (height, width) {
        return Ok(image.clone());
    }
    let ys = taps(h, height);
    let xs = taps(w, width);
    let src = image.data();
    let mut out = Vec::with_capacity(c * height * width);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let p = |y: usize, x: usize| f64::from(plane[y * w + x]);
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                out.push((top * (1.0 - fy) + bottom * fy) as f32);
            }
        }
    }
    Tensor::new(shape![c, height, width], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_at_target_size() {
        let img = Tensor::from_fn(shape![2, 5, 7], |i| i as f32 / 70.0);
        assert_eq!(resize(&img, 5, 7).unwrap(), img);
    }

    #[test]
    fn constant_stays_constant() {
        let img = Tensor::full(shape![1, 9, 13], 0.4f32);
        let out = resize(&img, 20, 6).unwrap();
        assert_eq!(out.shape().dims(), &[1, 20, 6]);
        assert!(out.data().iter().all(|&v| (v - 0.4).abs() < 1e-6));
    }

    #[test]
    fn checkerboard_halves_to_mid_gray() {
        let img = Tensor::from_fn(shape![1, 16, 16], |i| ((i / 16 + i % 16) % 2) as f32);
        let out = resize(&img, 8, 8).unwrap();
        for &v in out.data() {
            assert!((v * 255.0 - 127.5).abs() <= 1.0, "{v}");
        }
    }

    #[test]
    fn upscale_interpolates_linearly() {
        let img = Tensor::new(shape![1, 1, 2], vec![0.0f32, 1.0]).unwrap();
        let out = resize(&img, 1, 4).unwrap();
        assert_eq!(out.data(), &[0.0, 0.25, 0.75, 1.0]);
    }
}
