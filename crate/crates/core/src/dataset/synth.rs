//! Synthetic classes separated by radial frequency band.
//!
//! Every class owns a fixed set of integer wave vectors inside its band.
//! A sample sums those plane waves with fresh random phases, adds a
//! brightness offset, Gaussian noise and a circular shift, then clamps to
//! `[0, 1]` and quantizes to 8 bits.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::shape;
use crate::spectral::fft2;
use crate::tensor::{ComplexTensor, Tensor};

use super::{assign_splits, Dataset, DatasetIndex, Entry, Sample, Split};

/// Radial band `[low, high)` in cycles per image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassBand {
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub bands: Vec<ClassBand>,
    /// Plane waves per texture.
    pub waves: usize,
    /// Peak-to-mean amplitude of the texture before clamping.
    pub amplitude: f64,
    pub size: usize,
    pub per_class: usize,
    /// Brightness offsets are uniform in `[-brightness, brightness]`.
    pub brightness: f64,
    /// Largest circular shift per axis; `None` allows a full wrap.
    pub max_shift: Option<usize>,
    pub noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            bands: vec![
                ClassBand { low: 4.0, high: 8.0 },
                ClassBand { low: 10.0, high: 14.0 },
                ClassBand { low: 16.0, high: 20.0 },
                ClassBand { low: 22.0, high: 28.0 },
            ],
            waves: 4,
            amplitude: 0.25,
            size: 64,
            per_class: 400,
            brightness: 0.3,
            max_shift: None,
            noise: 0.05,
        }
    }
}

impl SynthSpec {
    pub fn classes(&self) -> usize {
        self.bands.len()
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.classes()).map(|c| format!("class{c:02}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands.len() < 2 {
            return Err(Error::Config("synthetic data needs at least 2 classes".into()));
        }
        if self.size < 2 || self.per_class == 0 || self.waves == 0 {
            return Err(Error::Config("synthetic size, per_class and waves must be positive".into()));
        }
        let nyquist = (self.size / 2) as f64;
        let mut sorted = self.bands.clone();
        sorted.sort_by(|a, b| a.low.total_cmp(&b.low));
        for (i, b) in sorted.iter().enumerate() {
            if !(b.low >= 1.0 && b.high > b.low && b.high <= nyquist) {
                return Err(Error::Config(format!(
                    "band [{}, {}) must satisfy 1 <= low < high <= {nyquist}",
                    b.low, b.high
                )));
            }
            if i > 0 && sorted[i - 1].high > b.low {
                return Err(Error::Config("synthetic frequency bands must be disjoint".into()));
            }
        }
        for (name, v) in [("amplitude", self.amplitude), ("brightness", self.brightness), ("noise", self.noise)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("synthetic {name} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

/// Integer wave vectors of one class texture.
#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    pub vectors: Vec<(i64, i64)>,
    pub amplitude: f64,
}

impl Texture {
    /// Deterministic wave vectors for class `class` of `spec`.
    pub fn for_class(spec: &SynthSpec, class: usize, seed: u64) -> Result<Self> {
        let band = spec.bands[class];
        let mut rng = stream(seed, "synth-class", &[class as u64]);
        let mut vectors: Vec<(i64, i64)> = Vec::with_capacity(spec.waves);
        let mut attempts = 0;
        while vectors.len() < spec.waves {
            attempts += 1;
            if attempts > 100_000 {
                return Err(Error::Config(format!(
                    "band [{}, {}) holds fewer than {} distinct wave vectors",
                    band.low, band.high, spec.waves
                )));
            }
            let r = rng.gen_range(band.low..band.high);
            let theta = rng.gen_range(0.0..PI);
            let v = ((r * theta.cos()).round() as i64, (r * theta.sin()).round() as i64);
            let radius = ((v.0 * v.0 + v.1 * v.1) as f64).sqrt();
            let duplicate = vectors.iter().any(|&u| u == v || u == (-v.0, -v.1));
            if radius >= band.low && radius < band.high && !duplicate {
                vectors.push(v);
            }
        }
        Ok(Self {
            vectors,
            amplitude: spec.amplitude,
        })
    }
}

/// Unclamped sample on a `size x size` grid: `0.5 + delta` plus the
/// texture with the given phases, plus noise, circularly shifted by
/// `shift = (rows, cols)`.
pub fn render_sample<R: Rng + ?Sized>(
    texture: &Texture,
    phases: &[f64],
    size: usize,
    shift: (usize, usize),
    delta: f64,
    noise: f64,
    rng: &mut R,
) -> Tensor<f64> {
    let n = size as f64;
    let scale = texture.amplitude / texture.vectors.len() as f64;
    let mut base = vec![0.5 + delta; size * size];
    for (&(fy, fx), &phase) in texture.vectors.iter().zip(phases) {
        for y in 0..size {
            for x in 0..size {
                // Integer phase reduction keeps the pattern exactly periodic.
                let t = ((fy * y as i64 + fx * x as i64).rem_euclid(size as i64)) as f64 / n;
                base[y * size + x] += scale * (2.0 * PI * t + phase).cos();
            }
        }
    }
    if noise > 0.0 {
        let normal = Normal::new(0.0, noise).expect("finite sigma");
        for v in &mut base {
            *v += normal.sample(rng);
        }
    }
    let (sy, sx) = (shift.0 % size, shift.1 % size);
    Tensor::from_fn(shape![1, size, size], |i| {
        let (y, x) = (i / size, i % size);
        base[((y + size - sy) % size) * size + (x + size - sx) % size]
    })
}

fn quantize(t: &Tensor<f64>) -> Tensor<f32> {
    Tensor::new(
        t.shape().clone(),
        t.data().iter().map(|&v| ((v.clamp(0.0, 1.0) * 255.0).round() / 255.0) as f32).collect(),
    )
    .expect("same shape")
}

fn sample_image(spec: &SynthSpec, texture: &Texture, class: usize, index: usize, seed: u64) -> Tensor<f32> {
    let mut rng = stream(seed, "synth", &[class as u64, index as u64]);
    let phases: Vec<f64> = (0..texture.vectors.len()).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let limit = spec.max_shift.map_or(spec.size, |m| (m + 1).min(spec.size));
    let shift = (rng.gen_range(0..limit), rng.gen_range(0..limit));
    let delta = if spec.brightness > 0.0 {
        rng.gen_range(-spec.brightness..=spec.brightness)
    } else {
        0.0
    };
    quantize(&render_sample(texture, &phases, spec.size, shift, delta, spec.noise, &mut rng))
}

/// Generates the full dataset in memory with stratified splits.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let names = spec.class_names();
    let textures = (0..spec.classes())
        .map(|c| Texture::for_class(spec, c, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut entries: Vec<Entry> = (0..spec.classes())
        .flat_map(|c| {
            let name = &names[c];
            (0..spec.per_class).map(move |i| Entry {
                id: format!("{name}/{i:05}.png"),
                label: c,
                split: Split::Train,
            })
        })
        .collect();
    assign_splits(&names, &mut entries, seed);
    let samples = entries
        .into_par_iter()
        .enumerate()
        .map(|(k, e)| {
            let i = k % spec.per_class;
            Sample {
                image: sample_image(spec, &textures[e.label], e.label, i, seed),
                id: e.id,
                label: e.label,
                split: e.split,
            }
        })
        .collect();
    Ok(Dataset {
        class_names: names,
        samples,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    spec: &'a SynthSpec,
    classes: &'a [String],
}

/// Writes `dataset` as `root/<class>/<index>.png` plus `manifest.json`.
pub fn write_synthetic(dataset: &Dataset, spec: &SynthSpec, seed: u64, root: &Path) -> Result<DatasetIndex> {
    for name in &dataset.class_names {
        fs::create_dir_all(root.join(name))?;
    }
    dataset.samples.par_iter().try_for_each(|s| -> Result<()> {
        let (h, w) = (s.image.shape().dim(1), s.image.shape().dim(2));
        let pixels: Vec<u8> = s.image.data().iter().map(|&v| (v * 255.0).round() as u8).collect();
        let img = image::GrayImage::from_raw(w as u32, h as u32, pixels).expect("buffer matches dimensions");
        let path = root.join(&s.id);
        img.save(&path).map_err(|source| Error::Image { path, source })
    })?;
    let manifest = Manifest {
        seed,
        spec,
        classes: &dataset.class_names,
    };
    fs::write(root.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(DatasetIndex {
        root: root.to_path_buf(),
        class_names: dataset.class_names.clone(),
        entries: dataset
            .samples
            .iter()
            .map(|s| Entry {
                id: s.id.clone(),
                label: s.label,
                split: s.split,
            })
            .collect(),
        seed,
    })
}

/// Band with the largest whole-image spectral energy, DC excluded.
pub fn band_energy_class(image: &Tensor<f32>, bands: &[ClassBand]) -> Result<usize> {
    let (h, w) = match image.shape().dims() {
        &[1, h, w] => (h, w),
        _ => {
            return Err(Error::InvalidShape {
                shape: image.shape().clone(),
                reason: "band energy expects a single-channel (1, H, W) image".into(),
            })
        }
    };
    let plane = Tensor::new(shape![h, w], image.data().iter().map(|&v| f64::from(v)).collect())?;
    let spec = fft2(&ComplexTensor::from_real(plane))?;
    let mut energy = vec![0.0; bands.len()];
    for u in 0..h {
        for v in 0..w {
            let fu = u.min(h - u) as f64 * w as f64 / h as f64;
            let fv = v.min(w - v) as f64;
            let r = fu.hypot(fv);
            let (a, b) = spec.get(u * w + v);
            for (e, band) in energy.iter_mut().zip(bands) {
                if r >= band.low && r < band.high {
                    *e += a * a + b * b;
                }
            }
        }
    }
    Ok(energy
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0))
}
