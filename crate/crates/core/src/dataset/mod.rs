//! Folder-per-class image datasets, stratified splitting and a synthetic
//! generator of frequency-separable classes.

pub mod resize;
pub mod synth;

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{fnv1a64, stream};
use crate::shape;
use crate::tensor::Tensor;

pub use resize::resize;
pub use synth::{band_energy_class, generate_synthetic, render_sample, write_synthetic, ClassBand, SynthSpec, Texture};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}, expected train, val or test"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    /// Path relative to the dataset root, `/`-separated.
    pub id: String,
    pub label: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub class_names: Vec<String>,
    pub entries: Vec<Entry>,
    pub seed: u64,
}

/// Train/val/test sizes for `n` samples of one class: `round(0.6 n)`,
/// `round(0.2 n)` and the rest.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = (0.6 * n as f64).round() as usize;
    let val = ((0.2 * n as f64).round() as usize).min(n - train);
    (train, val, n - train - val)
}

/// Assigns 6:2:2 splits independently per class. The shuffle of each
/// class is keyed by its name, so other classes never influence it.
pub fn assign_splits(class_names: &[String], entries: &mut [Entry], seed: u64) {
    for (label, name) in class_names.iter().enumerate() {
        let mut members: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].label == label).collect();
        members.sort_by(|&a, &b| entries[a].id.cmp(&entries[b].id));
        let mut rng = stream(seed, "split", &[fnv1a64(name.as_bytes())]);
        members.shuffle(&mut rng);
        let (train, val, _) = split_sizes(members.len());
        for (rank, &i) in members.iter().enumerate() {
            entries[i].split = if rank < train {
                Split::Train
            } else if rank < train + val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
}

fn sorted_dir(path: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in fs::read_dir(path)? {
        let e = e?;
        if e.file_name().to_string_lossy().starts_with('.') {
            continue;
        }
        out.push(e.path());
    }
    out.sort();
    Ok(out)
}

/// Indexes `root/<class>/<image>` with classes and files in lexicographic
/// order, then assigns stratified splits from `seed`.
pub fn load_folder(root: &Path, seed: u64) -> Result<DatasetIndex> {
    if !root.is_dir() {
        return Err(Error::Dataset(format!("dataset root {} is not a directory", root.display())));
    }
    let class_dirs: Vec<PathBuf> = sorted_dir(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.is_empty() {
        return Err(Error::Dataset(format!("no class directories under {}", root.display())));
    }
    let mut class_names = Vec::new();
    let mut entries = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let files: Vec<PathBuf> = sorted_dir(dir)?.into_iter().filter(|p| p.is_file()).collect();
        if files.is_empty() {
            return Err(Error::Dataset(format!("class directory {} is empty", dir.display())));
        }
        for f in files {
            image::ImageReader::open(&f)
                .and_then(|r| r.with_guessed_format())
                .map_err(Error::Io)?
                .into_dimensions()
                .map_err(|source| Error::Image { path: f.clone(), source })?;
            let file = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            entries.push(Entry {
                id: format!("{name}/{file}"),
                label,
                split: Split::Train,
            });
        }
        class_names.push(name);
    }
    assign_splits(&class_names, &mut entries, seed);
    Ok(DatasetIndex {
        root: root.to_path_buf(),
        class_names,
        entries,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ColorMode {
    /// Grayscale if the first image of the dataset is grayscale, else RGB.
    #[default]
    Auto,
    Gray,
    Rgb,
}

impl ColorMode {
    pub fn channels(self) -> Option<usize> {
        match self {
            ColorMode::Auto => None,
            ColorMode::Gray => Some(1),
            ColorMode::Rgb => Some(3),
        }
    }
}

/// Decodes one image to `(C, H, W)` in `[0, 1]`, resized to `size`.
pub fn load_image(path: &Path, color: ColorMode, size: (usize, usize)) -> Result<Tensor<f32>> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let gray = match color {
        ColorMode::Gray => true,
        ColorMode::Rgb => false,
        ColorMode::Auto => !img.color().has_color(),
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let tensor = if gray {
        let buf = img.to_luma8();
        Tensor::new(shape![1, h, w], buf.as_raw().iter().map(|&v| f32::from(v) / 255.0).collect())?
    } else {
        let buf = img.to_rgb8();
        let raw = buf.as_raw();
        let plane = h * w;
        let data = (0..3 * plane).map(|i| f32::from(raw[(i % plane) * 3 + i / plane]) / 255.0).collect();
        Tensor::new(shape![3, h, w], data)?
    };
    resize(&tensor, size.0, size.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: usize,
    pub split: Split,
    /// `(C, H, W)` in `[0, 1]`.
    pub image: Tensor<f32>,
}

/// Decoded images with labels and split tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub class_names: Vec<String>,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Decodes every entry of `index` in parallel. With [`ColorMode::Auto`]
    /// the first entry decides the channel count for all.
    pub fn load(index: &DatasetIndex, color: ColorMode, size: (usize, usize)) -> Result<Self> {
        let color = match color {
            ColorMode::Auto => match index.entries.first() {
                Some(e) => {
                    let probe = load_image(&index.root.join(&e.id), ColorMode::Auto, size)?;
                    if probe.shape().dim(0) == 1 {
                        ColorMode::Gray
                    } else {
                        ColorMode::Rgb
                    }
                }
                None => ColorMode::Gray,
            },
            c => c,
        };
        let samples = index
            .entries
            .par_iter()
            .map(|e| {
                Ok(Sample {
                    id: e.id.clone(),
                    label: e.label,
                    split: e.split,
                    image: load_image(&index.root.join(&e.id), color, size)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            class_names: index.class_names.clone(),
            samples,
        })
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn channels(&self) -> usize {
        self.samples.first().map_or(1, |s| s.image.shape().dim(0))
    }

    pub fn split(&self, split: Split) -> Vec<&Sample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }

    /// Keeps the first `per_class` samples of each class in `split`,
    /// relabelled as training samples.
    pub fn subset(&self, split: Split, per_class: usize) -> Dataset {
        let mut taken = vec![0; self.classes()];
        let samples = self
            .samples
            .iter()
            .filter(|s| s.split == split)
            .filter(|s| {
                taken[s.label] += 1;
                taken[s.label] <= per_class
            })
            .map(|s| Sample { split: Split::Train, ..s.clone() })
            .collect();
        Dataset {
            class_names: self.class_names.clone(),
            samples,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Luma, Rgb, RgbImage};

    fn tree(classes: usize, per_class: usize) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for c in 0..classes {
            let d = dir.path().join(format!("k{c}"));
            fs::create_dir(&d).unwrap();
            for i in 0..per_class {
                GrayImage::from_pixel(4, 3, Luma([(c * 40 + i) as u8])).save(d.join(format!("img{i:02}.png"))).unwrap();
            }
        }
        dir
    }

    #[test]
    fn indexes_and_splits_a_tree() {
        let dir = tree(4, 10);
        let index = load_folder(dir.path(), 3).unwrap();
        assert_eq!(index.entries.len(), 40);
        assert_eq!(index.class_names, vec!["k0", "k1", "k2", "k3"]);
        for label in 0..4 {
            let count = |s| index.entries.iter().filter(|e| e.label == label && e.split == s).count();
            assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (6, 2, 2));
        }
        assert_eq!(load_folder(dir.path(), 3).unwrap(), index);
        let ds = Dataset::load(&index, ColorMode::Auto, (3, 4)).unwrap();
        assert_eq!(ds.channels(), 1);
        assert_eq!(ds.samples[1].image.data()[0], 1.0 / 255.0);
    }

    #[test]
    fn split_sizes_are_stratified() {
        assert_eq!(split_sizes(10), (6, 2, 2));
        assert_eq!(split_sizes(400), (240, 80, 80));
        for n in 1..60 {
            let (a, b, c) = split_sizes(n);
            assert_eq!(a + b + c, n);
            assert!((a as f64 - 0.6 * n as f64).abs() <= 1.0);
            assert!((b as f64 - 0.2 * n as f64).abs() <= 1.0);
            assert!((c as f64 - 0.2 * n as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn adding_to_one_class_leaves_others_alone() {
        let dir = tree(2, 10);
        let before = load_folder(dir.path(), 7).unwrap();
        GrayImage::new(4, 3).save(dir.path().join("k0").join("img99.png")).unwrap();
        let after = load_folder(dir.path(), 7).unwrap();
        let of = |idx: &DatasetIndex| -> Vec<Entry> { idx.entries.iter().filter(|e| e.label == 1).cloned().collect() };
        assert_eq!(of(&before), of(&after));
    }

    #[test]
    fn rejects_empty_class_and_bad_file() {
        let dir = tree(2, 3);
        fs::create_dir(dir.path().join("k9")).unwrap();
        assert!(load_folder(dir.path(), 0).unwrap_err().to_string().contains("empty"));
        fs::remove_dir(dir.path().join("k9")).unwrap();
        let bad = dir.path().join("k1").join("broken.png");
        fs::write(&bad, b"not an image").unwrap();
        let err = load_folder(dir.path(), 0).unwrap_err().to_string();
        assert!(err.contains("broken.png"), "{err}");
    }

    #[test]
    fn rgb_channels_are_planar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        RgbImage::from_pixel(2, 2, Rgb([255, 0, 51])).save(&p).unwrap();
        let t = load_image(&p, ColorMode::Auto, (2, 2)).unwrap();
        assert_eq!(t.shape().dims(), &[3, 2, 2]);
        assert_eq!(&t.data()[..4], &[1.0; 4]);
        assert_eq!(&t.data()[4..8], &[0.0; 4]);
        assert_eq!(t.data()[8], 0.2);
        assert_eq!(load_image(&p, ColorMode::Gray, (2, 2)).unwrap().shape().dim(0), 1);
    }
}
