//! Subcommand bodies. Each takes a validated [`RunConfig`], checks the
//! paths it reads, and only then creates the output directory.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use ffcnet::dataset::{generate_synthetic, load_folder, load_image, write_synthetic, Dataset, DatasetIndex, Split};
use ffcnet::network::{load_checkpoint, Model};
use ffcnet::spectral::cache::{read_cache, write_cache, CacheEntry, CacheHeader};
use ffcnet::spectral::{apply_psm, fftshift, patch_spectra, PatchLayout, PsmConfig};
use ffcnet::training::{self, evaluate, input_channels, sweep_csv, EvalReport, SweepRow};
use ffcnet::{ComplexTensor, Precision, Real};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub const CACHE_FILE: &str = "spectra.ffcs";
pub const CACHE_INDEX_FILE: &str = "spectra_index.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const TRAIN_SUMMARY_FILE: &str = "train_summary.json";
pub const SWEEP_FILE: &str = "sweep.csv";

fn require(path: &Path, what: &'static str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingPath {
            what,
            path: path.to_path_buf(),
        })
    }
}

fn create_out(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let out = cfg.paths.out.clone();
    fs::create_dir_all(&out).map_err(|e| CliError::io(format!("cannot create {}", out.display()), e))?;
    Ok(out)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(format!("cannot write {}", path.display()), e))
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    require(&cfg.paths.data, "dataset root")?;
    let index = load_folder(&cfg.paths.data, cfg.seed)?;
    let data = Dataset::load(&index, cfg.data.color, cfg.image_dims())?;
    info!(
        "loaded {} images in {} classes from {}",
        data.samples.len(),
        data.classes(),
        cfg.paths.data.display()
    );
    Ok(data)
}

fn resolved_arch(cfg: &RunConfig, classes: usize) -> Result<ffcnet::network::ArchitectureSpec, CliError> {
    let arch = cfg.arch.resolve(classes);
    arch.validate()?;
    Ok(arch)
}

/// Synthetic dataset written straight into the output directory.
pub fn gen_data(cfg: &RunConfig) -> Result<DatasetIndex, CliError> {
    cfg.synth.validate()?;
    let data = generate_synthetic(&cfg.synth, cfg.seed)?;
    let out = create_out(cfg)?;
    let index = write_synthetic(&data, &cfg.synth, cfg.seed, &out)?;
    info!("wrote {} images to {}", index.entries.len(), out.display());
    Ok(index)
}

/// Eval-mode spectra in `(C, K^2, Hp, Wp)` order, computed at the run
/// precision and stored as f32.
pub fn preprocess(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let data = load_dataset(cfg)?;
    let psm = PsmConfig {
        layout: PatchLayout::Channels,
        ..cfg.psm_config()
    };
    let entries = match cfg.precision {
        Precision::F32 => cache_entries::<f32>(&data, &psm)?,
        Precision::F64 => cache_entries::<f64>(&data, &psm)?,
    };
    let (c, h, w) = {
        let d = data.samples[0].image.shape().dims();
        (d[0], d[1], d[2])
    };
    let k = psm.patches;
    let narrow = |v: usize, what: &str| {
        u16::try_from(v).map_err(|_| CliError::Config(format!("{what} {v} does not fit the cache header")))
    };
    let header = CacheHeader {
        channels: narrow(c, "channel count")?,
        patches: narrow(k, "patch count")?,
        patch_height: narrow(h / k, "patch height")?,
        patch_width: narrow(w / k, "patch width")?,
        count: u32::try_from(entries.len()).map_err(|_| CliError::Config("too many samples for one cache".into()))?,
    };
    let out = create_out(cfg)?;
    let path = out.join(CACHE_FILE);
    let file = File::create(&path).map_err(|e| CliError::io(format!("cannot create {}", path.display()), e))?;
    write_cache(BufWriter::new(file), &header, &entries)?;
    let mut index = String::from("index,id,label,split\n");
    for (i, s) in data.samples.iter().enumerate() {
        index.push_str(&format!("{i},{},{},{}\n", s.id, s.label, s.split.name()));
    }
    write(&out.join(CACHE_INDEX_FILE), index)?;
    info!("cached {} spectra of shape {c}x{}x{}x{} in {}", entries.len(), k * k, h / k, w / k, path.display());
    Ok(path)
}

fn cache_entries<T: Real>(data: &Dataset, psm: &PsmConfig) -> Result<Vec<CacheEntry>, CliError> {
    let entries = data
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let out = apply_psm(&s.image.cast::<T>(), psm, false, i as u64, 0)?;
            let label = u16::try_from(s.label).map_err(|_| ffcnet::Error::Config("label does not fit in u16".into()))?;
            Ok(CacheEntry::from_spectrum(&out.spectrum, label, &s.id))
        })
        .collect::<ffcnet::Result<Vec<_>>>()?;
    Ok(entries)
}

/// Reads a cache file end to end and reports its header.
pub fn check_cache(path: &Path) -> Result<CacheHeader, CliError> {
    require(path, "cache file")?;
    let file = File::open(path).map_err(|e| CliError::io(format!("cannot open {}", path.display()), e))?;
    let (header, entries) = read_cache(std::io::BufReader::new(file))?;
    println!(
        "{}: {} samples, {} channels, K={}, patch {}x{}",
        path.display(),
        entries.len(),
        header.channels,
        header.patches,
        header.patch_height,
        header.patch_width
    );
    Ok(header)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub final_train_loss: f64,
}

/// Trains on the train split, validating every epoch. Writes checkpoints,
/// `history.jsonl`, `timing.jsonl`, the resolved config and a summary.
pub fn train(cfg: &RunConfig) -> Result<TrainSummary, CliError> {
    let data = load_dataset(cfg)?;
    let arch = resolved_arch(cfg, data.classes())?;
    let out = create_out(cfg)?;
    write(&out.join(CONFIG_FILE), cfg.to_toml())?;
    let summary = match cfg.precision {
        Precision::F32 => train_typed::<f32>(cfg, &data, &arch, &out)?,
        Precision::F64 => train_typed::<f64>(cfg, &data, &arch, &out)?,
    };
    write(&out.join(TRAIN_SUMMARY_FILE), serde_json::to_string_pretty(&summary).map_err(ffcnet::Error::from)? + "\n")?;
    println!(
        "best val accuracy {:.4} at epoch {} ({} epochs run)",
        summary.best_val_accuracy, summary.best_epoch, summary.epochs_run
    );
    Ok(summary)
}

fn train_typed<T: Real>(
    cfg: &RunConfig,
    data: &Dataset,
    arch: &ffcnet::network::ArchitectureSpec,
    out: &Path,
) -> Result<TrainSummary, CliError> {
    let outcome = training::train::<T>(
        &data.split(Split::Train),
        &data.split(Split::Val),
        &data.class_names,
        arch,
        &cfg.train_config(),
        Some(out),
    )?;
    Ok(TrainSummary {
        epochs_run: outcome.history.len(),
        best_epoch: outcome.state.best_epoch,
        best_val_accuracy: outcome.state.best_val_accuracy,
        final_train_loss: outcome.history.last().map_or(f64::NAN, |r| r.train_loss),
    })
}

#[derive(Debug, Clone, Serialize)]
struct EvalFile<'a> {
    split: &'a str,
    checkpoint: &'a Path,
    averaging: ffcnet::metrics::Averaging,
    loss: f64,
    accuracy: f64,
    precision: f64,
    recall: f64,
    f1: f64,
    summary: &'a ffcnet::metrics::Summary,
}

/// Scores the configured checkpoint on one split and writes
/// `metrics_<split>.json`, `confusion_<split>_counts.csv`,
/// `confusion_<split>_percent.csv`, `confusion_<split>.svg` and
/// `predictions_<split>.csv`.
pub fn eval(cfg: &RunConfig) -> Result<EvalReport, CliError> {
    let checkpoint = cfg
        .paths
        .checkpoint
        .clone()
        .ok_or_else(|| CliError::Config("eval needs a checkpoint (--checkpoint or paths.checkpoint)".into()))?;
    require(&checkpoint, "checkpoint")?;
    let split: Split = cfg.eval.split.parse()?;
    let data = load_dataset(cfg)?;
    let arch = resolved_arch(cfg, data.classes())?;
    let samples = data.split(split);
    let report = match cfg.precision {
        Precision::F32 => eval_typed::<f32>(cfg, &data, &arch, &samples, &checkpoint)?,
        Precision::F64 => eval_typed::<f64>(cfg, &data, &arch, &samples, &checkpoint)?,
    };
    let out = create_out(cfg)?;
    let name = split.name();
    let agg = report.summary.aggregate(cfg.eval.averaging);
    let file = EvalFile {
        split: name,
        checkpoint: &checkpoint,
        averaging: cfg.eval.averaging,
        loss: report.loss,
        accuracy: report.summary.accuracy,
        precision: agg.precision,
        recall: agg.recall,
        f1: agg.f1,
        summary: &report.summary,
    };
    let json = serde_json::to_string_pretty(&file).map_err(ffcnet::Error::from)?;
    write(&out.join(format!("metrics_{name}.json")), json + "\n")?;
    write(&out.join(format!("confusion_{name}_counts.csv")), report.confusion.counts_csv())?;
    write(&out.join(format!("confusion_{name}_percent.csv")), report.confusion.percent_csv())?;
    write(&out.join(format!("confusion_{name}.svg")), report.confusion.heatmap_svg())?;
    let mut preds = String::from("id,label,predicted\n");
    for (s, p) in samples.iter().zip(&report.predictions) {
        preds.push_str(&format!("{},{},{}\n", s.id, data.class_names[s.label], data.class_names[*p]));
    }
    write(&out.join(format!("predictions_{name}.csv")), preds)?;
    println!(
        "{name}: accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} ({} samples)",
        report.summary.accuracy, agg.precision, agg.recall, agg.f1, report.summary.total
    );
    Ok(report)
}

fn eval_typed<T: Real>(
    cfg: &RunConfig,
    data: &Dataset,
    arch: &ffcnet::network::ArchitectureSpec,
    samples: &[&ffcnet::dataset::Sample],
    checkpoint: &Path,
) -> Result<EvalReport, CliError> {
    let first = samples
        .first()
        .ok_or_else(|| CliError::Core(ffcnet::Error::Dataset(format!("split {} is empty", cfg.eval.split))))?;
    let d = first.image.shape().dims();
    let psm = cfg.psm_config();
    let mut model = Model::<T>::build(arch, input_channels(&psm, d[0], d[1], d[2]), cfg.seed)?;
    load_checkpoint(&mut model, checkpoint)?;
    Ok(evaluate(&model, samples, &psm, &data.class_names, cfg.train.eval_batch_size)?)
}

/// One training run per `(K, p, seed)`; rows go to `sweep.csv`.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>, CliError> {
    let data = load_dataset(cfg)?;
    let arch = resolved_arch(cfg, data.classes())?;
    let seeds = if cfg.sweep.seeds.is_empty() {
        vec![cfg.seed]
    } else {
        cfg.sweep.seeds.clone()
    };
    let out = create_out(cfg)?;
    write(&out.join(CONFIG_FILE), cfg.to_toml())?;
    let base = cfg.train_config();
    let (k, p) = (&cfg.sweep.patches, &cfg.sweep.shuffle_probs);
    let rows = match cfg.precision {
        Precision::F32 => training::sweep::<f32>(&data, &arch, &base, k, p, &seeds)?,
        Precision::F64 => training::sweep::<f64>(&data, &arch, &base, k, p, &seeds)?,
    };
    let csv = sweep_csv(&rows);
    write(&out.join(SWEEP_FILE), &csv)?;
    print!("{csv}");
    Ok(rows)
}

/// Per-patch magnitude and phase images written by [`inspect`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InspectFiles {
    pub magnitude: Vec<PathBuf>,
    pub phase: Vec<PathBuf>,
}

/// Writes `<stem>_c<channel>_p<patch>_magnitude.png` (log scale, each
/// image normalised to its own peak) and `..._phase.png` (phase mapped
/// from [-pi, pi] to [0, 255]; bins with negligible magnitude are mid-grey).
pub fn inspect(cfg: &RunConfig, image: &Path) -> Result<InspectFiles, CliError> {
    require(image, "image")?;
    let picture = load_image(image, cfg.data.color, cfg.image_dims())?;
    let mut spectra = patch_spectra(&picture.cast::<f64>(), cfg.psm.patches)?;
    if cfg.inspect.centered {
        spectra = fftshift(&spectra)?;
    }
    let dims = spectra.shape().dims().to_vec();
    let (channels, patches, ph, pw) = (dims[0], dims[1], dims[2], dims[3]);
    let stem = image.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned());
    let out = create_out(cfg)?;
    let mut files = InspectFiles {
        magnitude: Vec::new(),
        phase: Vec::new(),
    };
    let plane = ph * pw;
    for c in 0..channels {
        for p in 0..patches {
            let offset = (c * patches + p) * plane;
            let (mag, phase) = render_patch(&spectra, offset, ph * pw);
            let base = format!("{stem}_c{c}_p{p:02}");
            let mag_path = out.join(format!("{base}_magnitude.png"));
            let phase_path = out.join(format!("{base}_phase.png"));
            save_gray(&mag_path, mag, ph, pw)?;
            save_gray(&phase_path, phase, ph, pw)?;
            files.magnitude.push(mag_path);
            files.phase.push(phase_path);
        }
    }
    info!("wrote {} spectrum images to {}", 2 * files.magnitude.len(), out.display());
    Ok(files)
}

fn render_patch(spectra: &ComplexTensor<f64>, offset: usize, plane: usize) -> (Vec<u8>, Vec<u8>) {
    let re = &spectra.re().data()[offset..offset + plane];
    let im = &spectra.im().data()[offset..offset + plane];
    let peak = re.iter().zip(im).map(|(r, i)| r.hypot(*i)).fold(0.0f64, f64::max);
    let log_peak = peak.ln_1p();
    let mut mag = Vec::with_capacity(plane);
    let mut phase = Vec::with_capacity(plane);
    for (&r, &i) in re.iter().zip(im) {
        let m = r.hypot(i);
        let level = if log_peak > 0.0 { 255.0 * m.ln_1p() / log_peak } else { 0.0 };
        mag.push(level.round() as u8);
        let angle = if m > 1e-9 * peak { i.atan2(r) } else { 0.0 };
        let turn = (angle + std::f64::consts::PI) / std::f64::consts::TAU;
        phase.push((255.0 * turn).round() as u8);
    }
    (mag, phase)
}

fn save_gray(path: &Path, pixels: Vec<u8>, h: usize, w: usize) -> Result<(), CliError> {
    let img = image::GrayImage::from_raw(w as u32, h as u32, pixels).expect("buffer matches dimensions");
    img.save(path).map_err(|source| {
        CliError::Core(ffcnet::Error::Image {
            path: path.to_path_buf(),
            source,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ffcnet::shape;
    use ffcnet::Tensor;

    fn spectrum_of(values: Vec<f64>, n: usize) -> ComplexTensor<f64> {
        let img = Tensor::new(shape![1, n, n], values).unwrap();
        patch_spectra(&img, 1).unwrap()
    }

    #[test]
    fn constant_patch_lights_only_dc() {
        let s = spectrum_of(vec![0.5; 16], 4);
        let (mag, _) = render_patch(&s, 0, 16);
        assert_eq!(mag[0], 255);
        assert!(mag[1..].iter().all(|&v| v == 0));
        let (mag, _) = render_patch(&fftshift(&s).unwrap(), 0, 16);
        assert_eq!(mag.iter().position(|&v| v != 0), Some(2 * 4 + 2));
        assert_eq!(mag.iter().filter(|&&v| v != 0).count(), 1);
    }

    #[test]
    fn zero_patch_renders_black_and_flat_phase() {
        let s = spectrum_of(vec![0.0; 16], 4);
        let (mag, phase) = render_patch(&s, 0, 16);
        assert!(mag.iter().all(|&v| v == 0));
        assert!(phase.iter().all(|&v| v == 128));
    }
}
