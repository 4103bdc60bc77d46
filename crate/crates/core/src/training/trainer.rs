use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::metrics::{ConfusionMatrix, Summary};
use crate::network::{save_checkpoint, ArchitectureSpec, Model};
use crate::rng::stream;
use crate::spectral::{apply_psm, PsmConfig, Shuffle};
use crate::tensor::{ComplexTensor, Real, Shape};

use super::augment::{augment, AugmentConfig};
use super::loss::{argmax_rows, cross_entropy};
use super::sgd::Sgd;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LrSchedule {
    Constant,
    /// Multiply the rate by `factor` once each milestone, given as a
    /// fraction of the total epochs, has been reached.
    Step { milestones: Vec<f64>, factor: f64 },
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::Step {
            milestones: vec![0.5, 0.75],
            factor: 0.1,
        }
    }
}

impl LrSchedule {
    /// Rate for the zero-based `epoch` of `total`.
    pub fn rate(&self, base: f64, epoch: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Step { milestones, factor } => {
                let passed = milestones
                    .iter()
                    .filter(|&&m| epoch >= (m * total as f64).round() as usize)
                    .count();
                base * factor.powi(passed as i32)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub momentum: f64,
    pub schedule: LrSchedule,
    pub augment: AugmentConfig,
    /// Not read from config files; the run config supplies it. The
    /// shuffle stream seed is taken from `seed`, not `psm.seed`.
    #[serde(skip)]
    pub psm: PsmConfig,
    /// Stop after this many epochs without a better validation accuracy.
    pub patience: Option<usize>,
    /// Stop once eval-mode accuracy on the training split reaches this.
    pub target_train_accuracy: Option<f64>,
    pub eval_batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            batch_size: 32,
            epochs: 60,
            momentum: 0.9,
            schedule: LrSchedule::default(),
            augment: AugmentConfig::default(),
            psm: PsmConfig::default(),
            patience: Some(20),
            target_train_accuracy: None,
            eval_batch_size: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be at least 2 for batch normalization, got {}",
                self.batch_size
            )));
        }
        if self.epochs == 0 || self.eval_batch_size == 0 {
            return Err(Error::Config("epochs and eval_batch_size must be positive".into()));
        }
        if !(self.momentum.is_finite() && self.momentum >= 0.0) {
            return Err(Error::Config(format!("momentum must be non-negative, got {}", self.momentum)));
        }
        if let LrSchedule::Step { milestones, factor } = &self.schedule {
            if milestones.iter().any(|m| !(0.0..=1.0).contains(m)) || !(factor.is_finite() && *factor > 0.0) {
                return Err(Error::Config("step milestones must lie in [0, 1] and factor must be positive".into()));
            }
        }
        if let Some(t) = self.target_train_accuracy {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("target_train_accuracy must lie in [0, 1], got {t}")));
            }
        }
        self.psm.validate()
    }

    fn psm_for_run(&self) -> PsmConfig {
        PsmConfig {
            seed: self.seed,
            ..self.psm.clone()
        }
    }
}

/// One line of the metrics history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    /// Eval-mode accuracy on the training split, when a target is set.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub train_eval_accuracy: Option<f64>,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_precision: f64,
    pub val_recall: f64,
    pub val_f1: f64,
    pub shuffled_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub model: Model<T>,
    pub optimizer: Sgd<T>,
    /// Epochs completed. Every random stream is derived from the seed and
    /// the epoch, so this counter is the whole random state.
    pub epoch: usize,
    pub best_val_accuracy: f64,
    pub best_epoch: usize,
    pub best_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub state: TrainState<T>,
    /// Parameters at the best validation epoch.
    pub best_model: Model<T>,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub summary: Summary,
    pub loss: f64,
    pub predictions: Vec<usize>,
    /// Samples whose patches were permuted; always 0 in eval mode.
    pub shuffled: usize,
}

pub const HISTORY_FILE: &str = "history.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";
pub const BEST_CHECKPOINT: &str = "best.ffcw";
pub const LAST_CHECKPOINT: &str = "last.ffcw";

fn image_dims(samples: &[&Sample]) -> Result<(usize, usize, usize)> {
    let first = samples.first().ok_or_else(|| Error::Dataset("empty split".into()))?;
    let dims = first.image.shape().dims().to_vec();
    for s in samples {
        if s.image.shape().dims() != dims.as_slice() {
            return Err(Error::Dataset(format!(
                "image {} has shape {} but {} has {}",
                s.id,
                s.image.shape(),
                first.id,
                first.image.shape()
            )));
        }
    }
    match dims.as_slice() {
        &[c, h, w] => Ok((c, h, w)),
        _ => Err(Error::InvalidShape {
            shape: first.image.shape().clone(),
            reason: "images must be (channels, height, width)".into(),
        }),
    }
}

/// Network input channels for images with `channels` planes.
pub fn input_channels(psm: &PsmConfig, channels: usize, height: usize, width: usize) -> usize {
    psm.input_dims(channels, height, width).0
}

/// Runs augmentation (training only) and the patch pipeline for the
/// samples at `indices`, stacking the results into one batch.
pub fn prepare_batch<T: Real>(
    samples: &[&Sample],
    indices: &[usize],
    psm: &PsmConfig,
    augmentation: Option<&AugmentConfig>,
    epoch: u64,
) -> Result<(ComplexTensor<T>, Vec<usize>, Vec<Shuffle>)> {
    let training = augmentation.is_some();
    let outputs = indices
        .par_iter()
        .map(|&i| {
            let mut image = samples[i].image.cast::<T>();
            if let Some(cfg) = augmentation {
                let mut rng = stream(psm.seed, "augment", &[i as u64, epoch]);
                image = augment(&image, &mut rng, cfg)?;
            }
            apply_psm(&image, psm, training, i as u64, epoch)
        })
        .collect::<Result<Vec<_>>>()?;
    let dims = outputs[0].spectrum.shape().dims().to_vec();
    let per = outputs[0].spectrum.len();
    let mut re = Vec::with_capacity(per * outputs.len());
    let mut im = Vec::with_capacity(per * outputs.len());
    let mut shuffles = Vec::with_capacity(outputs.len());
    for o in outputs {
        let (r, m) = o.spectrum.into_parts();
        re.extend_from_slice(r.data());
        im.extend_from_slice(m.data());
        shuffles.push(o.shuffle);
    }
    let mut batch_dims = vec![indices.len()];
    batch_dims.extend(dims);
    let labels = indices.iter().map(|&i| samples[i].label).collect();
    Ok((ComplexTensor::from_parts(Shape::new(batch_dims)?, re, im)?, labels, shuffles))
}

/// Eval-mode metrics over `samples`. Patches are never shuffled.
pub fn evaluate<T: Real>(
    model: &Model<T>,
    samples: &[&Sample],
    psm: &PsmConfig,
    class_names: &[String],
    batch_size: usize,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Dataset("cannot evaluate an empty split".into()));
    }
    let mut confusion = ConfusionMatrix::new(class_names.to_vec())?;
    let mut predictions = Vec::with_capacity(samples.len());
    let mut loss_sum = 0.0;
    let mut shuffled = 0;
    let all: Vec<usize> = (0..samples.len()).collect();
    for chunk in all.chunks(batch_size.max(1)) {
        let (x, labels, shuffles) = prepare_batch::<T>(samples, chunk, psm, None, 0)?;
        shuffled += shuffles.iter().filter(|s| !s.is_identity()).count();
        let logits = model.logits(&x)?;
        let (loss, _) = cross_entropy(&logits, &labels)?;
        loss_sum += loss * chunk.len() as f64;
        for (&truth, pred) in labels.iter().zip(argmax_rows(&logits)) {
            confusion.update(truth, pred)?;
            predictions.push(pred);
        }
    }
    let summary = confusion.summarize()?;
    Ok(EvalReport {
        confusion,
        summary,
        loss: loss_sum / samples.len() as f64,
        predictions,
        shuffled,
    })
}

struct Outputs {
    dir: PathBuf,
    history: BufWriter<File>,
    timing: BufWriter<File>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            history: BufWriter::new(File::create(dir.join(HISTORY_FILE))?),
            timing: BufWriter::new(File::create(dir.join(TIMING_FILE))?),
        })
    }
}

/// SGD training with per-epoch validation.
///
/// With `out_dir` set, writes `best.ffcw`, `last.ffcw`, one JSON line per
/// epoch to `history.jsonl` and wall times to `timing.jsonl`.
pub fn train<T: Real>(
    train_set: &[&Sample],
    val_set: &[&Sample],
    class_names: &[String],
    arch: &ArchitectureSpec,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Dataset("training split is empty".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Dataset("validation split is empty".into()));
    }
    if arch.head.classes != class_names.len() {
        return Err(Error::Config(format!(
            "architecture has {} classes but the dataset has {}",
            arch.head.classes,
            class_names.len()
        )));
    }
    let (c, h, w) = image_dims(train_set)?;
    if image_dims(val_set)? != (c, h, w) {
        return Err(Error::Dataset("training and validation images differ in shape".into()));
    }
    let psm = cfg.psm_for_run();
    psm.validate_for(h, w)?;
    let model = Model::<T>::build(arch, input_channels(&psm, c, h, w), cfg.seed)?;
    let optimizer = Sgd::new(model.params().into_iter().map(|(_, t)| t), cfg.momentum);
    let mut best_model = model.clone();
    let mut state = TrainState {
        model,
        optimizer,
        epoch: 0,
        best_val_accuracy: f64::NEG_INFINITY,
        best_epoch: 0,
        best_checkpoint: None,
    };
    let mut outputs = out_dir.map(Outputs::create).transpose()?;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let lr = cfg.schedule.rate(cfg.learning_rate, epoch, cfg.epochs);
        order.sort_unstable();
        order.shuffle(&mut stream(cfg.seed, "order", &[epoch as u64]));
        let (mut loss_sum, mut seen, mut correct, mut shuffled) = (0.0, 0usize, 0usize, 0usize);
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            if batch.len() < 2 {
                continue;
            }
            let (x, labels, shuffles) = prepare_batch::<T>(train_set, batch, &psm, Some(&cfg.augment), epoch as u64)?;
            shuffled += shuffles.iter().filter(|s| !s.is_identity()).count();
            let (logits, tape) = state.model.forward(&x, true)?;
            let (loss, grad) = cross_entropy(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss {loss} at epoch {}, step {step}",
                    epoch + 1
                )));
            }
            let grads = state.model.backward(&tape, &grad)?;
            state.optimizer.step(state.model.params_mut(), &grads, lr)?;
            state.model.apply_stats(&tape);
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
            correct += argmax_rows(&logits).iter().zip(&labels).filter(|(p, t)| p == t).count();
        }
        if seen == 0 {
            return Err(Error::Dataset("training split is too small to form a batch of 2".into()));
        }
        state.epoch = epoch + 1;

        let val = evaluate(&state.model, val_set, &psm, class_names, cfg.eval_batch_size)?;
        debug_assert_eq!(val.shuffled, 0);
        let train_eval_accuracy = match cfg.target_train_accuracy {
            Some(_) => Some(evaluate(&state.model, train_set, &psm, class_names, cfg.eval_batch_size)?.summary.accuracy),
            None => None,
        };
        let record = EpochRecord {
            epoch: epoch + 1,
            learning_rate: lr,
            train_loss: loss_sum / seen as f64,
            train_accuracy: correct as f64 / seen as f64,
            train_eval_accuracy,
            val_loss: val.loss,
            val_accuracy: val.summary.accuracy,
            val_precision: val.summary.weighted.precision,
            val_recall: val.summary.weighted.recall,
            val_f1: val.summary.weighted.f1,
            shuffled_fraction: shuffled as f64 / seen as f64,
        };
        info!(
            "epoch {}/{}: loss {:.4} train acc {:.4} val acc {:.4}",
            record.epoch, cfg.epochs, record.train_loss, record.train_accuracy, record.val_accuracy
        );

        if record.val_accuracy > state.best_val_accuracy {
            state.best_val_accuracy = record.val_accuracy;
            state.best_epoch = epoch + 1;
            best_model = state.model.clone();
            if let Some(o) = &outputs {
                let path = o.dir.join(BEST_CHECKPOINT);
                save_checkpoint(&best_model, &path)?;
                state.best_checkpoint = Some(path);
            }
        }
        if let Some(o) = &mut outputs {
            writeln!(o.history, "{}", serde_json::to_string(&record)?)?;
            o.history.flush()?;
            let timing = serde_json::json!({ "epoch": epoch + 1, "seconds": started.elapsed().as_secs_f64() });
            writeln!(o.timing, "{timing}")?;
            o.timing.flush()?;
        }
        history.push(record);

        if let (Some(target), Some(acc)) = (cfg.target_train_accuracy, train_eval_accuracy) {
            if acc >= target {
                info!("training accuracy {acc:.4} reached the target after {} epochs", epoch + 1);
                break;
            }
        }
        if let Some(patience) = cfg.patience {
            if state.epoch - state.best_epoch >= patience {
                warn!("validation accuracy stalled for {patience} epochs; stopping at epoch {}", epoch + 1);
                break;
            }
        }
    }
    if let Some(o) = &outputs {
        save_checkpoint(&state.model, &o.dir.join(LAST_CHECKPOINT))?;
    }
    Ok(TrainOutcome {
        state,
        best_model,
        history,
    })
}
