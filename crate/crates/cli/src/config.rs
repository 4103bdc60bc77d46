//! Run configuration: one TOML file, every field defaulted, unknown keys
//! rejected. Command-line flags override file values.

use std::path::{Path, PathBuf};

use ffcnet::dataset::{ColorMode, SynthSpec};
use ffcnet::layers::BridgeMode;
use ffcnet::metrics::Averaging;
use ffcnet::network::{ArchitectureSpec, StageSpec, StemSpec};
use ffcnet::spectral::PsmConfig;
use ffcnet::training::TrainConfig;
use ffcnet::Precision;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub precision: Precision,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    /// Single-threaded numerics.
    pub deterministic: bool,
    pub paths: Paths,
    pub data: DataConfig,
    pub psm: PsmConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub synth: SynthSpec,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
    pub inspect: InspectConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            precision: Precision::F32,
            workers: 0,
            deterministic: false,
            paths: Paths::default(),
            data: DataConfig::default(),
            psm: PsmConfig::default(),
            arch: ArchConfig::default(),
            train: TrainConfig::default(),
            synth: SynthSpec::default(),
            eval: EvalConfig::default(),
            sweep: SweepConfig::default(),
            inspect: InspectConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Dataset root, one sub-directory per class.
    pub data: PathBuf,
    /// Every command writes below this directory.
    pub out: PathBuf,
    /// Weights for `eval`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data"),
            out: PathBuf::from("out"),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Images are resized to `image_size x image_size`.
    pub image_size: usize,
    pub color: ColorMode,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            color: ColorMode::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Mini,
    Resnet18,
}

/// A preset, optionally with its stem, stages or bridge replaced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub preset: Preset,
    /// ResNet-18 only: 7x7 stride-2 stem followed by 2x2 pooling.
    pub large_stem: bool,
    pub bridge: Option<BridgeMode>,
    pub stem: Option<StemSpec>,
    pub stages: Option<Vec<StageSpec>>,
}

impl ArchConfig {
    pub fn resolve(&self, classes: usize) -> ArchitectureSpec {
        let mut arch = match self.preset {
            Preset::Mini => ArchitectureSpec::mini(classes),
            Preset::Resnet18 => ArchitectureSpec::resnet18(classes, self.large_stem),
        };
        if let Some(b) = self.bridge {
            arch.head.bridge = b;
        }
        if let Some(s) = &self.stem {
            arch.stem = s.clone();
        }
        if let Some(s) = &self.stages {
            arch.stages = s.clone();
        }
        arch
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub split: String,
    pub averaging: Averaging,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split: "test".into(),
            averaging: Averaging::Weighted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub patches: Vec<usize>,
    pub shuffle_probs: Vec<f64>,
    /// Empty means the run seed alone.
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            patches: vec![1, 2, 4, 8],
            shuffle_probs: vec![0.0, 0.3, 0.6],
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct InspectConfig {
    /// Move the DC bin to the patch centre.
    pub centered: bool,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    /// Training settings with the run-level seed and patch settings.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            psm: self.psm_config(),
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn psm_config(&self) -> PsmConfig {
        PsmConfig {
            seed: self.seed,
            ..self.psm.clone()
        }
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.data.image_size, self.data.image_size)
    }

    /// Checks every field that does not depend on the dataset.
    pub fn validate(&self) -> Result<(), CliError> {
        let (h, w) = self.image_dims();
        self.psm.validate()?;
        self.psm.validate_for(h, w)?;
        self.train_config().validate()?;
        self.arch.resolve(2).validate()?;
        self.synth.validate()?;
        if self.sweep.patches.is_empty() || self.sweep.shuffle_probs.is_empty() {
            return Err(CliError::Config("sweep needs at least one patch count and one probability".into()));
        }
        for &k in &self.sweep.patches {
            PsmConfig { patches: k, ..self.psm.clone() }.validate_for(h, w)?;
        }
        if let Some(p) = self.sweep.shuffle_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(CliError::Config(format!("sweep probability {p} is outside [0, 1]")));
        }
        self.eval.split.parse::<ffcnet::dataset::Split>()?;
        Ok(())
    }
}
