use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::BridgeMode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StemSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// Follow the stem with a 2x2 average pool.
    #[serde(default)]
    pub pool: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub blocks: usize,
    pub channels: usize,
    /// Stride of the first block in the stage.
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HeadPool {
    #[default]
    Avg,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadSpec {
    #[serde(default)]
    pub pool: HeadPool,
    #[serde(default)]
    pub bridge: BridgeMode,
    pub classes: usize,
}

/// Residual backbone description: stem, stages of residual blocks, head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub stem: StemSpec,
    pub stages: Vec<StageSpec>,
    pub head: HeadSpec,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        Self::mini(4)
    }
}

impl ArchitectureSpec {
    /// Desk-scale network: 3x3 stem with 16 channels and one block per
    /// stage at 16/32/64 channels.
    pub fn mini(classes: usize) -> Self {
        Self {
            stem: StemSpec {
                channels: 16,
                kernel: 3,
                stride: 1,
                pool: false,
            },
            stages: vec![
                StageSpec { blocks: 1, channels: 16, stride: 1 },
                StageSpec { blocks: 1, channels: 32, stride: 2 },
                StageSpec { blocks: 1, channels: 64, stride: 2 },
            ],
            head: HeadSpec {
                pool: HeadPool::Avg,
                bridge: BridgeMode::Magnitude,
                classes,
            },
        }
    }

    /// ResNet-18 layout: two blocks in each of four stages.
    pub fn resnet18(classes: usize, large_stem: bool) -> Self {
        let stem = if large_stem {
            StemSpec { channels: 64, kernel: 7, stride: 2, pool: true }
        } else {
            StemSpec { channels: 64, kernel: 3, stride: 1, pool: false }
        };
        Self {
            stem,
            stages: vec![
                StageSpec { blocks: 2, channels: 64, stride: 1 },
                StageSpec { blocks: 2, channels: 128, stride: 2 },
                StageSpec { blocks: 2, channels: 256, stride: 2 },
                StageSpec { blocks: 2, channels: 512, stride: 2 },
            ],
            head: HeadSpec {
                pool: HeadPool::Avg,
                bridge: BridgeMode::Magnitude,
                classes,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.head.classes < 2 {
            return Err(Error::Config(format!("head.classes must be >= 2, got {}", self.head.classes)));
        }
        if self.stem.channels == 0 || self.stem.kernel == 0 || self.stem.kernel.is_multiple_of(2) || self.stem.stride == 0 {
            return Err(Error::Config("stem needs positive channels/stride and an odd kernel".into()));
        }
        let mut prev = self.stem.channels;
        for (i, s) in self.stages.iter().enumerate() {
            if s.blocks == 0 || s.channels == 0 || s.stride == 0 {
                return Err(Error::Config(format!("stage {i} needs positive blocks, channels and stride")));
            }
            if s.channels < prev {
                return Err(Error::Config(format!(
                    "stage channels must be non-decreasing: stage {i} has {} after {prev}",
                    s.channels
                )));
            }
            prev = s.channels;
        }
        Ok(())
    }

    pub fn final_channels(&self) -> usize {
        self.stages.last().map_or(self.stem.channels, |s| s.channels)
    }
}
