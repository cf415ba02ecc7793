use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Shortcut};

/// The four classifiers, in fusion order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    NightNet,
    GlareNet,
    PrecipitationNet,
    FogNet,
}

impl Task {
    pub const ALL: [Task; 4] = [
        Task::NightNet,
        Task::GlareNet,
        Task::PrecipitationNet,
        Task::FogNet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::NightNet => "NightNet",
            Task::GlareNet => "GlareNet",
            Task::PrecipitationNet => "PrecipitationNet",
            Task::FogNet => "FogNet",
        }
    }

    /// Short command-line key.
    pub fn key(self) -> &'static str {
        match self {
            Task::NightNet => "night",
            Task::GlareNet => "glare",
            Task::PrecipitationNet => "precip",
            Task::FogNet => "fog",
        }
    }

    /// Class names; index 0 is the referenced class.
    pub fn classes(self) -> &'static [&'static str] {
        match self {
            Task::NightNet => &["dawn_dusk", "day", "night"],
            Task::GlareNet => &["glare", "no_glare"],
            Task::PrecipitationNet => &["clear", "rain", "snow"],
            Task::FogNet => &["fog", "no_fog"],
        }
    }

    pub fn head(self) -> HeadKind {
        if self.classes().len() == 2 {
            HeadKind::Sigmoid
        } else {
            HeadKind::Softmax
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    /// Accepts either the key (`night`) or the model name (`NightNet`).
    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.key() == s || t.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown task `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    /// One unit; the sigmoid output is the probability of class 0.
    Sigmoid,
    /// One unit per class.
    Softmax,
}

impl HeadKind {
    pub fn units(self, classes: usize) -> usize {
        match self {
            HeadKind::Sigmoid => 1,
            HeadKind::Softmax => classes,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub window: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemConfig {
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub pool: Option<PoolConfig>,
    pub frozen: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageConfig {
    pub width: usize,
    pub blocks: usize,
    /// Stride of the first block.
    pub stride: usize,
    pub frozen: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub input_size: usize,
    pub stem: StemConfig,
    pub stages: Vec<StageConfig>,
}

pub const HEAD_UNITS: usize = 64;
pub const DESK_INPUT_SIZE: usize = 32;
pub const FULL_INPUT_SIZE: usize = 224;

impl BackboneConfig {
    /// Three single-block stages of widths 16/32/64 on 32x32 input.
    pub fn desk() -> Self {
        let stage = |width, stride| StageConfig {
            width,
            blocks: 1,
            stride,
            frozen: true,
        };
        Self {
            input_size: DESK_INPUT_SIZE,
            stem: StemConfig {
                width: 16,
                kernel: 3,
                stride: 1,
                padding: 1,
                pool: Some(PoolConfig {
                    window: 2,
                    stride: 2,
                    padding: 0,
                }),
                frozen: true,
            },
            stages: vec![stage(16, 1), stage(32, 2), stage(64, 2)],
        }
    }

    /// ResNet-50 stage layout (3/4/6/3 blocks, widths 64..512) with basic
    /// blocks on 224x224 input.
    pub fn resnet50_shaped() -> Self {
        let stage = |width, blocks, stride| StageConfig {
            width,
            blocks,
            stride,
            frozen: true,
        };
        Self {
            input_size: FULL_INPUT_SIZE,
            stem: StemConfig {
                width: 64,
                kernel: 7,
                stride: 2,
                padding: 3,
                pool: Some(PoolConfig {
                    window: 3,
                    stride: 2,
                    padding: 1,
                }),
                frozen: true,
            },
            stages: vec![
                stage(64, 3, 1),
                stage(128, 4, 2),
                stage(256, 6, 2),
                stage(512, 3, 2),
            ],
        }
    }

    /// Same layout with a different input size.
    pub fn with_input_size(mut self, input_size: usize) -> Self {
        self.input_size = input_size;
        self
    }

    /// Marks the stem and every stage frozen or trainable.
    pub fn with_frozen(mut self, frozen: bool) -> Self {
        self.stem.frozen = frozen;
        for s in &mut self.stages {
            s.frozen = frozen;
        }
        self
    }

    pub fn output_width(&self) -> usize {
        self.stages.last().map_or(self.stem.width, |s| s.width)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 {
            return Err(Error::invalid("input size must be positive"));
        }
        if self.stages.iter().any(|s| s.blocks == 0) {
            return Err(Error::invalid("every stage needs at least one block"));
        }
        // walk the spatial extent through the network
        let mut extent = crate::autodiff::conv2d_output_extent(
            self.input_size,
            self.stem.kernel,
            self.stem.stride,
            self.stem.padding,
        );
        if let Some(p) = self.stem.pool {
            extent = extent.and_then(|e| {
                crate::autodiff::conv2d_output_extent(e, p.window, p.stride, p.padding)
            });
        }
        for s in &self.stages {
            extent = extent.and_then(|e| crate::autodiff::conv2d_output_extent(e, 3, s.stride, 1));
        }
        if extent.is_none() {
            return Err(Error::invalid(format!(
                "input size {} is too small for this backbone",
                self.input_size
            )));
        }
        Ok(())
    }
}

/// One layer of the flattened architecture.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlannedLayer {
    pub name: String,
    pub spec: LayerSpec,
    pub trainable: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub task: Task,
    pub classes: Vec<String>,
    pub head: HeadKind,
    pub backbone: BackboneConfig,
}

impl ClassifierSpec {
    pub fn new(task: Task, backbone: BackboneConfig) -> Self {
        Self {
            task,
            classes: task.classes().iter().map(|c| c.to_string()).collect(),
            head: task.head(),
            backbone,
        }
    }

    pub fn desk(task: Task) -> Self {
        Self::new(task, BackboneConfig::desk())
    }

    pub fn name(&self) -> &'static str {
        self.task.name()
    }

    pub fn input_size(&self) -> usize {
        self.backbone.input_size
    }

    pub fn output_units(&self) -> usize {
        self.head.units(self.classes.len())
    }

    pub fn validate(&self) -> Result<()> {
        let expected = match self.head {
            HeadKind::Sigmoid => 2,
            HeadKind::Softmax => 3,
        };
        if self.classes.len() != expected {
            return Err(Error::invalid(format!(
                "{:?} head needs {expected} classes, got {}",
                self.head,
                self.classes.len()
            )));
        }
        self.backbone.validate()
    }

    /// The full layer sequence from image to logits.
    pub fn plan(&self) -> Vec<PlannedLayer> {
        let b = &self.backbone;
        let mut out = Vec::new();
        let mut push = |name: String, spec: LayerSpec, trainable: bool| {
            out.push(PlannedLayer {
                name,
                spec,
                trainable,
            })
        };
        let stem_trainable = !b.stem.frozen;
        push(
            "stem.conv".into(),
            LayerSpec::Conv2d {
                in_channels: 3,
                out_channels: b.stem.width,
                kernel: b.stem.kernel,
                stride: b.stem.stride,
                padding: b.stem.padding,
                bias: false,
            },
            stem_trainable,
        );
        push(
            "stem.bn".into(),
            LayerSpec::BatchNorm2d {
                channels: b.stem.width,
            },
            stem_trainable,
        );
        push("stem.relu".into(), LayerSpec::Relu, stem_trainable);
        if let Some(p) = b.stem.pool {
            push(
                "stem.pool".into(),
                LayerSpec::MaxPool2d {
                    window: p.window,
                    stride: p.stride,
                    padding: p.padding,
                },
                stem_trainable,
            );
        }
        let mut channels = b.stem.width;
        for (si, stage) in b.stages.iter().enumerate() {
            for bi in 0..stage.blocks {
                push(
                    format!("stage{}.block{}", si + 1, bi + 1),
                    LayerSpec::Residual {
                        in_channels: channels,
                        out_channels: stage.width,
                        stride: if bi == 0 { stage.stride } else { 1 },
                        shortcut: Shortcut::Auto,
                    },
                    !stage.frozen,
                );
                channels = stage.width;
            }
        }
        push("head.pool".into(), LayerSpec::GlobalAvgPool, true);
        push(
            "head.dense1".into(),
            LayerSpec::Dense {
                inputs: channels,
                units: HEAD_UNITS,
            },
            true,
        );
        push("head.relu1".into(), LayerSpec::Relu, true);
        push(
            "head.dense2".into(),
            LayerSpec::Dense {
                inputs: HEAD_UNITS,
                units: HEAD_UNITS,
            },
            true,
        );
        push("head.relu2".into(), LayerSpec::Relu, true);
        push(
            "head.out".into(),
            LayerSpec::Dense {
                inputs: HEAD_UNITS,
                units: self.output_units(),
            },
            true,
        );
        out
    }
}
