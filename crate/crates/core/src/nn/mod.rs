//! Network layers built on the autodiff tape.

mod layers;
mod residual;

pub use layers::{BatchNorm2d, Conv2d, Dense, BN_EPSILON, BN_MOMENTUM};
pub use residual::{resolve_shortcut, ResidualBlock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::param::ParamStore;
use crate::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Batch statistics, running-stat updates.
    Train,
    /// Running statistics only; no state changes.
    Infer,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shortcut {
    /// Identity when shapes allow it, projection otherwise.
    #[default]
    Auto,
    Identity,
    Projection,
}

/// Hyperparameters of one layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    },
    BatchNorm2d {
        channels: usize,
    },
    MaxPool2d {
        window: usize,
        stride: usize,
        padding: usize,
    },
    GlobalAvgPool,
    Dense {
        inputs: usize,
        units: usize,
    },
    Relu,
    Sigmoid,
    Softmax,
    Residual {
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        shortcut: Shortcut,
    },
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |what: &str, v: usize| {
            if v == 0 {
                Err(Error::invalid(format!("{what} must be positive")))
            } else {
                Ok(())
            }
        };
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                positive("in_channels", in_channels)?;
                positive("out_channels", out_channels)?;
                positive("kernel", kernel)?;
                positive("stride", stride)
            }
            LayerSpec::BatchNorm2d { channels } => positive("channels", channels),
            LayerSpec::MaxPool2d {
                window,
                stride,
                padding,
            } => {
                positive("window", window)?;
                positive("stride", stride)?;
                if 2 * padding > window {
                    return Err(Error::invalid("pool padding exceeds half the window"));
                }
                Ok(())
            }
            LayerSpec::Dense { inputs, units } => {
                positive("inputs", inputs)?;
                positive("units", units)
            }
            LayerSpec::Residual {
                in_channels,
                out_channels,
                stride,
                shortcut,
            } => {
                positive("in_channels", in_channels)?;
                positive("out_channels", out_channels)?;
                positive("stride", stride)?;
                resolve_shortcut(in_channels, out_channels, stride, shortcut).map(|_| ())
            }
            LayerSpec::GlobalAvgPool
            | LayerSpec::Relu
            | LayerSpec::Sigmoid
            | LayerSpec::Softmax => Ok(()),
        }
    }
}

/// An instantiated layer. Parameters live in a [`ParamStore`]; batch-norm
/// running statistics live on the layer itself.
#[derive(Clone, Debug)]
pub enum Layer<T: Real = f32> {
    Conv2d(Conv2d),
    BatchNorm2d(BatchNorm2d<T>),
    MaxPool2d {
        window: usize,
        stride: usize,
        padding: usize,
    },
    GlobalAvgPool,
    Dense(Dense),
    Relu,
    Sigmoid,
    /// Softmax over the class axis of an `(N, C)` input.
    Softmax,
    Residual(Box<ResidualBlock<T>>),
}

impl<T: Real> Layer<T> {
    pub fn build(
        spec: &LayerSpec,
        name: &str,
        trainable: bool,
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        spec.validate()?;
        Ok(match *spec {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                bias,
            } => Layer::Conv2d(Conv2d::new(
                name,
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                bias,
                trainable,
                store,
                rng,
            )?),
            LayerSpec::BatchNorm2d { channels } => {
                Layer::BatchNorm2d(BatchNorm2d::new(name, channels, trainable, store)?)
            }
            LayerSpec::MaxPool2d {
                window,
                stride,
                padding,
            } => Layer::MaxPool2d {
                window,
                stride,
                padding,
            },
            LayerSpec::GlobalAvgPool => Layer::GlobalAvgPool,
            LayerSpec::Dense { inputs, units } => {
                Layer::Dense(Dense::new(name, inputs, units, trainable, store, rng)?)
            }
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Sigmoid => Layer::Sigmoid,
            LayerSpec::Softmax => Layer::Softmax,
            LayerSpec::Residual {
                in_channels,
                out_channels,
                stride,
                shortcut,
            } => Layer::Residual(Box::new(ResidualBlock::new(
                name,
                in_channels,
                out_channels,
                stride,
                shortcut,
                trainable,
                store,
                rng,
            )?)),
        })
    }

    pub fn forward(
        &mut self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
        mode: Mode,
    ) -> Result<Var> {
        match self {
            Layer::Conv2d(c) => c.forward(g, store, x),
            Layer::BatchNorm2d(bn) => bn.forward(g, store, x, mode),
            Layer::MaxPool2d {
                window,
                stride,
                padding,
            } => g.max_pool2d(x, *window, *stride, *padding),
            Layer::GlobalAvgPool => g.global_avg_pool(x),
            Layer::Dense(d) => d.forward(g, store, x),
            Layer::Relu => g.relu(x),
            Layer::Sigmoid => g.sigmoid(x),
            Layer::Softmax => g.softmax(x, 1),
            Layer::Residual(block) => block.forward(g, store, x, mode),
        }
    }

    /// Batch-norm layers contained in this layer, in construction order.
    pub fn batch_norms(&self) -> Vec<&BatchNorm2d<T>> {
        match self {
            Layer::BatchNorm2d(bn) => vec![bn],
            Layer::Residual(block) => block.batch_norms().to_vec(),
            _ => Vec::new(),
        }
    }

    pub fn batch_norms_mut(&mut self) -> Vec<&mut BatchNorm2d<T>> {
        match self {
            Layer::BatchNorm2d(bn) => vec![bn],
            Layer::Residual(block) => block.batch_norms_mut().into_iter().collect(),
            _ => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests;
