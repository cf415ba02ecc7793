use rand::Rng;

use super::layers::{BatchNorm2d, Conv2d};
use super::{Mode, Shortcut};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::param::ParamStore;
use crate::tensor::{Real, Tensor};

/// Basic residual block: `relu(F(x) + shortcut(x))` with
/// `F = conv3x3 → bn → relu → conv3x3 → bn`. The shortcut is the identity
/// when input and output shapes agree and a strided 1×1 convolution otherwise.
#[derive(Clone, Debug)]
pub struct ResidualBlock<T: Real = f32> {
    pub conv1: Conv2d,
    pub bn1: BatchNorm2d<T>,
    pub conv2: Conv2d,
    pub bn2: BatchNorm2d<T>,
    pub projection: Option<Conv2d>,
}

/// Resolves the shortcut for a block, rejecting an identity shortcut that
/// cannot match the residual branch's output shape.
pub fn resolve_shortcut(
    in_channels: usize,
    out_channels: usize,
    stride: usize,
    shortcut: Shortcut,
) -> Result<bool> {
    let shapes_match = in_channels == out_channels && stride == 1;
    match shortcut {
        Shortcut::Auto => Ok(!shapes_match),
        Shortcut::Projection => Ok(true),
        Shortcut::Identity if shapes_match => Ok(false),
        Shortcut::Identity => Err(Error::invalid(format!(
            "identity shortcut needs equal channels and stride 1, got {in_channels}->{out_channels} stride {stride}"
        ))),
    }
}

impl<T: Real> ResidualBlock<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        shortcut: Shortcut,
        trainable: bool,
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let project = resolve_shortcut(in_channels, out_channels, stride, shortcut)?;
        let conv1 = Conv2d::new(
            &format!("{name}.conv1"),
            in_channels,
            out_channels,
            3,
            stride,
            1,
            false,
            trainable,
            store,
            rng,
        )?;
        let bn1 = BatchNorm2d::new(&format!("{name}.bn1"), out_channels, trainable, store)?;
        let conv2 = Conv2d::new(
            &format!("{name}.conv2"),
            out_channels,
            out_channels,
            3,
            1,
            1,
            false,
            trainable,
            store,
            rng,
        )?;
        let bn2 = BatchNorm2d::new(&format!("{name}.bn2"), out_channels, trainable, store)?;
        let projection = if project {
            Some(Conv2d::new(
                &format!("{name}.shortcut"),
                in_channels,
                out_channels,
                1,
                stride,
                0,
                true,
                trainable,
                store,
                rng,
            )?)
        } else {
            None
        };
        Ok(Self {
            conv1,
            bn1,
            conv2,
            bn2,
            projection,
        })
    }

    pub fn forward(
        &mut self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
        mode: Mode,
    ) -> Result<Var> {
        let h = self.conv1.forward(g, store, x)?;
        let h = self.bn1.forward(g, store, h, mode)?;
        let h = g.relu(h)?;
        let h = self.conv2.forward(g, store, h)?;
        let h = self.bn2.forward(g, store, h, mode)?;
        let skip = match &self.projection {
            Some(p) => p.forward(g, store, x)?,
            None => x,
        };
        let sum = g.add(h, skip)?;
        g.relu(sum)
    }

    pub fn batch_norms(&self) -> [&BatchNorm2d<T>; 2] {
        [&self.bn1, &self.bn2]
    }

    pub fn batch_norms_mut(&mut self) -> [&mut BatchNorm2d<T>; 2] {
        [&mut self.bn1, &mut self.bn2]
    }

    /// Zeroes both residual-branch convolutions.
    pub fn zero_residual_branch(&self, store: &mut ParamStore<T>) -> Result<()> {
        for conv in [&self.conv1, &self.conv2] {
            let shape = store.get(conv.weight).value.shape().to_vec();
            store.set_value(conv.weight, Tensor::zeros(shape)?)?;
        }
        Ok(())
    }
}
