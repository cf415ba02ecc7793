use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Mode;
use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::param::{ParamId, ParamStore};
use crate::tensor::{Real, Tensor};

/// Batch-norm epsilon.
pub const BN_EPSILON: f64 = 1e-5;
/// Decay applied to running statistics on every training-mode update.
pub const BN_MOMENTUM: f64 = 0.9;

/// Gaussian with variance `2 / fan_in`.
pub(crate) fn he_normal<T: Real>(
    shape: Vec<usize>,
    fan_in: usize,
    rng: &mut impl Rng,
) -> Result<Tensor<T>> {
    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive standard deviation");
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(dist.sample(rng))).collect();
    Tensor::new(shape, data)
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        trainable: bool,
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let fan_in = in_channels * kernel * kernel;
        let w = he_normal(vec![out_channels, in_channels, kernel, kernel], fan_in, rng)?;
        let weight = store.add(format!("{name}.weight"), w, trainable)?;
        let bias = if bias {
            Some(store.add(
                format!("{name}.bias"),
                Tensor::zeros(vec![out_channels])?,
                trainable,
            )?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight)?;
        let b = self.bias.map(|b| g.param(store, b)).transpose()?;
        g.conv2d(x, w, b, self.stride, self.padding)
    }
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub units: usize,
}

impl Dense {
    pub fn new<T: Real>(
        name: &str,
        inputs: usize,
        units: usize,
        trainable: bool,
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = he_normal(vec![inputs, units], inputs, rng)?;
        let weight = store.add(format!("{name}.weight"), w, trainable)?;
        let bias = store.add(
            format!("{name}.bias"),
            Tensor::zeros(vec![units])?,
            trainable,
        )?;
        Ok(Self {
            weight,
            bias,
            inputs,
            units,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight)?;
        let b = g.param(store, self.bias)?;
        g.dense(x, w, b)
    }
}

/// Batch normalisation over NCHW channels with learned scale/shift and
/// running statistics for inference.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm2d<T: Real = f32> {
    pub name: String,
    pub scale: ParamId,
    pub shift: ParamId,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub epsilon: T,
    pub momentum: T,
    /// Frozen layers always normalise with running statistics.
    pub frozen: bool,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(
        name: &str,
        channels: usize,
        trainable: bool,
        store: &mut ParamStore<T>,
    ) -> Result<Self> {
        let scale = store.add(
            format!("{name}.scale"),
            Tensor::ones(vec![channels])?,
            trainable,
        )?;
        let shift = store.add(
            format!("{name}.shift"),
            Tensor::zeros(vec![channels])?,
            trainable,
        )?;
        Ok(Self {
            name: name.to_string(),
            scale,
            shift,
            running_mean: Tensor::zeros(vec![channels])?,
            running_var: Tensor::ones(vec![channels])?,
            epsilon: T::from_f64(BN_EPSILON),
            momentum: T::from_f64(BN_MOMENTUM),
            frozen: !trainable,
        })
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    pub fn forward(
        &mut self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
        mode: Mode,
    ) -> Result<Var> {
        let scale = g.param(store, self.scale)?;
        let shift = g.param(store, self.shift)?;
        if mode == Mode::Train && !self.frozen {
            let (y, stats) = g.batch_norm_train(x, scale, shift, self.epsilon)?;
            let keep = self.momentum;
            let blend = T::ONE - keep;
            for (r, &m) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
                *r = keep * *r + blend * m;
            }
            for (r, &v) in self.running_var.data_mut().iter_mut().zip(&stats.var) {
                *r = (keep * *r + blend * v).max(T::ZERO);
            }
            Ok(y)
        } else {
            g.batch_norm_infer(
                x,
                scale,
                shift,
                self.running_mean.data(),
                self.running_var.data(),
                self.epsilon,
            )
        }
    }

    pub fn buffer_names(&self) -> [String; 2] {
        [
            format!("{}.running_mean", self.name),
            format!("{}.running_var", self.name),
        ]
    }
}
