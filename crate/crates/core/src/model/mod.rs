//! The four WeatherNet classifiers: a residual backbone (frozen by default)
//! feeding a small trainable head, plus scene fusion, training and the
//! on-disk model container.

mod container;
mod scene;
mod spec;
mod train;

pub use container::{
    load_model, load_model_as, read_container, save_model, to_container, write_container,
    Container, TensorRole, FORMAT_VERSION, MAGIC,
};
pub use scene::{
    describe, fuse, parse_description, predict_scene, Confidences, Precipitation, SceneLabel,
    TimeOfDay,
};
pub use spec::{
    BackboneConfig, ClassifierSpec, HeadKind, PlannedLayer, PoolConfig, StageConfig, StemConfig,
    Task, DESK_INPUT_SIZE, FULL_INPUT_SIZE, HEAD_UNITS,
};
pub use train::{train_classifier, EpochMetrics, TrainConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::autodiff::{Graph, Var};
use crate::data::ImageSample;
use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Layer, Mode};
use crate::param::ParamStore;
use crate::tensor::{Real, Tensor};

/// Instantiated layers in execution order.
#[derive(Clone, Debug)]
pub struct Network<T: Real = f32> {
    pub layers: Vec<(String, Layer<T>)>,
}

impl<T: Real> Network<T> {
    /// Image batch `(N, 3, H, W)` to output logits `(N, units)`.
    pub fn forward(
        &mut self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
        mode: Mode,
    ) -> Result<Var> {
        self.layers
            .iter_mut()
            .try_fold(x, |h, (_, layer)| layer.forward(g, store, h, mode))
    }

    pub fn batch_norms(&self) -> impl Iterator<Item = &BatchNorm2d<T>> {
        self.layers.iter().flat_map(|(_, l)| l.batch_norms())
    }

    pub fn batch_norms_mut(&mut self) -> impl Iterator<Item = &mut BatchNorm2d<T>> {
        self.layers
            .iter_mut()
            .flat_map(|(_, l)| l.batch_norms_mut())
    }
}

/// Decision of one head.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeadPrediction {
    pub class_index: usize,
    /// One probability per class.
    pub probabilities: Vec<f64>,
}

/// Class decision from a probability vector: class 0 when its probability
/// is at least 0.5 for binary heads, otherwise the first maximum.
pub fn decide(head: HeadKind, probabilities: &[f64]) -> usize {
    match head {
        HeadKind::Sigmoid => usize::from(probabilities[0] < 0.5),
        HeadKind::Softmax => {
            let mut best = 0;
            for (i, &p) in probabilities.iter().enumerate() {
                if p > probabilities[best] {
                    best = i;
                }
            }
            best
        }
    }
}

#[derive(Clone, Debug)]
pub struct Model<T: Real = f32> {
    pub spec: ClassifierSpec,
    pub network: Network<T>,
    pub params: ParamStore<T>,
}

impl<T: Real> Model<T> {
    /// Deterministic He initialisation from `seed`.
    pub fn build(spec: ClassifierSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let layers = spec
            .plan()
            .into_iter()
            .map(|p| {
                Ok((
                    p.name.clone(),
                    Layer::build(&p.spec, &p.name, p.trainable, &mut params, &mut rng)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec,
            network: Network { layers },
            params,
        })
    }

    pub fn task(&self) -> Task {
        self.spec.task
    }

    pub fn input_size(&self) -> usize {
        self.spec.input_size()
    }

    /// Overwrites parameters and batch-norm statistics by name. Every name
    /// must exist in the model with the same shape.
    pub fn import_weights<'a>(
        &mut self,
        tensors: impl IntoIterator<Item = (&'a str, &'a Tensor<T>)>,
    ) -> Result<()> {
        for (name, value) in tensors {
            let slot = self
                .tensor_mut(name)
                .ok_or_else(|| Error::MissingTensor(name.to_string()))?;
            if slot.shape() != value.shape() {
                return Err(Error::TensorShape {
                    name: name.to_string(),
                    expected: slot.shape().to_vec(),
                    found: value.shape().to_vec(),
                });
            }
            if !value.all_finite() {
                return Err(Error::NonFinite(format!("imported tensor `{name}`")));
            }
            *slot = value.clone();
        }
        Ok(())
    }

    fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        if let Some(id) = self.params.id(name) {
            return Some(&mut self.params.get_mut(id).value);
        }
        self.network.batch_norms_mut().find_map(|bn| {
            let [mean, var] = bn.buffer_names();
            if name == mean {
                Some(&mut bn.running_mean)
            } else if name == var {
                Some(&mut bn.running_var)
            } else {
                None
            }
        })
    }

    /// Every named tensor with its role, parameters first then batch-norm
    /// statistics.
    pub fn named_tensors(&self) -> Vec<(String, TensorRole, &Tensor<T>)> {
        let mut out: Vec<_> = self
            .params
            .iter()
            .map(|(_, p)| {
                let role = if p.trainable {
                    TensorRole::Trainable
                } else {
                    TensorRole::Frozen
                };
                (p.name.clone(), role, &p.value)
            })
            .collect();
        for bn in self.network.batch_norms() {
            let [mean, var] = bn.buffer_names();
            out.push((mean, TensorRole::Buffer, &bn.running_mean));
            out.push((var, TensorRole::Buffer, &bn.running_var));
        }
        out
    }

    fn check_input(&self, inputs: &Tensor<T>) -> Result<()> {
        let s = self.input_size();
        match inputs.shape() {
            [_, 3, h, w] if *h == s && *w == s => Ok(()),
            other => Err(Error::InvalidShape {
                shape: other.to_vec(),
                reason: format!("{} expects (N, 3, {s}, {s}) input", self.spec.name()),
            }),
        }
    }

    /// Output logits `(N, units)`.
    pub fn logits(&mut self, inputs: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.check_input(inputs)?;
        let mut g = Graph::new();
        let x = g.input(inputs.clone(), false)?;
        let y = self.network.forward(&mut g, &self.params, x, mode)?;
        Ok(g.value(y).clone())
    }

    /// Per-class probabilities, one row per input. Binary heads give
    /// `[p, 1 - p]` with `p` the sigmoid output.
    pub fn probabilities(&mut self, inputs: &Tensor<T>) -> Result<Vec<Vec<f64>>> {
        let logits = self.logits(inputs, Mode::Infer)?;
        Ok(logits_to_probabilities(self.spec.head, &logits))
    }

    pub fn predict_batch(&mut self, inputs: &Tensor<T>) -> Result<Vec<HeadPrediction>> {
        let head = self.spec.head;
        Ok(self
            .probabilities(inputs)?
            .into_iter()
            .map(|probabilities| HeadPrediction {
                class_index: decide(head, &probabilities),
                probabilities,
            })
            .collect())
    }

    /// SHA-256 over names and little-endian bytes of every frozen parameter.
    pub fn frozen_checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for (_, p) in self.params.iter().filter(|(_, p)| !p.trainable) {
            hasher.update(p.name.as_bytes());
            for v in p.value.data() {
                hasher.update((v.to_f64() as f32).to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Copy in another precision, batch-norm statistics included.
    pub fn cast<U: Real>(&self) -> Model<U> {
        let layers = self
            .network
            .layers
            .iter()
            .map(|(name, layer)| (name.clone(), cast_layer(layer)))
            .collect();
        Model {
            spec: self.spec.clone(),
            network: Network { layers },
            params: self.params.cast(),
        }
    }
}

impl Model<f32> {
    /// Runs one preprocessed image through the head.
    pub fn predict_head(&mut self, sample: &ImageSample) -> Result<HeadPrediction> {
        let s = self.input_size();
        if sample.height() != s || sample.width() != s {
            return Err(Error::InvalidShape {
                shape: sample.pixels.shape().to_vec(),
                reason: format!("{} expects {s}x{s} images", self.spec.name()),
            });
        }
        let inputs = Tensor::new(vec![1, 3, s, s], sample.to_chw())?;
        Ok(self.predict_batch(&inputs)?.remove(0))
    }
}

pub(crate) fn logits_to_probabilities<T: Real>(
    head: HeadKind,
    logits: &Tensor<T>,
) -> Vec<Vec<f64>> {
    let units = logits.shape()[1];
    logits
        .data()
        .chunks(units)
        .map(|row| match head {
            HeadKind::Sigmoid => {
                let z = row[0].to_f64();
                let p = if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    z.exp() / (1.0 + z.exp())
                };
                vec![p, 1.0 - p]
            }
            HeadKind::Softmax => {
                let max = row
                    .iter()
                    .map(|v| v.to_f64())
                    .fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = row.iter().map(|v| (v.to_f64() - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                exps.into_iter().map(|e| e / total).collect()
            }
        })
        .collect()
}

fn cast_bn<T: Real, U: Real>(bn: &BatchNorm2d<T>) -> BatchNorm2d<U> {
    BatchNorm2d {
        name: bn.name.clone(),
        scale: bn.scale,
        shift: bn.shift,
        running_mean: bn.running_mean.cast(),
        running_var: bn.running_var.cast(),
        epsilon: U::from_f64(bn.epsilon.to_f64()),
        momentum: U::from_f64(bn.momentum.to_f64()),
        frozen: bn.frozen,
    }
}

fn cast_layer<T: Real, U: Real>(layer: &Layer<T>) -> Layer<U> {
    match layer {
        Layer::Conv2d(c) => Layer::Conv2d(c.clone()),
        Layer::BatchNorm2d(bn) => Layer::BatchNorm2d(cast_bn(bn)),
        Layer::MaxPool2d {
            window,
            stride,
            padding,
        } => Layer::MaxPool2d {
            window: *window,
            stride: *stride,
            padding: *padding,
        },
        Layer::GlobalAvgPool => Layer::GlobalAvgPool,
        Layer::Dense(d) => Layer::Dense(d.clone()),
        Layer::Relu => Layer::Relu,
        Layer::Sigmoid => Layer::Sigmoid,
        Layer::Softmax => Layer::Softmax,
        Layer::Residual(b) => Layer::Residual(Box::new(crate::nn::ResidualBlock {
            conv1: b.conv1.clone(),
            bn1: cast_bn(&b.bn1),
            conv2: b.conv2.clone(),
            bn2: cast_bn(&b.bn2),
            projection: b.projection.clone(),
        })),
    }
}
