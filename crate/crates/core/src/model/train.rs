use log::debug;
use serde::Serialize;

use super::spec::HeadKind;
use super::Model;
use crate::autodiff::Graph;
use crate::data::{
    AugmentationConfig, Batch, Batches, DatasetManifest, SampleCache, Split, DEFAULT_BATCH_SIZE,
};
use crate::error::{Error, Result};
use crate::metrics::evaluate_split;
use crate::nn::Mode;
use crate::optim::{Adam, AdamConfig};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// `None` trains on the decoded samples as they are.
    pub augmentation: Option<AugmentationConfig>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: 1e-3,
            augmentation: Some(AugmentationConfig::default()),
            seed: 0,
        }
    }
}

/// Loss and accuracy after one epoch, both measured by an inference pass
/// over the un-augmented split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

fn mix(seed: u64, stream: u64, epoch: usize) -> u64 {
    // splitmix64 finaliser over the combined inputs
    let mut z = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (epoch as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn step(model: &mut Model<f32>, adam: &mut Adam<f32>, batch: &Batch) -> Result<f64> {
    let classes = model.spec.classes.len();
    let mut g = Graph::new();
    let x = g.input(batch.inputs.clone(), false)?;
    let logits = model
        .network
        .forward(&mut g, &model.params, x, Mode::Train)?;
    let loss = match model.spec.head {
        HeadKind::Softmax => {
            let probs = g.softmax(logits, 1)?;
            g.cross_entropy(probs, batch.one_hot(classes))?
        }
        HeadKind::Sigmoid => {
            let p = g.sigmoid(logits)?;
            let target = batch
                .labels
                .iter()
                .map(|&l| if l == 0 { 1.0 } else { 0.0 })
                .collect();
            g.binary_cross_entropy(p, Tensor::new(vec![batch.len(), 1], target)?)?
        }
    };
    let value = g.value(loss)[0] as f64;
    if !value.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    g.backward_into(loss, &mut model.params)?;
    adam.step(&mut model.params)?;
    Ok(value)
}

/// Adam over shuffled (and optionally augmented) training batches. Frozen
/// parameters and frozen batch-norm statistics are never written.
/// `on_epoch` sees each epoch's metrics as soon as they are measured.
pub fn train_classifier(
    model: &mut Model<f32>,
    manifest: &DatasetManifest,
    cache: &SampleCache,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    if model.spec.classes != manifest.classes {
        return Err(Error::Dataset(format!(
            "{} expects classes {:?}, dataset has {:?}",
            model.spec.name(),
            model.spec.classes,
            manifest.classes
        )));
    }
    for split in [Split::Train, Split::Test] {
        if manifest.count(split) == 0 {
            return Err(Error::Dataset(format!("{split} split is empty")));
        }
    }
    if cache.size() != model.input_size() {
        return Err(Error::Dataset(format!(
            "samples are {0}x{0}, model expects {1}x{1}",
            cache.size(),
            model.input_size()
        )));
    }
    if let Some(aug) = &config.augmentation {
        aug.validate()?;
    }
    let mut adam = Adam::new(AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    })?;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let last_good = epoch.checked_sub(1).filter(|&e| e > 0);
        let diverged = |e: Error| match e {
            Error::NonFinite(_) => Error::Diverged { epoch, last_good },
            other => other,
        };
        let mut batches = Batches::new(
            cache,
            manifest,
            Split::Train,
            config.batch_size,
            Some(mix(config.seed, 1, epoch)),
        )?;
        if let Some(aug) = &config.augmentation {
            batches = batches.augmented(aug, mix(config.seed, 2, epoch));
        }
        for batch in batches {
            let loss = step(model, &mut adam, &batch).map_err(diverged)?;
            debug!("epoch {epoch} batch loss {loss:.6}");
        }
        let (train_loss, train_cm) =
            evaluate_split(model, manifest, cache, Split::Train).map_err(diverged)?;
        let (test_loss, test_cm) =
            evaluate_split(model, manifest, cache, Split::Test).map_err(diverged)?;
        let metrics = EpochMetrics {
            epoch,
            train_loss,
            train_acc: crate::metrics::accuracy(&train_cm)?,
            test_loss,
            test_acc: crate::metrics::accuracy(&test_cm)?,
        };
        on_epoch(&metrics);
        history.push(metrics);
    }
    Ok(history)
}
