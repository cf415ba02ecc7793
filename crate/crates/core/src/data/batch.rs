use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::augment::{augment, AugmentationConfig};
use super::image::{decode_resize, ImageSample};
use super::manifest::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_BATCH_SIZE: usize = 32;

/// Decoded, resized and rescaled samples, indexed like the manifest.
#[derive(Clone, Debug)]
pub struct SampleCache {
    size: usize,
    samples: Vec<ImageSample>,
}

impl SampleCache {
    pub fn load(manifest: &DatasetManifest, size: usize, rescale: f32) -> Result<Self> {
        let samples = manifest
            .samples
            .iter()
            .map(|e| decode_resize(&e.path, size, rescale, e.class_index))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { size, samples })
    }

    pub fn from_samples(samples: Vec<ImageSample>) -> Result<Self> {
        let size = samples.first().map_or(0, |s| s.height());
        if let Some(s) = samples
            .iter()
            .find(|s| s.height() != size || s.width() != size)
        {
            return Err(Error::Dataset(format!(
                "{} is {}x{}, expected {size}x{size}",
                s.path.display(),
                s.width(),
                s.height()
            )));
        }
        Ok(Self { size, samples })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, index: usize) -> &ImageSample {
        &self.samples[index]
    }
}

/// Chunks `indices` into batches, optionally after a seeded shuffle. The
/// final batch may be short.
pub fn batch_plan(
    indices: &[usize],
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    if indices.is_empty() {
        return Err(Error::Dataset("split is empty".into()));
    }
    let mut order = indices.to_vec();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Channels-first inputs `(N, 3, H, W)` with their class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Tensor<f32>,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a ImageSample>) -> Result<Self> {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut dims = None;
        for s in samples {
            let d = (s.height(), s.width());
            if *dims.get_or_insert(d) != d {
                return Err(Error::invalid("samples in a batch must share one size"));
            }
            data.extend(s.to_chw());
            labels.push(s.label);
        }
        let (h, w) = dims.ok_or_else(|| Error::invalid("empty batch"))?;
        let inputs = Tensor::new(vec![labels.len(), 3, h, w], data)?;
        let indices = (0..labels.len()).collect();
        Ok(Self {
            inputs,
            labels,
            indices,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `(N, classes)` one-hot label matrix.
    pub fn one_hot(&self, classes: usize) -> Tensor<f32> {
        let mut data = vec![0.0; self.labels.len() * classes];
        for (row, &label) in self.labels.iter().enumerate() {
            data[row * classes + label] = 1.0;
        }
        Tensor::new(vec![self.labels.len(), classes], data).expect("non-empty batch")
    }
}

/// One epoch over a split.
pub struct Batches<'a> {
    cache: &'a SampleCache,
    plan: std::vec::IntoIter<Vec<usize>>,
    augmentation: Option<(&'a AugmentationConfig, ChaCha8Rng)>,
}

impl<'a> Batches<'a> {
    pub fn new(
        cache: &'a SampleCache,
        manifest: &DatasetManifest,
        split: Split,
        batch_size: usize,
        shuffle_seed: Option<u64>,
    ) -> Result<Self> {
        if cache.len() != manifest.len() {
            return Err(Error::Dataset(
                "sample cache does not match manifest".into(),
            ));
        }
        let plan = batch_plan(&manifest.indices(split), batch_size, shuffle_seed)?;
        Ok(Self {
            cache,
            plan: plan.into_iter(),
            augmentation: None,
        })
    }

    /// Augments every emitted sample, drawing from a generator seeded with
    /// `seed`.
    pub fn augmented(mut self, config: &'a AugmentationConfig, seed: u64) -> Self {
        self.augmentation = Some((config, ChaCha8Rng::seed_from_u64(seed)));
        self
    }
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        let indices = self.plan.next()?;
        let samples: Vec<ImageSample> = match &mut self.augmentation {
            Some((config, rng)) => indices
                .iter()
                .map(|&i| augment(self.cache.get(i), config, rng))
                .collect(),
            None => indices.iter().map(|&i| self.cache.get(i).clone()).collect(),
        };
        let mut batch = Batch::from_samples(&samples).expect("cache holds uniform samples");
        batch.indices = indices;
        Some(batch)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.plan.size_hint()
    }
}

impl ExactSizeIterator for Batches<'_> {}
