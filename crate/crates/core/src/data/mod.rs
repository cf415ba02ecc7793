//! Dataset layout, splitting, decoding, augmentation and batching.

pub mod augment;
pub mod batch;
pub mod fixtures;
pub mod image;
pub mod manifest;

pub use augment::{augment, AugmentParams, AugmentationConfig};
pub use batch::{batch_plan, Batch, Batches, SampleCache, DEFAULT_BATCH_SIZE};
pub use fixtures::{write_all_fixtures, write_task_fixtures, FixtureConfig};
pub use image::{decode_file, decode_resize, write_ppm, ImageSample, RgbImage, DEFAULT_RESCALE};
pub use manifest::{
    load_dataset, stratified_train_counts, DatasetManifest, ManifestEntry, Split,
    DEFAULT_TRAIN_FRACTION,
};
