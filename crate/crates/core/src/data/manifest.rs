use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::decode_file;
use crate::error::{Error, Result};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Dataset(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub class_index: usize,
    pub split: Option<Split>,
}

/// Class-labelled sample index for one classifier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub task_name: String,
    pub classes: Vec<String>,
    pub samples: Vec<ManifestEntry>,
    /// Seed of the last [`DatasetManifest::split`], if any.
    pub seed: Option<u64>,
}

fn is_hidden(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with('.'))
}

/// Scans `root/<class>/` for every declared class. Files that fail to
/// decode are skipped with a warning; unknown subdirectories are ignored
/// with a warning.
pub fn load_dataset(
    root: &Path,
    task_name: &str,
    classes: &[impl AsRef<str>],
) -> Result<DatasetManifest> {
    if classes.is_empty() {
        return Err(Error::Dataset("no classes declared".into()));
    }
    if !root.is_dir() {
        return Err(Error::Dataset(format!(
            "dataset root {} is not a directory",
            root.display()
        )));
    }
    let classes: Vec<String> = classes.iter().map(|c| c.as_ref().to_string()).collect();
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.file_type()?.is_dir() && !classes.contains(&name) && !name.starts_with('.') {
            warn!(
                "ignoring unknown class directory {}",
                entry.path().display()
            );
        }
    }
    let mut samples = Vec::new();
    for (class_index, class) in classes.iter().enumerate() {
        let dir = root.join(class);
        if !dir.is_dir() {
            return Err(Error::Dataset(format!(
                "missing class directory `{class}` under {}",
                root.display()
            )));
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.is_file() && !is_hidden(p));
        files.sort();
        let before = samples.len();
        for path in files {
            match decode_file(&path) {
                Ok(_) => samples.push(ManifestEntry {
                    path,
                    class_index,
                    split: None,
                }),
                Err(e) => warn!("skipping {}: {e}", path.display()),
            }
        }
        if samples.len() == before {
            return Err(Error::Dataset(format!(
                "class `{class}` has no decodable images"
            )));
        }
    }
    Ok(DatasetManifest {
        task_name: task_name.to_string(),
        classes,
        samples,
        seed: None,
    })
}

/// Per-class training counts: `floor(f·n)` for each class, then the
/// shortfall against `floor(f·N)` overall handed out one at a time in order
/// of largest fractional remainder (ties to the lower class index). Every
/// class keeps at least one sample on each side.
pub fn stratified_train_counts(class_counts: &[usize], train_fraction: f64) -> Result<Vec<usize>> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Dataset(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    if let Some(i) = class_counts.iter().position(|&c| c < 2) {
        return Err(Error::Dataset(format!(
            "class {i} has {} sample(s); at least 2 are needed to stratify",
            class_counts[i]
        )));
    }
    // nudge so that products like 0.8·6105 land on their exact integer
    let floor = |q: f64| (q + 1e-9).floor() as usize;
    let quotas: Vec<f64> = class_counts
        .iter()
        .map(|&c| c as f64 * train_fraction)
        .collect();
    let mut counts: Vec<usize> = quotas
        .iter()
        .zip(class_counts)
        .map(|(&q, &c)| floor(q).clamp(1, c - 1))
        .collect();
    let total: usize = class_counts.iter().sum();
    let target = floor(total as f64 * train_fraction);
    let mut order: Vec<usize> = (0..class_counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut assigned: usize = counts.iter().sum();
    for &k in order.iter().cycle().take(order.len()) {
        if assigned >= target {
            break;
        }
        if counts[k] < class_counts[k] - 1 {
            counts[k] += 1;
            assigned += 1;
        }
    }
    Ok(counts)
}

impl DatasetManifest {
    /// Manifest from explicit entries, for callers that do not scan a
    /// directory.
    pub fn from_entries(
        task_name: &str,
        classes: Vec<String>,
        entries: Vec<(PathBuf, usize)>,
    ) -> Result<Self> {
        if let Some((p, c)) = entries.iter().find(|(_, c)| *c >= classes.len()) {
            return Err(Error::Dataset(format!(
                "{} has class index {c} out of range",
                p.display()
            )));
        }
        Ok(Self {
            task_name: task_name.to_string(),
            classes,
            samples: entries
                .into_iter()
                .map(|(path, class_index)| ManifestEntry {
                    path,
                    class_index,
                    split: None,
                })
                .collect(),
            seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for s in &self.samples {
            counts[s.class_index] += 1;
        }
        counts
    }

    /// Indices of samples assigned to `split`, in manifest order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| self.samples[i].split == Some(split))
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.samples
            .iter()
            .filter(|s| s.split == Some(split))
            .count()
    }

    /// Stratified train/test assignment. Within each class the paths are
    /// sorted and shuffled by a generator seeded from `(seed, class index)`,
    /// so the result depends only on the seed and the set of paths.
    pub fn split(mut self, train_fraction: f64, seed: u64) -> Result<Self> {
        let counts = self.class_counts();
        let train_counts = stratified_train_counts(&counts, train_fraction)?;
        for (class, &n_train) in train_counts.iter().enumerate() {
            let mut members: Vec<usize> = (0..self.samples.len())
                .filter(|&i| self.samples[i].class_index == class)
                .collect();
            members.sort_by(|&a, &b| self.samples[a].path.cmp(&self.samples[b].path));
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed ^ (class as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            members.shuffle(&mut rng);
            for (rank, &i) in members.iter().enumerate() {
                self.samples[i].split = Some(if rank < n_train {
                    Split::Train
                } else {
                    Split::Test
                });
            }
        }
        self.seed = Some(seed);
        Ok(self)
    }

    /// Line-delimited `path<TAB>class_index<TAB>split` records.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            let split = s
                .split
                .map_or_else(|| "none".to_string(), |s| s.to_string());
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                s.path.display(),
                s.class_index,
                split
            ));
        }
        out
    }

    pub fn from_tsv(task_name: &str, classes: Vec<String>, text: &str) -> Result<Self> {
        let mut samples = Vec::new();
        for (line_no, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let bad = |what: &str| Error::Dataset(format!("manifest line {}: {what}", line_no + 1));
            let mut fields = line.split('\t');
            let (Some(path), Some(class), Some(split), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(bad("expected 3 tab-separated fields"));
            };
            let class_index: usize = class
                .parse()
                .map_err(|_| bad("class index is not an integer"))?;
            if class_index >= classes.len() {
                return Err(bad("class index out of range"));
            }
            let split = match split {
                "none" => None,
                s => Some(s.parse()?),
            };
            samples.push(ManifestEntry {
                path: PathBuf::from(path),
                class_index,
                split,
            });
        }
        Ok(Self {
            task_name: task_name.to_string(),
            classes,
            samples,
            seed: None,
        })
    }
}
