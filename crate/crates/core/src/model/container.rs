//! Little-endian model container:
//!
//! ```text
//! "WNET" | u32 version | str name | u32 n_classes, str class... |
//! u32 n_tensors | { str name, u8 role, u32 rank, u32 extent..., f32 data... }... |
//! u32 crc32 of everything before it
//! ```
//!
//! Strings are a u32 byte length followed by UTF-8. Architecture settings
//! travel as `config.*` tensors so the file alone is enough to rebuild the
//! model.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use super::spec::{BackboneConfig, ClassifierSpec, PoolConfig, StageConfig, StemConfig, Task};
use super::Model;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"WNET";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorRole {
    Trainable,
    Frozen,
    /// Batch-norm running statistics.
    Buffer,
    /// Architecture settings.
    Config,
}

impl TensorRole {
    fn tag(self) -> u8 {
        match self {
            TensorRole::Trainable => 0,
            TensorRole::Frozen => 1,
            TensorRole::Buffer => 2,
            TensorRole::Config => 3,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => TensorRole::Trainable,
            1 => TensorRole::Frozen,
            2 => TensorRole::Buffer,
            3 => TensorRole::Config,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub name: String,
    pub classes: Vec<String>,
    pub tensors: Vec<(String, TensorRole, Tensor<f32>)>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

pub fn write_container(c: &Container) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_str(&mut out, &c.name);
    put_u32(&mut out, c.classes.len() as u32);
    for class in &c.classes {
        put_str(&mut out, class);
    }
    put_u32(&mut out, c.tensors.len() as u32);
    for (name, role, t) in &c.tensors {
        put_str(&mut out, name);
        out.push(role.tag());
        put_u32(&mut out, t.rank() as u32);
        for &d in t.shape() {
            put_u32(&mut out, d as u32);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos as u64,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let start = self.pos;
        let n = self.u32(what)? as usize;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Format {
            offset: start as u64,
            reason: format!("{what} is not valid UTF-8"),
        })
    }
}

pub fn read_container(bytes: &[u8]) -> Result<Container> {
    let header = Reader { bytes, pos: 0 };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(header.fail("bad magic, not a model file"));
    }
    if bytes.len() < 12 {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            reason: "truncated header".into(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Format {
            offset: 4,
            reason: format!("unsupported format version {version}"),
        });
    }
    let body_end = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().expect("4 bytes"));
    if crc32fast::hash(&bytes[..body_end]) != stored {
        return Err(Error::Format {
            offset: body_end as u64,
            reason: "checksum mismatch (truncated or corrupted file)".into(),
        });
    }

    let mut r = Reader {
        bytes: &bytes[..body_end],
        pos: 8,
    };
    let name = r.string("model name")?;
    let n_classes = r.u32("class count")? as usize;
    let mut classes = Vec::new();
    for _ in 0..n_classes {
        classes.push(r.string("class name")?);
    }
    let n_tensors = r.u32("tensor count")? as usize;
    let mut tensors = Vec::new();
    for _ in 0..n_tensors {
        let tname = r.string("tensor name")?;
        let at = r.pos;
        let tag = r.take(1, "dtype tag")?[0];
        let role = TensorRole::from_tag(tag).ok_or_else(|| Error::Format {
            offset: at as u64,
            reason: format!("unknown dtype tag {tag} for `{tname}`"),
        })?;
        let rank = r.u32("rank")? as usize;
        if rank > 8 {
            return Err(r.fail(format!("rank {rank} of `{tname}` is implausible")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("extent")? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|_| shape.iter().all(|&d| d > 0))
            .ok_or_else(|| r.fail(format!("invalid shape {shape:?} for `{tname}`")))?;
        let raw = r.take(
            count
                .checked_mul(4)
                .ok_or_else(|| r.fail("tensor too large"))?,
            "tensor data",
        )?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        tensors.push((tname, role, Tensor::new(shape, data)?));
    }
    if r.pos != body_end {
        return Err(r.fail("trailing bytes after last tensor"));
    }
    Ok(Container {
        name,
        classes,
        tensors,
    })
}

fn config_tensors(b: &BackboneConfig) -> Vec<(String, TensorRole, Tensor<f32>)> {
    let flag = |v: bool| if v { 1.0 } else { 0.0 };
    let pool = b.stem.pool.unwrap_or(PoolConfig {
        window: 0,
        stride: 0,
        padding: 0,
    });
    let stem = [
        b.stem.width,
        b.stem.kernel,
        b.stem.stride,
        b.stem.padding,
        pool.window,
        pool.stride,
        pool.padding,
    ]
    .map(|v| v as f32);
    let mut stem = stem.to_vec();
    stem.push(flag(b.stem.frozen));
    let mut out = vec![
        (
            "config.input_size".to_string(),
            TensorRole::Config,
            Tensor::from_slice(&[b.input_size as f32]),
        ),
        (
            "config.stem".to_string(),
            TensorRole::Config,
            Tensor::from_slice(&stem),
        ),
    ];
    if !b.stages.is_empty() {
        let data = b
            .stages
            .iter()
            .flat_map(|s| {
                [
                    s.width as f32,
                    s.blocks as f32,
                    s.stride as f32,
                    flag(s.frozen),
                ]
            })
            .collect();
        out.push((
            "config.stages".to_string(),
            TensorRole::Config,
            Tensor::new(vec![b.stages.len(), 4], data).expect("non-empty"),
        ));
    }
    out
}

const CONFIG_NAMES: [&str; 3] = ["config.input_size", "config.stem", "config.stages"];

fn backbone_from(c: &Container) -> Result<BackboneConfig> {
    let find = |name: &str| {
        c.tensors
            .iter()
            .find(|(n, role, _)| n == name && *role == TensorRole::Config)
            .map(|(_, _, t)| t)
    };
    let int = |v: f32| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 && v < 1e9 {
            Ok(v as usize)
        } else {
            Err(Error::invalid(format!("config value {v} is not a count")))
        }
    };
    let input = find("config.input_size")
        .ok_or_else(|| Error::MissingTensor("config.input_size".into()))?;
    let stem = find("config.stem").ok_or_else(|| Error::MissingTensor("config.stem".into()))?;
    if input.len() != 1 || stem.len() != 8 {
        return Err(Error::invalid("malformed architecture record"));
    }
    let s: Vec<usize> = stem.data()[..7]
        .iter()
        .map(|&v| int(v))
        .collect::<Result<_>>()?;
    let stages = match find("config.stages") {
        None => Vec::new(),
        Some(t) if t.rank() == 2 && t.shape()[1] == 4 => t
            .data()
            .chunks(4)
            .map(|row| {
                Ok(StageConfig {
                    width: int(row[0])?,
                    blocks: int(row[1])?,
                    stride: int(row[2])?,
                    frozen: row[3] != 0.0,
                })
            })
            .collect::<Result<_>>()?,
        Some(_) => return Err(Error::invalid("malformed stage record")),
    };
    Ok(BackboneConfig {
        input_size: int(input.data()[0])?,
        stem: StemConfig {
            width: s[0],
            kernel: s[1],
            stride: s[2],
            padding: s[3],
            pool: (s[4] > 0).then_some(PoolConfig {
                window: s[4],
                stride: s[5],
                padding: s[6],
            }),
            frozen: stem.data()[7] != 0.0,
        },
        stages,
    })
}

pub fn to_container(model: &Model<f32>) -> Container {
    let mut tensors = config_tensors(&model.spec.backbone);
    tensors.extend(
        model
            .named_tensors()
            .into_iter()
            .map(|(name, role, t)| (name, role, t.clone())),
    );
    Container {
        name: model.spec.name().to_string(),
        classes: model.spec.classes.clone(),
        tensors,
    }
}

/// Fills a freshly built `spec` model from the container. Tensors are
/// matched in the model's own order so the first incompatible one is the
/// one reported.
fn populate(spec: ClassifierSpec, c: &Container) -> Result<Model<f32>> {
    let mut model = Model::<f32>::build(spec, 0)?;
    let mut names = HashSet::new();
    for (name, role, _) in &c.tensors {
        if !names.insert(name.as_str()) {
            return Err(Error::invalid(format!("tensor `{name}` appears twice")));
        }
        if *role == TensorRole::Config && !CONFIG_NAMES.contains(&name.as_str()) {
            return Err(Error::invalid(format!("unexpected config record `{name}`")));
        }
    }
    let stored: HashMap<&str, (TensorRole, &Tensor<f32>)> = c
        .tensors
        .iter()
        .filter(|(_, role, _)| *role != TensorRole::Config)
        .map(|(n, role, t)| (n.as_str(), (*role, t)))
        .collect();
    let wanted: Vec<(String, TensorRole)> = model
        .named_tensors()
        .into_iter()
        .map(|(n, r, _)| (n, r))
        .collect();
    for (name, role) in &wanted {
        let (stored_role, t) = stored
            .get(name.as_str())
            .ok_or_else(|| Error::MissingTensor(name.clone()))?;
        let is_buffer = *role == TensorRole::Buffer;
        if is_buffer != (*stored_role == TensorRole::Buffer) {
            return Err(Error::invalid(format!(
                "tensor `{name}` has role {stored_role:?}, expected {role:?}"
            )));
        }
        model.import_weights([(name.as_str(), *t)])?;
        if let Some(id) = model.params.id(name) {
            model
                .params
                .set_trainable(id, *stored_role == TensorRole::Trainable);
        }
    }
    if stored.len() != wanted.len() {
        let extra = stored
            .keys()
            .find(|n| !wanted.iter().any(|(w, _)| w == *n))
            .expect("more stored tensors than wanted");
        return Err(Error::invalid(format!("unexpected tensor `{extra}`")));
    }
    let params = &model.params;
    for bn in model.network.batch_norms_mut() {
        bn.frozen = !params.get(bn.scale).trainable;
    }
    Ok(model)
}

pub fn save_model(model: &Model<f32>, path: &Path) -> Result<()> {
    fs::write(path, write_container(&to_container(model)))?;
    Ok(())
}

/// Rebuilds a model from the architecture stored in the file.
pub fn load_model(path: &Path) -> Result<Model<f32>> {
    let c = read_container(&fs::read(path)?)?;
    let task: Task = c.name.parse()?;
    let spec = ClassifierSpec::new(task, backbone_from(&c)?);
    if spec.classes != c.classes {
        return Err(Error::invalid(format!(
            "{} file lists classes {:?}",
            c.name, c.classes
        )));
    }
    populate(spec, &c)
}

/// Loads a file into an expected architecture, rejecting any tensor whose
/// shape disagrees with it.
pub fn load_model_as(path: &Path, spec: &ClassifierSpec) -> Result<Model<f32>> {
    let c = read_container(&fs::read(path)?)?;
    let model = populate(spec.clone(), &c)?;
    if c.name != spec.name() || c.classes != spec.classes {
        return Err(Error::invalid(format!(
            "file holds {} {:?}, expected {} {:?}",
            c.name,
            c.classes,
            spec.name(),
            spec.classes
        )));
    }
    Ok(model)
}
