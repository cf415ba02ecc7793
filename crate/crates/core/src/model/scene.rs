use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::spec::Task;
use super::{HeadPrediction, Model};
use crate::data::ImageSample;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeOfDay {
    DawnDusk,
    Day,
    Night,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precipitation {
    Clear,
    Rain,
    Snow,
}

impl TimeOfDay {
    pub const ALL: [TimeOfDay; 3] = [TimeOfDay::DawnDusk, TimeOfDay::Day, TimeOfDay::Night];

    pub fn as_str(self) -> &'static str {
        Task::NightNet.classes()[self as usize]
    }
}

impl Precipitation {
    pub const ALL: [Precipitation; 3] = [
        Precipitation::Clear,
        Precipitation::Rain,
        Precipitation::Snow,
    ];

    pub fn as_str(self) -> &'static str {
        Task::PrecipitationNet.classes()[self as usize]
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Precipitation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TimeOfDay {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TimeOfDay::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown time of day `{s}`")))
    }
}

impl FromStr for Precipitation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Precipitation::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown precipitation `{s}`")))
    }
}

/// Per-head probability vectors, in each head's class order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Confidences {
    pub time: Vec<f64>,
    pub glare: Vec<f64>,
    pub precipitation: Vec<f64>,
    pub fog: Vec<f64>,
}

/// Fused output of the four heads. Time and precipitation are each a single
/// exclusive class; glare and fog are independent flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneLabel {
    pub time: TimeOfDay,
    pub glare: bool,
    pub precipitation: Precipitation,
    pub fog: bool,
    pub confidences: Confidences,
}

/// Combines head decisions given in [`Task::ALL`] order.
pub fn fuse(heads: &[HeadPrediction; 4]) -> Result<SceneLabel> {
    let [time, glare, precip, fog] = heads;
    let pick = |task: Task, h: &HeadPrediction| -> Result<usize> {
        let n = task.classes().len();
        if h.class_index >= n || h.probabilities.len() != n {
            return Err(Error::Head {
                head: task.name(),
                source: Box::new(Error::invalid(format!(
                    "class {} with {} probabilities for a {n}-class head",
                    h.class_index,
                    h.probabilities.len()
                ))),
            });
        }
        Ok(h.class_index)
    };
    Ok(SceneLabel {
        time: TimeOfDay::ALL[pick(Task::NightNet, time)?],
        glare: pick(Task::GlareNet, glare)? == 0,
        precipitation: Precipitation::ALL[pick(Task::PrecipitationNet, precip)?],
        fog: pick(Task::FogNet, fog)? == 0,
        confidences: Confidences {
            time: time.probabilities.clone(),
            glare: glare.probabilities.clone(),
            precipitation: precip.probabilities.clone(),
            fog: fog.probabilities.clone(),
        },
    })
}

/// Runs all four heads on the same image. `models` must be in
/// [`Task::ALL`] order.
pub fn predict_scene(models: &mut [Model<f32>; 4], sample: &ImageSample) -> Result<SceneLabel> {
    let size = models[0].input_size();
    for (model, task) in models.iter().zip(Task::ALL) {
        if model.task() != task {
            return Err(Error::invalid(format!(
                "expected {task} in this slot, found {}",
                model.task()
            )));
        }
        if model.input_size() != size {
            return Err(Error::invalid("all four models must share one input size"));
        }
    }
    let mut heads = Vec::with_capacity(4);
    for model in models.iter_mut() {
        let head = model.spec.name();
        heads.push(model.predict_head(sample).map_err(|e| Error::Head {
            head,
            source: Box::new(e),
        })?);
    }
    fuse(&heads.try_into().expect("four heads"))
}

fn yes_no(v: bool) -> &'static str {
    if v {
        "yes"
    } else {
        "no"
    }
}

/// `"<time>, <precipitation>, fog=<yes|no>, glare=<yes|no>"`.
pub fn describe(label: &SceneLabel) -> String {
    format!(
        "{}, {}, fog={}, glare={}",
        label.time,
        label.precipitation,
        yes_no(label.fog),
        yes_no(label.glare)
    )
}

/// Inverse of [`describe`]: `(time, precipitation, fog, glare)`.
pub fn parse_description(text: &str) -> Result<(TimeOfDay, Precipitation, bool, bool)> {
    let bad = || Error::invalid(format!("cannot parse scene description `{text}`"));
    let flag = |field: &str, key: &str| match field.strip_prefix(key) {
        Some("yes") => Ok(true),
        Some("no") => Ok(false),
        _ => Err(bad()),
    };
    let parts: Vec<&str> = text.split(", ").collect();
    let [time, precip, fog, glare] = parts[..] else {
        return Err(bad());
    };
    Ok((
        time.parse()?,
        precip.parse()?,
        flag(fog, "fog=")?,
        flag(glare, "glare=")?,
    ))
}
