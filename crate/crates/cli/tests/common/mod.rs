#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use weathernet::model::{save_model, HeadKind};
use weathernet::{ClassifierSpec, Model, Task, Tensor};

pub fn weathernet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weathernet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

pub fn path_arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Desk model whose output layer ignores the image and always picks `class`.
pub fn pinned_model(task: Task, class: usize) -> Model<f32> {
    let mut model = Model::<f32>::build(ClassifierSpec::desk(task), 0).unwrap();
    let units = task.head().units(task.classes().len());
    let weight = Tensor::zeros(vec![64, units]).unwrap();
    let bias: Vec<f32> = match task.head() {
        HeadKind::Sigmoid => vec![if class == 0 { 12.0 } else { -12.0 }],
        HeadKind::Softmax => (0..units)
            .map(|c| if c == class { 12.0 } else { 0.0 })
            .collect(),
    };
    let bias = Tensor::new(vec![units], bias).unwrap();
    model
        .import_weights([("head.out.weight", &weight), ("head.out.bias", &bias)])
        .unwrap();
    model
}

/// Writes every pinned variant of every head; `files[t][c]` pins task `t`
/// (in [`Task::ALL`] order) to class `c`.
pub fn write_pinned_models(dir: &Path) -> Vec<Vec<PathBuf>> {
    Task::ALL
        .iter()
        .map(|&task| {
            (0..task.classes().len())
                .map(|c| {
                    let path = dir.join(format!("{}_{c}.wnet", task.key()));
                    save_model(&pinned_model(task, c), &path).unwrap();
                    path
                })
                .collect()
        })
        .collect()
}
