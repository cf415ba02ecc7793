//! `weathernet` command-line front end: fixture generation, training,
//! evaluation and fused scene prediction.
//!
//! Exit codes: 0 success, 1 usage error, 2 input or data error, 3 numeric
//! failure during training.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use weathernet::data::{
    decode_resize, load_dataset, write_all_fixtures, write_task_fixtures, AugmentationConfig,
    DatasetManifest, FixtureConfig, SampleCache, DEFAULT_RESCALE, DEFAULT_TRAIN_FRACTION,
};
use weathernet::metrics::evaluate;
use weathernet::model::{
    describe, load_model, predict_scene, save_model, train_classifier, BackboneConfig,
    ClassifierSpec, EpochMetrics, Model, SceneLabel, Task, TrainConfig, DESK_INPUT_SIZE,
    FULL_INPUT_SIZE,
};
use weathernet::Error;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const EPOCH_LOG_HEADER: &str = "epoch,train_loss,train_acc,test_loss,test_acc";

const DESK_EPOCHS: usize = 30;

#[derive(Debug, Parser)]
#[command(
    name = "weathernet",
    version,
    about = "Weather and lighting scene classifiers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic PPM dataset for one or all tasks.
    Fixtures(FixturesArgs),
    /// Train one classifier and write the model plus its epoch log.
    Train(TrainArgs),
    /// Evaluate a model on the test split of a dataset.
    Eval(EvalArgs),
    /// Run all four models on an image or a directory of images.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    /// Output directory; each task goes to `<out>/<task>/<class>/`.
    #[arg(long)]
    pub out: PathBuf,
    /// Only this task (night, glare, precip, fog).
    #[arg(long)]
    pub task: Option<String>,
    /// Images per class.
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    /// Image edge length in pixels.
    #[arg(long, default_value_t = DESK_INPUT_SIZE)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub task: String,
    /// Dataset root with one directory per class.
    #[arg(long)]
    pub data: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Epoch log; defaults to the model path with a `.csv` extension.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    /// Seeds the split, initialisation, shuffling and augmentation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_input_size)]
    pub input_size: Option<usize>,
    /// Small backbone, 32x32 input and 30 epochs unless overridden.
    #[arg(long)]
    pub desk_scale: bool,
    /// Train on un-augmented images.
    #[arg(long)]
    pub no_augment: bool,
    /// Shear range in degrees.
    #[arg(long)]
    pub shear: Option<f32>,
    #[arg(long)]
    pub flip_prob: Option<f64>,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    pub zoom: Option<Vec<f32>>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Split seed; must match the one used for training.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// The four model files, comma-separated, in any order.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub models: Vec<PathBuf>,
    /// Image file or directory of images.
    #[arg(long)]
    pub input: PathBuf,
    /// Write records here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_input_size(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n == FULL_INPUT_SIZE || n == DESK_INPUT_SIZE => Ok(n),
        _ => Err(format!("expected {FULL_INPUT_SIZE} or {DESK_INPUT_SIZE}")),
    }
}

/// A failed command: message plus process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Diverged { .. } | Error::NonFinite(_) => EXIT_NUMERIC,
            _ => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::data(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Fixtures(a) => cmd_fixtures(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Predict(a) => cmd_predict(&a),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn parse_task(s: &str) -> Result<Task, Failure> {
    s.parse().map_err(|_| {
        Failure::usage(format!(
            "unknown task `{s}`; expected night, glare, precip or fog"
        ))
    })
}

fn cmd_fixtures(a: &FixturesArgs) -> Outcome {
    if a.count == 0 || a.size == 0 {
        return Err(Failure::usage("--count and --size must be positive"));
    }
    let config = FixtureConfig {
        per_class: a.count,
        size: a.size,
        seed: a.seed,
    };
    info!(
        "resolved config: {}",
        serde_json::json!({
            "command": "fixtures",
            "out": a.out,
            "task": a.task,
            "count": config.per_class,
            "size": config.size,
            "seed": config.seed,
        })
    );
    let written = match &a.task {
        Some(t) => {
            let task = parse_task(t)?;
            write_task_fixtures(&a.out.join(task.key()), task, &config)?
        }
        None => write_all_fixtures(&a.out, &config)?,
    };
    println!("wrote {} images under {}", written.len(), a.out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct ResolvedTrain<'a> {
    command: &'static str,
    task: &'static str,
    data: &'a Path,
    out: &'a Path,
    log: &'a Path,
    input_size: usize,
    backbone: &'static str,
    train_fraction: f64,
    train: &'a TrainConfig,
}

fn resolve_augmentation(a: &TrainArgs) -> Result<Option<AugmentationConfig>, Failure> {
    if a.no_augment {
        return Ok(None);
    }
    let mut aug = AugmentationConfig {
        seed: a.seed,
        ..AugmentationConfig::default()
    };
    if let Some(s) = a.shear {
        aug.shear_degrees = s;
    }
    if let Some(p) = a.flip_prob {
        aug.flip_probability = p;
    }
    if let Some(z) = &a.zoom {
        aug.zoom_range = (z[0], z[1]);
    }
    aug.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(Some(aug))
}

/// One CSV row per epoch, fixed six-decimal format.
pub fn format_epoch_log(history: &[EpochMetrics]) -> String {
    let mut out = String::from(EPOCH_LOG_HEADER);
    out.push('\n');
    for m in history {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6}",
            m.epoch, m.train_loss, m.train_acc, m.test_loss, m.test_acc
        );
    }
    out
}

fn load_split(data: &Path, task: Task, seed: u64) -> Result<DatasetManifest, Failure> {
    let manifest = load_dataset(data, task.name(), task.classes())?;
    Ok(manifest.split(DEFAULT_TRAIN_FRACTION, seed)?)
}

fn cmd_train(a: &TrainArgs) -> Outcome {
    let task = parse_task(&a.task)?;
    if a.batch == 0 {
        return Err(Failure::usage("--batch must be positive"));
    }
    if !(a.lr > 0.0 && a.lr.is_finite()) {
        return Err(Failure::usage("--lr must be positive"));
    }
    let (backbone, backbone_name) = if a.desk_scale {
        (BackboneConfig::desk(), "desk")
    } else {
        (BackboneConfig::resnet50_shaped(), "resnet50-shaped")
    };
    let input_size = a.input_size.unwrap_or(if a.desk_scale {
        DESK_INPUT_SIZE
    } else {
        FULL_INPUT_SIZE
    });
    let epochs = a
        .epochs
        .unwrap_or(if a.desk_scale { DESK_EPOCHS } else { 100 });
    let config = TrainConfig {
        epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        augmentation: resolve_augmentation(a)?,
        seed: a.seed,
    };
    let log_path = a.log.clone().unwrap_or_else(|| a.out.with_extension("csv"));
    let resolved = ResolvedTrain {
        command: "train",
        task: task.name(),
        data: &a.data,
        out: &a.out,
        log: &log_path,
        input_size,
        backbone: backbone_name,
        train_fraction: DEFAULT_TRAIN_FRACTION,
        train: &config,
    };
    info!(
        "resolved config: {}",
        serde_json::to_string(&resolved).expect("config serialises")
    );

    let manifest = load_split(&a.data, task, a.seed)?;
    info!(
        "{} samples, {} train / {} test",
        manifest.len(),
        manifest.count(weathernet::data::Split::Train),
        manifest.count(weathernet::data::Split::Test)
    );
    let cache = SampleCache::load(&manifest, input_size, DEFAULT_RESCALE)?;
    let spec = ClassifierSpec::new(task, backbone.with_input_size(input_size));
    let mut model = Model::<f32>::build(spec, a.seed)?;
    let frozen = model.frozen_checksum();
    let history = train_classifier(&mut model, &manifest, &cache, &config, |m| {
        info!(
            "epoch {} train_loss {:.6} train_acc {:.6} test_loss {:.6} test_acc {:.6}",
            m.epoch, m.train_loss, m.train_acc, m.test_loss, m.test_acc
        );
    })?;
    if model.frozen_checksum() != frozen {
        warn!("frozen parameters changed during training");
    }
    save_model(&model, &a.out)?;
    fs::write(&log_path, format_epoch_log(&history))?;
    println!(
        "saved {} to {} (log {})",
        task,
        a.out.display(),
        log_path.display()
    );
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Outcome {
    let mut model = load_model(&a.model)?;
    info!(
        "resolved config: {}",
        serde_json::json!({
            "command": "eval",
            "model": a.model,
            "task": model.spec.name(),
            "data": a.data,
            "seed": a.seed,
            "input_size": model.input_size(),
            "out": a.out,
        })
    );
    let manifest = load_split(&a.data, model.task(), a.seed)?;
    let cache = SampleCache::load(&manifest, model.input_size(), DEFAULT_RESCALE)?;
    let report = evaluate(&mut model, &manifest, &cache)?;
    let mut text = report.to_json();
    text.push('\n');
    if let Some(out) = &a.out {
        fs::write(out, &text)?;
    }
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct SceneRecord<'a> {
    path: String,
    #[serde(flatten)]
    label: &'a SceneLabel,
    description: String,
}

#[derive(Serialize)]
struct ErrorRecord {
    path: String,
    error: String,
}

fn list_inputs(input: &Path) -> Result<Vec<PathBuf>, Failure> {
    if input.is_dir() {
        let mut paths: Vec<PathBuf> = fs::read_dir(input)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        paths.retain(|p| {
            p.is_file()
                && !p
                    .file_name()
                    .is_some_and(|n| n.to_string_lossy().starts_with('.'))
        });
        paths.sort();
        Ok(paths)
    } else if input.is_file() {
        Ok(vec![input.to_path_buf()])
    } else {
        Err(Failure::data(format!("{} does not exist", input.display())))
    }
}

fn load_four(paths: &[PathBuf]) -> Result<[Model<f32>; 4], Failure> {
    if paths.len() != 4 {
        return Err(Failure::usage(format!(
            "--models needs 4 files, got {}",
            paths.len()
        )));
    }
    let mut slots: [Option<Model<f32>>; 4] = Default::default();
    for path in paths {
        let model =
            load_model(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        let slot = &mut slots[Task::ALL
            .iter()
            .position(|&t| t == model.task())
            .expect("known task")];
        if slot.is_some() {
            return Err(Failure::data(format!("two {} models given", model.task())));
        }
        *slot = Some(model);
    }
    Ok(slots.map(|m| m.expect("four distinct tasks")))
}

fn cmd_predict(a: &PredictArgs) -> Outcome {
    let mut models = load_four(&a.models)?;
    let size = models[0].input_size();
    info!(
        "resolved config: {}",
        serde_json::json!({
            "command": "predict",
            "models": a.models,
            "input": a.input,
            "input_size": size,
            "out": a.out,
        })
    );
    let inputs = list_inputs(&a.input)?;
    let mut out = String::new();
    let mut successes = 0;
    for path in &inputs {
        let shown = path.display().to_string();
        let line = match decode_resize(path, size, DEFAULT_RESCALE, 0)
            .and_then(|sample| predict_scene(&mut models, &sample))
        {
            Ok(label) => {
                successes += 1;
                serde_json::to_string(&SceneRecord {
                    path: shown,
                    description: describe(&label),
                    label: &label,
                })
            }
            Err(e) => {
                warn!("{shown}: {e}");
                serde_json::to_string(&ErrorRecord {
                    path: shown,
                    error: e.to_string(),
                })
            }
        };
        out.push_str(&line.expect("record serialises"));
        out.push('\n');
    }
    match &a.out {
        Some(p) => fs::write(p, &out)?,
        None => std::io::stdout().write_all(out.as_bytes())?,
    }
    if successes == 0 {
        return Err(Failure::data(format!(
            "no image under {} could be classified",
            a.input.display()
        )));
    }
    Ok(())
}
