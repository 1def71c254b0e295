//! `tailkit` subcommands. Each one loads inputs, calls one library routine,
//! writes outputs and a run manifest.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn, Level, LevelFilter, Log, Metadata, Record};
use serde::Serialize;

use tailkit_core::data::{class_stats, EmbeddingSet, ScoreKind, ScoreMatrix};
use tailkit_core::experiment::{predict_probabilities, run_comparison, ExperimentConfig};
use tailkit_core::loss::{
    class_weights, effective_numbers, margins, DbLossParams, WeightNormalization, DEFAULT_ALPHA, DEFAULT_BETA,
    DEFAULT_KAPPA,
};
use tailkit_core::math::Matrix;
use tailkit_core::metrics::{macro_report, EceConfig, DEFAULT_ECE_BINS, DEFAULT_THRESHOLD};
use tailkit_core::pipeline::{
    ensemble, normal_gate, sigmoid_scores, tta_merge, EnsembleSpec, GateConfig, DEFAULT_GATE_EXPONENT,
    DEFAULT_NORMAL_CLASS,
};
use tailkit_core::raster::{preprocess, PreprocessConfig, Task, TtaSpec, DEFAULT_CLIP_HI, DEFAULT_CLIP_LO};
use tailkit_core::sampler::{class_repeat_factors, sample_repeat_factors, EpochSampler, SamplerConfig};
use tailkit_core::trainer::{forward, generate_synthetic, train, LossKind, SamplerKind, SynthSpec, TrainConfig};
use tailkit_core::zeroshot::{score_batch, unit_normalize, ZsConfig, DEFAULT_SCALE};

use crate::embeddings::load_embeddings;
use crate::error::{Error, Result};
use crate::grid::write_views;
use crate::manifest::{manifest_path_for, RunManifest};
use crate::model::{load_model, save_model};
use crate::pgm::load_pgm;
use crate::prompts::{load_prompt_bank, resolve_manifest_path};
use crate::table::{load_labels, load_scores, save_labels, save_scores, write_rows};

#[derive(Debug, Parser)]
#[command(
    name = "tailkit",
    version,
    about = "Long-tailed multi-label training, inference refinement and evaluation"
)]
pub struct Cli {
    /// Emit log lines as JSON objects on stderr.
    #[arg(long, global = true)]
    pub json_logs: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Preprocess a PGM radiograph into normalized network inputs, one per TTA view.
    Preprocess(PreprocessArgs),
    /// Per-class counts, frequencies, effective numbers, weights and margins.
    Weights(WeightsArgs),
    /// Class-aware repeat-factor epoch plans.
    Sample(SampleArgs),
    /// Train a linear classifier on a synthetic long-tailed dataset.
    Train(TrainArgs),
    /// Apply a trained linear model to a feature file.
    Predict(PredictArgs),
    /// Merge TTA logit views into probabilities.
    MergeTta(MergeTtaArgs),
    /// Weighted mean of probability matrices.
    Ensemble(EnsembleArgs),
    /// Suppress abnormal scores by the normal-class probability.
    Gate(GateArgs),
    /// Zero-shot scores from image and prompt embeddings.
    Zeroshot(ZeroshotArgs),
    /// mAP, mAUC, mF1 and mECE report.
    Eval(EvalArgs),
    /// Synthetic comparison of the balanced recipe against plain BCE.
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "1")]
    pub task: TaskArg,
    #[arg(long, default_value_t = DEFAULT_CLIP_LO)]
    pub clip_lo: f64,
    #[arg(long, default_value_t = DEFAULT_CLIP_HI)]
    pub clip_hi: f64,
    /// Square output side; 512 for task 1, 224 for task 2 when omitted.
    #[arg(long)]
    pub size: Option<usize>,
    /// Comma-separated transforms: identity,hflip,rot+5,rot-5,zoom1.1,zoom0.9.
    #[arg(long)]
    pub tta: Option<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    pub kappa: f64,
    /// CSV `class,margin` giving margins verbatim instead of the generator.
    #[arg(long)]
    pub margins: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = tailkit_core::sampler::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = tailkit_core::sampler::DEFAULT_R_MAX)]
    pub rmax: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum LossArg {
    Db,
    Bce,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum SamplerArg {
    Cas,
    Uniform,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON synthetic dataset spec; missing fields take defaults.
    #[arg(long)]
    pub synth_spec: PathBuf,
    #[arg(long, value_enum, default_value = "db")]
    pub loss: LossArg,
    #[arg(long, value_enum, default_value = "cas")]
    pub sampler: SamplerArg,
    #[arg(long, default_value_t = 2.0)]
    pub lr: f64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    pub kappa: f64,
    #[arg(long, default_value_t = tailkit_core::sampler::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = tailkit_core::sampler::DEFAULT_R_MAX)]
    pub rmax: f64,
    #[arg(long)]
    pub model_out: PathBuf,
    /// Also write the train/held-out features and labels as CSV here.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum KindArg {
    Logits,
    Probabilities,
}

impl From<KindArg> for ScoreKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Logits => ScoreKind::Logits,
            KindArg::Probabilities => ScoreKind::Probabilities,
        }
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Feature CSV (`id,d0,d1,...`) or binary embedding file.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, value_enum, default_value = "logits")]
    pub kind: KindArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MergeTtaArgs {
    /// Logit CSVs, one per TTA view.
    #[arg(long = "in", num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Probability CSVs, one per member.
    #[arg(long = "in", num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    /// Raw member weights; defaults to 1.0 1.5.
    #[arg(long, num_args = 1..)]
    pub weights: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value = DEFAULT_NORMAL_CLASS, conflicts_with = "normal_index")]
    pub normal_class: String,
    /// Column index of the normal class (overrides the name lookup).
    #[arg(long)]
    pub normal_index: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_GATE_EXPONENT)]
    pub alpha_ng: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ZeroshotArgs {
    #[arg(long)]
    pub images: PathBuf,
    /// Prompt manifest JSON, or a directory holding `manifest.json`.
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SCALE)]
    pub scale: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum, default_value = "probabilities")]
    pub kind: KindArg,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = DEFAULT_ECE_BINS)]
    pub ece_bins: usize,
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value = "demo-out")]
    pub out_dir: PathBuf,
}

static JSON_LOGS: AtomicBool = AtomicBool::new(false);

struct StderrLogger;

impl Log for StderrLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= Level::Info
    }

    fn log(&self, record: &Record) {
        if !self.enabled(record.metadata()) {
            return;
        }
        let msg = record.args().to_string();
        let mut err = std::io::stderr().lock();
        if JSON_LOGS.load(Ordering::Relaxed) {
            let line = serde_json::json!({ "level": record.level().as_str().to_lowercase(), "message": msg });
            let _ = writeln!(err, "{line}");
        } else {
            let _ = writeln!(err, "tailkit: {msg}");
        }
    }

    fn flush(&self) {}
}

static LOGGER: StderrLogger = StderrLogger;

fn init_logging(json: bool) {
    JSON_LOGS.store(json, Ordering::Relaxed);
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(LevelFilter::Info);
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code: 0 success, 1 validation or usage error, 2 IO error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    init_logging(cli.json_logs);
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Weights(a) => cmd_weights(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::MergeTta(a) => cmd_merge_tta(a),
        Command::Ensemble(a) => cmd_ensemble(a),
        Command::Gate(a) => cmd_gate(a),
        Command::Zeroshot(a) => cmd_zeroshot(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Demo(a) => cmd_demo(a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn cmd_preprocess(a: PreprocessArgs) -> Result<()> {
    let raster = load_pgm(&a.input)?;
    let task = match a.task {
        TaskArg::One => Task::Classification,
        TaskArg::Two => Task::ZeroShot,
    };
    let mut cfg = PreprocessConfig::for_task(task);
    cfg.clip_lo = a.clip_lo;
    cfg.clip_hi = a.clip_hi;
    if let Some(size) = a.size {
        cfg.size = size;
    }
    if let Some(list) = &a.tta {
        cfg.tta = TtaSpec::parse(list)?;
    }
    let views = preprocess(&raster, &cfg)?;
    let stem = a
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    let written = write_views(&a.out_dir, &stem, &views)?;
    info!("wrote {} views to {}", written.len(), a.out_dir.display());

    let mut m = RunManifest::new("preprocess");
    m.input(&a.input)?
        .param("task", task)?
        .param("clip_lo", cfg.clip_lo)?
        .param("clip_hi", cfg.clip_hi)?
        .param("size", cfg.size)?
        .param("tta", tailkit_core::raster::transform_names(&cfg.tta))?
        .param("out_dir", &a.out_dir)?;
    m.write(&a.out_dir.join(format!("{stem}.manifest.json")))
}

fn load_margin_file(path: &Path, class_names: &[String]) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let mut found = std::collections::HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(Error::parse(path, line, "expected `class,margin`"));
        }
        let v: f64 = record[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, line, format!("not a number: `{}`", &record[1])))?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::parse(path, line, format!("margin must be >= 0, got {v}")));
        }
        found.insert(record[0].trim().to_string(), v);
    }
    class_names
        .iter()
        .map(|c| {
            found
                .get(c)
                .copied()
                .ok_or_else(|| Error::format(path, format!("no margin for class `{c}`")))
        })
        .collect()
}

fn cmd_weights(a: WeightsArgs) -> Result<()> {
    let labels = load_labels(&a.labels)?;
    let stats = class_stats(&labels)?;
    let params = DbLossParams {
        beta: a.beta,
        alpha: a.alpha,
        margin_scale: a.kappa,
        weight_normalization: WeightNormalization::MeanOne,
    };
    params.validate()?;
    let eff = effective_numbers(&stats.counts, params.beta)?;
    let w = class_weights(&eff, params.alpha, params.weight_normalization)?;
    let m = match &a.margins {
        Some(path) => load_margin_file(path, labels.class_names())?,
        None => margins(&stats.counts, params.margin_scale)?,
    };
    let header: Vec<String> = ["n_c", "f_c", "eff_c", "w_c", "m_c"].map(String::from).to_vec();
    write_rows(&a.out, &header, labels.class_names(), |c| {
        vec![
            stats.counts[c].to_string(),
            format!("{}", stats.frequencies[c]),
            format!("{}", eff[c]),
            format!("{}", w[c]),
            format!("{}", m[c]),
        ]
    })?;
    info!(
        "wrote weights for {} classes to {}",
        labels.n_classes(),
        a.out.display()
    );

    let mut man = RunManifest::new("weights");
    man.input(&a.labels)?
        .param("beta", params.beta)?
        .param("alpha", params.alpha)?
        .param("kappa", params.margin_scale)?
        .param("weight_normalization", params.weight_normalization)?
        .param("margins_file", &a.margins)?;
    if let Some(p) = &a.margins {
        man.input(p)?;
    }
    man.write(&manifest_path_for(&a.out))
}

#[derive(Serialize)]
struct EpochLine<'a> {
    epoch: usize,
    epoch_len: usize,
    indices: &'a [usize],
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let labels = load_labels(&a.labels)?;
    let stats = class_stats(&labels)?;
    let cfg = SamplerConfig {
        threshold: a.threshold,
        r_max: a.rmax,
        seed: a.seed,
    };
    let class_r = class_repeat_factors(&stats.frequencies, &cfg)?;
    let empty: Vec<&str> = class_r
        .empty_classes
        .iter()
        .map(|&c| labels.class_names()[c].as_str())
        .collect();
    if !empty.is_empty() {
        warn!("classes without positives (repeat factor 1): {}", empty.join(", "));
    }
    let repeat = sample_repeat_factors(&labels, &class_r.factors, &cfg)?;
    let mut sampler = EpochSampler::new(repeat, cfg.seed)?;
    let mut out = String::new();
    for epoch in 0..a.epochs {
        let plan = sampler.next_epoch();
        let line = EpochLine {
            epoch,
            epoch_len: plan.epoch_len,
            indices: &plan.indices,
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    write_text(&a.out, &out)?;
    info!("wrote {} epoch plans to {}", a.epochs, a.out.display());

    let mut m = RunManifest::new("sample");
    m.input(&a.labels)?
        .param("threshold", cfg.threshold)?
        .param("rmax", cfg.r_max)?
        .param("epochs", a.epochs)?
        .param("class_repeat_factors", &class_r.factors)?
        .param("empty_classes", &empty)?;
    m.seed = Some(a.seed);
    m.write(&manifest_path_for(&a.out))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let text = fs::read_to_string(&a.synth_spec).map_err(|e| Error::io(&a.synth_spec, e))?;
    let spec: SynthSpec = serde_json::from_str(&text).map_err(|e| Error::format(&a.synth_spec, e.to_string()))?;
    let data = generate_synthetic(&spec)?;
    let ((x_train, y_train), (x_held, y_held)) = data.split();
    let cfg = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        loss: match a.loss {
            LossArg::Db => LossKind::Db,
            LossArg::Bce => LossKind::PlainBce,
        },
        sampler: match a.sampler {
            SamplerArg::Cas => SamplerKind::Cas,
            SamplerArg::Uniform => SamplerKind::Uniform,
        },
        seed: a.seed,
    };
    let loss_params = DbLossParams {
        beta: a.beta,
        alpha: a.alpha,
        margin_scale: a.kappa,
        weight_normalization: WeightNormalization::MeanOne,
    };
    let sampler_cfg = SamplerConfig {
        threshold: a.threshold,
        r_max: a.rmax,
        seed: a.seed,
    };
    let outcome = train(&x_train, &y_train, &cfg, &loss_params, &sampler_cfg)?;
    save_model(&a.model_out, &outcome.model)?;
    info!(
        "trained {} epochs, final loss {:.6}; model at {}",
        cfg.epochs,
        outcome.loss_trace.last().copied().unwrap_or(f64::NAN),
        a.model_out.display()
    );

    if let Some(dir) = &a.data_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let train_ids = y_train.ids().to_vec();
        let held_ids = y_held.ids().to_vec();
        save_features(&dir.join("train_features.csv"), train_ids, x_train)?;
        save_labels(dir.join("train_labels.csv"), &y_train)?;
        save_features(&dir.join("heldout_features.csv"), held_ids, x_held)?;
        save_labels(dir.join("heldout_labels.csv"), &y_held)?;
    }

    let mut m = RunManifest::new("train");
    m.input(&a.synth_spec)?
        .param("synth_spec", spec)?
        .param("train", cfg)?
        .param("loss_params", loss_params)?
        .param("sampler", sampler_cfg)?
        .param("loss_trace", &outcome.loss_trace)?;
    m.seed = Some(a.seed);
    m.write(&manifest_path_for(&a.model_out))
}

fn save_features(path: &Path, ids: Vec<String>, x: Matrix) -> Result<()> {
    crate::embeddings::save_embeddings_csv(path, &EmbeddingSet::new(ids, x)?)
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let features = load_embeddings(&a.features)?;
    let kind: ScoreKind = a.kind.into();
    let scores = match kind {
        ScoreKind::Probabilities => predict_probabilities(&model, features.vectors(), features.ids().to_vec())?,
        ScoreKind::Logits => {
            let z = forward(&model, features.vectors())?;
            ScoreMatrix::new(features.ids().to_vec(), model.class_names.clone(), z, ScoreKind::Logits)?
        }
    };
    save_scores(&a.out, &scores)?;
    info!(
        "wrote {} {} rows to {}",
        scores.n_samples(),
        kind.as_str(),
        a.out.display()
    );

    let mut m = RunManifest::new("predict");
    m.input(&a.model)?.input(&a.features)?.param("kind", a.kind)?;
    m.write(&manifest_path_for(&a.out))
}

fn cmd_merge_tta(a: MergeTtaArgs) -> Result<()> {
    let views = a
        .inputs
        .iter()
        .map(|p| load_scores(p, ScoreKind::Logits))
        .collect::<Result<Vec<_>>>()?;
    let merged = if views.len() == 1 {
        sigmoid_scores(&views[0])?
    } else {
        tta_merge(&views)?
    };
    save_scores(&a.out, &merged)?;
    info!("merged {} views into {}", views.len(), a.out.display());

    let mut m = RunManifest::new("merge-tta");
    for p in &a.inputs {
        m.input(p)?;
    }
    m.param("views", a.inputs.len())?;
    m.write(&manifest_path_for(&a.out))
}

fn cmd_ensemble(a: EnsembleArgs) -> Result<()> {
    let members = a
        .inputs
        .iter()
        .map(|p| load_scores(p, ScoreKind::Probabilities))
        .collect::<Result<Vec<_>>>()?;
    let spec = match a.weights {
        Some(w) => EnsembleSpec::new(w)?,
        None => EnsembleSpec::default(),
    };
    let out = ensemble(&members, &spec)?;
    save_scores(&a.out, &out)?;
    info!("ensembled {} members into {}", members.len(), a.out.display());

    let mut m = RunManifest::new("ensemble");
    for p in &a.inputs {
        m.input(p)?;
    }
    m.param("weights", spec.member_weights())?
        .param("normalized_weights", spec.normalized_weights())?;
    m.write(&manifest_path_for(&a.out))
}

fn cmd_gate(a: GateArgs) -> Result<()> {
    let p = load_scores(&a.input, ScoreKind::Probabilities)?;
    let index = match a.normal_index {
        Some(i) => i,
        None => p.class_index(&a.normal_class).ok_or_else(|| {
            Error::Usage(format!(
                "normal class `{}` not found in {}",
                a.normal_class,
                a.input.display()
            ))
        })?,
    };
    let cfg = GateConfig {
        normal_class_index: index,
        exponent: a.alpha_ng,
    };
    let out = normal_gate(&p, &cfg)?;
    save_scores(&a.out, &out)?;
    info!(
        "gated {} rows by `{}` into {}",
        out.n_samples(),
        p.class_names()[index],
        a.out.display()
    );

    let mut m = RunManifest::new("gate");
    m.input(&a.input)?
        .param("normal_class", &p.class_names()[index])?
        .param("normal_index", index)?
        .param("alpha_ng", a.alpha_ng)?;
    m.write(&manifest_path_for(&a.out))
}

fn cmd_zeroshot(a: ZeroshotArgs) -> Result<()> {
    let images = unit_normalize(&load_embeddings(&a.images)?)?;
    let (bank, files) = load_prompt_bank(&a.prompts)?;
    let cfg = ZsConfig { scale: a.scale };
    let scores = score_batch(&images, &bank, &cfg)?;
    save_scores(&a.out, &scores)?;
    info!(
        "scored {} images on {} classes into {}",
        scores.n_samples(),
        bank.n_classes(),
        a.out.display()
    );

    let mut m = RunManifest::new("zeroshot");
    m.input(&a.images)?.input(&resolve_manifest_path(&a.prompts))?;
    for f in &files {
        m.input(f)?;
    }
    m.param("scale", a.scale)?.param("classes", bank.class_names())?;
    m.write(&manifest_path_for(&a.out))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let scores = load_scores(&a.scores, a.kind.into())?;
    let labels = load_labels(&a.labels)?;
    let ece_cfg = EceConfig {
        n_bins: a.ece_bins,
        ..EceConfig::default()
    };
    let report = macro_report(&scores, &labels, a.threshold, &ece_cfg)?;
    write_json(&a.out, &report)?;
    info!(
        "mAP {} over {} classes; report at {}",
        report.macro_.map.map_or("undefined".into(), |v| format!("{v:.4}")),
        labels.n_classes(),
        a.out.display()
    );

    let mut m = RunManifest::new("eval");
    m.input(&a.scores)?
        .input(&a.labels)?
        .param("kind", a.kind)?
        .param("threshold", a.threshold)?
        .param("ece_bins", a.ece_bins)?;
    m.write(&manifest_path_for(&a.out))
}

#[derive(Serialize)]
struct DemoSummary {
    seed: u64,
    tail_classes: Vec<String>,
    head_classes: Vec<String>,
    balanced: ArmSummary,
    baseline: ArmSummary,
    tail_improved: bool,
    head_drop: Option<f64>,
}

#[derive(Serialize)]
struct ArmSummary {
    loss: LossKind,
    sampler: SamplerKind,
    tail_map: Option<f64>,
    head_map: Option<f64>,
    map: Option<f64>,
    final_loss: Option<f64>,
}

fn cmd_demo(a: DemoArgs) -> Result<()> {
    let cfg = ExperimentConfig::with_seed(a.seed);
    let cmp = run_comparison(&cfg)?;
    let dir = &a.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let names = &cmp.balanced.model.class_names;
    let summarize = |arm: &tailkit_core::experiment::ArmResult| ArmSummary {
        loss: arm.loss,
        sampler: arm.sampler,
        tail_map: arm.tail_map,
        head_map: arm.head_map,
        map: arm.report.macro_.map,
        final_loss: arm.loss_trace.last().copied(),
    };
    for (tag, arm) in [("db_cas", &cmp.balanced), ("bce_uniform", &cmp.baseline)] {
        save_model(dir.join(format!("{tag}.model.json")), &arm.model)?;
        write_json(&dir.join(format!("{tag}.report.json")), &arm.report)?;
    }
    let summary = DemoSummary {
        seed: a.seed,
        tail_classes: cmp.tail_classes.iter().map(|&c| names[c].clone()).collect(),
        head_classes: cmp.head_classes.iter().map(|&c| names[c].clone()).collect(),
        balanced: summarize(&cmp.balanced),
        baseline: summarize(&cmp.baseline),
        tail_improved: cmp.tail_improved(),
        head_drop: cmp.head_drop(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    let fmt = |v: Option<f64>| v.map_or("undefined".into(), |v| format!("{v:.4}"));
    info!(
        "tail-tercile mAP: db+cas {} vs bce+uniform {}; head-tercile mAP: {} vs {}",
        fmt(summary.balanced.tail_map),
        fmt(summary.baseline.tail_map),
        fmt(summary.balanced.head_map),
        fmt(summary.baseline.head_map)
    );

    let mut m = RunManifest::new("demo");
    m.param("experiment", cfg)?.param("out_dir", dir)?;
    m.seed = Some(a.seed);
    m.write(&dir.join("manifest.json"))
}
