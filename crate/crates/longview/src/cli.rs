//! `longview` command line: `synth`, `align`, `train`, `evaluate` and
//! `experiment`.
//!
//! Every command writes a [`RunManifest`] next to its outputs. Exit codes are
//! 0 on success, 1 on runtime failure and 2 on usage errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use longview_core::align::{AlignConfig, NccConfig};
use longview_core::cohort::synth::{synth_generate, BiopsyRule, SynthConfig};
use longview_core::cohort::{ImageScale, PopulationRule, SplitRule};
use longview_core::eval::evaluate;
use longview_core::nets::{PairModel, Variant};
use longview_core::train::{EpochRecord, FeatureBank, OptimizerConfig};
use serde::Serialize;
use serde_json::json;

use crate::aligned::{load_aligned, save_aligned, ALIGNMENT_REPORT};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::error::{self, Error, Result};
use crate::experiment::{fit_variant, pretrain_backbone, run_experiment, ExperimentConfig, PipelineConfig, SplitPairs};
use crate::manifest::{load_cohort, save_cohort};
use crate::report::{emit_report, render_report};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "LV_THREADS";
/// File name of the run manifest inside output directories.
pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Parser, Debug)]
#[command(name = "longview", version, about = "Prior-exam comparison models for screening mammography")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic cohort with known lesion ground truth.
    Synth(SynthArgs),
    /// Align every prior exam onto its current exam.
    Align(AlignArgs),
    /// Train an ensemble of one variant on a frozen pretrained backbone.
    Train(TrainArgs),
    /// Score test pairs with a set of checkpoints and write the AUC report.
    Evaluate(EvaluateArgs),
    /// Run synth, align, train and evaluate for every variant in one go.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    patients: usize,
    #[arg(long, default_value_t = 2)]
    exams_per_patient: usize,
    /// Image size divisor relative to full resolution.
    #[arg(long, default_value_t = ImageScale::DESK.divisor)]
    scale: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = SynthConfig::default().malignant_fraction)]
    malignant_fraction: f64,
    #[arg(long, default_value_t = SynthConfig::default().benign_fraction)]
    benign_fraction: f64,
    #[arg(long, default_value_t = SynthConfig::default().lesion.distractor_fraction)]
    distractor_fraction: f64,
    /// Only malignant findings make an exam biopsied.
    #[arg(long)]
    biopsy_malignant_only: bool,
}

#[derive(Args, Debug)]
struct AlignArgs {
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Foreground threshold for masks.
    #[arg(long, default_value_t = AlignConfig::default().eps)]
    eps: f64,
    /// Correlation sampling stride in pixels.
    #[arg(long, default_value_t = NccConfig::default().stride)]
    ncc_stride: usize,
}

#[derive(Args, Debug, Clone, Copy)]
struct PopulationArgs {
    /// Biopsied population by the patient's exams instead of the current exam.
    #[arg(long)]
    patient_level: bool,
}

impl PopulationArgs {
    fn rule(self) -> PopulationRule {
        if self.patient_level {
            PopulationRule::PatientLevel
        } else {
            PopulationRule::ExamLevel
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    cohort: PathBuf,
    /// Output of `align`; required by align-local-compare.
    #[arg(long)]
    aligned: Option<PathBuf>,
    #[arg(long)]
    variant: Variant,
    #[arg(long, default_value_t = 5)]
    members: usize,
    #[arg(long, default_value_t = 70)]
    epochs: usize,
    /// Single-image epochs that train the backbone before it is frozen.
    #[arg(long, default_value_t = 3)]
    pretrain_epochs: usize,
    /// Biopsied pairs per epoch; defaults to all of them.
    #[arg(long = "B", value_name = "COUNT")]
    biopsied_per_epoch: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1e-3)]
    pretrain_lr: f64,
    /// Member `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    population: PopulationArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    cohort: PathBuf,
    /// Output of `align`; required by align-local-compare.
    #[arg(long)]
    aligned: Option<PathBuf>,
    /// Glob selecting the member checkpoints.
    #[arg(long)]
    checkpoints: String,
    #[command(flatten)]
    population: PopulationArgs,
    /// Report CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    patients: Option<usize>,
    #[arg(long)]
    members: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cohort_seed: Option<u64>,
}

/// Run record written by every command.
#[derive(Serialize, Debug)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub duration_seconds: f64,
}

impl RunManifest {
    fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::format(path, e.to_string()))?;
        error::write(path, text.as_bytes())
    }
}

struct Outcome {
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    manifest: PathBuf,
}

fn to_json<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("configs serialize")
}

/// Parse `args` (including the program name), run the command and map the
/// result to an exit code, printing errors to stderr.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) => 2,
        _ => 1,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Usage(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    // A pool that is already configured (repeated in-process runs) is fine.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    let start = Instant::now();
    let (name, outcome) = match command {
        Command::Synth(a) => ("synth", synth(a)?),
        Command::Align(a) => ("align", align(a)?),
        Command::Train(a) => ("train", train(a)?),
        Command::Evaluate(a) => ("evaluate", evaluate_cmd(a)?),
        Command::Experiment(a) => ("experiment", experiment(a)?),
    };
    RunManifest {
        command: name.into(),
        config: outcome.config,
        seed: outcome.seed,
        inputs: outcome.inputs,
        outputs: outcome.outputs,
        version: env!("CARGO_PKG_VERSION").into(),
        duration_seconds: start.elapsed().as_secs_f64(),
    }
    .write(&outcome.manifest)
}

fn synth(a: SynthArgs) -> Result<Outcome> {
    let defaults = SynthConfig::default();
    let config = SynthConfig {
        n_patients: a.patients,
        exams_per_patient: a.exams_per_patient,
        image_scale: ImageScale { divisor: a.scale },
        lesion: longview_core::cohort::synth::LesionParams { distractor_fraction: a.distractor_fraction, ..defaults.lesion },
        malignant_fraction: a.malignant_fraction,
        benign_fraction: a.benign_fraction,
        biopsy_rule: if a.biopsy_malignant_only { BiopsyRule::MalignantOnly } else { BiopsyRule::AnyFinding },
        ..defaults
    };
    if a.scale == 0 {
        return Err(Error::Usage("--scale must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&a.distractor_fraction) {
        return Err(Error::Usage("--distractor-fraction must be in [0, 1]".into()));
    }
    let cohort = synth_generate(&config, a.seed).map_err(|e| Error::Usage(e.to_string()))?;
    let manifest = save_cohort(&cohort.cohort, &a.out)?;
    eprintln!("synth: {} patients, {} exams -> {}", a.patients, cohort.cohort.exam_count(), a.out.display());
    Ok(Outcome {
        config: to_json(&config),
        seed: Some(a.seed),
        inputs: vec![],
        outputs: vec![manifest],
        manifest: a.out.join(RUN_MANIFEST),
    })
}

fn align(a: AlignArgs) -> Result<Outcome> {
    if a.ncc_stride == 0 {
        return Err(Error::Usage("--ncc-stride must be at least 1".into()));
    }
    let config = AlignConfig { eps: a.eps, ncc: NccConfig { stride: a.ncc_stride, ..NccConfig::default() } };
    let cohort = load_cohort(&a.cohort, &SplitRule::default())?;
    let pairs = SplitPairs::from_cohort(&cohort).aligned(&config)?;
    let all: Vec<_> = pairs.all().cloned().collect();
    save_aligned(&all, &a.out)?;
    let ious: Vec<f64> = all.iter().flat_map(|p| p.alignment().expect("aligned").map(|r| r.iou)).collect();
    let mean = ious.iter().sum::<f64>() / ious.len().max(1) as f64;
    eprintln!("align: {} pairs, mean IoU {mean:.4} -> {}", all.len(), a.out.display());
    Ok(Outcome {
        config: to_json(&config),
        seed: None,
        inputs: vec![a.cohort],
        outputs: vec![a.out.join(ALIGNMENT_REPORT)],
        manifest: a.out.join(RUN_MANIFEST),
    })
}

/// Raw pairs of the cohort, and the pairs the variant consumes: aligned from
/// `aligned` when the variant needs it.
fn load_pairs(cohort: &Path, aligned: Option<&Path>, variant: Variant) -> Result<(SplitPairs, SplitPairs)> {
    let raw = SplitPairs::from_cohort(&load_cohort(cohort, &SplitRule::default())?);
    if !variant.needs_alignment() {
        return Ok((raw.clone(), raw));
    }
    let dir = aligned.ok_or_else(|| Error::Usage(format!("{variant} needs --aligned (output of `align`)")))?;
    let pairs = SplitPairs {
        train: load_aligned(&raw.train, dir)?,
        val: load_aligned(&raw.val, dir)?,
        test: load_aligned(&raw.test, dir)?,
    };
    Ok((raw, pairs))
}

fn render_log(log: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,pairs,steps,mean_loss,val_malignant_auc\n");
    for r in log {
        let metric = r.metric.map_or_else(|| "undefined".to_string(), |m| format!("{m:.6}"));
        let _ = writeln!(out, "{},{},{},{:.6},{metric}", r.epoch, r.pairs, r.steps, r.mean_loss);
    }
    out
}

fn train(a: TrainArgs) -> Result<Outcome> {
    if a.members == 0 || a.epochs == 0 {
        return Err(Error::Usage("--members and --epochs must be at least 1".into()));
    }
    if a.biopsied_per_epoch == Some(0) {
        return Err(Error::Usage("--B must be at least 1".into()));
    }
    let (raw, pairs) = load_pairs(&a.cohort, a.aligned.as_deref(), a.variant)?;
    let rule = a.population.rule();
    let mut config = PipelineConfig::desk(a.pretrain_epochs, a.epochs);
    config.model.variant = a.variant;
    config.pretrain.optimizer = OptimizerConfig::adam(a.pretrain_lr);
    config.pretrain.population_rule = rule;
    config.train.optimizer = OptimizerConfig::adam(a.lr);
    config.train.population_rule = rule;
    config.train.biopsied_per_epoch = a.biopsied_per_epoch;

    let results: Vec<Result<Vec<PathBuf>>> = {
        use rayon::prelude::*;
        (0..a.members)
            .into_par_iter()
            .map(|i| {
                let seed = a.seed + i as u64;
                let (backbone, pretrain_log) = if a.pretrain_epochs > 0 {
                    let (ckpt, log) = pretrain_backbone(&config, &raw, seed)?;
                    (ckpt.to_model()?, log)
                } else {
                    (PairModel::new(config.model.clone(), longview_core::rng::derive(seed, 0))?, vec![])
                };
                let mut bank = FeatureBank::for_model(&backbone);
                let (best, log) = fit_variant(&config, a.variant, &backbone, &pairs, seed, &mut bank)?;
                let ckpt_path = a.out.join(format!("member-{i}.lvck"));
                let log_path = a.out.join(format!("member-{i}.metrics.csv"));
                let pre_path = a.out.join(format!("member-{i}.pretrain.csv"));
                save_checkpoint(&best, &ckpt_path)?;
                error::write(&log_path, render_log(&log).as_bytes())?;
                error::write(&pre_path, render_log(&pretrain_log).as_bytes())?;
                eprintln!("train: member {i} best epoch {} metric {:?}", best.meta.epoch, best.meta.metric);
                Ok(vec![ckpt_path, log_path, pre_path])
            })
            .collect()
    };
    let mut outputs = Vec::new();
    for r in results {
        outputs.extend(r?);
    }
    let mut inputs = vec![a.cohort];
    inputs.extend(a.aligned);
    Ok(Outcome {
        config: json!({ "members": a.members, "pipeline": to_json(&config) }),
        seed: Some(a.seed),
        inputs,
        outputs,
        manifest: a.out.join(RUN_MANIFEST),
    })
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<Outcome> {
    let paths: Vec<PathBuf> = glob::glob(&a.checkpoints)
        .map_err(|e| Error::Usage(format!("bad --checkpoints pattern: {e}")))?
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Usage(format!("unreadable checkpoint path: {e}")))?;
    if paths.is_empty() {
        return Err(Error::Usage(format!("no checkpoints match {:?}", a.checkpoints)));
    }
    let checkpoints = paths.iter().map(|p| load_checkpoint(p)).collect::<Result<Vec<_>>>()?;
    let first = &checkpoints[0].meta.model;
    if let Some((p, c)) = paths.iter().zip(&checkpoints).find(|(_, c)| c.meta.model != *first) {
        return Err(Error::Usage(format!(
            "checkpoints disagree: {} is {} but {} is {}",
            paths[0].display(),
            first.variant,
            p.display(),
            c.meta.model.variant
        )));
    }
    let variant = first.variant;
    let (_, pairs) = load_pairs(&a.cohort, a.aligned.as_deref(), variant)?;
    let members = checkpoints.iter().map(|c| c.to_model()).collect::<std::result::Result<Vec<_>, _>>()?;
    let report = evaluate(&members, &pairs.test, a.population.rule())?;
    emit_report(&report, &a.out)?;
    print!("{}", render_report(&report));
    let mut inputs = vec![a.cohort];
    inputs.extend(a.aligned);
    inputs.extend(paths);
    Ok(Outcome {
        config: json!({ "variant": variant, "members": members.len(), "population_rule": to_json(&a.population.rule()) }),
        seed: None,
        inputs,
        outputs: vec![a.out.clone()],
        manifest: a.out.with_extension("run.json"),
    })
}

fn experiment(a: ExperimentArgs) -> Result<Outcome> {
    let mut config = ExperimentConfig::reference();
    if let Some(n) = a.patients {
        config.synth.n_patients = n;
    }
    if let Some(m) = a.members {
        if m == 0 {
            return Err(Error::Usage("--members must be at least 1".into()));
        }
        config.members = m;
    }
    if let Some(e) = a.epochs {
        config.pipeline.train.epochs = e;
    }
    if let Some(e) = a.pretrain_epochs {
        config.pipeline.pretrain.epochs = e;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(s) = a.cohort_seed {
        config.cohort_seed = s;
    }
    let outcome = run_experiment(&config)?;
    let mut outputs = Vec::new();
    for (variant, report) in &outcome.reports {
        let path = a.out.join(format!("{variant}.csv"));
        emit_report(report, &path)?;
        outputs.push(path);
    }
    for (variant, report) in &outcome.reports {
        eprintln!("{variant}:\n{}", render_report(report));
    }
    Ok(Outcome {
        config: json!({
            "experiment": to_json(&config),
            "pairs": outcome.pairs,
            "alignment_mean_iou": outcome.alignment_mean_iou,
            "timings": outcome.timings,
        }),
        seed: Some(config.seed),
        inputs: vec![],
        outputs,
        manifest: a.out.join(RUN_MANIFEST),
    })
}
