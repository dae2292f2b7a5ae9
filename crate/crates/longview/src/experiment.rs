//! End-to-end pipeline: synthetic cohort, alignment, backbone pretraining,
//! frozen-backbone pair training for each variant, ensemble evaluation.
//!
//! Members run in parallel; every member is a pure function of its seed and
//! the shared cohort, so results do not depend on the thread count.

use std::collections::BTreeSet;
use std::time::Instant;

use longview_core::align::{align_pair, AlignConfig, NccConfig};
use longview_core::cohort::synth::{synth_generate, SynthConfig};
use longview_core::cohort::{Cohort, ExamPair, PopulationRule, Split};
use longview_core::eval::{evaluate_scores, score_pairs, EvalReport, ScoredBreast};
use longview_core::nets::{PairModel, PairModelConfig, Variant};
use longview_core::rng::derive;
use longview_core::train::{train, Checkpoint, EpochRecord, FeatureBank, OptimizerConfig, Retention, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Pairs of every split, as generated by the cohort's pairing rules.
#[derive(Clone, Debug, Default)]
pub struct SplitPairs {
    pub train: Vec<ExamPair>,
    pub val: Vec<ExamPair>,
    pub test: Vec<ExamPair>,
}

impl SplitPairs {
    pub fn from_cohort(cohort: &Cohort) -> Self {
        SplitPairs { train: cohort.pairs(Split::Train), val: cohort.pairs(Split::Val), test: cohort.pairs(Split::Test) }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> impl Iterator<Item = &ExamPair> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }

    /// Align every pair, in parallel, preserving order.
    pub fn aligned(&self, config: &AlignConfig) -> Result<SplitPairs> {
        let go = |ps: &[ExamPair]| -> Result<Vec<ExamPair>> {
            ps.par_iter().map(|p| align_pair(p, config).map_err(Into::into)).collect()
        };
        Ok(SplitPairs { train: go(&self.train)?, val: go(&self.val)?, test: go(&self.test)? })
    }
}

/// Model and optimization settings shared by every member.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Backbone and head layout; the variant field is replaced per run.
    pub model: PairModelConfig,
    /// Single-image training of the backbone before it is frozen.
    pub pretrain: TrainConfig,
    /// Pair training on top of the frozen backbone.
    pub train: TrainConfig,
}

impl PipelineConfig {
    pub fn desk(pretrain_epochs: usize, epochs: usize) -> Self {
        PipelineConfig {
            model: PairModelConfig::desk(Variant::SingleBaseline),
            pretrain: TrainConfig {
                epochs: pretrain_epochs,
                variant: Variant::SingleBaseline,
                freeze_backbone: false,
                retention: Retention::BestOnly,
                ..TrainConfig::default()
            },
            train: TrainConfig { epochs, retention: Retention::BestOnly, ..TrainConfig::default() },
        }
    }

    pub fn population_rule(&self) -> PopulationRule {
        self.train.population_rule
    }
}

/// Everything one member produced for one variant.
#[derive(Clone, Debug)]
pub struct VariantRun {
    pub variant: Variant,
    pub log: Vec<EpochRecord>,
    pub best: Checkpoint,
    pub test_scores: Vec<ScoredBreast>,
}

#[derive(Clone, Debug)]
pub struct MemberRun {
    pub member: usize,
    pub seed: u64,
    pub pretrain_log: Vec<EpochRecord>,
    pub backbone: Checkpoint,
    pub runs: Vec<VariantRun>,
}

fn variant_slot(v: Variant) -> u64 {
    Variant::ALL.iter().position(|&x| x == v).expect("listed") as u64
}

/// Train a SingleBaseline model with a trainable backbone; the best
/// validation checkpoint supplies the backbone.
pub fn pretrain_backbone(config: &PipelineConfig, pairs: &SplitPairs, seed: u64) -> Result<(Checkpoint, Vec<EpochRecord>)> {
    let model_cfg = PairModelConfig { variant: Variant::SingleBaseline, freeze_backbone: false, ..config.model.clone() };
    let model = PairModel::new(model_cfg, derive(seed, 0))?;
    let cfg = TrainConfig { variant: Variant::SingleBaseline, freeze_backbone: false, seed: derive(seed, 1), ..config.pretrain.clone() };
    let run = train(model, &pairs.train, &pairs.val, &cfg, None)?;
    Ok((run.best, run.log))
}

/// Train one variant on a frozen `backbone`, caching backbone features in
/// `bank`. Returns the best validation checkpoint and the epoch log.
pub fn fit_variant(
    config: &PipelineConfig,
    variant: Variant,
    backbone: &PairModel<f32>,
    pairs: &SplitPairs,
    seed: u64,
    bank: &mut FeatureBank<f32>,
) -> Result<(Checkpoint, Vec<EpochRecord>)> {
    let slot = variant_slot(variant);
    let model_cfg = PairModelConfig { variant, freeze_backbone: true, ..config.model.clone() };
    let mut model = PairModel::new(model_cfg, derive(seed, 10 + slot))?;
    model.load_backbone(backbone.params())?;
    let cfg = TrainConfig { variant, freeze_backbone: true, seed: derive(seed, 20 + slot), ..config.train.clone() };
    let run = train(model, &pairs.train, &pairs.val, &cfg, Some(bank))?;
    Ok((run.best, run.log))
}

/// [`fit_variant`], then score the test pairs with the best checkpoint.
pub fn train_variant(
    config: &PipelineConfig,
    variant: Variant,
    backbone: &PairModel<f32>,
    pairs: &SplitPairs,
    seed: u64,
    bank: &mut FeatureBank<f32>,
) -> Result<VariantRun> {
    let (best, log) = fit_variant(config, variant, backbone, pairs, seed, bank)?;
    let test_scores = score_pairs(&best.to_model()?, &pairs.test, Some(bank))?;
    Ok(VariantRun { variant, log, best, test_scores })
}

/// Pretrain one backbone and train each variant on it.
///
/// `aligned` must be given when a variant needs aligned pairs.
pub fn run_member(
    config: &PipelineConfig,
    variants: &[Variant],
    member: usize,
    seed: u64,
    raw: &SplitPairs,
    aligned: Option<&SplitPairs>,
) -> Result<MemberRun> {
    let (backbone, pretrain_log) = pretrain_backbone(config, raw, seed)?;
    let backbone_model = backbone.to_model()?;
    let mut bank = FeatureBank::for_model(&backbone_model);
    let mut runs = Vec::with_capacity(variants.len());
    for &variant in variants {
        let pairs = if variant.needs_alignment() {
            aligned.ok_or_else(|| crate::Error::Usage(format!("{variant} needs aligned pairs")))?
        } else {
            raw
        };
        runs.push(train_variant(config, variant, &backbone_model, pairs, seed, &mut bank)?);
    }
    Ok(MemberRun { member, seed, pretrain_log, backbone, runs })
}

/// Ids of the test pairs in the biopsied population.
pub fn biopsied_ids(pairs: &[ExamPair], rule: PopulationRule) -> BTreeSet<String> {
    pairs.iter().zip(rule.biopsied_flags(pairs)).filter(|(_, f)| *f).map(|(p, _)| p.id()).collect()
}

/// Ensemble report of one variant over all members.
pub fn variant_report(members: &[MemberRun], variant: Variant, test: &[ExamPair], rule: PopulationRule) -> Result<EvalReport> {
    let scores: Vec<Vec<ScoredBreast>> = members
        .iter()
        .map(|m| m.runs.iter().find(|r| r.variant == variant).map(|r| r.test_scores.clone()))
        .collect::<Option<_>>()
        .ok_or_else(|| crate::Error::Usage(format!("no runs for {variant}")))?;
    Ok(evaluate_scores(&scores, &biopsied_ids(test, rule))?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub cohort_seed: u64,
    pub align: AlignConfig,
    pub pipeline: PipelineConfig,
    pub members: usize,
    /// Member `i` uses seed `seed + i`.
    pub seed: u64,
    pub variants: Vec<Variant>,
}

impl ExperimentConfig {
    /// The reference synthetic experiment: 800 patients with two exams each
    /// at desk scale, five members per variant.
    pub fn reference() -> Self {
        ExperimentConfig {
            synth: SynthConfig { n_patients: 800, exams_per_patient: 2, ..SynthConfig::default() },
            cohort_seed: 20_240_501,
            align: AlignConfig { ncc: NccConfig { stride: 2, ..NccConfig::default() }, ..AlignConfig::default() },
            pipeline: PipelineConfig {
                pretrain: TrainConfig { optimizer: OptimizerConfig::adam(1e-3), ..PipelineConfig::desk(3, 30).pretrain },
                ..PipelineConfig::desk(3, 30)
            },
            members: 5,
            seed: 1,
            variants: Variant::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub pairs: (usize, usize, usize),
    pub alignment_mean_iou: f64,
    pub members: Vec<MemberRun>,
    pub reports: Vec<(Variant, EvalReport)>,
    /// Wall-clock seconds per stage.
    pub timings: Vec<(String, f64)>,
}

impl ExperimentOutcome {
    pub fn report(&self, variant: Variant) -> Option<&EvalReport> {
        self.reports.iter().find(|(v, _)| *v == variant).map(|(_, r)| r)
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut Vec<(String, f64)>| {
        timings.push((name.to_string(), clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };
    let synth = synth_generate(&config.synth, config.cohort_seed)?;
    let raw = SplitPairs::from_cohort(&synth.cohort);
    lap("synth", &mut timings);
    let need_align = config.variants.iter().any(|v| v.needs_alignment());
    let aligned = if need_align { Some(raw.aligned(&config.align)?) } else { None };
    let alignment_mean_iou = aligned
        .as_ref()
        .map(|a| {
            let ious: Vec<f64> = a.all().flat_map(|p| p.alignment().expect("aligned").map(|r| r.iou)).collect();
            ious.iter().sum::<f64>() / ious.len().max(1) as f64
        })
        .unwrap_or(f64::NAN);
    lap("align", &mut timings);
    let members: Vec<MemberRun> = (0..config.members)
        .into_par_iter()
        .map(|m| run_member(&config.pipeline, &config.variants, m, config.seed + m as u64, &raw, aligned.as_ref()))
        .collect::<Result<_>>()?;
    lap("train", &mut timings);
    let rule = config.pipeline.population_rule();
    let reports = config
        .variants
        .iter()
        .map(|&v| Ok((v, variant_report(&members, v, &raw.test, rule)?)))
        .collect::<Result<Vec<_>>>()?;
    lap("evaluate", &mut timings);
    Ok(ExperimentOutcome {
        config: config.clone(),
        pairs: (raw.train.len(), raw.val.len(), raw.test.len()),
        alignment_mean_iou,
        members,
        reports,
        timings,
    })
}
