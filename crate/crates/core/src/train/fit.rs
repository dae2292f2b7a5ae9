use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cohort::{slice_population, epoch_sample_indices, ExamPair, Population, PopulationRule, Side, View};
use crate::error::{invalid, Error, Result};
use crate::eval::auc;
use crate::nets::{BreastPredictions, HeadOutput, PairModel, Prediction, Variant};
use crate::rng;
use crate::tensor::{Gradients, Graph};

use super::checkpoint::outranks;
use super::{optimizer_step, pair_loss, Checkpoint, FeatureBank, OptimizerConfig, OptimizerState};

/// Which per-epoch checkpoints a run keeps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Retention {
    #[default]
    BestAndLast,
    BestOnly,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Biopsied pairs per epoch; `None` uses every biopsied training pair.
    pub biopsied_per_epoch: Option<usize>,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub freeze_backbone: bool,
    pub variant: Variant,
    /// Pairs whose gradients are averaged into one update.
    pub accumulate: usize,
    pub population_rule: PopulationRule,
    pub retention: Retention,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 70,
            biopsied_per_epoch: None,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            freeze_backbone: true,
            variant: Variant::AlignLocalCompare,
            accumulate: 1,
            population_rule: PopulationRule::ExamLevel,
            retention: Retention::BestAndLast,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid!("epochs must be at least 1"));
        }
        if self.biopsied_per_epoch == Some(0) {
            return Err(invalid!("biopsied pairs per epoch must be at least 1"));
        }
        if self.accumulate == 0 {
            return Err(invalid!("accumulate must be at least 1"));
        }
        if !(self.optimizer.learning_rate.is_finite() && self.optimizer.learning_rate > 0.0) {
            return Err(invalid!("learning rate must be positive, got {}", self.optimizer.learning_rate));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub pairs: usize,
    pub steps: usize,
    pub mean_loss: f64,
    pub metric: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub log: Vec<EpochRecord>,
    /// Retained checkpoints in epoch order.
    pub checkpoints: Vec<Checkpoint>,
    pub best: Checkpoint,
    pub model: PairModel<f32>,
    pub steps: usize,
}

fn pair_gradients(model: &PairModel<f32>, pair: &ExamPair, bank: Option<&FeatureBank<f32>>) -> Result<(f64, Gradients<f32>)> {
    let mut g = Graph::with_params(model.params());
    let mut outputs: [Option<HeadOutput>; 4] = [None; 4];
    for v in View::ALL {
        let out = match bank {
            Some(bank) => {
                let (p, c) = bank.pair_features(model, pair, v)?;
                let p = p.map(|t| g.input(t.clone()));
                let c = g.input(c.clone());
                model.forward_features(&mut g, p, c)?
            }
            None => model.forward_images(&mut g, Some(pair.prior().image(v)), pair.current().image(v))?,
        };
        outputs[v.index()] = Some(out);
    }
    let loss = pair_loss(&mut g, &outputs.map(|o| o.expect("all views")), pair.labels())?;
    let value = g.value(loss).item()? as f64;
    if !value.is_finite() {
        return Err(Error::NonFinite(alloc::format!("loss on pair {}", pair.id())));
    }
    Ok((value, g.backward(loss)?))
}

/// Breast-level predictions, through `bank` when given.
pub fn predict_pair_cached(model: &PairModel<f32>, pair: &ExamPair, bank: Option<&mut FeatureBank<f32>>) -> Result<BreastPredictions> {
    let Some(bank) = bank else { return model.predict_pair(pair) };
    if model.variant().needs_alignment() && !pair.is_aligned() {
        return Err(invalid!("{} expects an aligned pair, got {}", model.variant(), pair.id()));
    }
    bank.fill(model, core::slice::from_ref(pair))?;
    let mut views = [Prediction::default(); 4];
    for v in View::ALL {
        let (p, c) = bank.pair_features(model, pair, v)?;
        views[v.index()] = model.predict_features(p, c)?;
    }
    Ok(BreastPredictions::from_views(views))
}

/// Malignant AUC over the breasts of `pairs`; `None` when one class is absent.
pub fn validation_metric(model: &PairModel<f32>, pairs: &[ExamPair], mut bank: Option<&mut FeatureBank<f32>>) -> Result<Option<f64>> {
    let mut scores = Vec::with_capacity(2 * pairs.len());
    let mut truth = Vec::with_capacity(2 * pairs.len());
    for pair in pairs {
        let pred = predict_pair_cached(model, pair, bank.as_deref_mut())?;
        for side in Side::BOTH {
            scores.push(pred.breast(side).malignant);
            truth.push(pair.labels().malignant(side));
        }
    }
    match auc(&scores, &truth) {
        Ok(a) => Ok(Some(a)),
        Err(Error::AucUndefined) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Fit the fixed representation standardization to every view of `pairs`
/// under the model's current parameters.
pub fn fit_standardizer(model: &mut PairModel<f32>, pairs: &[ExamPair], mut bank: Option<&mut FeatureBank<f32>>) -> Result<()> {
    if pairs.is_empty() {
        return Err(invalid!("cannot fit a standardizer on no pairs"));
    }
    if let Some(bank) = bank.as_deref_mut() {
        bank.fill(model, pairs)?;
    }
    let d = model.config().representation_dim();
    let (mut sum, mut sq) = (alloc::vec![0.0; d], alloc::vec![0.0; d]);
    let mut n = 0usize;
    for pair in pairs {
        for view in View::ALL {
            let rep = match bank.as_deref() {
                Some(bank) => {
                    let (prior, current) = bank.pair_features(model, pair, view)?;
                    model.representation_value(prior, current)?
                }
                None => {
                    let current = model.image_features(pair.current().image(view))?;
                    let prior = match model.variant().uses_prior() {
                        true => Some(model.image_features(pair.prior().image(view))?),
                        false => None,
                    };
                    model.representation_value(prior.as_ref(), &current)?
                }
            };
            for ((s, q), r) in sum.iter_mut().zip(&mut sq).zip(rep) {
                *s += r;
                *q += r * r;
            }
            n += 1;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let var: Vec<f64> = sq.iter().zip(&mean).map(|(q, m)| (q / n as f64 - m * m).max(0.0)).collect();
    model.set_standardizer(&mean, &var)
}

/// Train `model` on balanced epochs of `train_pairs`, validating on the
/// biopsied slice of `val_pairs` after every epoch.
///
/// With a feature bank the backbone must be frozen; the bank supplies (and
/// caches) backbone outputs so only the comparison layers and head run.
pub fn train(
    mut model: PairModel<f32>,
    train_pairs: &[ExamPair],
    val_pairs: &[ExamPair],
    config: &TrainConfig,
    mut bank: Option<&mut FeatureBank<f32>>,
) -> Result<TrainRun> {
    config.validate()?;
    if model.variant() != config.variant {
        return Err(invalid!("model is {} but the training config asks for {}", model.variant(), config.variant));
    }
    model.set_backbone_frozen(config.freeze_backbone);
    if let Some(bank) = bank.as_deref() {
        if !config.freeze_backbone {
            return Err(invalid!("cached features require a frozen backbone"));
        }
        bank.check(&model)?;
    }
    if config.variant.needs_alignment() {
        if let Some(p) = train_pairs.iter().chain(val_pairs).find(|p| !p.is_aligned()) {
            return Err(invalid!("{} expects aligned pairs, got {}", config.variant, p.id()));
        }
    }
    let flags = config.population_rule.biopsied_flags(train_pairs);
    let b = match config.biopsied_per_epoch {
        Some(b) => b,
        None => flags.iter().filter(|&&f| f).count(),
    };
    if b == 0 {
        return Err(invalid!("training pairs contain no biopsied pairs"));
    }
    let val = slice_population(val_pairs, Population::Biopsied, config.population_rule);
    if model.head_ids().norm.is_some() {
        fit_standardizer(&mut model, train_pairs, bank.as_deref_mut())?;
    }

    let mut state = OptimizerState::new();
    let mut log = Vec::with_capacity(config.epochs);
    let mut kept: Vec<Checkpoint> = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut steps = 0;
    model.params_mut().zero_grad();
    for epoch in 1..=config.epochs {
        let order = epoch_sample_indices(&flags, b, rng::derive(config.seed, epoch as u64))?;
        if let Some(bank) = bank.as_deref_mut() {
            let sample: Vec<ExamPair> = order.iter().map(|&i| train_pairs[i].clone()).collect();
            bank.fill(&model, &sample)?;
        }
        let mut loss_sum = 0.0;
        let mut pending = 0;
        let epoch_steps = steps;
        for (k, &i) in order.iter().enumerate() {
            let (loss, grads) = pair_gradients(&model, &train_pairs[i], bank.as_deref())?;
            loss_sum += loss;
            model.params_mut().accumulate(&grads)?;
            pending += 1;
            if pending == config.accumulate || k + 1 == order.len() {
                optimizer_step(model.params_mut(), &mut state, &config.optimizer, 1.0 / pending as f64)?;
                model.params_mut().zero_grad();
                steps += 1;
                pending = 0;
            }
        }
        let metric = validation_metric(&model, &val, bank.as_deref_mut())?;
        log.push(EpochRecord {
            epoch,
            pairs: order.len(),
            steps: steps - epoch_steps,
            mean_loss: loss_sum / order.len() as f64,
            metric,
        });
        let ckpt = Checkpoint::capture(&model, Some(config.clone()), epoch, metric);
        if best.as_ref().map_or(true, |b| outranks(&ckpt.meta, &b.meta)) {
            best = Some(ckpt.clone());
        }
        match config.retention {
            Retention::All => kept.push(ckpt),
            Retention::BestOnly => {}
            Retention::BestAndLast if epoch == config.epochs => kept.push(ckpt),
            Retention::BestAndLast => {}
        }
    }
    let best = best.expect("at least one epoch");
    match config.retention {
        Retention::All => {}
        Retention::BestOnly => kept = alloc::vec![best.clone()],
        Retention::BestAndLast => {
            if kept.first().map(|c| c.meta.epoch) != Some(best.meta.epoch) {
                kept.insert(0, best.clone());
            }
        }
    }
    Ok(TrainRun { log, checkpoints: kept, best, model, steps })
}
