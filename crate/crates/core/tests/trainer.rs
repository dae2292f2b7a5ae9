use std::sync::Arc;

use longview_core::cohort::{Date, Exam, ExamPair, Labels, View};
use longview_core::error::Error;
use longview_core::image::Image;
use longview_core::nets::{BackboneConfig, PairModel, PairModelConfig, Variant, BACKBONE_PREFIX};
use longview_core::rng::seeded;
use longview_core::tensor::{Graph, Tensor};
use longview_core::train::{
    loss_for_pair, select_best, train, Checkpoint, CheckpointMeta, FeatureBank, OptimizerConfig, Retention, TrainConfig,
};
use rand::Rng as _;

fn tiny(variant: Variant, standardize: bool) -> PairModelConfig {
    PairModelConfig {
        variant,
        backbone: BackboneConfig { stem_channels: 2, channels: vec![4, 4], blocks: vec![1, 1], strides: vec![2, 2], zero_init_residual: false },
        hidden_dim: 8,
        freeze_backbone: true,
        standardize,
    }
}

fn noisy(level: f32, seed: u64) -> Image {
    let mut rng = seeded(seed);
    Image::from_fn(12, 10, |_, _| level + rng.gen_range(0.0f32..0.1))
}

/// Patients with two exams; the first `sick` patients have a bright left
/// breast and a malignant left label on the later exam.
fn toy_pairs(patients: usize, sick: usize) -> Vec<ExamPair> {
    (0..patients)
        .map(|i| {
            let exam = |k: usize, labels: Labels| {
                let left = if labels.malignant_left { 0.9 } else { 0.2 };
                let seed = (i * 2 + k) as u64 * 4;
                Exam {
                    patient_id: format!("P{i:03}"),
                    exam_id: format!("P{i:03}-{k}"),
                    date: Date::new(2015, 6, 1).unwrap().add_days(400 * k as i64),
                    images: std::array::from_fn(|v| {
                        let level = if View::ALL[v].side() == longview_core::cohort::Side::Left { left } else { 0.2 };
                        noisy(level, seed + v as u64)
                    }),
                    biopsied: labels.any(),
                    labels,
                }
            };
            let current = Labels { malignant_left: i < sick, ..Labels::default() };
            ExamPair::new(Arc::new(exam(0, Labels::default())), Arc::new(exam(1, current))).unwrap()
        })
        .collect()
}

fn config(epochs: usize, b: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        biopsied_per_epoch: Some(b),
        optimizer: OptimizerConfig::adam(1e-2),
        seed,
        variant: Variant::GlobalCompare,
        retention: Retention::All,
        ..TrainConfig::default()
    }
}

fn loss_value(model: &PairModel<f64>, pair: &ExamPair) -> f64 {
    let mut g = Graph::with_params(model.params());
    let l = loss_for_pair(model, &mut g, pair).unwrap();
    g.value(l).item().unwrap()
}

#[test]
fn loss_of_uninformative_heads_is_ln_2() {
    let mut model = PairModel::<f64>::new(tiny(Variant::GlobalCompare, false), 1).unwrap();
    let ids = *model.head_ids();
    for id in [ids.benign.0, ids.benign.1, ids.malignant.0, ids.malignant.1] {
        let shape = model.params().value(id).shape().to_vec();
        model.params_mut().get_mut(id).value = Tensor::zeros(&shape);
    }
    let pair = &toy_pairs(2, 1)[0];
    assert!((loss_value(&model, pair) - 2f64.ln()).abs() < 1e-12);

    // Saturated "absent" predictions on an all-negative pair.
    for (_, b) in [ids.benign, ids.malignant] {
        model.params_mut().get_mut(b).value = Tensor::from_f64(&[2], &[60.0, -60.0]).unwrap();
    }
    let healthy = &toy_pairs(2, 1)[1];
    assert!(loss_value(&model, healthy) <= -(1.0 - 1e-12f64).ln());
}

#[test]
fn loss_matches_hand_summed_cross_entropy() {
    let model = PairModel::<f64>::new(tiny(Variant::GlobalCompare, false), 5).unwrap();
    let pair = &toy_pairs(3, 1)[0];
    let labels = pair.labels();
    let mut total = 0.0;
    for v in View::ALL {
        let p = model.predict_view(pair.prior().image(v), pair.current().image(v)).unwrap();
        let side = v.side();
        let pick = |prob: f64, present: bool| if present { prob } else { 1.0 - prob };
        total -= pick(p.benign, labels.benign(side)).ln();
        total -= pick(p.malignant, labels.malignant(side)).ln();
    }
    let oracle = total / 8.0;
    assert!((loss_value(&model, pair) - oracle).abs() < 1e-10, "{} vs {oracle}", loss_value(&model, pair));
}

fn run(seed: u64, epochs: usize, b: usize, pairs: &[ExamPair]) -> longview_core::train::TrainRun {
    let model = PairModel::<f32>::new(tiny(Variant::GlobalCompare, true), 3).unwrap();
    let mut bank = FeatureBank::for_model(&model);
    train(model, pairs, pairs, &config(epochs, b, seed), Some(&mut bank)).unwrap()
}

#[test]
fn one_epoch_takes_two_b_steps() {
    let pairs = toy_pairs(20, 5);
    let r = run(0, 1, 4, &pairs);
    assert_eq!(r.steps, 8);
    assert_eq!(r.log.len(), 1);
    assert_eq!((r.log[0].pairs, r.log[0].steps), (8, 8));
}

#[test]
fn training_is_deterministic_and_leaves_the_frozen_backbone_alone() {
    let pairs = toy_pairs(20, 5);
    let (a, b) = (run(9, 3, 5, &pairs), run(9, 3, 5, &pairs));
    let bits = |c: &Checkpoint| c.params.iter().flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits())).collect::<Vec<_>>();
    assert_eq!(a.checkpoints.len(), 3);
    for (x, y) in a.checkpoints.iter().zip(&b.checkpoints) {
        assert_eq!(bits(x), bits(y));
        assert_eq!(x.meta, y.meta);
    }
    let start = PairModel::<f32>::new(tiny(Variant::GlobalCompare, true), 3).unwrap();
    let backbone = |params: Vec<(String, Tensor<f32>)>| {
        params.into_iter().filter(|(n, _)| n.starts_with(BACKBONE_PREFIX)).collect::<Vec<_>>()
    };
    assert_eq!(backbone(start.params().named_values()), backbone(a.model.params().named_values()));
    assert_ne!(start.params().named_values(), a.model.params().named_values());
    let c = run(10, 3, 5, &pairs);
    assert_ne!(bits(&a.best), bits(&c.best));
}

#[test]
fn loss_halves_on_a_separable_cohort() {
    let pairs = toy_pairs(24, 8);
    let r = run(4, 10, 8, &pairs);
    let (first, last) = (r.log[0].mean_loss, r.log[9].mean_loss);
    assert!(last <= 0.5 * first, "loss {first} -> {last}");
    assert_eq!(r.best.meta.metric, Some(1.0));
}

#[test]
fn non_finite_input_aborts_training() {
    let mut pairs = toy_pairs(10, 3);
    let mut bad = (**pairs[0].current()).clone();
    bad.images[0] = Image::from_fn(12, 10, |_, _| f32::NAN);
    pairs[0] = ExamPair::new(pairs[0].prior().clone(), Arc::new(bad)).unwrap();
    let model = PairModel::<f32>::new(tiny(Variant::GlobalCompare, false), 3).unwrap();
    let cfg = TrainConfig { biopsied_per_epoch: None, ..config(1, 1, 0) };
    let err = train(model, &pairs, &pairs, &TrainConfig { freeze_backbone: false, ..cfg }, None).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)), "{err}");
}

#[test]
fn config_errors() {
    let pairs = toy_pairs(6, 2);
    let model = PairModel::<f32>::new(tiny(Variant::GlobalCompare, false), 3).unwrap();
    assert!(train(model.clone(), &pairs, &pairs, &config(0, 1, 0), None).is_err());
    assert!(train(model.clone(), &pairs, &pairs, &config(1, 0, 0), None).is_err());
    let wrong = TrainConfig { variant: Variant::SingleBaseline, ..config(1, 1, 0) };
    assert!(train(model.clone(), &pairs, &pairs, &wrong, None).is_err());
    let local = PairModel::<f32>::new(tiny(Variant::AlignLocalCompare, false), 3).unwrap();
    let cfg = TrainConfig { variant: Variant::AlignLocalCompare, ..config(1, 1, 0) };
    assert!(train(local, &pairs, &pairs, &cfg, None).is_err(), "unaligned pairs");
    let healthy = toy_pairs(6, 0);
    assert!(train(model, &healthy, &healthy, &TrainConfig { biopsied_per_epoch: None, ..config(1, 1, 0) }, None).is_err());
}

fn meta(epoch: usize, metric: f64) -> Checkpoint {
    Checkpoint {
        meta: CheckpointMeta { model: PairModelConfig::desk(Variant::GlobalCompare), train: None, epoch, metric: Some(metric) },
        params: Vec::new(),
    }
}

#[test]
fn select_best_examples() {
    let cs = [meta(1, 0.6), meta(2, 0.8), meta(3, 0.7)];
    assert_eq!(select_best(&cs).unwrap().meta.epoch, 2);
    let tied = [meta(1, 0.5), meta(2, 0.5), meta(3, 0.5)];
    assert_eq!(select_best(&tied).unwrap().meta.epoch, 1);
    assert_eq!(select_best(&cs[..1]).unwrap(), &cs[0]);
    assert!(select_best(&[]).is_err());
}
