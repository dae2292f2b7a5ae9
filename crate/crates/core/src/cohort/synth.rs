//! Synthetic phantom cohorts.
//!
//! Every patient gets a breast phantom per view (a half ellipse against the
//! chest wall with smooth parenchymal texture, plus a pectoral wedge on MLO
//! views). Exams of one patient render the same anatomy through a small
//! per-image affine jitter. Findings are dome-shaped bright lesions:
//!
//! * malignant lesions grow in radius and intensity from exam to exam,
//! * benign lesions are static,
//! * distractors are static lesions that carry no label.
//!
//! A lesion seen only in the current exam therefore does not reveal whether
//! it is malignant; comparing with the prior does.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::align::AffineTransform;
use crate::error::{invalid, Result};
use crate::image::Image;
use crate::rng::{self, Rng};

use super::{Cohort, Date, Exam, ImageScale, Labels, Side, SplitRule, View, ViewClass};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LesionParams {
    /// Radius in the latest exam, as a fraction of image width.
    pub radius: (f64, f64),
    /// Peak added intensity in the latest exam.
    pub amplitude: (f64, f64),
    /// Per-exam backwards shrink factor of malignant radii; a lesion whose
    /// radius falls below one pixel is absent from that exam.
    pub growth_radius: (f64, f64),
    /// Per-exam backwards factor of malignant amplitudes.
    pub growth_amplitude: (f64, f64),
    /// Probability that a breast carries an unlabeled static distractor.
    pub distractor_fraction: f64,
}

impl Default for LesionParams {
    fn default() -> Self {
        LesionParams {
            radius: (0.07, 0.12),
            amplitude: (0.3, 0.5),
            growth_radius: (0.0, 0.55),
            growth_amplitude: (0.4, 0.7),
            distractor_fraction: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitterParams {
    pub max_rotation_deg: f64,
    pub max_scale_delta: f64,
    /// Fraction of the image size.
    pub max_translation: f64,
}

impl Default for JitterParams {
    fn default() -> Self {
        JitterParams { max_rotation_deg: 4.0, max_scale_delta: 0.04, max_translation: 0.03 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BiopsyRule {
    /// Biopsied iff any benign or malignant label is set on the exam.
    #[default]
    AnyFinding,
    /// Biopsied iff a malignant label is set.
    MalignantOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub exams_per_patient: usize,
    pub image_scale: ImageScale,
    pub lesion: LesionParams,
    /// Fraction of breasts with a malignant finding (exact up to rounding).
    pub malignant_fraction: f64,
    /// Fraction of breasts with a benign finding (exact up to rounding).
    pub benign_fraction: f64,
    pub biopsy_rule: BiopsyRule,
    pub jitter: JitterParams,
    pub split: SplitRule,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 100,
            exams_per_patient: 2,
            image_scale: ImageScale::DESK,
            lesion: LesionParams::default(),
            malignant_fraction: 0.10,
            benign_fraction: 0.12,
            biopsy_rule: BiopsyRule::AnyFinding,
            jitter: JitterParams::default(),
            split: SplitRule::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FindingKind {
    None,
    Benign,
    Malignant,
}

/// Patient-space geometry of one view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anatomy {
    pub height: usize,
    pub width: usize,
    /// Chest wall on the left image edge (right-breast views) or the right edge.
    pub wall_left: bool,
    pub center_y: f64,
    pub semi_x: f64,
    pub semi_y: f64,
    pub base: f64,
    /// (x, y, sigma, amplitude) Gaussian texture bumps.
    pub texture: Vec<(f64, f64, f64, f64)>,
    /// Pectoral wedge (width, height, brightness); zero size on CC views.
    pub pectoral: (f64, f64, f64),
}

/// A lesion as it appears in one exam, in patient-space pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lesion {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub amplitude: f64,
    pub kind: FindingKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExamTruth {
    pub exam_id: String,
    /// Output-to-patient-space map per view.
    pub jitter: [AffineTransform; 4],
    /// Lesions visible in this exam per view; `kind` is `None` for distractors.
    pub lesions: [Vec<Lesion>; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientTruth {
    pub patient_id: String,
    pub anatomy: [Anatomy; 4],
    /// Indexed by [`Side::index`].
    pub findings: [FindingKind; 2],
    pub exams: Vec<ExamTruth>,
}

/// Generated cohort plus the ground truth used to render it.
#[derive(Clone, Debug)]
pub struct SynthCohort {
    pub cohort: Cohort,
    pub truth: Vec<PatientTruth>,
}

fn uniform(rng: &mut Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.gen_range(range.0..range.1)
    } else {
        range.0
    }
}

impl Anatomy {
    fn random(rng: &mut Rng, view: View, scale: ImageScale) -> Self {
        let (h, w) = scale.dims(view.class());
        let (hf, wf) = (h as f64, w as f64);
        let mlo = view.class() == ViewClass::Mlo;
        let center_y = hf * if mlo { uniform(rng, (0.44, 0.52)) } else { uniform(rng, (0.47, 0.53)) };
        let semi_x = wf * uniform(rng, (0.72, 0.86));
        let semi_y = hf * if mlo { uniform(rng, (0.38, 0.44)) } else { uniform(rng, (0.36, 0.42)) };
        let base = uniform(rng, (0.30, 0.42));
        let texture = (0..10)
            .map(|_| {
                (
                    wf * uniform(rng, (0.0, 0.85)),
                    center_y + semi_y * uniform(rng, (-0.9, 0.9)),
                    wf * uniform(rng, (0.06, 0.14)),
                    uniform(rng, (-0.08, 0.08)),
                )
            })
            .collect();
        let pectoral = if mlo { (wf * uniform(rng, (0.22, 0.32)), hf * uniform(rng, (0.3, 0.4)), 0.12) } else { (0.0, 0.0, 0.0) };
        Anatomy { height: h, width: w, wall_left: view.side() == Side::Right, center_y, semi_x, semi_y, base, texture, pectoral }
    }

    /// Distance from the chest wall, in pixels.
    fn depth(&self, x: f64) -> f64 {
        if self.wall_left {
            x + 0.5
        } else {
            self.width as f64 - 0.5 - x
        }
    }

    /// Normalized elliptical radius; the breast occupies `< 1`.
    fn radius_at(&self, x: f64, y: f64) -> f64 {
        let (u, v) = (self.depth(x) / self.semi_x, (y - self.center_y) / self.semi_y);
        if self.depth(x) < 0.0 {
            return f64::INFINITY;
        }
        libm::sqrt(u * u + v * v)
    }

    /// Breast tissue intensity at patient-space point, 0 outside.
    fn tissue(&self, x: f64, y: f64) -> f64 {
        let r = self.radius_at(x, y);
        if r >= 1.0 {
            return 0.0;
        }
        let mut v = self.base * (0.8 + 0.2 * (1.0 - r * r));
        for &(tx, ty, s, a) in &self.texture {
            let (dx, dy) = (x - tx, y - ty);
            v += a * libm::exp(-(dx * dx + dy * dy) / (2.0 * s * s));
        }
        let (pw, ph, pa) = self.pectoral;
        if pw > 0.0 && y < ph {
            let edge = pw * (1.0 - y / ph);
            if self.depth(x) < edge {
                v += pa;
            }
        }
        v.clamp(0.05, 0.95)
    }

    /// A point well inside the breast and off the pectoral wedge.
    fn lesion_site(&self, rng: &mut Rng) -> (f64, f64) {
        loop {
            let r = 0.7 * libm::sqrt(rng.gen::<f64>());
            let phi = rng.gen_range(-core::f64::consts::FRAC_PI_2..core::f64::consts::FRAC_PI_2);
            let (s, c) = libm::sincos(phi);
            let depth = self.semi_x * (0.15 + 0.85 * r * c).max(0.15);
            let y = self.center_y + self.semi_y * r * s;
            let x = if self.wall_left { depth - 0.5 } else { self.width as f64 - 0.5 - depth };
            let (pw, ph, _) = self.pectoral;
            if pw > 0.0 && y < ph && self.depth(x) < pw * (1.0 - y / ph) + 4.0 {
                continue;
            }
            return (x, y);
        }
    }
}

/// Added intensity of a lesion at a patient-space point.
#[inline]
fn lesion_value(l: &Lesion, x: f64, y: f64) -> f64 {
    let (dx, dy) = (x - l.x, y - l.y);
    let q = (dx * dx + dy * dy) / (l.radius * l.radius);
    if q < 1.0 {
        l.amplitude * (1.0 - q)
    } else {
        0.0
    }
}

/// Render one view: output pixel `p` shows the phantom at `jitter(p)`.
pub fn render_view(anatomy: &Anatomy, jitter: &AffineTransform, lesions: &[Lesion]) -> Image {
    Image::from_fn(anatomy.height, anatomy.width, |y, x| {
        let (px, py) = jitter.apply(x as f64, y as f64);
        let t = anatomy.tissue(px, py);
        if t == 0.0 {
            return 0.0;
        }
        let extra: f64 = lesions.iter().map(|l| lesion_value(l, px, py)).sum();
        (t + extra).min(1.0) as f32
    })
}

fn random_jitter(rng: &mut Rng, p: &JitterParams, h: usize, w: usize) -> AffineTransform {
    let angle = uniform(rng, (-p.max_rotation_deg, p.max_rotation_deg)).to_radians();
    let scale = 1.0 + uniform(rng, (-p.max_scale_delta, p.max_scale_delta));
    let dx = uniform(rng, (-p.max_translation, p.max_translation)) * w as f64;
    let dy = uniform(rng, (-p.max_translation, p.max_translation)) * h as f64;
    AffineTransform::similarity_about(angle, scale, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0, dx, dy)
}

/// Assign exactly `round(fraction · n)` breasts to each finding kind.
fn assign_findings(n_breasts: usize, malignant: f64, benign: f64, rng: &mut Rng) -> Vec<FindingKind> {
    let n_mal = libm::round(malignant * n_breasts as f64) as usize;
    let n_ben = (libm::round(benign * n_breasts as f64) as usize).min(n_breasts - n_mal.min(n_breasts));
    let mut kinds = Vec::with_capacity(n_breasts);
    kinds.extend(core::iter::repeat_n(FindingKind::Malignant, n_mal.min(n_breasts)));
    kinds.extend(core::iter::repeat_n(FindingKind::Benign, n_ben));
    kinds.resize(n_breasts, FindingKind::None);
    kinds.shuffle(rng);
    kinds
}

/// Generate a reproducible phantom cohort.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<SynthCohort> {
    if !(0.0..=1.0).contains(&config.malignant_fraction)
        || !(0.0..=1.0).contains(&config.benign_fraction)
        || config.malignant_fraction + config.benign_fraction > 1.0
    {
        return Err(invalid!("finding fractions must be in [0,1] and sum to at most 1"));
    }
    if config.n_patients > 0 && config.exams_per_patient == 0 {
        return Err(invalid!("exams_per_patient must be at least 1"));
    }
    let mut assign_rng = rng::seeded(rng::derive(seed, u64::MAX));
    let findings = assign_findings(2 * config.n_patients, config.malignant_fraction, config.benign_fraction, &mut assign_rng);

    let mut exams = Vec::with_capacity(config.n_patients * config.exams_per_patient);
    let mut truth = Vec::with_capacity(config.n_patients);
    for p in 0..config.n_patients {
        let mut rng = rng::seeded(rng::derive(seed, p as u64));
        let patient_id = format!("P{:05}", p + 1);
        let kinds = [findings[2 * p], findings[2 * p + 1]];
        let (patient_truth, patient_exams) = generate_patient(config, &patient_id, kinds, &mut rng);
        exams.extend(patient_exams);
        truth.push(patient_truth);
    }
    Ok(SynthCohort { cohort: Cohort::from_exams(exams, &config.split)?, truth })
}

fn generate_patient(config: &SynthConfig, patient_id: &str, findings: [FindingKind; 2], rng: &mut Rng) -> (PatientTruth, Vec<Exam>) {
    let anatomy: [Anatomy; 4] = View::ALL.map(|v| Anatomy::random(rng, v, config.image_scale));
    let lp = &config.lesion;
    let k = config.exams_per_patient;

    // Latest-exam lesions per view plus per-breast growth factors.
    let mut finals: [Vec<Lesion>; 4] = Default::default();
    let mut growth = [(1.0, 1.0); 2];
    for side in Side::BOTH {
        let kind = findings[side.index()];
        let width = anatomy[side.views()[0].index()].width as f64;
        if kind != FindingKind::None {
            let radius = uniform(rng, lp.radius) * width;
            let amplitude = uniform(rng, lp.amplitude);
            if kind == FindingKind::Malignant {
                growth[side.index()] = (uniform(rng, lp.growth_radius), uniform(rng, lp.growth_amplitude));
            }
            for v in side.views() {
                let (x, y) = anatomy[v.index()].lesion_site(rng);
                finals[v.index()].push(Lesion { x, y, radius, amplitude, kind });
            }
        }
        if rng.gen::<f64>() < lp.distractor_fraction {
            let radius = uniform(rng, lp.radius) * width;
            let amplitude = uniform(rng, lp.amplitude);
            for v in side.views() {
                let (x, y) = anatomy[v.index()].lesion_site(rng);
                finals[v.index()].push(Lesion { x, y, radius, amplitude, kind: FindingKind::None });
            }
        }
    }

    let start = Date::new(2008, 1, 1).expect("valid").add_days(rng.gen_range(0..5 * 365));
    let mut date = start;
    let mut exams = Vec::with_capacity(k);
    let mut exam_truths = Vec::with_capacity(k);
    for e in 0..k {
        if e > 0 {
            date = date.add_days(rng.gen_range(330..400));
        }
        let back = (k - 1 - e) as i32;
        let mut labels = Labels::default();
        let mut lesions: [Vec<Lesion>; 4] = Default::default();
        for v in View::ALL {
            let side = v.side();
            for l in &finals[v.index()] {
                let mut l = *l;
                if l.kind == FindingKind::Malignant {
                    let (gr, ga) = growth[side.index()];
                    l.radius *= libm::pow(gr, back as f64);
                    l.amplitude *= libm::pow(ga, back as f64);
                    if l.radius < 1.0 {
                        continue;
                    }
                }
                lesions[v.index()].push(l);
            }
        }
        for side in Side::BOTH {
            let visible = |kind| side.views().iter().any(|v| lesions[v.index()].iter().any(|l| l.kind == kind));
            let (benign, malignant) = (visible(FindingKind::Benign), visible(FindingKind::Malignant));
            match side {
                Side::Left => (labels.benign_left, labels.malignant_left) = (benign, malignant),
                Side::Right => (labels.benign_right, labels.malignant_right) = (benign, malignant),
            }
        }
        let biopsied = match config.biopsy_rule {
            BiopsyRule::AnyFinding => labels.any(),
            BiopsyRule::MalignantOnly => labels.malignant_left || labels.malignant_right,
        };
        let jitter: [AffineTransform; 4] =
            View::ALL.map(|v| random_jitter(rng, &config.jitter, anatomy[v.index()].height, anatomy[v.index()].width));
        let images = View::ALL.map(|v| render_view(&anatomy[v.index()], &jitter[v.index()], &lesions[v.index()]));
        let exam_id = format!("{patient_id}-E{}", e + 1);
        exams.push(Exam { patient_id: patient_id.into(), exam_id: exam_id.clone(), date, images, labels, biopsied });
        exam_truths.push(ExamTruth { exam_id, jitter, lesions });
    }
    (PatientTruth { patient_id: patient_id.into(), anatomy, findings, exams: exam_truths }, exams)
}
