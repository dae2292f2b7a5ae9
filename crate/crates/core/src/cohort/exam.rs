use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::align::AlignmentResult;
use crate::error::{Error, Result};
use crate::image::Image;

use super::pairing::{generate_test_pairs, generate_train_pairs};
use super::{Date, Side, View};

/// Presence of benign / malignant findings per breast.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Labels {
    pub benign_left: bool,
    pub malignant_left: bool,
    pub benign_right: bool,
    pub malignant_right: bool,
}

impl Labels {
    pub fn benign(&self, side: Side) -> bool {
        match side {
            Side::Left => self.benign_left,
            Side::Right => self.benign_right,
        }
    }

    pub fn malignant(&self, side: Side) -> bool {
        match side {
            Side::Left => self.malignant_left,
            Side::Right => self.malignant_right,
        }
    }

    pub fn any(&self) -> bool {
        self.benign_left || self.malignant_left || self.benign_right || self.malignant_right
    }
}

/// One screening exam: four views with labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Exam {
    pub patient_id: String,
    pub exam_id: String,
    pub date: Date,
    /// Indexed by [`View::index`].
    pub images: [Image; 4],
    pub labels: Labels,
    pub biopsied: bool,
}

impl Exam {
    pub fn image(&self, view: View) -> &Image {
        &self.images[view.index()]
    }
}

/// A chronologically ordered (prior, current) pair of one patient's exams.
#[derive(Clone, Debug)]
pub struct ExamPair {
    prior: Arc<Exam>,
    current: Arc<Exam>,
    alignment: Option<Arc<[AlignmentResult; 4]>>,
}

impl ExamPair {
    pub fn new(prior: Arc<Exam>, current: Arc<Exam>) -> Result<Self> {
        if prior.patient_id != current.patient_id {
            return Err(Error::Invariant(alloc::format!(
                "pair mixes patients {} and {}",
                prior.patient_id,
                current.patient_id
            )));
        }
        if prior.date >= current.date {
            return Err(Error::Invariant(alloc::format!(
                "prior exam {} ({}) is not earlier than current exam {} ({})",
                prior.exam_id,
                prior.date,
                current.exam_id,
                current.date
            )));
        }
        Ok(ExamPair { prior, current, alignment: None })
    }

    /// Replace the prior exam by its aligned version, keeping the per-view results.
    ///
    /// The aligned exam must keep the prior's identity (patient, exam id, date);
    /// image sizes must match the current exam view by view.
    pub fn with_aligned_prior(&self, prior: Exam, results: [AlignmentResult; 4]) -> Result<Self> {
        let old = &self.prior;
        if prior.patient_id != old.patient_id || prior.exam_id != old.exam_id || prior.date != old.date {
            return Err(Error::InvalidArgument(alloc::format!(
                "aligned exam {} does not replace prior {}",
                prior.exam_id,
                old.exam_id
            )));
        }
        for v in View::ALL {
            let (a, b) = (prior.image(v), self.current.image(v));
            if (a.height(), a.width()) != (b.height(), b.width()) {
                return Err(Error::Shape(alloc::format!(
                    "aligned {v} of {} is {}x{}, current is {}x{}",
                    prior.exam_id,
                    a.height(),
                    a.width(),
                    b.height(),
                    b.width()
                )));
            }
        }
        Ok(ExamPair { prior: Arc::new(prior), current: self.current.clone(), alignment: Some(Arc::new(results)) })
    }

    pub fn prior(&self) -> &Arc<Exam> {
        &self.prior
    }

    pub fn current(&self) -> &Arc<Exam> {
        &self.current
    }

    pub fn patient_id(&self) -> &str {
        &self.current.patient_id
    }

    /// Per-view alignment results when the prior has been aligned.
    pub fn alignment(&self) -> Option<&[AlignmentResult; 4]> {
        self.alignment.as_deref()
    }

    pub fn is_aligned(&self) -> bool {
        self.alignment.is_some()
    }

    /// `"<prior exam id>><current exam id>"`.
    pub fn id(&self) -> String {
        alloc::format!("{}>{}", self.prior.exam_id, self.current.exam_id)
    }

    /// Labels the model is trained and scored on: those of the current exam.
    pub fn labels(&self) -> &Labels {
        &self.current.labels
    }
}

impl PartialEq for ExamPair {
    fn eq(&self, other: &Self) -> bool {
        self.prior.exam_id == other.prior.exam_id
            && self.current.exam_id == other.current.exam_id
            && self.prior.patient_id == other.prior.patient_id
            && self.is_aligned() == other.is_aligned()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// Assigns each patient to a split from a stable hash of its id, so the
/// assignment survives a save/load round trip without being stored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRule {
    pub train_percent: u8,
    pub val_percent: u8,
}

impl Default for SplitRule {
    fn default() -> Self {
        SplitRule { train_percent: 60, val_percent: 15 }
    }
}

impl SplitRule {
    pub fn split_of(&self, patient_id: &str) -> Split {
        // FNV-1a
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in patient_id.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        let bucket = (h % 100) as u8;
        if bucket < self.train_percent {
            Split::Train
        } else if bucket < self.train_percent.saturating_add(self.val_percent) {
            Split::Val
        } else {
            Split::Test
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Patient {
    pub id: String,
    pub split: Split,
    /// Sorted by date, strictly increasing.
    pub exams: Vec<Arc<Exam>>,
}

/// Exams grouped by patient, each patient tagged with one split.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Cohort {
    patients: Vec<Patient>,
}

impl Cohort {
    /// Group exams by patient (ordered by patient id) and assign splits.
    pub fn from_exams(exams: Vec<Exam>, rule: &SplitRule) -> Result<Self> {
        let mut groups: BTreeMap<String, Vec<Arc<Exam>>> = BTreeMap::new();
        for e in exams {
            groups.entry(e.patient_id.clone()).or_default().push(Arc::new(e));
        }
        let mut patients = Vec::with_capacity(groups.len());
        for (id, mut exams) in groups {
            exams.sort_by(|a, b| a.date.cmp(&b.date));
            for w in exams.windows(2) {
                if w[0].date == w[1].date {
                    return Err(Error::Invariant(alloc::format!(
                        "patient {id} has two exams on {} ({} and {})",
                        w[0].date,
                        w[0].exam_id,
                        w[1].exam_id
                    )));
                }
            }
            let split = rule.split_of(&id);
            patients.push(Patient { id, split, exams });
        }
        Ok(Cohort { patients })
    }

    pub fn patients(&self) -> &[Patient] {
        &self.patients
    }

    pub fn patients_in(&self, split: Split) -> impl Iterator<Item = &Patient> {
        self.patients.iter().filter(move |p| p.split == split)
    }

    pub fn exams(&self) -> impl Iterator<Item = &Arc<Exam>> {
        self.patients.iter().flat_map(|p| p.exams.iter())
    }

    pub fn exam_count(&self) -> usize {
        self.patients.iter().map(|p| p.exams.len()).sum()
    }

    /// Pairs of a split following the split's pairing rule: every
    /// chronological combination for train/val, latest-exam pairs for test.
    pub fn pairs(&self, split: Split) -> Vec<ExamPair> {
        self.patients_in(split)
            .flat_map(|p| match split {
                Split::Train | Split::Val => generate_train_pairs(&p.exams),
                Split::Test => generate_test_pairs(&p.exams),
            })
            .collect()
    }
}
