use alloc::collections::BTreeSet;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::{Exam, ExamPair};

/// Every chronological combination `(e_i, e_j)`, `i < j`; `n(n-1)/2` pairs.
///
/// `exams` must be sorted by date with distinct dates.
pub fn generate_train_pairs(exams: &[Arc<Exam>]) -> Vec<ExamPair> {
    let mut out = Vec::with_capacity(exams.len() * exams.len().saturating_sub(1) / 2);
    for (i, prior) in exams.iter().enumerate() {
        for current in &exams[i + 1..] {
            out.push(ExamPair::new(prior.clone(), current.clone()).expect("exams sorted by date"));
        }
    }
    out
}

/// Pairs whose current exam is the patient's latest; `n-1` pairs.
pub fn generate_test_pairs(exams: &[Arc<Exam>]) -> Vec<ExamPair> {
    let Some((latest, earlier)) = exams.split_last() else { return Vec::new() };
    earlier.iter().map(|prior| ExamPair::new(prior.clone(), latest.clone()).expect("exams sorted by date")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Population {
    Screening,
    Biopsied,
}

impl Population {
    pub const BOTH: [Population; 2] = [Population::Screening, Population::Biopsied];

    pub fn as_str(self) -> &'static str {
        match self {
            Population::Screening => "screening",
            Population::Biopsied => "biopsied",
        }
    }
}

impl fmt::Display for Population {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What makes a pair part of the biopsied population.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PopulationRule {
    /// The pair's current exam was biopsied.
    #[default]
    ExamLevel,
    /// Any exam of the patient that appears in the pair list was biopsied.
    PatientLevel,
}

impl PopulationRule {
    /// Per-pair biopsied membership under this rule.
    pub fn biopsied_flags(self, pairs: &[ExamPair]) -> Vec<bool> {
        match self {
            PopulationRule::ExamLevel => pairs.iter().map(|p| p.current().biopsied).collect(),
            PopulationRule::PatientLevel => {
                let patients: BTreeSet<&str> = pairs
                    .iter()
                    .filter(|p| p.prior().biopsied || p.current().biopsied)
                    .map(|p| p.patient_id())
                    .collect();
                pairs.iter().map(|p| patients.contains(p.patient_id())).collect()
            }
        }
    }
}

pub fn slice_population(pairs: &[ExamPair], which: Population, rule: PopulationRule) -> Vec<ExamPair> {
    match which {
        Population::Screening => pairs.to_vec(),
        Population::Biopsied => {
            let flags = rule.biopsied_flags(pairs);
            pairs.iter().zip(flags).filter(|(_, f)| *f).map(|(p, _)| p.clone()).collect()
        }
    }
}
