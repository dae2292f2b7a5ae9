use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cohort::{ExamPair, Population, PopulationRule, Side};
use crate::error::{invalid, Error, Result};
use crate::nets::PairModel;
use crate::train::{predict_pair_cached, FeatureBank};

use super::auc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LabelKind {
    Benign,
    Malignant,
}

impl LabelKind {
    pub const BOTH: [LabelKind; 2] = [LabelKind::Benign, LabelKind::Malignant];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelKind::Benign => "benign",
            LabelKind::Malignant => "malignant",
        }
    }
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LabelKind::BOTH.into_iter().find(|l| l.as_str() == s).ok_or_else(|| invalid!("unknown label {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Statistic {
    /// Mean of the member AUCs.
    Mean,
    /// Population standard deviation of the member AUCs.
    Std,
    /// AUC of the mean member probability.
    Ensemble,
}

impl Statistic {
    pub const ALL: [Statistic; 3] = [Statistic::Mean, Statistic::Std, Statistic::Ensemble];

    pub fn as_str(self) -> &'static str {
        match self {
            Statistic::Mean => "mean",
            Statistic::Std => "std",
            Statistic::Ensemble => "ensemble",
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Statistic::ALL.into_iter().find(|l| l.as_str() == s).ok_or_else(|| invalid!("unknown statistic {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScoreKey {
    pub pair_id: String,
    pub side: Side,
    pub label: LabelKind,
}

/// One breast-level prediction for one label.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredBreast {
    pub pair_id: String,
    pub side: Side,
    pub label: LabelKind,
    pub truth: bool,
    pub score: f64,
}

impl ScoredBreast {
    pub fn key(&self) -> ScoreKey {
        ScoreKey { pair_id: self.pair_id.clone(), side: self.side, label: self.label }
    }
}

/// Per-key mean over members. Values are summed in ascending order so the
/// result does not depend on member order.
pub fn ensemble_scores<K: Ord + Clone + fmt::Debug>(members: &[BTreeMap<K, f64>]) -> Result<BTreeMap<K, f64>> {
    let first = members.first().ok_or_else(|| invalid!("ensemble needs at least one member"))?;
    for (i, m) in members.iter().enumerate().skip(1) {
        if m.len() != first.len() || m.keys().zip(first.keys()).any(|(a, b)| a != b) {
            let key = m.keys().find(|k| !first.contains_key(k)).or_else(|| first.keys().find(|k| !m.contains_key(k)));
            return Err(invalid!("member {i} scored a different key set (first difference {key:?})"));
        }
    }
    let mut out = BTreeMap::new();
    let mut vals = Vec::with_capacity(members.len());
    for k in first.keys() {
        vals.clear();
        vals.extend(members.iter().map(|m| m[k]));
        vals.sort_by(f64::total_cmp);
        out.insert(k.clone(), vals.iter().sum::<f64>() / members.len() as f64);
    }
    Ok(out)
}

/// Breast-level scores of every pair for both labels.
pub fn score_pairs(model: &PairModel<f32>, pairs: &[ExamPair], mut bank: Option<&mut FeatureBank<f32>>) -> Result<Vec<ScoredBreast>> {
    let mut out = Vec::with_capacity(4 * pairs.len());
    for pair in pairs {
        let pred = predict_pair_cached(model, pair, bank.as_deref_mut())?;
        let id = pair.id();
        for side in Side::BOTH {
            let p = pred.breast(side);
            let labels = pair.labels();
            out.push(ScoredBreast { pair_id: id.clone(), side, label: LabelKind::Benign, truth: labels.benign(side), score: p.benign });
            out.push(ScoredBreast {
                pair_id: id.clone(),
                side,
                label: LabelKind::Malignant,
                truth: labels.malignant(side),
                score: p.malignant,
            });
        }
    }
    Ok(out)
}

/// AUC statistics of one (population, label) cell; `None` where undefined.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalCell {
    pub population: Population,
    pub label: LabelKind,
    pub breasts: usize,
    pub positives: usize,
    pub member_aucs: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub ensemble: Option<f64>,
}

impl EvalCell {
    pub fn get(&self, stat: Statistic) -> Option<f64> {
        match stat {
            Statistic::Mean => self.mean,
            Statistic::Std => self.std,
            Statistic::Ensemble => self.ensemble,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub members: usize,
    /// Sorted by (population, label).
    pub cells: Vec<EvalCell>,
}

impl EvalReport {
    pub fn cell(&self, population: Population, label: LabelKind) -> Option<&EvalCell> {
        self.cells.iter().find(|c| c.population == population && c.label == label)
    }

    pub fn value(&self, population: Population, label: LabelKind, stat: Statistic) -> Option<f64> {
        self.cell(population, label).and_then(|c| c.get(stat))
    }

    /// One entry per (population, label, statistic), sorted.
    pub fn rows(&self) -> Vec<(Population, LabelKind, Statistic, Option<f64>)> {
        let mut rows: Vec<_> = self
            .cells
            .iter()
            .flat_map(|c| Statistic::ALL.map(|s| (c.population, c.label, s, c.get(s))))
            .collect();
        rows.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
        rows
    }

    /// Number of defined values.
    pub fn defined_count(&self) -> usize {
        self.rows().iter().filter(|r| r.3.is_some()).count()
    }
}

fn defined_auc(scores: &[f64], truth: &[bool]) -> Result<Option<f64>> {
    match auc(scores, truth) {
        Ok(a) => Ok(Some(a)),
        Err(Error::AucUndefined) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Report from per-member scores. `biopsied` holds the ids of pairs in the
/// biopsied population; every scored pair belongs to the screening population.
pub fn evaluate_scores(member_scores: &[Vec<ScoredBreast>], biopsied: &BTreeSet<String>) -> Result<EvalReport> {
    let maps: Vec<BTreeMap<ScoreKey, f64>> = member_scores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut m = BTreeMap::new();
            for b in s {
                if !(0.0..=1.0).contains(&b.score) {
                    return Err(invalid!("member {i} score {} for {:?} is not a probability", b.score, b.key()));
                }
                if m.insert(b.key(), b.score).is_some() {
                    return Err(invalid!("member {i} scored {:?} twice", b.key()));
                }
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let ensemble = ensemble_scores(&maps)?;
    let mut truth: BTreeMap<ScoreKey, bool> = BTreeMap::new();
    for b in member_scores.iter().flatten() {
        if *truth.entry(b.key()).or_insert(b.truth) != b.truth {
            return Err(invalid!("members disagree on the truth of {:?}", b.key()));
        }
    }
    let mut cells = Vec::new();
    for population in Population::BOTH {
        for label in LabelKind::BOTH {
            let keys: Vec<&ScoreKey> = ensemble
                .keys()
                .filter(|k| k.label == label && (population == Population::Screening || biopsied.contains(&k.pair_id)))
                .collect();
            let t: Vec<bool> = keys.iter().map(|k| truth[*k]).collect();
            let member_aucs = maps
                .iter()
                .map(|m| defined_auc(&keys.iter().map(|k| m[*k]).collect::<Vec<_>>(), &t))
                .collect::<Result<Vec<_>>>()?;
            let ens = defined_auc(&keys.iter().map(|k| ensemble[*k]).collect::<Vec<_>>(), &t)?;
            let defined: Option<Vec<f64>> = member_aucs.iter().copied().collect();
            let (mean, std) = match defined {
                Some(v) => {
                    let n = v.len() as f64;
                    let mean = v.iter().sum::<f64>() / n;
                    let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
                    (Some(mean), Some(libm::sqrt(var)))
                }
                None => (None, None),
            };
            cells.push(EvalCell {
                population,
                label,
                breasts: keys.len(),
                positives: t.iter().filter(|&&x| x).count(),
                member_aucs,
                mean,
                std,
                ensemble: ens,
            });
        }
    }
    Ok(EvalReport { members: member_scores.len(), cells })
}

/// Score `pairs` with every member and report both populations and labels.
pub fn evaluate(members: &[PairModel<f32>], pairs: &[ExamPair], rule: PopulationRule) -> Result<EvalReport> {
    if members.is_empty() {
        return Err(invalid!("evaluation needs at least one model"));
    }
    if let Some(m) = members.iter().find(|m| m.config() != members[0].config()) {
        return Err(invalid!("members mix {} and {}", members[0].variant(), m.variant()));
    }
    let scores = members.iter().map(|m| score_pairs(m, pairs, None)).collect::<Result<Vec<_>>>()?;
    let biopsied = pairs.iter().zip(rule.biopsied_flags(pairs)).filter(|(_, f)| *f).map(|(p, _)| p.id()).collect();
    evaluate_scores(&scores, &biopsied)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn ensemble_mean() {
        let members: Vec<BTreeMap<u8, f64>> = [0.2, 0.4, 0.6, 0.8, 1.0].iter().map(|&v| BTreeMap::from([(0u8, v)])).collect();
        assert!((ensemble_scores(&members).unwrap()[&0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn ensemble_key_mismatch() {
        let a = BTreeMap::from([(0u8, 0.1)]);
        let b = BTreeMap::from([(1u8, 0.1)]);
        assert!(ensemble_scores(&[a, b]).is_err());
    }

    fn scored(pair: &str, side: Side, truth: bool, score: f64) -> ScoredBreast {
        ScoredBreast { pair_id: pair.into(), side, label: LabelKind::Malignant, truth, score }
    }

    #[test]
    fn single_member_std_zero_and_missing_biopsied_block() {
        let s = vec![
            scored("a", Side::Left, true, 0.9),
            scored("a", Side::Right, false, 0.2),
            scored("b", Side::Left, false, 0.6),
            scored("b", Side::Right, true, 0.5),
        ];
        let r = evaluate_scores(&[s], &BTreeSet::new()).unwrap();
        let c = r.cell(Population::Screening, LabelKind::Malignant).unwrap();
        assert_eq!(c.mean, c.ensemble);
        assert_eq!(c.std, Some(0.0));
        assert_eq!(c.mean, Some(0.75));
        assert!(r.cell(Population::Biopsied, LabelKind::Malignant).unwrap().ensemble.is_none());
        assert!(r.cell(Population::Screening, LabelKind::Benign).unwrap().mean.is_none());
    }
}
