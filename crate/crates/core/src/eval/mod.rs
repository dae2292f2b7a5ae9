//! ROC-AUC, ensembling and per-population evaluation reports.

mod auc;
mod report;

pub use auc::auc;
pub use report::{
    ensemble_scores, evaluate, evaluate_scores, score_pairs, EvalCell, EvalReport, LabelKind, ScoreKey, ScoredBreast,
    Statistic,
};
