use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

/// Mann-Whitney AUC: the fraction of (positive, negative) pairs where the
/// positive scores higher, ties counting one half. `O(n log n)` via midranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(invalid!("{} scores but {} labels", scores.len(), labels.len()));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::NonFinite(alloc::format!("score {s}")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::AucUndefined);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum of positives keeps every midrank an integer.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let midrank2 = (i + 1 + j) as u128;
        let tied_pos = order[i..j].iter().filter(|&&k| labels[k]).count() as u128;
        rank_sum2 += midrank2 * tied_pos;
        i = j;
    }
    let (p, n) = (pos as u128, neg as u128);
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[false, false, true, true]).unwrap(), 0.0);
    }

    #[test]
    fn all_tied() {
        assert_eq!(auc(&[0.3; 5], &[true, false, true, false, false]).unwrap(), 0.5);
    }

    #[test]
    fn worked_example() {
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
    }

    #[test]
    fn single_class_undefined() {
        assert_eq!(auc(&[0.1, 0.2], &[true, true]), Err(Error::AucUndefined));
        assert_eq!(auc(&[], &[]), Err(Error::AucUndefined));
    }

    #[test]
    fn length_mismatch() {
        assert!(auc(&[0.1], &[true, false]).is_err());
    }
}
