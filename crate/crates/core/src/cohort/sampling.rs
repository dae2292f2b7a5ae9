use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};

use crate::error::{invalid, Result};
use crate::rng;

use super::{ExamPair, PopulationRule};

/// Indices of one balanced epoch over pairs flagged biopsied / not biopsied.
///
/// Takes `b` biopsied pairs (all of them when `b` equals their count, a
/// uniform subset otherwise) plus `b` pairs drawn without replacement from
/// the rest, then shuffles. The result has exactly `2b` distinct indices.
pub fn epoch_sample_indices(biopsied: &[bool], b: usize, seed: u64) -> Result<Vec<usize>> {
    let pos: Vec<usize> = (0..biopsied.len()).filter(|&i| biopsied[i]).collect();
    let rest: Vec<usize> = (0..biopsied.len()).filter(|&i| !biopsied[i]).collect();
    if b > pos.len() {
        return Err(invalid!("epoch needs {b} biopsied pairs but only {} exist", pos.len()));
    }
    if b > rest.len() {
        return Err(invalid!("epoch needs {b} non-biopsied pairs but only {} exist", rest.len()));
    }
    let mut rng = rng::seeded(seed);
    let mut out: Vec<usize> = if b == pos.len() {
        pos
    } else {
        index::sample(&mut rng, pos.len(), b).into_iter().map(|i| pos[i]).collect()
    };
    out.extend(index::sample(&mut rng, rest.len(), b).into_iter().map(|i| rest[i]));
    out.shuffle(&mut rng);
    Ok(out)
}

/// Balanced epoch of `2b` pairs; see [`epoch_sample_indices`].
pub fn epoch_sample(pairs: &[ExamPair], b: usize, seed: u64, rule: PopulationRule) -> Result<Vec<ExamPair>> {
    let idx = epoch_sample_indices(&rule.biopsied_flags(pairs), b, seed)?;
    Ok(idx.into_iter().map(|i| pairs[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn full_scale_epoch_length() {
        let mut flags = vec![false; 127_451];
        flags[..2519].fill(true);
        assert_eq!(epoch_sample_indices(&flags, 2519, 3).unwrap().len(), 5038);
    }

    #[test]
    fn rest_too_small() {
        let flags = [true, true, true, false];
        assert!(epoch_sample_indices(&flags, 3, 0).is_err());
        assert!(epoch_sample_indices(&flags, 5, 0).is_err());
        assert_eq!(epoch_sample_indices(&flags, 1, 0).unwrap().len(), 2);
    }
}
