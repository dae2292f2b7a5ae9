use alloc::vec::Vec;

use crate::cohort::{ExamPair, Labels, View};
use crate::error::Result;
use crate::nets::{HeadOutput, PairModel};
use crate::tensor::{Graph, Scalar, Var};

/// Mean of the eight per-view cross-entropy terms (four views × benign and
/// malignant heads) against the current exam's labels for each view's breast.
pub fn pair_loss<T: Scalar>(g: &mut Graph<'_, T>, outputs: &[HeadOutput; 4], labels: &Labels) -> Result<Var> {
    let mut terms = Vec::with_capacity(8);
    for v in View::ALL {
        let out = outputs[v.index()];
        let side = v.side();
        terms.push(g.cross_entropy(out.benign, &[labels.benign(side) as usize])?);
        terms.push(g.cross_entropy(out.malignant, &[labels.malignant(side) as usize])?);
    }
    let total = g.add_n(&terms)?;
    g.scale(total, T::of(1.0 / terms.len() as f64))
}

/// Full-graph loss of one pair, backbone included.
pub fn loss_for_pair<'p, T: Scalar>(model: &PairModel<T>, g: &mut Graph<'p, T>, pair: &ExamPair) -> Result<Var> {
    let mut outputs = [None; 4];
    for v in View::ALL {
        outputs[v.index()] = Some(model.forward_images(g, Some(pair.prior().image(v)), pair.current().image(v))?);
    }
    pair_loss(g, &outputs.map(|o| o.expect("all views")), pair.labels())
}
