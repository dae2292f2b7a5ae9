use alloc::format;
use alloc::vec;

use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::{Graph, ParamId, ParamStore, Scalar, Tensor, Var};

use super::backbone::he_normal;
use super::Prediction;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeadIds {
    /// Fixed per-dimension standardization `[D,D]` diagonal and `[D]` shift;
    /// never trained.
    pub norm: Option<(ParamId, ParamId)>,
    pub hidden: (ParamId, ParamId),
    pub benign: (ParamId, ParamId),
    pub malignant: (ParamId, ParamId),
}

impl HeadIds {
    pub(crate) fn build<T: Scalar>(
        store: &mut ParamStore<T>,
        rep_dim: usize,
        hidden: usize,
        standardize: bool,
        rng: &mut Rng,
    ) -> Self {
        let norm = standardize.then(|| {
            let w = store.add("head.norm.weight", diagonal(&vec![T::one(); rep_dim]));
            let b = store.add("head.norm.bias", Tensor::zeros(&[rep_dim]));
            store.get_mut(w).requires_grad = false;
            store.get_mut(b).requires_grad = false;
            (w, b)
        });
        let mut linear = |name: &str, din: usize, dout: usize, rng: &mut Rng| {
            (
                store.add(format!("head.{name}.weight"), he_normal(&[dout, din], din, rng)),
                store.add(format!("head.{name}.bias"), Tensor::zeros(&[dout])),
            )
        };
        HeadIds {
            norm,
            hidden: linear("hidden", rep_dim, hidden, rng),
            benign: linear("benign", hidden, 2, rng),
            malignant: linear("malignant", hidden, 2, rng),
        }
    }
}

/// `[n,n]` matrix with `d` on the diagonal.
pub(crate) fn diagonal<T: Scalar>(d: &[T]) -> Tensor<T> {
    let n = d.len();
    let mut m = Tensor::zeros(&[n, n]);
    for (i, &v) in d.iter().enumerate() {
        m.data_mut()[i * n + i] = v;
    }
    m
}

/// Softmax outputs `[1,2]` = (P(absent), P(present)) for each label.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeadOutput {
    pub benign: Var,
    pub malignant: Var,
}

impl HeadOutput {
    pub fn prediction<T: Scalar>(&self, g: &Graph<'_, T>) -> Prediction {
        Prediction {
            benign: g.value(self.benign).data()[1].to_f64(),
            malignant: g.value(self.malignant).data()[1].to_f64(),
        }
    }
}

/// Optional fixed standardization, a hidden ReLU layer, then two independent
/// two-way softmax heads.
pub fn head_forward<T: Scalar>(g: &mut Graph<'_, T>, representation: Var, ids: &HeadIds) -> Result<HeadOutput> {
    let representation = match ids.norm {
        Some((w, b)) => {
            let (w, b) = (g.param(w), g.param(b));
            g.linear(representation, w, b)?
        }
        None => representation,
    };
    let (hw, hb) = (g.param(ids.hidden.0), g.param(ids.hidden.1));
    let hidden = g.linear(representation, hw, hb)?;
    let hidden = g.relu(hidden);
    let mut classify = |(w, b): (ParamId, ParamId)| -> Result<Var> {
        let (w, b) = (g.param(w), g.param(b));
        let logits = g.linear(hidden, w, b)?;
        g.softmax2(logits)
    };
    let benign = classify(ids.benign)?;
    let malignant = classify(ids.malignant)?;
    Ok(HeadOutput { benign, malignant })
}
