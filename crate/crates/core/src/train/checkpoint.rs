use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::nets::{PairModel, PairModelConfig};
use crate::tensor::Tensor;

use super::TrainConfig;

/// Everything about a checkpoint except its parameter values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: PairModelConfig,
    pub train: Option<TrainConfig>,
    /// 1-based epoch after which the parameters were captured; 0 before training.
    pub epoch: usize,
    /// Validation malignant AUC on the biopsied slice; `None` when undefined.
    pub metric: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn capture(model: &PairModel<f32>, train: Option<TrainConfig>, epoch: usize, metric: Option<f64>) -> Self {
        Checkpoint {
            meta: CheckpointMeta { model: model.config().clone(), train, epoch, metric },
            params: model.params().named_values(),
        }
    }

    /// Rebuild the model; every parameter must be present with its expected shape.
    pub fn to_model(&self) -> Result<PairModel<f32>> {
        let mut model = PairModel::new(self.meta.model.clone(), 0)?;
        if self.params.len() != model.params().len() {
            return Err(invalid!(
                "checkpoint has {} parameters, {} expects {}",
                self.params.len(),
                self.meta.model.variant,
                model.params().len()
            ));
        }
        model.params_mut().load_values(&self.params)?;
        Ok(model)
    }
}

/// Checkpoint with the highest metric; undefined metrics rank lowest and ties
/// go to the earliest epoch.
/// Whether `a` ranks strictly above `b`: higher metric, undefined lowest,
/// earlier epoch on ties.
pub(crate) fn outranks(a: &CheckpointMeta, b: &CheckpointMeta) -> bool {
    match (a.metric, b.metric) {
        (Some(x), Some(y)) => x > y || (x == y && a.epoch < b.epoch),
        (Some(_), None) => true,
        (None, Some(_)) => false,
        (None, None) => a.epoch < b.epoch,
    }
}

/// Checkpoint with the highest metric; undefined metrics rank lowest and ties
/// go to the earliest epoch.
pub fn select_best(checkpoints: &[Checkpoint]) -> Result<&Checkpoint> {
    let mut iter = checkpoints.iter();
    let first = iter.next().ok_or_else(|| invalid!("no checkpoints to select from"))?;
    Ok(iter.fold(first, |best, c| if outranks(&c.meta, &best.meta) { c } else { best }))
}
