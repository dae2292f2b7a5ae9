//! Central finite-difference checks of reverse-mode gradients (64-bit).
//!
//! A perturbation that flips the sign of any ReLU input crosses a kink, where
//! the difference quotient is not a derivative; such coordinates are counted
//! as skipped rather than compared.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{invalid, Result};

/// Both gradients below this magnitude count as agreeing.
pub const ZERO_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckReport {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    /// Description of the coordinate with the largest error.
    pub worst: Option<String>,
}

impl CheckReport {
    fn record(&mut self, what: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        self.checked += 1;
        let e = relative_error(analytic, numeric);
        if e > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = self.max_rel_error.max(e);
            self.worst = Some(format!("{} analytic {analytic:e} numeric {numeric:e}", what()));
        }
    }

    pub fn merge(&mut self, other: CheckReport) {
        self.checked += other.checked;
        self.skipped_kinks += other.skipped_kinks;
        if other.max_rel_error > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
    }
}

/// `|a − n| / max(|a|, |n|)`, zero when both are below [`ZERO_FLOOR`].
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < ZERO_FLOOR {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

struct Eval {
    loss: f64,
    relus: Vec<bool>,
}

fn scalar_loss(g: &Graph<'_, f64>, loss: Var) -> Result<f64> {
    g.value(loss).item()
}

/// Check `∂loss/∂input` for every element of every input.
pub fn check_inputs<F>(inputs: &[Tensor<f64>], h: f64, build: F) -> Result<CheckReport>
where
    F: Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<Eval> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.variable(t.clone())).collect();
        let l = build(&mut g, &vars)?;
        Ok(Eval { loss: scalar_loss(&g, l)?, relus: g.relu_pattern() })
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let l = build(&mut g, &vars)?;
    g.backward(l)?;
    let base = g.relu_pattern();
    let mut report = CheckReport::default();
    let mut work = inputs.to_vec();
    for (k, &v) in vars.iter().enumerate() {
        let analytic = g.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| alloc::vec![0.0; inputs[k].len()]);
        for i in 0..inputs[k].len() {
            let x0 = inputs[k].data()[i];
            work[k].data_mut()[i] = x0 + h;
            let plus = eval(&work)?;
            work[k].data_mut()[i] = x0 - h;
            let minus = eval(&work)?;
            work[k].data_mut()[i] = x0;
            if plus.relus != base || minus.relus != base {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus.loss - minus.loss) / (2.0 * h);
            report.record(|| format!("input {k}[{i}]"), analytic[i], numeric);
        }
    }
    Ok(report)
}

/// Check `∂loss/∂param` at the listed `(parameter, element)` coordinates.
pub fn check_params<F>(store: &ParamStore<f64>, coords: &[(ParamId, usize)], h: f64, build: F) -> Result<CheckReport>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<Var>,
{
    let eval = |s: &ParamStore<f64>| -> Result<Eval> {
        let mut g = Graph::with_params(s);
        let l = build(&mut g)?;
        Ok(Eval { loss: scalar_loss(&g, l)?, relus: g.relu_pattern() })
    };
    let mut g = Graph::with_params(store);
    let l = build(&mut g)?;
    let grads = g.backward(l)?;
    let base = g.relu_pattern();
    let mut report = CheckReport::default();
    let mut work = store.clone();
    for &(id, i) in coords {
        if i >= store.value(id).len() {
            return Err(invalid!("coordinate {i} outside parameter {}", store.get(id).name));
        }
        let analytic = grads.get(id).map_or(0.0, |d| d[i]);
        let x0 = store.value(id).data()[i];
        work.get_mut(id).value.data_mut()[i] = x0 + h;
        let plus = eval(&work)?;
        work.get_mut(id).value.data_mut()[i] = x0 - h;
        let minus = eval(&work)?;
        work.get_mut(id).value.data_mut()[i] = x0;
        if plus.relus != base || minus.relus != base {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus.loss - minus.loss) / (2.0 * h);
        report.record(|| format!("{}[{i}]", store.get(id).name), analytic, numeric);
    }
    Ok(report)
}
