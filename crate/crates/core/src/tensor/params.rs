use alloc::string::String;
use alloc::vec::Vec;

use super::{Scalar, Tensor};
use crate::error::{shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    /// Accumulated gradient; `None` until the first accumulation after a reset.
    pub grad: Option<Tensor<T>>,
    pub requires_grad: bool,
}

/// Ordered collection of named parameters.
///
/// Insertion order is the canonical order used by optimizers and checkpoints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let id = ParamId(self.params.len());
        self.params.push(Param { name: name.into(), value, grad: None, requires_grad: true });
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    /// Set `requires_grad` on every parameter whose name starts with `prefix`.
    pub fn set_trainable(&mut self, prefix: &str, trainable: bool) {
        for p in self.params.iter_mut().filter(|p| p.name.starts_with(prefix)) {
            p.requires_grad = trainable;
            if !trainable {
                p.grad = None;
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Add gradients from one backward pass onto the stored ones.
    pub fn accumulate(&mut self, grads: &Gradients<T>) -> Result<()> {
        for (id, g) in &grads.entries {
            let p = &mut self.params[id.0];
            if !p.requires_grad {
                continue;
            }
            if g.len() != p.value.len() {
                return Err(shape_err!("gradient for {} has {} elements", p.name, g.len()));
            }
            match &mut p.grad {
                Some(acc) => {
                    for (a, &b) in acc.data_mut().iter_mut().zip(g) {
                        *a = *a + b;
                    }
                }
                None => p.grad = Some(Tensor::new(p.value.shape(), g.clone())?),
            }
        }
        Ok(())
    }

    /// Copy values by name from `other`; every parameter here must be present there
    /// with the same shape.
    pub fn load_values(&mut self, other: &[(String, Tensor<T>)]) -> Result<()> {
        for p in &mut self.params {
            let (_, t) = other
                .iter()
                .find(|(n, _)| *n == p.name)
                .ok_or_else(|| Error::InvalidArgument(alloc::format!("missing parameter {}", p.name)))?;
            if t.shape() != p.value.shape() {
                return Err(shape_err!(
                    "parameter {} expects {:?}, found {:?}",
                    p.name,
                    p.value.shape(),
                    t.shape()
                ));
            }
            p.value = t.clone();
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: p.grad.as_ref().map(Tensor::cast),
                    requires_grad: p.requires_grad,
                })
                .collect(),
        }
    }

    pub fn named_values(&self) -> Vec<(String, Tensor<T>)> {
        self.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect()
    }
}

/// Parameter gradients produced by one backward pass.
#[derive(Clone, Debug, Default)]
pub struct Gradients<T> {
    pub(crate) entries: Vec<(ParamId, Vec<T>)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: ParamId) -> Option<&[T]> {
        self.entries.iter().find(|(i, _)| *i == id).map(|(_, g)| g.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[T])> {
        self.entries.iter().map(|(i, g)| (*i, g.as_slice()))
    }
}
