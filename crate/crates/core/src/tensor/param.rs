use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub trainable: bool,
    pub tags: Vec<String>,
}

/// Ordered, uniquely named collection of learnable tensors.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet<T> {
    params: Vec<Parameter<T>>,
}

/// Graph leaves created for a [`ParamSet`] during one forward pass.
#[derive(Clone, Debug)]
pub struct Bindings(Vec<Var>);

impl Bindings {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.params.push(Parameter {
            name,
            value,
            trainable: true,
            tags: Vec::new(),
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn tag(&mut self, id: ParamId, tag: &str) {
        let p = &mut self.params[id.0];
        if !p.tags.iter().any(|t| t == tag) {
            p.tags.push(tag.to_string());
        }
    }

    pub fn tagged(&self, tag: &str) -> Vec<&str> {
        self.params
            .iter()
            .filter(|p| p.tags.iter().any(|t| t == tag))
            .map(|p| p.name.as_str())
            .collect()
    }

    /// Number of scalar elements, optionally restricted to trainable ones.
    pub fn element_count(&self, trainable_only: bool) -> usize {
        self.params
            .iter()
            .filter(|p| !trainable_only || p.trainable)
            .map(|p| p.value.numel())
            .sum()
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        for p in &mut self.params {
            p.trainable = trainable;
        }
    }

    /// Register every parameter as a leaf; frozen ones do not require grad.
    pub fn bind(&self, graph: &mut Graph<T>) -> Bindings {
        Bindings(
            self.params
                .iter()
                .map(|p| graph.leaf(p.value.clone(), p.trainable))
                .collect(),
        )
    }

    /// Per-parameter gradients after backward; `None` for frozen parameters.
    pub fn grads(&self, graph: &Graph<T>, bindings: &Bindings) -> Vec<Option<Tensor<T>>> {
        self.params
            .iter()
            .zip(&bindings.0)
            .map(|(p, &v)| {
                if !p.trainable {
                    return None;
                }
                Some(
                    graph
                        .grad(v)
                        .cloned()
                        .unwrap_or_else(|| Tensor::zeros(p.value.shape())),
                )
            })
            .collect()
    }

    pub fn entries(&self) -> Vec<(String, Tensor<T>)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect()
    }

    /// Overwrite values from named entries. Every parameter must be present
    /// with a matching shape; extra entries are ignored.
    pub fn load_entries(&mut self, entries: &[(String, Tensor<T>)]) -> Result<()> {
        for p in &mut self.params {
            let (_, t) = entries
                .iter()
                .find(|(n, _)| *n == p.name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter `{}`", p.name)))?;
            if t.shape() != p.value.shape() {
                return Err(Error::Config(format!(
                    "parameter `{}` has shape {:?} in checkpoint, expected {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t.clone();
        }
        Ok(())
    }
}
