use std::collections::BTreeMap;

use super::graph::{Gradients, Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub type GradMap = BTreeMap<String, Tensor>;

/// Named parameter tensors in a stable (sorted) order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.entries.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::MissingEntry(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.entries.remove(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    /// Copy every entry whose name starts with `prefix` from `other`.
    pub fn merge_prefixed(&mut self, other: &ParamSet, prefix: &str) {
        for (k, v) in other.iter() {
            if k.starts_with(prefix) {
                self.entries.insert(k.clone(), v.clone());
            }
        }
    }
}

impl FromIterator<(String, Tensor)> for ParamSet {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}

/// Parameters placed on a graph as leaves.
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
    trainable: BTreeMap<String, bool>,
}

impl BoundParams {
    pub fn bind(g: &mut Graph, params: &ParamSet, trainable: bool) -> Self {
        Self::bind_with(g, params, |_| trainable)
    }

    /// Bind every parameter; `trainable(name)` decides which receive gradients.
    pub fn bind_with(g: &mut Graph, params: &ParamSet, trainable: impl Fn(&str) -> bool) -> Self {
        let mut vars = BTreeMap::new();
        let mut flags = BTreeMap::new();
        for (name, t) in params.iter() {
            let tr = trainable(name);
            let v = if tr { g.leaf(t.clone()) } else { g.constant(t.clone()) };
            vars.insert(name.clone(), v);
            flags.insert(name.clone(), tr);
        }
        Self {
            vars,
            trainable: flags,
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingEntry(name.to_string()))
    }

    /// Gradients for every trainable parameter (zeros when unreached).
    pub fn gradients(&self, grads: &Gradients) -> GradMap {
        self.vars
            .iter()
            .filter(|(k, _)| self.trainable[*k])
            .map(|(k, v)| (k.clone(), grads.wrt(*v)))
            .collect()
    }
}

/// Element-wise `acc += g`, inserting missing entries.
pub fn accumulate_grads(acc: &mut GradMap, g: &GradMap) {
    for (k, v) in g {
        match acc.get_mut(k) {
            Some(a) => a.add_assign(v),
            None => {
                acc.insert(k.clone(), v.clone());
            }
        }
    }
}
