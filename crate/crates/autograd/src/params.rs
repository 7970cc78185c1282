use std::collections::HashMap;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

static NEXT_STORE_UID: AtomicU64 = AtomicU64::new(1);

fn fresh_uid() -> u64 {
    NEXT_STORE_UID.fetch_add(1, Ordering::Relaxed)
}

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Optimizer grouping of a parameter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    #[default]
    Body,
    Head,
}

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Rc<Tensor<T>>,
    pub group: Group,
    pub frozen: bool,
}

/// Named, ordered collection of trainable tensors.
///
/// Each store carries a process-unique id so that a [`Graph`](crate::Graph)
/// can bind parameters from several stores at once. Cloning a store yields
/// an independent copy with a fresh id.
#[derive(Debug)]
pub struct ParamStore<T> {
    uid: u64,
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Clone for ParamStore<T> {
    fn clone(&self) -> Self {
        Self {
            uid: fresh_uid(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: Rc::new((*p.value).clone()),
                    group: p.group,
                    frozen: p.frozen,
                })
                .collect(),
            index: self.index.clone(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            uid: fresh_uid(),
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub(crate) fn uid(&self) -> u64 {
        self.uid
    }

    /// Registers a parameter. Names must be unique within the store.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, group: Group) -> ParamId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name `{name}`"
        );
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        self.params.push(Param {
            name,
            value: Rc::new(value),
            group,
            frozen: false,
        });
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn param(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub(crate) fn value_rc(&self, id: ParamId) -> Rc<Tensor<T>> {
        Rc::clone(&self.params[id.0].value)
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        Rc::make_mut(&mut self.params[id.0].value)
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.params[id.0].frozen = frozen;
    }

    /// Freezes or unfreezes every parameter of `group`.
    pub fn set_group_frozen(&mut self, group: Group, frozen: bool) {
        for p in self.params.iter_mut().filter(|p| p.group == group) {
            p.frozen = frozen;
        }
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.params[id.0].frozen
    }

    /// Copies values from `other` by parameter name. Every name in `self`
    /// must be present in `other` with an identical shape.
    pub fn load_values_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        self.load_values_where(other, |_| true)
    }

    /// Like [`load_values_from`](Self::load_values_from) restricted to
    /// parameters accepted by `filter`.
    pub fn load_values_where(
        &mut self,
        other: &ParamStore<T>,
        filter: impl Fn(&Param<T>) -> bool,
    ) -> Result<()> {
        for p in self.params.iter_mut().filter(|p| filter(p)) {
            let src = other
                .id_of(&p.name)
                .ok_or_else(|| Error::UnknownParam(p.name.clone()))?;
            let src = other.value(src);
            if src.shape() != p.value.shape() {
                return Err(Error::Shape(format!(
                    "parameter `{}`: expected {:?}, found {:?}",
                    p.name,
                    p.value.shape(),
                    src.shape()
                )));
            }
            p.value = Rc::new(src.clone());
        }
        Ok(())
    }

    /// Owned copies of every value, in registration order.
    pub fn snapshot(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|p| (*p.value).clone()).collect()
    }

    pub fn restore(&mut self, values: &[Tensor<T>]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "snapshot has {} tensors, store has {}",
                values.len(),
                self.params.len()
            )));
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            if v.shape() != p.value.shape() {
                return Err(Error::Shape(format!("snapshot shape mismatch for `{}`", p.name)));
            }
            p.value = Rc::new(v.clone());
        }
        Ok(())
    }
}
