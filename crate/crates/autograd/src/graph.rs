use std::cell::RefCell;
use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Gradient rule of one node: `(grad_out, out, needs) -> grad per parent`.
///
/// `needs[i]` tells whether parent `i` wants a gradient; entries for parents
/// that do not may be `None`.
pub(crate) type BackwardFn<T> =
    Box<dyn Fn(&Tensor<T>, &Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    value: Rc<Tensor<T>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
    param: Option<(u64, ParamId)>,
}

/// Tape recording operations for reverse-mode differentiation.
///
/// Parameters are bound with [`Graph::param`]; only stores registered with
/// [`Graph::track`] produce gradients, and frozen parameters never do.
/// A graph without tracked stores records no gradient rules, which makes it
/// a cheap inference context.
pub struct Graph<T> {
    nodes: RefCell<Vec<Node<T>>>,
    tracked: RefCell<HashSet<u64>>,
    bound: RefCell<HashMap<(u64, ParamId), usize>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, T> {
    pub(crate) graph: &'g Graph<T>,
    pub(crate) id: usize,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            tracked: RefCell::new(HashSet::new()),
            bound: RefCell::new(HashMap::new()),
        }
    }

    /// Requests gradients for the non-frozen parameters of `store`.
    pub fn track(&self, store: &ParamStore<T>) {
        self.tracked.borrow_mut().insert(store.uid());
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node<T>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// A constant input.
    pub fn input(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(Node {
            value: Rc::new(value),
            parents: Vec::new(),
            backward: None,
            requires_grad: false,
            param: None,
        })
    }

    /// Binds a parameter. Repeated binds of the same parameter share a node.
    pub fn param(&self, store: &ParamStore<T>, id: ParamId) -> Var<'_, T> {
        let key = (store.uid(), id);
        if let Some(&node) = self.bound.borrow().get(&key) {
            return Var {
                graph: self,
                id: node,
            };
        }
        let requires_grad = self.tracked.borrow().contains(&store.uid()) && !store.is_frozen(id);
        let var = self.push(Node {
            value: store.value_rc(id),
            parents: Vec::new(),
            backward: None,
            requires_grad,
            param: Some(key),
        });
        self.bound.borrow_mut().insert(key, var.id);
        var
    }

    pub(crate) fn record(
        &self,
        value: Tensor<T>,
        parents: &[usize],
        backward: BackwardFn<T>,
    ) -> Var<'_, T> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|&p| nodes[p].requires_grad)
        };
        self.push(Node {
            value: Rc::new(value),
            parents: parents.to_vec(),
            backward: requires_grad.then_some(backward),
            requires_grad,
            param: None,
        })
    }

    pub(crate) fn value_of(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    pub(crate) fn requires_grad_of(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Back-propagates from `root`, seeding its gradient with ones.
    pub fn backward(&self, root: Var<'_, T>) -> Gradients<T> {
        let seed = Tensor::ones(self.value_of(root.id).shape().to_vec());
        self.backward_with(root, seed)
    }

    /// Back-propagates from `root` with an explicit output gradient.
    pub fn backward_with(&self, root: Var<'_, T>, seed: Tensor<T>) -> Gradients<T> {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor<T>>> = (0..=root.id).map(|_| None).collect();
        grads[root.id] = Some(seed);
        let mut out = HashMap::new();
        for id in (0..=root.id).rev() {
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            if let Some(key) = node.param {
                out.insert(key, grad);
                continue;
            }
            let Some(rule) = &node.backward else {
                continue;
            };
            let needs: Vec<bool> = node
                .parents
                .iter()
                .map(|&p| nodes[p].requires_grad)
                .collect();
            let parent_grads = rule(&grad, &node.value, &needs);
            for ((&p, pg), &need) in node.parents.iter().zip(parent_grads).zip(&needs) {
                let (Some(pg), true) = (pg, need) else {
                    continue;
                };
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Gradients { map: out }
    }
}

impl<'g, T: Scalar> Var<'g, T> {
    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.requires_grad_of(self.id)
    }

    /// A constant copy of this value, cut from the tape.
    pub fn detach(&self) -> Var<'g, T> {
        self.graph.input((*self.value()).clone())
    }

    /// Scalar value of a single-element tensor.
    pub fn item(&self) -> T {
        let v = self.value();
        debug_assert_eq!(v.numel(), 1);
        v.data()[0]
    }
}

/// Parameter gradients produced by [`Graph::backward`].
#[derive(Debug, Default)]
pub struct Gradients<T> {
    map: HashMap<(u64, ParamId), Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, store: &ParamStore<T>, id: ParamId) -> Option<&Tensor<T>> {
        self.map.get(&(store.uid(), id))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.map.values().all(Tensor::all_finite)
    }
}
