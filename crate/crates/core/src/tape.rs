//! Dynamic reverse-mode tape.
//!
//! Every forward op appends a node holding its output value and, when any
//! input needs a gradient, a one-shot vector-Jacobian closure. `backward`
//! walks the nodes in reverse and hands parameter gradients back to the
//! caller, who accumulates them into the [`ParamStore`].

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Vector-Jacobian product: `(grad_out, inputs, output) -> grad per input`.
pub(crate) type BackwardFn<T> =
    Box<dyn FnOnce(&Tensor<T>, &[&Tensor<T>], &Tensor<T>) -> Vec<Option<Tensor<T>>>>;

#[derive(Clone, Copy, Debug)]
enum Origin {
    Op,
    Leaf,
    Param(ParamId),
}

struct Node<T> {
    value: Tensor<T>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
    origin: Origin,
}

pub struct Tape<'p, T: Scalar = f32> {
    params: Option<&'p ParamStore<T>>,
    nodes: Vec<Node<T>>,
    bound: HashMap<ParamId, Var>,
    track_params: bool,
    ste_identity: bool,
    consumed: bool,
}

impl<T: Scalar> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p, T: Scalar> Tape<'p, T> {
    /// A tape with no parameter store; gradients flow to [`Tape::leaf`] inputs only.
    pub fn new() -> Self {
        Self {
            params: None,
            nodes: Vec::new(),
            bound: HashMap::new(),
            track_params: false,
            ste_identity: false,
            consumed: false,
        }
    }

    /// Training tape: parameters are differentiable leaves.
    pub fn with_params(params: &'p ParamStore<T>) -> Self {
        Self {
            params: Some(params),
            track_params: true,
            ..Self::new()
        }
    }

    /// Inference tape: parameters are constants, nothing is recorded for backward
    /// unless a leaf asks for it.
    pub fn inference(params: &'p ParamStore<T>) -> Self {
        Self {
            params: Some(params),
            ..Self::new()
        }
    }

    /// Make straight-through rounding behave as the identity in the forward
    /// pass too, and give `lower_bound` its exact gradient. Finite-difference
    /// checks need this: a rounded graph is piecewise constant and has no
    /// useful numeric derivative, and the bound's pass-through gradient is
    /// not a derivative at all.
    pub fn set_ste_identity(&mut self, on: bool) {
        self.ste_identity = on;
    }

    pub fn ste_identity(&self) -> bool {
        self.ste_identity
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_node(value, Vec::new(), None, false, Origin::Leaf)
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push_node(value, Vec::new(), None, true, Origin::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let store = self.params.expect("tape has no parameter store");
        let value = store.value(id).clone();
        let v = self.push_node(value, Vec::new(), None, self.track_params, Origin::Param(id));
        self.bound.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record an op output. `make_backward` is only invoked when some parent
    /// needs a gradient, so ops can defer building saved state.
    pub(crate) fn push<F>(&mut self, value: Tensor<T>, parents: &[Var], make_backward: F) -> Var
    where
        F: FnOnce() -> BackwardFn<T>,
    {
        debug_assert!(!self.consumed, "op recorded on a consumed tape");
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        let backward = requires_grad.then(make_backward);
        self.push_node(
            value,
            parents.iter().map(|p| p.0).collect(),
            backward,
            requires_grad,
            Origin::Op,
        )
    }

    fn push_node(
        &mut self,
        value: Tensor<T>,
        parents: Vec<usize>,
        backward: Option<BackwardFn<T>>,
        requires_grad: bool,
        origin: Origin,
    ) -> Var {
        self.nodes.push(Node {
            value,
            parents,
            backward,
            requires_grad,
            origin,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar `loss`. The tape is cleared afterwards.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let shape = self.nodes[loss.0].value.shape().to_vec();
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss(shape));
        }
        self.consumed = true;

        let n_params = self.params.map_or(0, |p| p.len());
        let mut out = Gradients {
            params: vec![None; n_params],
            leaves: HashMap::new(),
        };
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(&shape, T::one()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let backward = self.nodes[i].backward.take();
            let node = &self.nodes[i];
            if let Some(bw) = backward {
                let inputs: Vec<&Tensor<T>> =
                    node.parents.iter().map(|&p| &self.nodes[p].value).collect();
                let parent_grads = bw(&g, &inputs, &node.value);
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                for (&p, pg) in node.parents.iter().zip(parent_grads) {
                    let Some(pg) = pg else { continue };
                    if !self.nodes[p].requires_grad {
                        continue;
                    }
                    debug_assert_eq!(pg.shape(), self.nodes[p].value.shape());
                    match &mut grads[p] {
                        Some(acc) => acc.add_assign(&pg),
                        slot @ None => *slot = Some(pg),
                    }
                }
            }
            match node.origin {
                Origin::Param(id) => out.params[id.0] = Some(g),
                Origin::Leaf => {
                    out.leaves.insert(i, g);
                }
                Origin::Op => {}
            }
        }

        self.nodes.clear();
        self.bound.clear();
        Ok(out)
    }
}

/// Gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients<T: Scalar = f32> {
    params: Vec<Option<Tensor<T>>>,
    leaves: HashMap<usize, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a differentiable leaf; `None` if the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.leaves.get(&v.0)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(id.0).and_then(|g| g.as_ref())
    }

    pub(crate) fn param_slots(&self) -> &[Option<Tensor<T>>] {
        &self.params
    }
}
