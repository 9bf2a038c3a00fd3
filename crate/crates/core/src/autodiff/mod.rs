//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] is a tape: every operation appends a node holding the forward
//! value and a backward step that maps the node's upstream gradient to
//! contributions for its parents. Node ids are assigned in execution order,
//! so reverse id order is a reverse topological order and [`Graph::backward`]
//! makes exactly one pass over it.
//!
//! Tensors entering the graph are copied in; parameters are registered
//! through [`Graph::param`] so that repeated use of the same parameter maps
//! to a single leaf. After `backward`, gradients can be read per variable
//! with [`Graph::grad`] or written back into [`Parameter`] storage with
//! [`Graph::write_grads`].

mod broadcast;
mod gradcheck;
mod ops;

pub use gradcheck::{grad_check, GradCheckReport};

use std::cell::{Ref, RefCell, RefMut};
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    pub(crate) id: usize,
}

/// Stable identity for a learnable tensor across graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(u64);

static NEXT_PARAM_ID: AtomicU64 = AtomicU64::new(0);

/// A named learnable tensor. Interior mutability lets the optimizer and the
/// finite-difference harness update values while the owning model is shared.
#[derive(Debug)]
pub struct Parameter {
    name: String,
    id: ParamId,
    tensor: RefCell<Tensor>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, mut tensor: Tensor) -> Self {
        tensor.requires_grad = true;
        Parameter {
            name: name.into(),
            id: ParamId(NEXT_PARAM_ID.fetch_add(1, Ordering::Relaxed)),
            tensor: RefCell::new(tensor),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn value(&self) -> Ref<'_, Tensor> {
        self.tensor.borrow()
    }

    pub fn value_mut(&self) -> RefMut<'_, Tensor> {
        self.tensor.borrow_mut()
    }

    pub fn numel(&self) -> usize {
        self.tensor.borrow().numel()
    }

    /// Replace the stored value, keeping shape. Used by checkpoint loading.
    pub fn load(&self, t: &Tensor) -> Result<()> {
        let mut cur = self.tensor.borrow_mut();
        if cur.shape() != t.shape() {
            return Err(Error::ShapeMismatch(format!(
                "parameter {}: stored shape {:?}, loaded shape {:?}",
                self.name,
                cur.shape(),
                t.shape()
            )));
        }
        cur.data_mut().copy_from_slice(t.data());
        Ok(())
    }
}

type BackwardFn = Box<dyn Fn(&BackArgs<'_>) -> Vec<(usize, Tensor)>>;

pub(crate) struct BackArgs<'a> {
    pub values: &'a [Tensor],
    pub out: usize,
    pub grad: &'a Tensor,
}

struct BackStep {
    run: BackwardFn,
}

/// Topologically ordered record of executed operations.
pub struct Graph {
    values: Vec<Tensor>,
    backs: Vec<Option<BackStep>>,
    requires: Vec<bool>,
    params: HashMap<ParamId, Var>,
    grads: Vec<Option<Tensor>>,
    backward_done: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            values: Vec::new(),
            backs: Vec::new(),
            requires: Vec::new(),
            params: HashMap::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Forward value of a variable.
    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.id]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.id].shape()
    }

    pub(crate) fn push(
        &mut self,
        value: Tensor,
        parents: Vec<usize>,
        run: Option<BackwardFn>,
    ) -> Var {
        let requires = parents.iter().any(|&p| self.requires[p]);
        let id = self.values.len();
        self.values.push(value);
        self.requires.push(requires);
        self.backs.push(match run {
            Some(f) if requires => Some(BackStep { run: f }),
            _ => None,
        });
        Var { id }
    }

    /// Insert a tensor as a graph input.
    pub fn leaf(&mut self, t: &Tensor, requires_grad: bool) -> Var {
        let id = self.values.len();
        self.values.push(t.clone());
        self.requires.push(requires_grad);
        self.backs.push(None);
        Var { id }
    }

    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.leaf(t, false)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.leaf(&Tensor::scalar(v), false)
    }

    /// Register a parameter, reusing the existing leaf if it already appears
    /// in this graph (weight sharing resolves to one node).
    pub fn param(&mut self, p: &Parameter) -> Var {
        if let Some(&v) = self.params.get(&p.id()) {
            return v;
        }
        let v = self.leaf(&p.value(), true);
        self.params.insert(p.id(), v);
        v
    }

    /// Reverse pass from a scalar loss. Populates the gradient of every
    /// grad-requiring node reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.backward_seeded(loss, Tensor::scalar(1.0))
    }

    /// Reverse pass with an explicit seed gradient for `root`. The seed must
    /// match the root's shape; a plain `backward` is the scalar case.
    pub fn backward_seeded(&mut self, root: Var, seed: Tensor) -> Result<()> {
        if self.backward_done {
            return Err(Error::Numeric(
                "backward called twice on the same graph; re-run forward first".into(),
            ));
        }
        let root_shape = self.values[root.id].shape();
        if seed.shape() != root_shape {
            return Err(Error::ShapeMismatch(format!(
                "backward seed shape {:?} does not match root shape {:?}",
                seed.shape(),
                root_shape
            )));
        }
        if root_shape.iter().product::<usize>() != 1 && seed.numel() != self.values[root.id].numel()
        {
            return Err(Error::ShapeMismatch("non-scalar backward root".into()));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Tensor>> = vec![None; self.values.len()];
        grads[root.id] = Some(seed);

        for id in (0..=root.id).rev() {
            if grads[id].is_none() {
                continue;
            }
            let Some(step) = &self.backs[id] else {
                continue;
            };
            let grad = grads[id].take().expect("checked above");
            let contributions = (step.run)(&BackArgs {
                values: &self.values,
                out: id,
                grad: &grad,
            });
            grads[id] = Some(grad);
            for (pid, c) in contributions {
                debug_assert!(pid < id, "backward contribution must flow to earlier node");
                if !self.requires[pid] {
                    continue;
                }
                match &mut grads[pid] {
                    Some(acc) => {
                        debug_assert_eq!(acc.shape(), c.shape());
                        for (a, b) in acc.data_mut().iter_mut().zip(c.data()) {
                            *a += b;
                        }
                    }
                    slot @ None => *slot = Some(c),
                }
            }
        }
        // Gradients are retained only for grad-requiring nodes.
        for (id, g) in grads.iter_mut().enumerate() {
            if !self.requires[id] {
                *g = None;
            }
        }
        self.grads = grads;
        Ok(())
    }

    /// Gradient of a variable after `backward`; `None` when no gradient
    /// flowed into it or it does not require grad.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient of a registered parameter after `backward`.
    pub fn grad_of_param(&self, p: &Parameter) -> Option<&Tensor> {
        self.params.get(&p.id()).and_then(|&v| self.grad(v))
    }

    /// Copy accumulated gradients into the `grad` buffers of the given
    /// parameters. Parameters that did not participate keep `grad = None`.
    pub fn write_grads(&self, params: &[&Parameter]) {
        for p in params {
            if let Some(g) = self.grad_of_param(p) {
                let mut t = p.value_mut();
                match &mut t.grad {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(g.data()) {
                            *a += b;
                        }
                    }
                    slot @ None => *slot = Some(g.data().to_vec()),
                }
            }
        }
    }
}

/// C[m,n] += A[m,k] * B[k,n], row-major.
pub(crate) fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (c, &bv) in crow.iter_mut().zip(brow) {
                *c += av * bv;
            }
        }
    }
}

/// C[m,n] += A[m,k] * B[n,k]^T, i.e. dot products of rows.
pub(crate) fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for (&x, &y) in arow.iter().zip(brow) {
                s += x * y;
            }
            out[i * n + j] += s;
        }
    }
}

/// C[m,n] += A[k,m]^T * B[k,n].
pub(crate) fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            let crow = &mut out[i * n..(i + 1) * n];
            for (c, &bv) in crow.iter_mut().zip(brow) {
                *c += av * bv;
            }
        }
    }
}
