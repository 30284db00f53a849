//! Define-by-run tape for reverse-mode automatic differentiation.
//!
//! Every operation eagerly computes its value and records an [`Op`] node.
//! A backward pass does not mutate anything: it *appends* new nodes that
//! compute the gradients, so gradients are themselves differentiable and
//! higher-order derivatives (e.g. PDE residuals of a network output, and
//! gradients of those residuals w.r.t. parameters) fall out of repeated
//! [`Tape::grad`] calls.
//!
//! The tape is single-threaded by design; one training step owns one tape,
//! which is dropped and rebuilt on the next step.

use std::cell::RefCell;
use std::rc::Rc;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

const INV_SQRT_PI: f64 = 0.564189583547756286948079451560772586; // 1/sqrt(pi)

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Matmul,
    Bmm,
    Scale(f64),
    AddScalar(f64),
    Powf(f64),
    Exp,
    Log,
    Sin,
    Cos,
    Tanh,
    Sqrt,
    Erf,
    Relu,
    Permute(Vec<usize>),
    Reshape,
    BroadcastTo,
    SumTo,
    SumAxisKeep(usize),
    SumAll,
    GatherRows(Arc<Vec<usize>>),
    ScatterAddRows { indices: Arc<Vec<usize>>, n_rows: usize },
    Concat { axis: usize },
    SliceAxis { axis: usize, start: usize },
    PadAxis { axis: usize, before: usize, after: usize },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Matmul => "matmul",
            Op::Bmm => "bmm",
            Op::Scale(_) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::Powf(_) => "powf",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::Tanh => "tanh",
            Op::Sqrt => "sqrt",
            Op::Erf => "erf",
            Op::Relu => "relu",
            Op::Permute(_) => "permute",
            Op::Reshape => "reshape",
            Op::BroadcastTo => "broadcast_to",
            Op::SumTo => "sum_to",
            Op::SumAxisKeep(_) => "sum_axis",
            Op::SumAll => "sum_all",
            Op::GatherRows(_) => "gather_rows",
            Op::ScatterAddRows { .. } => "scatter_add_rows",
            Op::Concat { .. } => "concat",
            Op::SliceAxis { .. } => "slice_axis",
            Op::PadAxis { .. } => "pad_axis",
        }
    }
}

struct Node {
    value: Tensor,
    parents: [usize; 2],
    n_parents: u8,
    op: Op,
}

struct TapeInner {
    nodes: Vec<Node>,
    nonfinite: Option<(usize, &'static str)>,
}

/// A recording tape. Cheap to clone (shared handle).
#[derive(Clone)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// A value on a tape. Clones alias the same node.
#[derive(Clone)]
pub struct Var {
    tape: Tape,
    id: usize,
}

impl Tape {
    pub fn new() -> Self {
        Tape { inner: Rc::new(RefCell::new(TapeInner { nodes: Vec::new(), nonfinite: None })) }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First non-finite node recorded, if any. Checked at step boundaries.
    pub fn health(&self) -> Result<()> {
        match self.inner.borrow().nonfinite {
            None => Ok(()),
            Some((node, op)) => Err(Error::NonFinite { node, op }),
        }
    }

    fn push(&self, value: Tensor, parents: &[usize], op: Op) -> Var {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        if inner.nonfinite.is_none() && !value.all_finite() {
            inner.nonfinite = Some((id, op.name()));
        }
        let mut p = [usize::MAX; 2];
        for (i, &par) in parents.iter().enumerate() {
            p[i] = par;
        }
        inner.nodes.push(Node { value, parents: p, n_parents: parents.len() as u8, op });
        Var { tape: self.clone(), id }
    }

    /// Record a constant or parameter leaf.
    pub fn leaf(&self, value: Tensor) -> Var {
        self.push(value, &[], Op::Leaf)
    }

    pub fn scalar(&self, v: f64) -> Var {
        self.leaf(Tensor::scalar(v))
    }

    fn value_of(&self, id: usize) -> Tensor {
        self.inner.borrow().nodes[id].value.clone()
    }

    fn same_tape(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }
}

macro_rules! binary_op {
    ($fname:ident, $op:expr, $f:expr) => {
        pub fn $fname(a: &Var, b: &Var) -> Result<Var> {
            assert!(a.tape.same_tape(&b.tape), "vars from different tapes");
            let v = tensor::binary($op.name(), &a.value(), &b.value(), $f)?;
            Ok(a.tape.push(v, &[a.id, b.id], $op))
        }
    };
}

binary_op!(try_add, Op::Add, |x, y| x + y);
binary_op!(try_sub, Op::Sub, |x, y| x - y);
binary_op!(try_mul, Op::Mul, |x, y| x * y);
binary_op!(try_div, Op::Div, |x, y| x / y);

macro_rules! unary_op {
    ($fname:ident, $op:expr, $f:expr) => {
        pub fn $fname(a: &Var) -> Var {
            let v = a.value().map($f);
            a.tape.push(v, &[a.id], $op)
        }
    };
}

unary_op!(exp, Op::Exp, f64::exp);
unary_op!(log, Op::Log, f64::ln);
unary_op!(sin, Op::Sin, f64::sin);
unary_op!(cos, Op::Cos, f64::cos);
unary_op!(tanh, Op::Tanh, f64::tanh);
unary_op!(sqrt, Op::Sqrt, f64::sqrt);
unary_op!(erf, Op::Erf, libm::erf);
unary_op!(relu, Op::Relu, |x| if x > 0.0 { x } else { 0.0 });

pub fn matmul(a: &Var, b: &Var) -> Result<Var> {
    assert!(a.tape.same_tape(&b.tape), "vars from different tapes");
    let v = tensor::matmul2(&a.value(), &b.value())?;
    Ok(a.tape.push(v, &[a.id, b.id], Op::Matmul))
}

pub fn bmm(a: &Var, b: &Var) -> Result<Var> {
    assert!(a.tape.same_tape(&b.tape), "vars from different tapes");
    let v = tensor::bmm(&a.value(), &b.value())?;
    Ok(a.tape.push(v, &[a.id, b.id], Op::Bmm))
}

impl Var {
    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Tensor {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// Re-enter the value as a fresh constant leaf (stop-gradient).
    pub fn detach(&self) -> Var {
        self.tape.leaf(self.value())
    }

    pub fn scale(&self, s: f64) -> Var {
        let v = self.value().map(|x| x * s);
        self.tape.push(v, &[self.id], Op::Scale(s))
    }

    pub fn add_scalar(&self, s: f64) -> Var {
        let v = self.value().map(|x| x + s);
        self.tape.push(v, &[self.id], Op::AddScalar(s))
    }

    pub fn powf(&self, p: f64) -> Var {
        let v = self.value().map(|x| x.powf(p));
        self.tape.push(v, &[self.id], Op::Powf(p))
    }

    pub fn neg(&self) -> Var {
        self.scale(-1.0)
    }

    pub fn square(&self) -> Var {
        try_mul(self, self).expect("square")
    }

    pub fn permute(&self, axes: &[usize]) -> Result<Var> {
        let v = tensor::permute(&self.value(), axes)?;
        Ok(self.tape.push(v, &[self.id], Op::Permute(axes.to_vec())))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var> {
        let v = tensor::reshape(&self.value(), shape)?;
        Ok(self.tape.push(v, &[self.id], Op::Reshape))
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Var> {
        let v = tensor::broadcast_to(&self.value(), shape)?;
        Ok(self.tape.push(v, &[self.id], Op::BroadcastTo))
    }

    pub fn sum_to(&self, shape: &[usize]) -> Result<Var> {
        let v = tensor::sum_to(&self.value(), shape)?;
        Ok(self.tape.push(v, &[self.id], Op::SumTo))
    }

    pub fn sum_axis_keep(&self, axis: usize) -> Result<Var> {
        let v = tensor::sum_axis_keep(&self.value(), axis)?;
        Ok(self.tape.push(v, &[self.id], Op::SumAxisKeep(axis)))
    }

    pub fn sum_all(&self) -> Var {
        let v = tensor::sum_all(&self.value());
        self.tape.push(v, &[self.id], Op::SumAll)
    }

    pub fn mean_all(&self) -> Var {
        let n = self.value().numel() as f64;
        self.sum_all().scale(1.0 / n)
    }

    pub fn mean_lastdim_keep(&self) -> Result<Var> {
        let shape = self.shape();
        let axis = shape.len() - 1;
        let d = shape[axis] as f64;
        Ok(self.sum_axis_keep(axis)?.scale(1.0 / d))
    }

    pub fn gather_rows(&self, indices: &[usize]) -> Result<Var> {
        let idx = Arc::new(indices.to_vec());
        let v = tensor::gather_rows(&self.value(), &idx)?;
        Ok(self.tape.push(v, &[self.id], Op::GatherRows(idx)))
    }

    pub fn scatter_add_rows(&self, indices: &[usize], n_rows: usize) -> Result<Var> {
        let idx = Arc::new(indices.to_vec());
        let v = tensor::scatter_add_rows(&self.value(), &idx, n_rows)?;
        Ok(self.tape.push(v, &[self.id], Op::ScatterAddRows { indices: idx, n_rows }))
    }

    pub fn concat(&self, other: &Var, axis: usize) -> Result<Var> {
        assert!(self.tape.same_tape(&other.tape), "vars from different tapes");
        let v = tensor::concat(&self.value(), &other.value(), axis)?;
        Ok(self.tape.push(v, &[self.id, other.id], Op::Concat { axis }))
    }

    pub fn slice_axis(&self, axis: usize, start: usize, len: usize) -> Result<Var> {
        let v = tensor::slice_axis(&self.value(), axis, start, len)?;
        Ok(self.tape.push(v, &[self.id], Op::SliceAxis { axis, start }))
    }

    pub fn pad_axis(&self, axis: usize, before: usize, after: usize) -> Result<Var> {
        let v = tensor::pad_axis(&self.value(), axis, before, after)?;
        Ok(self.tape.push(v, &[self.id], Op::PadAxis { axis, before, after }))
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $fname:ident) => {
        impl std::ops::$trait<&Var> for &Var {
            type Output = Var;
            fn $method(self, rhs: &Var) -> Var {
                $fname(self, rhs).expect(concat!(stringify!($fname), ": incompatible shapes"))
            }
        }
    };
}

impl_binop!(Add, add, try_add);
impl_binop!(Sub, sub, try_sub);
impl_binop!(Mul, mul, try_mul);
impl_binop!(Div, div, try_div);

/// Gradients of one root node w.r.t. every ancestor, as tape nodes.
pub struct Grads {
    by_id: Vec<Option<Var>>,
}

impl Grads {
    /// Gradient node for `v`, or `None` if the root does not depend on it.
    pub fn get(&self, v: &Var) -> Option<Var> {
        self.by_id.get(v.id).cloned().flatten()
    }

    /// Gradient tensor for `v`; zeros when the root does not depend on it.
    pub fn tensor(&self, v: &Var) -> Tensor {
        match self.get(v) {
            Some(g) => g.value(),
            None => Tensor::zeros(&v.value().shape().to_vec()),
        }
    }
}

impl Tape {
    /// Reverse pass from `root`, seeded with `seed` (cotangent of the root;
    /// defaults to ones, i.e. the gradient of `root.sum()`).
    ///
    /// Gradient nodes are appended to the tape, so the result can itself be
    /// differentiated by calling `grad` again on one of the returned nodes.
    pub fn grad(&self, root: &Var, seed: Option<Tensor>) -> Result<Grads> {
        let root_shape = root.value().shape().to_vec();
        let seed = match seed {
            Some(s) => {
                if s.shape() != root_shape.as_slice() {
                    return Err(Error::ShapeMismatch { op: "grad seed", lhs: s.shape().to_vec(), rhs: root_shape });
                }
                s
            }
            None => Tensor::ones(&root_shape),
        };

        let frontier = root.id;
        // Reachable ancestors of the root.
        let mut reachable = vec![false; frontier + 1];
        reachable[frontier] = true;
        {
            let inner = self.inner.borrow();
            for id in (0..=frontier).rev() {
                if !reachable[id] {
                    continue;
                }
                let node = &inner.nodes[id];
                for k in 0..node.n_parents as usize {
                    reachable[node.parents[k]] = true;
                }
            }
        }

        let mut grads: Vec<Option<Var>> = vec![None; frontier + 1];
        grads[frontier] = Some(self.leaf(seed));

        for id in (0..=frontier).rev() {
            if !reachable[id] {
                continue;
            }
            let g = match grads[id].clone() {
                Some(g) => g,
                None => continue, // reachable but no gradient path contributes
            };
            let (op, parents, n_parents) = {
                let inner = self.inner.borrow();
                let node = &inner.nodes[id];
                (node.op.clone(), node.parents, node.n_parents as usize)
            };
            if matches!(op, Op::Leaf) {
                continue;
            }
            let out = Var { tape: self.clone(), id };
            let parent_vars: Vec<Var> =
                parents[..n_parents].iter().map(|&p| Var { tape: self.clone(), id: p }).collect();
            let contribs = vjp(&op, &out, &g, &parent_vars)?;
            for (pv, contrib) in parent_vars.iter().zip(contribs) {
                let c = match contrib {
                    Some(c) => c,
                    None => continue,
                };
                grads[pv.id] = Some(match grads[pv.id].take() {
                    Some(existing) => try_add(&existing, &c)?,
                    None => c,
                });
            }
        }
        Ok(Grads { by_id: grads })
    }
}

/// Vector-Jacobian product of one op, written in terms of tape primitives so
/// that the produced gradient nodes remain differentiable.
fn vjp(op: &Op, out: &Var, g: &Var, parents: &[Var]) -> Result<Vec<Option<Var>>> {
    let r = match op {
        Op::Leaf => vec![],
        Op::Add => {
            let (a, b) = (&parents[0], &parents[1]);
            vec![Some(g.sum_to(&a.shape())?), Some(g.sum_to(&b.shape())?)]
        }
        Op::Sub => {
            let (a, b) = (&parents[0], &parents[1]);
            vec![Some(g.sum_to(&a.shape())?), Some(g.neg().sum_to(&b.shape())?)]
        }
        Op::Mul => {
            let (a, b) = (&parents[0], &parents[1]);
            let ga = try_mul(g, b)?.sum_to(&a.shape())?;
            let gb = try_mul(g, a)?.sum_to(&b.shape())?;
            vec![Some(ga), Some(gb)]
        }
        Op::Div => {
            let (a, b) = (&parents[0], &parents[1]);
            let ga = try_div(g, b)?.sum_to(&a.shape())?;
            // d(a/b)/db = -a/b^2 = -out/b
            let gb = try_div(&try_mul(g, out)?, b)?.neg().sum_to(&b.shape())?;
            vec![Some(ga), Some(gb)]
        }
        Op::Matmul => {
            let (a, b) = (&parents[0], &parents[1]);
            let ga = matmul(g, &b.permute(&[1, 0])?)?;
            let gb = matmul(&a.permute(&[1, 0])?, g)?;
            vec![Some(ga), Some(gb)]
        }
        Op::Bmm => {
            let (a, b) = (&parents[0], &parents[1]);
            let ga = bmm(g, &b.permute(&[0, 2, 1])?)?;
            let gb = bmm(&a.permute(&[0, 2, 1])?, g)?;
            vec![Some(ga), Some(gb)]
        }
        Op::Scale(s) => vec![Some(g.scale(*s))],
        Op::AddScalar(_) => vec![Some(g.clone())],
        Op::Powf(p) => {
            let a = &parents[0];
            let ga = try_mul(g, &a.powf(p - 1.0).scale(*p))?;
            vec![Some(ga)]
        }
        Op::Exp => vec![Some(try_mul(g, out)?)],
        Op::Log => vec![Some(try_div(g, &parents[0])?)],
        Op::Sin => vec![Some(try_mul(g, &cos(&parents[0]))?)],
        Op::Cos => vec![Some(try_mul(g, &sin(&parents[0]))?.neg())],
        Op::Tanh => {
            // 1 - tanh^2
            let one_minus = out.square().neg().add_scalar(1.0);
            vec![Some(try_mul(g, &one_minus)?)]
        }
        Op::Sqrt => vec![Some(try_div(g, &out.scale(2.0))?)],
        Op::Erf => {
            // d erf(x)/dx = 2/sqrt(pi) * exp(-x^2)
            let a = &parents[0];
            let d = exp(&a.square().neg()).scale(2.0 * INV_SQRT_PI);
            vec![Some(try_mul(g, &d)?)]
        }
        Op::Relu => {
            // Subgradient mask, entered as a constant: d^2 relu = 0 a.e.
            let mask = parents[0].value().map(|x| if x > 0.0 { 1.0 } else { 0.0 });
            let mask = g.tape.leaf(mask);
            vec![Some(try_mul(g, &mask)?)]
        }
        Op::Permute(axes) => {
            let mut inv = vec![0usize; axes.len()];
            for (i, &ax) in axes.iter().enumerate() {
                inv[ax] = i;
            }
            vec![Some(g.permute(&inv)?)]
        }
        Op::Reshape => vec![Some(g.reshape(&parents[0].shape())?)],
        Op::BroadcastTo => vec![Some(g.sum_to(&parents[0].shape())?)],
        Op::SumTo => vec![Some(g.broadcast_to(&parents[0].shape())?)],
        Op::SumAxisKeep(_) => vec![Some(g.broadcast_to(&parents[0].shape())?)],
        Op::SumAll => vec![Some(g.broadcast_to(&parents[0].shape())?)],
        Op::GatherRows(idx) => {
            let n_rows = parents[0].shape()[0];
            vec![Some(g.scatter_add_rows(idx, n_rows)?)]
        }
        Op::ScatterAddRows { indices, .. } => vec![Some(g.gather_rows(indices)?)],
        Op::Concat { axis } => {
            let la = parents[0].shape()[*axis];
            let lb = parents[1].shape()[*axis];
            vec![
                Some(g.slice_axis(*axis, 0, la)?),
                Some(g.slice_axis(*axis, la, lb)?),
            ]
        }
        Op::SliceAxis { axis, start } => {
            let total = parents[0].shape()[*axis];
            let len = out.shape()[*axis];
            vec![Some(g.pad_axis(*axis, *start, total - start - len)?)]
        }
        Op::PadAxis { axis, before, .. } => {
            let len = parents[0].shape()[*axis];
            vec![Some(g.slice_axis(*axis, *before, len)?)]
        }
    };
    Ok(r)
}
