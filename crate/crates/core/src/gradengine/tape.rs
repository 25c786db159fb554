//! Append-only scalar tape for reverse-mode differentiation.
//!
//! Every arithmetic operation on a [`Var`] appends one node whose inputs
//! already live on the tape, so node order is a topological order and the
//! reverse pass is a single backwards sweep. N-ary nodes (`Dot`, `Affine`,
//! `Norm`) keep their operand lists in a shared argument arena so an MLP
//! neuron costs one node instead of `2 * fan_in`.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Pass, Result};

/// Kind of a tape node. Carried by numeric-failure errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale,
    Shift,
    Tanh,
    Sin,
    Cos,
    Sqrt,
    Dot,
    Affine,
    Norm,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    kind: OpKind,
    a: u32,
    b: u32,
    c: f64,
}

impl Node {
    fn nullary(kind: OpKind) -> Self {
        Node { kind, a: 0, b: 0, c: 0.0 }
    }
}

#[derive(Debug, Default)]
struct Inner {
    nodes: Vec<Node>,
    values: Vec<f64>,
    args: Vec<u32>,
}

impl Inner {
    fn push(&mut self, node: Node, value: f64) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(node);
        self.values.push(value);
        id
    }
}

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize, args: usize) -> Self {
        Tape {
            inner: RefCell::new(Inner {
                nodes: Vec::with_capacity(nodes),
                values: Vec::with_capacity(nodes),
                args: Vec::with_capacity(args),
            }),
        }
    }

    /// Drops all nodes but keeps the allocations.
    pub fn clear(&mut self) {
        let inner = self.inner.get_mut();
        inner.nodes.clear();
        inner.values.clear();
        inner.args.clear();
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable input.
    pub fn leaf(&self, value: f64) -> Var<'_> {
        let id = self.inner.borrow_mut().push(Node::nullary(OpKind::Leaf), value);
        Var { tape: self, id }
    }

    /// Contiguous leaves; their ids are `first..first + values.len()`.
    pub fn leaves(&self, values: &[f64]) -> Vec<Var<'_>> {
        let mut inner = self.inner.borrow_mut();
        values
            .iter()
            .map(|&v| Var {
                tape: self,
                id: inner.push(Node::nullary(OpKind::Leaf), v),
            })
            .collect()
    }

    /// A value that takes part in the computation but is not a parameter.
    pub fn constant(&self, value: f64) -> Var<'_> {
        let id = self
            .inner
            .borrow_mut()
            .push(Node::nullary(OpKind::Const), value);
        Var { tape: self, id }
    }

    pub fn var(&self, id: VarId) -> Var<'_> {
        debug_assert!(id.index() < self.len());
        Var { tape: self, id: id.0 }
    }

    pub fn value(&self, id: VarId) -> f64 {
        self.inner.borrow().values[id.index()]
    }

    /// First non-finite forward value, reported by the kind of node that made it.
    pub fn check_forward(&self) -> Result<()> {
        let inner = self.inner.borrow();
        match inner.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite {
                kind: inner.nodes[i].kind,
                pass: Pass::Forward,
            }),
            None => Ok(()),
        }
    }

    /// Reverse sweep from a scalar root seeded with 1.
    pub fn gradient(&self, root: Var<'_>) -> Result<Adjoints> {
        self.backward(&[(root.id(), 1.0)])
    }

    /// Reverse sweep with arbitrary seeds. Seeding several outputs at once
    /// yields the vector-Jacobian product `sum_i seed_i * d out_i / d node`.
    pub fn backward(&self, seeds: &[(VarId, f64)]) -> Result<Adjoints> {
        self.check_forward()?;
        let inner = self.inner.borrow();
        let (adj, _) = reverse_sweep(&inner, seeds, false);
        if adj.iter().any(|v| !v.is_finite()) {
            // Rare path: replay with checks to find the node whose
            // derivative rule produced the first non-finite adjoint.
            let (_, culprit) = reverse_sweep(&inner, seeds, true);
            let kind = culprit.map_or(OpKind::Leaf, |i| inner.nodes[i].kind);
            return Err(Error::NonFinite {
                kind,
                pass: Pass::Reverse,
            });
        }
        Ok(Adjoints(adj))
    }

    fn unary(&self, kind: OpKind, a: u32, c: f64, value: f64) -> Var<'_> {
        let id = self.inner.borrow_mut().push(Node { kind, a, b: 0, c }, value);
        Var { tape: self, id }
    }

    fn binary(&self, kind: OpKind, a: u32, b: u32, f: impl Fn(f64, f64) -> f64) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let value = f(inner.values[a as usize], inner.values[b as usize]);
        let id = inner.push(Node { kind, a, b, c: 0.0 }, value);
        Var { tape: self, id }
    }

    fn dot_node(&self, xs: &[Var<'_>], ys: &[Var<'_>], bias: Option<Var<'_>>) -> Var<'_> {
        assert_eq!(xs.len(), ys.len(), "dot operands differ in length");
        let mut inner = self.inner.borrow_mut();
        let start = inner.args.len() as u32;
        let mut acc = 0.0;
        if let Some(bias) = bias {
            inner.args.push(bias.id);
            acc = inner.values[bias.id as usize];
        }
        for (x, y) in xs.iter().zip(ys) {
            acc += inner.values[x.id as usize] * inner.values[y.id as usize];
            inner.args.push(x.id);
            inner.args.push(y.id);
        }
        let kind = if bias.is_some() {
            OpKind::Affine
        } else {
            OpKind::Dot
        };
        let node = Node {
            kind,
            a: start,
            b: xs.len() as u32,
            c: 0.0,
        };
        let id = inner.push(node, acc);
        Var { tape: self, id }
    }

    pub fn dot<'t>(&'t self, xs: &[Var<'t>], ys: &[Var<'t>]) -> Var<'t> {
        self.dot_node(xs, ys, None)
    }

    /// `bias + sum_i weights[i] * inputs[i]` as a single node.
    pub fn affine<'t>(&'t self, bias: Var<'t>, weights: &[Var<'t>], inputs: &[Var<'t>]) -> Var<'t> {
        self.dot_node(weights, inputs, Some(bias))
    }

    pub fn norm<'t>(&'t self, xs: &[Var<'t>]) -> Var<'t> {
        let mut inner = self.inner.borrow_mut();
        let start = inner.args.len() as u32;
        let mut sq = 0.0;
        for x in xs {
            let v = inner.values[x.id as usize];
            sq += v * v;
            inner.args.push(x.id);
        }
        let node = Node {
            kind: OpKind::Norm,
            a: start,
            b: xs.len() as u32,
            c: 0.0,
        };
        let id = inner.push(node, sq.sqrt());
        Var { tape: self, id }
    }
}

fn node_inputs(n: &Node, args: &[u32]) -> Vec<usize> {
    let (a, b) = (n.a as usize, n.b as usize);
    match n.kind {
        OpKind::Leaf | OpKind::Const => vec![],
        OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div => vec![a, b],
        OpKind::Dot => args[a..a + 2 * b].iter().map(|&j| j as usize).collect(),
        OpKind::Affine => args[a..a + 1 + 2 * b].iter().map(|&j| j as usize).collect(),
        OpKind::Norm => args[a..a + b].iter().map(|&j| j as usize).collect(),
        _ => vec![a],
    }
}

/// One backwards pass over the tape. With `watch` set, stops at the first
/// node that pushes a non-finite adjoint into one of its inputs.
fn reverse_sweep(inner: &Inner, seeds: &[(VarId, f64)], watch: bool) -> (Vec<f64>, Option<usize>) {
    let Inner {
        nodes,
        values,
        args,
    } = inner;
    let mut adj = vec![0.0; nodes.len()];
    for &(id, s) in seeds {
        adj[id.index()] += s;
    }
    for i in (0..nodes.len()).rev() {
        let g = adj[i];
        if g == 0.0 {
            continue;
        }
        let n = nodes[i];
        let (a, b) = (n.a as usize, n.b as usize);
        match n.kind {
            OpKind::Leaf | OpKind::Const => {}
            OpKind::Add => {
                adj[a] += g;
                adj[b] += g;
            }
            OpKind::Sub => {
                adj[a] += g;
                adj[b] -= g;
            }
            OpKind::Mul => {
                adj[a] += g * values[b];
                adj[b] += g * values[a];
            }
            OpKind::Div => {
                adj[a] += g / values[b];
                adj[b] -= g * values[i] / values[b];
            }
            OpKind::Neg => adj[a] -= g,
            OpKind::Scale => adj[a] += g * n.c,
            OpKind::Shift => adj[a] += g,
            OpKind::Tanh => adj[a] += g * (1.0 - values[i] * values[i]),
            OpKind::Sin => adj[a] += g * values[a].cos(),
            OpKind::Cos => adj[a] -= g * values[a].sin(),
            OpKind::Sqrt => adj[a] += g / (2.0 * values[i]),
            OpKind::Dot => {
                for pair in args[a..a + 2 * b].chunks_exact(2) {
                    let (x, y) = (pair[0] as usize, pair[1] as usize);
                    adj[x] += g * values[y];
                    adj[y] += g * values[x];
                }
            }
            OpKind::Affine => {
                adj[args[a] as usize] += g;
                for pair in args[a + 1..a + 1 + 2 * b].chunks_exact(2) {
                    let (w, x) = (pair[0] as usize, pair[1] as usize);
                    adj[w] += g * values[x];
                    adj[x] += g * values[w];
                }
            }
            OpKind::Norm => {
                for &v in &args[a..a + b] {
                    adj[v as usize] += g * values[v as usize] / values[i];
                }
            }
        }
        if watch && node_inputs(&n, args).iter().any(|&j| !adj[j].is_finite()) {
            return (adj, Some(i));
        }
    }
    (adj, None)
}

/// Result of a reverse sweep: one adjoint per tape node.
#[derive(Debug, Clone)]
pub struct Adjoints(Vec<f64>);

impl Adjoints {
    pub fn of(&self, id: VarId) -> f64 {
        self.0[id.index()]
    }

    /// Adjoints of a contiguous id range, e.g. a block created by [`Tape::leaves`].
    pub fn slice(&self, first: VarId, len: usize) -> &[f64] {
        &self.0[first.index()..first.index() + len]
    }
}

/// A scalar living on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: u32,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({})", self.id, self.value())
    }
}

impl<'t> Var<'t> {
    pub fn id(self) -> VarId {
        VarId(self.id)
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    pub fn value(self) -> f64 {
        self.tape.inner.borrow().values[self.id as usize]
    }

    pub fn sin(self) -> Self {
        let v = self.value().sin();
        self.tape.unary(OpKind::Sin, self.id, 0.0, v)
    }

    pub fn cos(self) -> Self {
        let v = self.value().cos();
        self.tape.unary(OpKind::Cos, self.id, 0.0, v)
    }

    pub fn tanh(self) -> Self {
        let v = self.value().tanh();
        self.tape.unary(OpKind::Tanh, self.id, 0.0, v)
    }

    pub fn sqrt(self) -> Self {
        let v = self.value().sqrt();
        self.tape.unary(OpKind::Sqrt, self.id, 0.0, v)
    }

    pub fn scale(self, c: f64) -> Self {
        let v = self.value() * c;
        self.tape.unary(OpKind::Scale, self.id, c, v)
    }

    pub fn shift(self, c: f64) -> Self {
        let v = self.value() + c;
        self.tape.unary(OpKind::Shift, self.id, c, v)
    }
}

fn same_tape(a: &Var<'_>, b: &Var<'_>) {
    debug_assert!(std::ptr::eq(a.tape, b.tape), "operands live on different tapes");
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        same_tape(&self, &rhs);
        self.tape.binary(OpKind::Add, self.id, rhs.id, |a, b| a + b)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        same_tape(&self, &rhs);
        self.tape.binary(OpKind::Sub, self.id, rhs.id, |a, b| a - b)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        same_tape(&self, &rhs);
        self.tape.binary(OpKind::Mul, self.id, rhs.id, |a, b| a * b)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        same_tape(&self, &rhs);
        self.tape.binary(OpKind::Div, self.id, rhs.id, |a, b| a / b)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        let v = -self.value();
        self.tape.unary(OpKind::Neg, self.id, 0.0, v)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.shift(rhs)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.shift(-rhs)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.scale(rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Var<'t> {
        self.scale(1.0 / rhs)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs.scale(self)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs.shift(self)
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        (-rhs).shift(self)
    }
}
