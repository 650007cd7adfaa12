//! Scalar reverse-mode differentiation with recordable gradients.
//!
//! A [`Tape`] is an append-only list of primitive scalar operations. Two
//! reverse passes are available:
//!
//! * [`Tape::backward`] propagates plain `f64` adjoints from one output to
//!   every node. This is the outer pass used for parameter gradients.
//! * [`Tape::grad`] records the reverse pass itself as new tape nodes and
//!   returns the gradient as tape variables. Those variables can feed any
//!   later computation, so a loss whose forward pass contains a gradient map
//!   (such as `∇g` of a convex block) can be differentiated again.
//!
//! Model code is written once against the [`Arith`] trait and runs either on
//! plain floats ([`Plain`]) or on a tape.

use crate::error::{Error, Result};

/// Arithmetic over some scalar representation.
///
/// The provided methods build the composite primitives used by the link
/// model (inner products, affine maps, squared norms) out of the required
/// elementary operations.
pub trait Arith {
    type S: Copy;

    fn constant(&mut self, v: f64) -> Self::S;
    fn value(&self, s: Self::S) -> f64;

    fn add(&mut self, a: Self::S, b: Self::S) -> Self::S;
    fn sub(&mut self, a: Self::S, b: Self::S) -> Self::S;
    fn mul(&mut self, a: Self::S, b: Self::S) -> Self::S;
    fn div(&mut self, a: Self::S, b: Self::S) -> Self::S;
    fn neg(&mut self, a: Self::S) -> Self::S;
    /// `c * a` for a constant `c`.
    fn scale(&mut self, a: Self::S, c: f64) -> Self::S;
    /// `a + c` for a constant `c`.
    fn shift(&mut self, a: Self::S, c: f64) -> Self::S;
    fn exp(&mut self, a: Self::S) -> Self::S;
    fn ln(&mut self, a: Self::S) -> Self::S;
    fn softplus(&mut self, a: Self::S) -> Self::S;
    fn sigmoid(&mut self, a: Self::S) -> Self::S;

    fn sum(&mut self, xs: &[Self::S]) -> Self::S {
        match xs.split_first() {
            None => self.constant(0.0),
            Some((&first, rest)) => rest.iter().fold(first, |acc, &x| self.add(acc, x)),
        }
    }

    fn dot(&mut self, a: &[Self::S], b: &[Self::S]) -> Self::S {
        debug_assert_eq!(a.len(), b.len());
        let mut acc: Option<Self::S> = None;
        for (&x, &y) in a.iter().zip(b) {
            let t = self.mul(x, y);
            acc = Some(match acc {
                None => t,
                Some(s) => self.add(s, t),
            });
        }
        acc.unwrap_or_else(|| self.constant(0.0))
    }

    /// `bias + weights · x` for one output row.
    fn affine_row(&mut self, weights: &[Self::S], x: &[Self::S], bias: Self::S) -> Self::S {
        let mut acc = bias;
        for (&w, &xi) in weights.iter().zip(x) {
            let t = self.mul(w, xi);
            acc = self.add(acc, t);
        }
        acc
    }

    /// `‖x‖² / 2`.
    fn half_sq_norm(&mut self, x: &[Self::S]) -> Self::S {
        let sq = self.dot(x, x);
        self.scale(sq, 0.5)
    }
}

/// Plain `f64` arithmetic.
#[derive(Debug, Default, Clone, Copy)]
pub struct Plain;

/// `log(1 + e^a)` without overflow.
#[inline]
pub fn softplus(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-a})` without overflow.
#[inline]
pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

impl Arith for Plain {
    type S = f64;

    #[inline]
    fn constant(&mut self, v: f64) -> f64 {
        v
    }
    #[inline]
    fn value(&self, s: f64) -> f64 {
        s
    }
    #[inline]
    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }
    #[inline]
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }
    #[inline]
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
    #[inline]
    fn div(&mut self, a: f64, b: f64) -> f64 {
        a / b
    }
    #[inline]
    fn neg(&mut self, a: f64) -> f64 {
        -a
    }
    #[inline]
    fn scale(&mut self, a: f64, c: f64) -> f64 {
        c * a
    }
    #[inline]
    fn shift(&mut self, a: f64, c: f64) -> f64 {
        a + c
    }
    #[inline]
    fn exp(&mut self, a: f64) -> f64 {
        a.exp()
    }
    #[inline]
    fn ln(&mut self, a: f64) -> f64 {
        a.ln()
    }
    #[inline]
    fn softplus(&mut self, a: f64) -> f64 {
        softplus(a)
    }
    #[inline]
    fn sigmoid(&mut self, a: f64) -> f64 {
        sigmoid(a)
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Leaf,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale,
    Shift,
    Exp,
    Ln,
    Softplus,
    Sigmoid,
}

impl Op {
    fn arity(self) -> usize {
        match self {
            Op::Leaf | Op::Const => 0,
            Op::Add | Op::Sub | Op::Mul | Op::Div => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    op: Op,
    a: u32,
    b: u32,
    c: f64,
    value: f64,
}

/// Adjoint of a node during a recorded reverse pass; `One` avoids emitting
/// multiplications by the unit seed.
#[derive(Debug, Clone, Copy)]
enum Adj {
    Zero,
    One,
    V(Var),
}

/// Append-only record of scalar operations.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Plain adjoints from one [`Tape::backward`] pass.
#[derive(Debug, Clone)]
pub struct Adjoints {
    values: Vec<f64>,
    reached: Vec<bool>,
}

impl Adjoints {
    /// Derivative of the output with respect to `v`; `None` when the output
    /// does not depend on `v` structurally.
    pub fn get(&self, v: Var) -> Option<f64> {
        let i = v.index();
        match self.reached.get(i) {
            Some(true) => Some(self.values[i]),
            _ => None,
        }
    }

    /// Derivative, with structural zeros reported as `0.0`.
    pub fn value(&self, v: Var) -> f64 {
        self.get(v).unwrap_or(0.0)
    }
}

/// One entry of a [`ParamGradient`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradEntry {
    Value(f64),
    /// The loss has no path to this parameter on the tape.
    StructuralZero,
}

impl GradEntry {
    pub fn value(self) -> f64 {
        match self {
            GradEntry::Value(v) => v,
            GradEntry::StructuralZero => 0.0,
        }
    }
}

/// Gradient of a scalar loss with respect to an ordered parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    entries: Vec<GradEntry>,
}

impl ParamGradient {
    pub fn from_entries(entries: Vec<GradEntry>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> GradEntry {
        self.entries[i]
    }

    pub fn entries(&self) -> &[GradEntry] {
        &self.entries
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.value()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.value().is_finite())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: Vec::with_capacity(n),
        }
    }

    /// Drops every node but keeps the allocation.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    fn push(&mut self, op: Op, a: u32, b: u32, c: f64, value: f64) -> Var {
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node { op, a, b, c, value });
        Var(idx)
    }

    /// A differentiable input.
    pub fn var(&mut self, v: f64) -> Var {
        self.push(Op::Leaf, 0, 0, 0.0, v)
    }

    pub fn vars(&mut self, vs: &[f64]) -> Vec<Var> {
        vs.iter().map(|&v| self.var(v)).collect()
    }

    pub fn constants(&mut self, vs: &[f64]) -> Vec<Var> {
        vs.iter().map(|&v| self.constant(v)).collect()
    }

    pub fn values(&self, vs: &[Var]) -> Vec<f64> {
        vs.iter().map(|&v| self.value(v)).collect()
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.index() < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::ForeignVariable {
                index: v.index(),
                len: self.nodes.len(),
            })
        }
    }

    /// Reverse pass with plain adjoints, seeded with `d output / d output = 1`.
    pub fn backward(&self, output: Var) -> Result<Adjoints> {
        self.check(output)?;
        let n = output.index() + 1;
        let mut values = vec![0.0; n];
        let mut reached = vec![false; n];
        values[n - 1] = 1.0;
        reached[n - 1] = true;
        for i in (0..n).rev() {
            if !reached[i] {
                continue;
            }
            let g = values[i];
            let node = self.nodes[i];
            let (a, b) = (node.a as usize, node.b as usize);
            match node.op {
                Op::Leaf | Op::Const => continue,
                Op::Add => {
                    values[a] += g;
                    values[b] += g;
                }
                Op::Sub => {
                    values[a] += g;
                    values[b] -= g;
                }
                Op::Mul => {
                    let (va, vb) = (self.nodes[a].value, self.nodes[b].value);
                    values[a] += g * vb;
                    values[b] += g * va;
                }
                Op::Div => {
                    let vb = self.nodes[b].value;
                    values[a] += g / vb;
                    values[b] -= g * node.value / vb;
                }
                Op::Neg => values[a] -= g,
                Op::Scale => values[a] += g * node.c,
                Op::Shift => values[a] += g,
                Op::Exp => values[a] += g * node.value,
                Op::Ln => values[a] += g / self.nodes[a].value,
                Op::Softplus => values[a] += g * sigmoid(self.nodes[a].value),
                Op::Sigmoid => values[a] += g * node.value * (1.0 - node.value),
            }
            reached[a] = true;
            if node.op.arity() == 2 {
                reached[b] = true;
            }
        }
        Ok(Adjoints { values, reached })
    }

    /// Gradient of `loss` with respect to `params`, distinguishing
    /// structural zeros (no path on the tape) from numeric ones.
    pub fn param_gradient(&self, loss: Var, params: &[Var]) -> Result<ParamGradient> {
        for &p in params {
            self.check(p)?;
        }
        let adj = self.backward(loss)?;
        Ok(ParamGradient::from_entries(
            params
                .iter()
                .map(|&p| match adj.get(p) {
                    Some(v) => GradEntry::Value(v),
                    None => GradEntry::StructuralZero,
                })
                .collect(),
        ))
    }

    /// Gradient of `output` with respect to `wrt`, recorded on the tape.
    ///
    /// The nodes in `wrt` are treated as independent inputs: the reverse pass
    /// stops at them, so they may be leaves or intermediate results
    /// (including the output of an earlier `grad` call). The returned
    /// variables are ordinary tape nodes and can be differentiated again.
    pub fn grad(&mut self, output: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        self.check(output)?;
        for &w in wrt {
            self.check(w)?;
        }
        let Some(lo) = wrt.iter().map(|w| w.index()).min() else {
            return Ok(Vec::new());
        };
        let hi = output.index();
        if hi < lo {
            return Ok(wrt.iter().map(|_| self.constant(0.0)).collect());
        }
        let n = hi - lo + 1;
        let mut is_input = vec![false; n];
        for &w in wrt {
            if w.index() <= hi {
                is_input[w.index() - lo] = true;
            }
        }
        // Which nodes in [lo, hi] depend on an input.
        let mut dep = vec![false; n];
        for i in lo..=hi {
            let k = i - lo;
            if is_input[k] {
                dep[k] = true;
                continue;
            }
            let node = &self.nodes[i];
            let arity = node.op.arity();
            let on = |p: u32| (p as usize) >= lo && dep[p as usize - lo];
            dep[k] = (arity >= 1 && on(node.a)) || (arity == 2 && on(node.b));
        }

        let mut adj = vec![Adj::Zero; n];
        if dep[n - 1] {
            adj[n - 1] = Adj::One;
        }
        for i in (lo..=hi).rev() {
            let k = i - lo;
            if !dep[k] || is_input[k] {
                continue;
            }
            let g = adj[k];
            if let Adj::Zero = g {
                continue;
            }
            let node = self.nodes[i];
            let a = Var(node.a);
            let b = Var(node.b);
            let this = Var(i as u32);
            let live = |p: Var| p.index() >= lo && dep[p.index() - lo];
            match node.op {
                Op::Leaf | Op::Const => {}
                Op::Add => {
                    if live(a) {
                        self.accumulate(&mut adj, lo, a, g);
                    }
                    if live(b) {
                        self.accumulate(&mut adj, lo, b, g);
                    }
                }
                Op::Sub => {
                    if live(a) {
                        self.accumulate(&mut adj, lo, a, g);
                    }
                    if live(b) {
                        let t = self.adj_scale(g, -1.0);
                        self.accumulate(&mut adj, lo, b, Adj::V(t));
                    }
                }
                Op::Mul => {
                    if live(a) {
                        let t = self.adj_mul(g, b);
                        self.accumulate(&mut adj, lo, a, Adj::V(t));
                    }
                    if live(b) {
                        let t = self.adj_mul(g, a);
                        self.accumulate(&mut adj, lo, b, Adj::V(t));
                    }
                }
                Op::Div => {
                    if live(a) {
                        let gv = self.adj_var(g);
                        let t = self.div(gv, b);
                        self.accumulate(&mut adj, lo, a, Adj::V(t));
                    }
                    if live(b) {
                        let q = self.div(this, b);
                        let t = self.adj_mul(g, q);
                        let t = self.neg(t);
                        self.accumulate(&mut adj, lo, b, Adj::V(t));
                    }
                }
                Op::Neg => {
                    let t = self.adj_scale(g, -1.0);
                    self.accumulate(&mut adj, lo, a, Adj::V(t));
                }
                Op::Scale => {
                    let t = self.adj_scale(g, node.c);
                    self.accumulate(&mut adj, lo, a, Adj::V(t));
                }
                Op::Shift => self.accumulate(&mut adj, lo, a, g),
                Op::Exp => {
                    let t = self.adj_mul(g, this);
                    self.accumulate(&mut adj, lo, a, Adj::V(t));
                }
                Op::Ln => {
                    let gv = self.adj_var(g);
                    let t = self.div(gv, a);
                    self.accumulate(&mut adj, lo, a, Adj::V(t));
                }
                Op::Softplus => {
                    let s = self.sigmoid(a);
                    let t = self.adj_mul(g, s);
                    self.accumulate(&mut adj, lo, a, Adj::V(t));
                }
                Op::Sigmoid => {
                    let one_minus = self.neg(this);
                    let one_minus = self.shift(one_minus, 1.0);
                    let d = self.mul(this, one_minus);
                    let t = self.adj_mul(g, d);
                    self.accumulate(&mut adj, lo, a, Adj::V(t));
                }
            }
        }

        Ok(wrt
            .iter()
            .map(|&w| {
                let g = if w.index() <= hi {
                    adj[w.index() - lo]
                } else {
                    Adj::Zero
                };
                match g {
                    Adj::Zero => self.constant(0.0),
                    Adj::One => self.constant(1.0),
                    Adj::V(v) => v,
                }
            })
            .collect())
    }

    fn accumulate(&mut self, adj: &mut [Adj], lo: usize, target: Var, g: Adj) {
        let k = target.index() - lo;
        adj[k] = match (adj[k], g) {
            (prev, Adj::Zero) => prev,
            (Adj::Zero, g) => g,
            (prev, g) => {
                let p = self.adj_var(prev);
                let q = self.adj_var(g);
                Adj::V(self.add(p, q))
            }
        };
    }

    fn adj_var(&mut self, g: Adj) -> Var {
        match g {
            Adj::Zero => self.constant(0.0),
            Adj::One => self.constant(1.0),
            Adj::V(v) => v,
        }
    }

    fn adj_mul(&mut self, g: Adj, x: Var) -> Var {
        match g {
            Adj::One => x,
            Adj::V(v) => self.mul(v, x),
            Adj::Zero => self.constant(0.0),
        }
    }

    fn adj_scale(&mut self, g: Adj, c: f64) -> Var {
        match g {
            Adj::One => self.constant(c),
            Adj::V(v) => self.scale(v, c),
            Adj::Zero => self.constant(0.0),
        }
    }
}

impl Arith for Tape {
    type S = Var;

    fn constant(&mut self, v: f64) -> Var {
        self.push(Op::Const, 0, 0, 0.0, v)
    }
    #[inline]
    fn value(&self, s: Var) -> f64 {
        self.nodes[s.index()].value
    }
    fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(Op::Add, a.0, b.0, 0.0, v)
    }
    fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(Op::Sub, a.0, b.0, 0.0, v)
    }
    fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(Op::Mul, a.0, b.0, 0.0, v)
    }
    fn div(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) / self.value(b);
        self.push(Op::Div, a.0, b.0, 0.0, v)
    }
    fn neg(&mut self, a: Var) -> Var {
        let v = -self.value(a);
        self.push(Op::Neg, a.0, 0, 0.0, v)
    }
    fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = c * self.value(a);
        self.push(Op::Scale, a.0, 0, c, v)
    }
    fn shift(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.push(Op::Shift, a.0, 0, c, v)
    }
    fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).exp();
        self.push(Op::Exp, a.0, 0, 0.0, v)
    }
    fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).ln();
        self.push(Op::Ln, a.0, 0, 0.0, v)
    }
    fn softplus(&mut self, a: Var) -> Var {
        let v = softplus(self.value(a));
        self.push(Op::Softplus, a.0, 0, 0.0, v)
    }
    fn sigmoid(&mut self, a: Var) -> Var {
        let v = sigmoid(self.value(a));
        self.push(Op::Sigmoid, a.0, 0, 0.0, v)
    }
}

/// Gradient of a scalar function at `x`, recorded and evaluated through a
/// fresh tape.
pub fn gradient<F>(f: F, x: &[f64]) -> Vec<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let xs = tape.vars(x);
    let out = f(&mut tape, &xs);
    let adj = tape.backward(out).expect("output recorded on this tape");
    xs.iter().map(|&v| adj.value(v)).collect()
}
