//! Reverse-mode scalar tape.
//!
//! Nodes are appended in evaluation order, so every parent index precedes its
//! child and a single reverse sweep accumulates adjoints. Parent links are
//! stored in flat arrays (one `start..start+len` window per node) which keeps
//! n-ary nodes such as dot products to a single entry.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Elementary operation recorded on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Input,
    Constant,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Offset,
    Scale,
    Tanh,
    Exp,
    Ln,
    Softplus,
    Abs,
    Sqrt,
    Affine,
    Sum,
}

/// One recorded operation: its kind and the window of parent links.
#[derive(Clone, Copy, Debug)]
pub struct TapeNode {
    pub op: OpKind,
    start: u32,
    len: u32,
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<TapeNode>,
    values: Vec<f64>,
    parents: Vec<u32>,
    partials: Vec<f64>,
}

impl TapeInner {
    fn push(&mut self, op: OpKind, value: f64, links: &[(u32, f64)]) -> u32 {
        let idx = self.nodes.len() as u32;
        let start = self.parents.len() as u32;
        for &(p, d) in links {
            debug_assert!(p < idx, "parent must precede child");
            self.parents.push(p);
            self.partials.push(d);
        }
        self.nodes.push(TapeNode {
            op,
            start,
            len: links.len() as u32,
        });
        self.values.push(value);
        idx
    }
}

/// Recording tape. Variables borrow it immutably; interior mutability lets
/// ordinary arithmetic operators append nodes.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<TapeInner>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize, links: usize) -> Self {
        Self {
            inner: RefCell::new(TapeInner {
                nodes: Vec::with_capacity(nodes),
                values: Vec::with_capacity(nodes),
                parents: Vec::with_capacity(links),
                partials: Vec::with_capacity(links),
            }),
        }
    }

    /// Drops every recorded node but keeps the allocations.
    pub fn reset(&mut self) {
        let inner = self.inner.get_mut();
        inner.nodes.clear();
        inner.values.clear();
        inner.parents.clear();
        inner.partials.clear();
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers an independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.inner.borrow_mut().push(OpKind::Input, value, &[]);
        Var {
            tape: self,
            idx,
            val: value,
        }
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        let idx = self.inner.borrow_mut().push(OpKind::Constant, value, &[]);
        Var {
            tape: self,
            idx,
            val: value,
        }
    }

    /// Kind and parent links of a recorded node.
    pub fn node(&self, idx: usize) -> (OpKind, Vec<(u32, f64)>) {
        let inner = self.inner.borrow();
        let n = inner.nodes[idx];
        let range = n.start as usize..(n.start + n.len) as usize;
        let links = inner.parents[range.clone()]
            .iter()
            .copied()
            .zip(inner.partials[range].iter().copied())
            .collect();
        (n.op, links)
    }

    fn record(&self, op: OpKind, value: f64, links: &[(u32, f64)]) -> Var<'_> {
        let idx = self.inner.borrow_mut().push(op, value, links);
        Var {
            tape: self,
            idx,
            val: value,
        }
    }

    /// Reverse sweep from `output`; returns the adjoint of every node.
    pub fn gradient(&self, output: Var<'_>) -> Gradients {
        let inner = self.inner.borrow();
        let mut adj = vec![0.0; inner.nodes.len()];
        adj[output.idx as usize] = 1.0;
        for i in (0..=output.idx as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let n = inner.nodes[i];
            let (s, e) = (n.start as usize, (n.start + n.len) as usize);
            for (p, d) in inner.parents[s..e].iter().zip(&inner.partials[s..e]) {
                adj[*p as usize] += a * d;
            }
        }
        Gradients { adjoints: adj }
    }
}

/// Adjoints produced by [`Tape::gradient`].
pub struct Gradients {
    adjoints: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: &Var<'_>) -> f64 {
        self.adjoints[v.idx as usize]
    }

    pub fn wrt_all(&self, vars: &[Var<'_>]) -> Vec<f64> {
        vars.iter().map(|v| self.wrt(v)).collect()
    }
}

/// Handle to a tape node. Cheap to copy; carries its forward value.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var(#{}: {})", self.idx, self.val)
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.val
    }

    pub fn index(&self) -> usize {
        self.idx as usize
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn unary(self, op: OpKind, value: f64, d: f64) -> Self {
        self.tape.record(op, value, &[(self.idx, d)])
    }

    pub fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(OpKind::Tanh, t, 1.0 - t * t)
    }

    pub fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(OpKind::Exp, e, e)
    }

    pub fn ln(self) -> Self {
        self.unary(OpKind::Ln, self.val.ln(), 1.0 / self.val)
    }

    pub fn softplus(self) -> Self {
        self.unary(OpKind::Softplus, softplus(self.val), sigmoid(self.val))
    }

    /// |x| with derivative sign(x), taken as 0 at the kink.
    pub fn abs(self) -> Self {
        let d = if self.val > 0.0 {
            1.0
        } else if self.val < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(OpKind::Abs, self.val.abs(), d)
    }

    pub fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(OpKind::Sqrt, s, 0.5 / s)
    }

    /// `Σ wᵢ·xᵢ (+ b)` as a single node.
    pub fn affine(weights: &[Self], inputs: &[Self], bias: Option<Self>) -> Self {
        assert_eq!(weights.len(), inputs.len(), "affine: length mismatch");
        let tape = weights
            .first()
            .map(|w| w.tape)
            .or(bias.map(|b| b.tape))
            .expect("affine needs at least one tape variable");
        let mut links = Vec::with_capacity(2 * weights.len() + 1);
        let mut acc = 0.0;
        for (w, x) in weights.iter().zip(inputs) {
            acc += w.val * x.val;
            links.push((w.idx, x.val));
            links.push((x.idx, w.val));
        }
        if let Some(b) = bias {
            acc += b.val;
            links.push((b.idx, 1.0));
        }
        tape.record(OpKind::Affine, acc, &links)
    }

    pub fn sum(items: &[Self]) -> Self {
        let tape = items.first().expect("sum of empty slice").tape;
        let mut acc = 0.0;
        let links: Vec<_> = items
            .iter()
            .map(|v| {
                acc += v.val;
                (v.idx, 1.0)
            })
            .collect();
        tape.record(OpKind::Sum, acc, &links)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    // ln(1 + eˣ) without overflow for large x
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        self.tape
            .record(OpKind::Add, self.val + rhs.val, &[(self.idx, 1.0), (rhs.idx, 1.0)])
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        self.tape
            .record(OpKind::Sub, self.val - rhs.val, &[(self.idx, 1.0), (rhs.idx, -1.0)])
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        self.tape.record(
            OpKind::Mul,
            self.val * rhs.val,
            &[(self.idx, rhs.val), (rhs.idx, self.val)],
        )
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        let q = self.val / rhs.val;
        self.tape.record(
            OpKind::Div,
            q,
            &[(self.idx, 1.0 / rhs.val), (rhs.idx, -q / rhs.val)],
        )
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.unary(OpKind::Neg, -self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Self {
        self.unary(OpKind::Offset, self.val + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Self {
        self.unary(OpKind::Offset, self.val - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Self {
        self.unary(OpKind::Scale, self.val * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Self {
        self.unary(OpKind::Scale, self.val / rhs, 1.0 / rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parents_precede_children() {
        let tape = Tape::new();
        let x = tape.var(0.3);
        let y = tape.var(-1.2);
        let z = (x * y + x.tanh()).exp() / (y * y + 1.0);
        let _ = Var::affine(&[x, y], &[z, z], Some(x));
        for i in 0..tape.len() {
            let (_, links) = tape.node(i);
            assert!(links.iter().all(|&(p, _)| (p as usize) < i));
        }
    }

    #[test]
    fn product_rule() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = tape.var(-2.0);
        let f = x * x * y;
        let g = tape.gradient(f);
        assert_eq!(f.value(), -18.0);
        assert_eq!(g.wrt(&x), 2.0 * 3.0 * -2.0);
        assert_eq!(g.wrt(&y), 9.0);
    }

    #[test]
    fn composed_elementaries_match_analytic() {
        // f = ln(1 + e^{x·y}) / sqrt(x) with x = 1.7, y = 0.4
        let (xv, yv) = (1.7_f64, 0.4_f64);
        let tape = Tape::new();
        let x = tape.var(xv);
        let y = tape.var(yv);
        let f = (x * y).softplus() / x.sqrt();
        let g = tape.gradient(f);

        let s = (1.0 + (xv * yv).exp()).ln();
        let sig = 1.0 / (1.0 + (-xv * yv).exp());
        let dfdx = sig * yv / xv.sqrt() - 0.5 * s * xv.powf(-1.5);
        let dfdy = sig * xv / xv.sqrt();
        assert!((f.value() - s / xv.sqrt()).abs() < 1e-15);
        assert!((g.wrt(&x) - dfdx).abs() < 1e-14);
        assert!((g.wrt(&y) - dfdy).abs() < 1e-14);
    }

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-16);
    }

    #[test]
    fn reset_reuses_tape() {
        let mut tape = Tape::new();
        {
            let x = tape.var(1.0);
            let _ = x * x;
        }
        assert_eq!(tape.len(), 2);
        tape.reset();
        assert!(tape.is_empty());
    }
}
