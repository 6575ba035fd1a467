use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::{GradSink, NdError, ParamId, ParamStore};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Norm floor for cosine distance.
pub const COSINE_EPS: f64 = 1e-8;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    idx: usize,
    tape: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    Detach,
    Affine { x: usize, w: usize, b: usize, rows: usize, cols: usize },
    MatVec { w: usize, x: usize, rows: usize, cols: usize },
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Act(usize, Activation),
    LogSoftmax(usize),
    Concat(Vec<usize>),
    Pick(usize, usize),
    Sum(usize),
    Cosine { u: usize, v: usize },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    value: Vec<f64>,
}

/// Record of one forward pass. Values are saved so that any scalar on the
/// tape can be differentiated, any number of times, until [`Tape::reset`].
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    params: HashMap<ParamId, usize>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new(), params: HashMap::new() }
    }

    /// Discards all nodes. Handles issued before the reset become invalid.
    pub fn reset(&mut self) {
        self.id = NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed);
        self.nodes.clear();
        self.params.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>) -> Var {
        self.nodes.push(Node { op, shape, value });
        Var { idx: self.nodes.len() - 1, tape: self.id }
    }

    fn node(&self, v: Var) -> &Node {
        assert_eq!(v.tape, self.id, "variable used on a foreign or reset tape");
        &self.nodes[v.idx]
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let n = self.node(v);
        debug_assert_eq!(n.value.len(), 1);
        n.value[0]
    }

    /// Constant leaf.
    pub fn input(&mut self, data: Vec<f64>) -> Var {
        let shape = vec![data.len()];
        self.push(Op::Input, shape, data)
    }

    /// Parameter leaf; each block is copied onto the tape at most once.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&idx) = self.params.get(&id) {
            return Var { idx, tape: self.id };
        }
        let value = store.value(id);
        let v = self.push(Op::Param(id), value.shape().to_vec(), value.data().to_vec());
        self.params.insert(id, v.idx);
        v
    }

    /// Copy of `a` through which no gradient flows.
    pub fn detach(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let (shape, value) = (n.shape.clone(), n.value.clone());
        self.push(Op::Detach, shape, value)
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NdError> {
        let (xs, ws, bs) = (self.shape(x).to_vec(), self.shape(w).to_vec(), self.shape(b).to_vec());
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] {
            return Err(NdError::Shape(format!("affine: weights {ws:?} vs input {xs:?}")));
        }
        if bs != [ws[0]] {
            return Err(NdError::Shape(format!("affine: weights {ws:?} vs bias {bs:?}")));
        }
        let (rows, cols) = (ws[0], ws[1]);
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let out: Vec<f64> = (0..rows)
            .map(|i| {
                let row = &wv[i * cols..(i + 1) * cols];
                row.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>() + bv[i]
            })
            .collect();
        Ok(self.push(Op::Affine { x: x.idx, w: w.idx, b: b.idx, rows, cols }, vec![rows], out))
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var, NdError> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] {
            return Err(NdError::Shape(format!("matvec: weights {ws:?} vs input {xs:?}")));
        }
        let (rows, cols) = (ws[0], ws[1]);
        let (xv, wv) = (self.value(x), self.value(w));
        let out: Vec<f64> = (0..rows)
            .map(|i| wv[i * cols..(i + 1) * cols].iter().zip(xv).map(|(a, b)| a * b).sum())
            .collect();
        Ok(self.push(Op::MatVec { w: w.idx, x: x.idx, rows, cols }, vec![rows], out))
    }

    fn same_shape(&self, what: &str, a: Var, b: Var) -> Result<Vec<usize>, NdError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(NdError::Shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(sa.to_vec())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        let shape = self.same_shape("add", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        Ok(self.push(Op::Add(a.idx, b.idx), shape, out))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        let shape = self.same_shape("mul", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        Ok(self.push(Op::Mul(a.idx, b.idx), shape, out))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let n = self.node(a);
        let shape = n.shape.clone();
        let out = n.value.iter().map(|x| x * c).collect();
        self.push(Op::Scale(a.idx, c), shape, out)
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let n = self.node(a);
        let shape = n.shape.clone();
        let out = match kind {
            Activation::Tanh => n.value.iter().map(|x| x.tanh()).collect(),
            Activation::Relu => n.value.iter().map(|x| x.max(0.0)).collect(),
        };
        self.push(Op::Act(a.idx, kind), shape, out)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Relu)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let shape = n.shape.clone();
        let out = log_softmax(&n.value);
        self.push(Op::LogSoftmax(a.idx), shape, out)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        let len = out.len();
        self.push(Op::Concat(parts.iter().map(|p| p.idx).collect()), vec![len], out)
    }

    /// Scalar element `i` of `a`.
    pub fn pick(&mut self, a: Var, i: usize) -> Var {
        let v = self.value(a)[i];
        self.push(Op::Pick(a.idx, i), vec![1], vec![v])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(Op::Sum(a.idx), vec![1], vec![s])
    }

    /// `1 - u.v / max(|u||v|, eps)`, or exactly 1 (with zero gradient) when
    /// either norm is below `eps`.
    pub fn cosine_distance(&mut self, u: Var, v: Var) -> Result<Var, NdError> {
        self.same_shape("cosine_distance", u, v)?;
        let d = cosine_distance(self.value(u), self.value(v));
        Ok(self.push(Op::Cosine { u: u.idx, v: v.idx }, vec![1], vec![d]))
    }

    /// Accumulates `d loss / d param` into `sink` for every parameter block
    /// reachable from `loss`. May be called repeatedly on the same tape.
    pub fn backward<S: GradSink + ?Sized>(&self, loss: Var, sink: &mut S) -> Result<(), NdError> {
        if loss.tape != self.id || loss.idx >= self.nodes.len() {
            return Err(NdError::TapeConsumed);
        }
        let root = &self.nodes[loss.idx];
        if root.value.len() != 1 {
            return Err(NdError::NotScalar(root.shape.clone()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.idx + 1];
        adj[loss.idx] = Some(vec![1.0]);

        for idx in (0..=loss.idx).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input | Op::Detach => {}
                Op::Param(pid) => sink.accumulate(*pid, &g),
                Op::Affine { x, w, b, rows, cols } => {
                    let (xv, wv) = (&self.nodes[*x].value, &self.nodes[*w].value);
                    let gw = acc(&mut adj, *w, rows * cols);
                    for i in 0..*rows {
                        for j in 0..*cols {
                            gw[i * cols + j] += g[i] * xv[j];
                        }
                    }
                    let gx = acc(&mut adj, *x, *cols);
                    for i in 0..*rows {
                        for j in 0..*cols {
                            gx[j] += wv[i * cols + j] * g[i];
                        }
                    }
                    let gb = acc(&mut adj, *b, *rows);
                    for i in 0..*rows {
                        gb[i] += g[i];
                    }
                }
                Op::MatVec { w, x, rows, cols } => {
                    let (xv, wv) = (&self.nodes[*x].value, &self.nodes[*w].value);
                    let gw = acc(&mut adj, *w, rows * cols);
                    for i in 0..*rows {
                        for j in 0..*cols {
                            gw[i * cols + j] += g[i] * xv[j];
                        }
                    }
                    let gx = acc(&mut adj, *x, *cols);
                    for i in 0..*rows {
                        for j in 0..*cols {
                            gx[j] += wv[i * cols + j] * g[i];
                        }
                    }
                }
                Op::Add(a, b) => {
                    for &t in [a, b].iter() {
                        let ga = acc(&mut adj, *t, g.len());
                        ga.iter_mut().zip(&g).for_each(|(d, s)| *d += s);
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let ga = acc(&mut adj, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                    let gb = acc(&mut adj, *b, g.len());
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                }
                Op::Scale(a, c) => {
                    let ga = acc(&mut adj, *a, g.len());
                    ga.iter_mut().zip(&g).for_each(|(d, s)| *d += c * s);
                }
                Op::Act(a, kind) => {
                    let out = &node.value;
                    let ga = acc(&mut adj, *a, g.len());
                    match kind {
                        Activation::Tanh => {
                            for i in 0..g.len() {
                                ga[i] += g[i] * (1.0 - out[i] * out[i]);
                            }
                        }
                        Activation::Relu => {
                            for i in 0..g.len() {
                                if out[i] > 0.0 {
                                    ga[i] += g[i];
                                }
                            }
                        }
                    }
                }
                Op::LogSoftmax(a) => {
                    let out = &node.value;
                    let total: f64 = g.iter().sum();
                    let ga = acc(&mut adj, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] - out[i].exp() * total;
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.nodes[p].value.len();
                        let gp = acc(&mut adj, p, len);
                        gp.iter_mut().zip(&g[off..off + len]).for_each(|(d, s)| *d += s);
                        off += len;
                    }
                }
                Op::Pick(a, i) => {
                    let len = self.nodes[*a].value.len();
                    acc(&mut adj, *a, len)[*i] += g[0];
                }
                Op::Sum(a) => {
                    let len = self.nodes[*a].value.len();
                    acc(&mut adj, *a, len).iter_mut().for_each(|d| *d += g[0]);
                }
                Op::Cosine { u, v } => {
                    let (uv, vv) = (&self.nodes[*u].value, &self.nodes[*v].value);
                    let (du, dv) = cosine_distance_grad(uv, vv);
                    let gu = acc(&mut adj, *u, du.len());
                    gu.iter_mut().zip(&du).for_each(|(d, s)| *d += g[0] * s);
                    let gv = acc(&mut adj, *v, dv.len());
                    gv.iter_mut().zip(&dv).for_each(|(d, s)| *d += g[0] * s);
                }
            }
        }
        Ok(())
    }
}

fn acc(adj: &mut [Option<Vec<f64>>], idx: usize, len: usize) -> &mut Vec<f64> {
    adj[idx].get_or_insert_with(|| vec![0.0; len])
}

/// Max-subtracted log-softmax.
pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

fn norms(u: &[f64], v: &[f64]) -> (f64, f64, f64) {
    let dot = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    (dot, nu, nv)
}

pub fn cosine_distance(u: &[f64], v: &[f64]) -> f64 {
    let (dot, nu, nv) = norms(u, v);
    if nu < COSINE_EPS || nv < COSINE_EPS {
        return 1.0;
    }
    1.0 - dot / (nu * nv).max(COSINE_EPS)
}

fn cosine_distance_grad(u: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (dot, nu, nv) = norms(u, v);
    if nu < COSINE_EPS || nv < COSINE_EPS {
        return (vec![0.0; u.len()], vec![0.0; v.len()]);
    }
    let denom = nu * nv;
    if denom < COSINE_EPS {
        let du = v.iter().map(|b| -b / COSINE_EPS).collect();
        let dv = u.iter().map(|a| -a / COSINE_EPS).collect();
        return (du, dv);
    }
    let du = u.iter().zip(v).map(|(a, b)| -(b / denom - dot * a / (nu * nu * denom))).collect();
    let dv = u.iter().zip(v).map(|(a, b)| -(a / denom - dot * b / (nv * nv * denom))).collect();
    (du, dv)
}
