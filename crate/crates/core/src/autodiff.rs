//! Reverse-mode differentiation over scalar expression graphs.
//!
//! An [`ExprGraph`] is an append-only list of nodes. Leaves are spatial
//! inputs, trainable parameters and constants; every other node refers only
//! to nodes created before it, so index order is a valid evaluation order.
//!
//! Two ways to differentiate are offered:
//!
//! - [`ExprGraph::eval_with_gradients`] runs a numeric forward sweep followed
//!   by a reverse sweep and returns the value together with the derivatives
//!   with respect to every parameter and every input.
//! - [`ExprGraph::gradient`] performs the reverse sweep *symbolically*: it
//!   appends new nodes that compute the adjoints. Those nodes are ordinary
//!   graph nodes, so they can be differentiated again. This is how a loss that
//!   contains spatial derivatives of a field is differentiated with respect
//!   to the field's parameters.
//!
//! ```
//! use strainloc_core::autodiff::ExprGraph;
//!
//! // f(x; θ) = θ·x², differentiate ∂f/∂x = 2θx with respect to θ.
//! let mut g = ExprGraph::new(1, 1);
//! let (x, t) = (g.input(0), g.param(0));
//! let xx = g.mul(x, x);
//! let f = g.mul(t, xx);
//! let dfdx = g.input_gradient(f)[0];
//! let b = g.eval_with_gradients(dfdx, &[3.0], &[2.0]).unwrap();
//! assert_eq!(b.value, 12.0);
//! assert_eq!(b.dparams, vec![4.0]);
//! ```

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Const(f64),
    Input(usize),
    Param(usize),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Neg(NodeId),
    Recip(NodeId),
    /// `max(a, 0)`; derivative at 0 is taken as 0.
    Relu(NodeId),
    /// Heaviside step `a > 0`, the derivative of [`Op::Relu`]. Zero derivative.
    Step(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Pow(NodeId, f64),
    /// `ln(1 + e^{βa}) / β`, evaluated without overflow.
    Softplus(NodeId, f64),
    /// `1 / (1 + e^{-βa})`, the derivative of [`Op::Softplus`].
    Logistic(NodeId, f64),
    Dot(Vec<NodeId>, Vec<NodeId>),
    Norm(Vec<NodeId>),
    /// `1/a`, or 0 when `a == 0`. Used for the subgradient of [`Op::Norm`] at the origin.
    InvOrZero(NodeId),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Const(_) => "const",
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Neg(_) => "neg",
            Op::Recip(_) => "recip",
            Op::Relu(_) => "relu",
            Op::Step(_) => "step",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Pow(..) => "pow",
            Op::Softplus(..) => "softplus",
            Op::Logistic(..) => "logistic",
            Op::Dot(..) => "dot",
            Op::Norm(_) => "norm",
            Op::InvOrZero(_) => "inv_or_zero",
        }
    }
}

/// Value of a scalar output together with its parameter and input derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub value: f64,
    pub dparams: Vec<f64>,
    pub dinputs: Vec<f64>,
}

/// Overflow-safe softplus `S(z, β) = max(z, 0) + ln(1 + e^{-β|z|}) / β`.
pub fn softplus(z: f64, beta: f64) -> f64 {
    z.max(0.0) + (-beta * z.abs()).exp().ln_1p() / beta
}

/// Logistic function `σ(βz)`, evaluated without overflow.
pub fn logistic(z: f64, beta: f64) -> f64 {
    let t = beta * z;
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug)]
pub struct ExprGraph {
    nodes: Vec<Op>,
    n_inputs: usize,
    n_params: usize,
}

impl ExprGraph {
    /// Creates a graph whose first nodes are the `n_inputs` input leaves
    /// followed by the `n_params` parameter leaves.
    pub fn new(n_inputs: usize, n_params: usize) -> Self {
        let mut nodes = Vec::with_capacity(n_inputs + n_params + 64);
        nodes.extend((0..n_inputs).map(Op::Input));
        nodes.extend((0..n_params).map(Op::Param));
        Self {
            nodes,
            n_inputs,
            n_params,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.index()]
    }

    pub fn input(&self, i: usize) -> NodeId {
        assert!(i < self.n_inputs, "input {i} out of range");
        NodeId(i as u32)
    }

    pub fn param(&self, k: usize) -> NodeId {
        assert!(k < self.n_params, "param {k} out of range");
        NodeId((self.n_inputs + k) as u32)
    }

    fn push(&mut self, op: Op) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(op);
        id
    }

    pub fn constant(&mut self, c: f64) -> NodeId {
        self.push(Op::Const(c))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let nb = self.neg(b);
        self.add(a, nb)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let rb = self.recip(b);
        self.mul(a, rb)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let k = self.constant(c);
        self.mul(k, a)
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let k = self.constant(c);
        self.add(a, k)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Neg(a))
    }

    pub fn recip(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Recip(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Relu(a))
    }

    pub fn step(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Step(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Log(a))
    }

    pub fn powf(&mut self, a: NodeId, p: f64) -> NodeId {
        self.push(Op::Pow(a, p))
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        self.powf(a, 0.5)
    }

    pub fn softplus(&mut self, a: NodeId, beta: f64) -> NodeId {
        self.push(Op::Softplus(a, beta))
    }

    pub fn logistic(&mut self, a: NodeId, beta: f64) -> NodeId {
        self.push(Op::Logistic(a, beta))
    }

    pub fn dot(&mut self, a: &[NodeId], b: &[NodeId]) -> NodeId {
        assert_eq!(a.len(), b.len(), "dot operands differ in length");
        self.push(Op::Dot(a.to_vec(), b.to_vec()))
    }

    pub fn norm(&mut self, a: &[NodeId]) -> NodeId {
        self.push(Op::Norm(a.to_vec()))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.norm(&[a])
    }

    pub fn sum(&mut self, terms: &[NodeId]) -> NodeId {
        match terms {
            [] => self.constant(0.0),
            [first, rest @ ..] => rest.iter().fold(*first, |acc, &t| self.add(acc, t)),
        }
    }

    fn check_dims(&self, params: &[f64], x: &[f64]) -> Result<()> {
        if params.len() != self.n_params {
            return Err(Error::Dimension {
                what: "graph parameters",
                expected: self.n_params,
                got: params.len(),
            });
        }
        if x.len() != self.n_inputs {
            return Err(Error::Dimension {
                what: "graph inputs",
                expected: self.n_inputs,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Evaluates every node up to and including `output`.
    pub fn eval_nodes(&self, output: NodeId, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(params, x)?;
        let n = output.index() + 1;
        let mut v: Vec<f64> = Vec::with_capacity(n);
        for (k, op) in self.nodes[..n].iter().enumerate() {
            let val = match op {
                Op::Const(c) => *c,
                Op::Input(i) => x[*i],
                Op::Param(j) => params[*j],
                Op::Add(a, b) => v[a.index()] + v[b.index()],
                Op::Mul(a, b) => v[a.index()] * v[b.index()],
                Op::Neg(a) => -v[a.index()],
                Op::Recip(a) => 1.0 / v[a.index()],
                Op::Relu(a) => v[a.index()].max(0.0),
                Op::Step(a) => {
                    if v[a.index()] > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                Op::Exp(a) => v[a.index()].exp(),
                Op::Log(a) => v[a.index()].ln(),
                Op::Pow(a, p) => v[a.index()].powf(*p),
                Op::Softplus(a, beta) => softplus(v[a.index()], *beta),
                Op::Logistic(a, beta) => logistic(v[a.index()], *beta),
                Op::Dot(a, b) => a.iter().zip(b).map(|(p, q)| v[p.index()] * v[q.index()]).sum(),
                Op::Norm(a) => a.iter().map(|p| v[p.index()] * v[p.index()]).sum::<f64>().sqrt(),
                Op::InvOrZero(a) => {
                    let d = v[a.index()];
                    if d == 0.0 {
                        0.0
                    } else {
                        1.0 / d
                    }
                }
            };
            if !val.is_finite() {
                return Err(Error::NonFinite {
                    node: k,
                    op: op.name(),
                    value: val,
                });
            }
            v.push(val);
        }
        Ok(v)
    }

    pub fn eval(&self, output: NodeId, params: &[f64], x: &[f64]) -> Result<f64> {
        Ok(*self.eval_nodes(output, params, x)?.last().expect("non-empty"))
    }

    /// Value of `output` and its derivatives with respect to all parameters
    /// and all inputs, by a numeric reverse sweep.
    pub fn eval_with_gradients(&self, output: NodeId, params: &[f64], x: &[f64]) -> Result<GradientBundle> {
        let v = self.eval_nodes(output, params, x)?;
        let n = v.len();
        let mut adj = vec![0.0; n];
        adj[n - 1] = 1.0;
        for k in (0..n).rev() {
            let g = adj[k];
            if g == 0.0 {
                continue;
            }
            match &self.nodes[k] {
                Op::Const(_) | Op::Input(_) | Op::Param(_) | Op::Step(_) => {}
                Op::Add(a, b) => {
                    adj[a.index()] += g;
                    adj[b.index()] += g;
                }
                Op::Mul(a, b) => {
                    adj[a.index()] += g * v[b.index()];
                    adj[b.index()] += g * v[a.index()];
                }
                Op::Neg(a) => adj[a.index()] -= g,
                Op::Recip(a) | Op::InvOrZero(a) => adj[a.index()] -= g * v[k] * v[k],
                Op::Relu(a) => {
                    if v[a.index()] > 0.0 {
                        adj[a.index()] += g;
                    }
                }
                Op::Exp(a) => adj[a.index()] += g * v[k],
                Op::Log(a) => adj[a.index()] += g / v[a.index()],
                Op::Pow(a, p) => adj[a.index()] += g * p * v[a.index()].powf(p - 1.0),
                Op::Softplus(a, beta) => adj[a.index()] += g * logistic(v[a.index()], *beta),
                Op::Logistic(a, beta) => adj[a.index()] += g * beta * v[k] * (1.0 - v[k]),
                Op::Dot(a, b) => {
                    for (p, q) in a.iter().zip(b) {
                        adj[p.index()] += g * v[q.index()];
                        adj[q.index()] += g * v[p.index()];
                    }
                }
                Op::Norm(a) => {
                    if v[k] > 0.0 {
                        for p in a {
                            adj[p.index()] += g * v[p.index()] / v[k];
                        }
                    }
                }
            }
            if !adj[k].is_finite() {
                return Err(Error::NonFinite {
                    node: k,
                    op: "adjoint",
                    value: adj[k],
                });
            }
        }
        let leaf = |idx: usize| if idx < n { adj[idx] } else { 0.0 };
        Ok(GradientBundle {
            value: v[n - 1],
            dparams: (0..self.n_params).map(|k| leaf(self.n_inputs + k)).collect(),
            dinputs: (0..self.n_inputs).map(leaf).collect(),
        })
    }

    /// Appends nodes computing `∂output/∂w` for each `w` in `wrt` and returns
    /// their ids. The new nodes are themselves differentiable.
    pub fn gradient(&mut self, output: NodeId, wrt: &[NodeId]) -> Vec<NodeId> {
        let n = output.index() + 1;
        let mut adj: Vec<Option<NodeId>> = vec![None; n];
        adj[n - 1] = Some(self.constant(1.0));
        for k in (0..n).rev() {
            let Some(g) = adj[k] else { continue };
            let me = NodeId(k as u32);
            match self.nodes[k].clone() {
                Op::Const(_) | Op::Input(_) | Op::Param(_) | Op::Step(_) => {}
                Op::Add(a, b) => {
                    self.accumulate(&mut adj, a, g);
                    self.accumulate(&mut adj, b, g);
                }
                Op::Mul(a, b) => {
                    let ga = self.mul(g, b);
                    let gb = self.mul(g, a);
                    self.accumulate(&mut adj, a, ga);
                    self.accumulate(&mut adj, b, gb);
                }
                Op::Neg(a) => {
                    let c = self.neg(g);
                    self.accumulate(&mut adj, a, c);
                }
                Op::Recip(a) | Op::InvOrZero(a) => {
                    let sq = self.mul(me, me);
                    let t = self.mul(g, sq);
                    let c = self.neg(t);
                    self.accumulate(&mut adj, a, c);
                }
                Op::Relu(a) => {
                    let s = self.step(a);
                    let c = self.mul(g, s);
                    self.accumulate(&mut adj, a, c);
                }
                Op::Exp(a) => {
                    let c = self.mul(g, me);
                    self.accumulate(&mut adj, a, c);
                }
                Op::Log(a) => {
                    let r = self.recip(a);
                    let c = self.mul(g, r);
                    self.accumulate(&mut adj, a, c);
                }
                Op::Pow(a, p) => {
                    let q = self.powf(a, p - 1.0);
                    let t = self.scale(q, p);
                    let c = self.mul(g, t);
                    self.accumulate(&mut adj, a, c);
                }
                Op::Softplus(a, beta) => {
                    let s = self.logistic(a, beta);
                    let c = self.mul(g, s);
                    self.accumulate(&mut adj, a, c);
                }
                Op::Logistic(a, beta) => {
                    let om = self.neg(me);
                    let one_minus = self.add_const(om, 1.0);
                    let ss = self.mul(me, one_minus);
                    let t = self.scale(ss, beta);
                    let c = self.mul(g, t);
                    self.accumulate(&mut adj, a, c);
                }
                Op::Dot(a, b) => {
                    for (p, q) in a.iter().zip(&b) {
                        let cp = self.mul(g, *q);
                        let cq = self.mul(g, *p);
                        self.accumulate(&mut adj, *p, cp);
                        self.accumulate(&mut adj, *q, cq);
                    }
                }
                Op::Norm(a) => {
                    let inv = self.push(Op::InvOrZero(me));
                    let gi = self.mul(g, inv);
                    for p in a {
                        let c = self.mul(gi, p);
                        self.accumulate(&mut adj, p, c);
                    }
                }
            }
        }
        wrt.iter()
            .map(|w| match adj.get(w.index()).copied().flatten() {
                Some(id) => id,
                None => self.constant(0.0),
            })
            .collect()
    }

    fn accumulate(&mut self, adj: &mut [Option<NodeId>], target: NodeId, contribution: NodeId) {
        let slot = &mut adj[target.index()];
        *slot = Some(match *slot {
            None => contribution,
            Some(prev) => self.push(Op::Add(prev, contribution)),
        });
    }

    /// Symbolic gradient of `output` with respect to every input leaf.
    pub fn input_gradient(&mut self, output: NodeId) -> Vec<NodeId> {
        let wrt: Vec<NodeId> = (0..self.n_inputs).map(|i| self.input(i)).collect();
        self.gradient(output, &wrt)
    }

    /// Symbolic gradient of `output` with respect to every parameter leaf.
    pub fn param_gradient(&mut self, output: NodeId) -> Vec<NodeId> {
        let wrt: Vec<NodeId> = (0..self.n_params).map(|k| self.param(k)).collect();
        self.gradient(output, &wrt)
    }
}

/// Largest relative discrepancy between reverse-mode derivatives and central
/// differences, over every parameter and input direction:
/// `|AD − FD| / max(|AD|, 1e-12)`. The difference quotient divides by the
/// step actually realized in floating point.
pub fn gradcheck(graph: &ExprGraph, output: NodeId, params: &[f64], x: &[f64], eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1e-3) {
        return Err(Error::Argument(format!(
            "finite-difference step {eps} outside (0, 1e-3]"
        )));
    }
    let ad = graph.eval_with_gradients(output, params, x)?;
    let mut worst: f64 = 0.0;
    let rel = |a: f64, fd: f64| (a - fd).abs() / a.abs().max(1e-12);

    let mut p = params.to_vec();
    for k in 0..p.len() {
        let orig = p[k];
        p[k] = orig + eps;
        let fp = graph.eval(output, &p, x)?;
        let hp = p[k] - orig;
        p[k] = orig - eps;
        let fm = graph.eval(output, &p, x)?;
        let hm = orig - p[k];
        p[k] = orig;
        worst = worst.max(rel(ad.dparams[k], (fp - fm) / (hp + hm)));
    }
    let mut xs = x.to_vec();
    for i in 0..xs.len() {
        let orig = xs[i];
        xs[i] = orig + eps;
        let fp = graph.eval(output, params, &xs)?;
        let hp = xs[i] - orig;
        xs[i] = orig - eps;
        let fm = graph.eval(output, params, &xs)?;
        let hm = orig - xs[i];
        xs[i] = orig;
        worst = worst.max(rel(ad.dinputs[i], (fp - fm) / (hp + hm)));
    }
    Ok(worst)
}

/// Outcome of one case of [`gradcheck_suite`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckCase {
    pub name: &'static str,
    pub points: usize,
    /// Largest relative error over every point and direction.
    pub worst: f64,
}

type CaseBuilder = fn(&mut ExprGraph) -> NodeId;

/// Each case has two inputs and three parameters, all drawn from `[0.5, 1.5]`.
/// Arguments are centred so that no derivative is close to zero, which
/// would make the relative error meaningless.
const SUITE: [(&str, CaseBuilder); 12] = [
    ("add_mul", |g| {
        let (x, y, a, b) = (g.input(0), g.input(1), g.param(0), g.param(1));
        let ax = g.mul(a, x);
        let t = g.add(ax, b);
        g.mul(t, y)
    }),
    ("neg_recip", |g| {
        let (x, a) = (g.input(0), g.param(0));
        let xx = g.mul(x, x);
        let d = g.add(xx, a);
        let r = g.recip(d);
        g.neg(r)
    }),
    ("exp_log", |g| {
        let (x, y, a) = (g.input(0), g.input(1), g.param(0));
        let ax = g.mul(a, x);
        let e = g.exp(ax);
        let yy = g.mul(y, y);
        let l = g.add_const(yy, 1.0);
        let l = g.log(l);
        g.add(e, l)
    }),
    ("pow_sqrt", |g| {
        let (x, a, b) = (g.input(0), g.param(0), g.param(1));
        let xx = g.mul(x, x);
        let base = g.add(xx, a);
        let p = g.powf(base, 1.7);
        let s = g.sqrt(base);
        let bs = g.mul(b, s);
        g.add(p, bs)
    }),
    ("relu_step", |g| {
        let (x, y, a) = (g.input(0), g.input(1), g.param(0));
        let ax = g.mul(a, x);
        let r = g.relu(ax);
        let s = g.step(y);
        let rs = g.mul(r, s);
        g.add(rs, r)
    }),
    ("softplus", |g| {
        let (x, a) = (g.input(0), g.param(0));
        let z = g.mul(a, x);
        let z = g.add_const(z, -1.0);
        let z = g.scale(z, 0.02);
        g.softplus(z, 100.0)
    }),
    ("logistic", |g| {
        let (x, a) = (g.input(0), g.param(0));
        let z = g.mul(a, x);
        let z = g.add_const(z, -1.0);
        let z = g.scale(z, 0.02);
        g.logistic(z, 100.0)
    }),
    ("dot_norm", |g| {
        let (x, y, a, b, c) = (g.input(0), g.input(1), g.param(0), g.param(1), g.param(2));
        let d = g.dot(&[x, y], &[a, b]);
        let n = g.norm(&[d, c, x]);
        g.mul(n, d)
    }),
    ("abs", |g| {
        let (x, a) = (g.input(0), g.param(0));
        let t = g.add_const(x, -2.0);
        let t = g.mul(a, t);
        g.abs(t)
    }),
    ("band_activation", |g| {
        // Φ = S(z + ½) − S(z − ½) with z = (x·n − y_p)/c.
        let (x, y, n1, n2, yp) = (g.input(0), g.input(1), g.param(0), g.param(1), g.param(2));
        let xn = g.dot(&[x, y], &[n1, n2]);
        let yp = g.scale(yp, 2.5);
        let d = g.sub(xn, yp);
        let z = g.scale(d, 0.5);
        let zp = g.add_const(z, 0.5);
        let zm = g.add_const(z, -0.5);
        let sp = g.softplus(zp, 4.0);
        let sm = g.softplus(zm, 4.0);
        g.sub(sp, sm)
    }),
    ("perceptron", |g| {
        let (x, y, a, b, c) = (g.input(0), g.input(1), g.param(0), g.param(1), g.param(2));
        let h1 = g.dot(&[x, y], &[a, b]);
        let h1 = g.add(h1, c);
        let h1 = g.softplus(h1, 1.0);
        let h2 = g.dot(&[x, y], &[b, c]);
        let h2 = g.softplus(h2, 1.0);
        g.dot(&[h1, h2], &[c, a])
    }),
    ("mixed_second_order", |g| {
        // ∂f/∂x of a smooth field, differentiated again with respect to θ.
        let (x, y, a, b, c) = (g.input(0), g.input(1), g.param(0), g.param(1), g.param(2));
        let ax = g.mul(a, x);
        let by = g.mul(b, y);
        let e = g.exp(ax);
        let s = g.softplus(by, 3.0);
        let f = g.dot(&[e, s], &[c, e]);
        g.input_gradient(f)[0]
    }),
];

/// Gradient check of every operator family, plus a perceptron, a band
/// activation and a mixed second derivative, at `points` random points each.
pub fn gradcheck_suite(seed: u64, points: usize, eps: f64) -> Result<Vec<GradcheckCase>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    SUITE
        .iter()
        .map(|&(name, build)| {
            let mut g = ExprGraph::new(2, 3);
            let out = build(&mut g);
            let mut worst: f64 = 0.0;
            for _ in 0..points {
                let x = [rng.random_range(0.5..1.5), rng.random_range(0.5..1.5)];
                let p = [
                    rng.random_range(0.5..1.5),
                    rng.random_range(0.5..1.5),
                    rng.random_range(0.5..1.5),
                ];
                worst = worst.max(gradcheck(&g, out, &p, &x, eps)?);
            }
            Ok(GradcheckCase { name, points, worst })
        })
        .collect()
}
