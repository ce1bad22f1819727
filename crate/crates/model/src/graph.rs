//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! Every op appends a node holding its forward value; [`Graph::backward`]
//! walks the tape in reverse and accumulates gradients only into nodes that
//! depend on a parameter. Parameters enter the tape once per graph, so two
//! branches that read the same name share one leaf and their gradient
//! contributions add up.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::params::ParamStore;
use crate::tensor::{gemm, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MaskMul(Var, Vec<f64>),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        len: usize,
        kernel: usize,
        cols: Vec<f64>,
    },
    MaxPool2 {
        x: Var,
        argmax: Vec<usize>,
    },
    Reshape(Var),
    GatherRows(Var, Vec<usize>),
    InterleaveRows(Vec<Var>),
    AttnScores {
        q: Var,
        k: Var,
        heads: usize,
        seq: usize,
    },
    SoftmaxRows(Var),
    AttnApply {
        p: Var,
        v: Var,
        heads: usize,
        seq: usize,
    },
    CosinePairs {
        a: Var,
        pairs: Vec<(usize, usize)>,
        norms: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Tensor,
    },
    Mean(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Gradients tracked, dropout active.
    Train { seed: u64 },
    /// Plain forward evaluation.
    Eval,
}

pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<usize, Var>,
    mode: Mode,
    rng: ChaCha8Rng,
}

/// Gradients from one backward pass, indexed by tape position.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

pub fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

impl Graph {
    pub fn new(mode: Mode) -> Self {
        let seed = match mode {
            Mode::Train { seed } => seed,
            Mode::Eval => 0,
        };
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn eval() -> Self {
        Self::new(Mode::Eval)
    }

    pub fn is_training(&self) -> bool {
        matches!(self.mode, Mode::Train { .. })
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// A value that receives no gradient (inputs, labels).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// The leaf for parameter `name`, created on first use.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Var {
        let idx = store
            .index_of(name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"));
        if let Some(&v) = self.params.get(&idx) {
            return v;
        }
        let grad = self.is_training();
        let v = self.push(store.tensor(idx).clone(), Op::Leaf, grad);
        self.params.insert(idx, v);
        v
    }

    pub fn param_var(&self, idx: usize) -> Option<Var> {
        self.params.get(&idx).copied()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let ng = self.needs(&[a, b]);
        self.push(value, Op::MatMul(a, b), ng)
    }

    /// Adds a 1×c bias to every row.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (x, b) = (self.value(a), self.value(bias));
        assert_eq!((b.rows, b.cols), (1, x.cols), "bias shape");
        let mut value = x.clone();
        for r in 0..value.rows {
            for (v, bb) in value.row_mut(r).iter_mut().zip(&b.data) {
                *v += bb;
            }
        }
        let ng = self.needs(&[a, bias]);
        self.push(value, Op::AddBias(a, bias), ng)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_bias(y, b)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "elementwise shape mismatch");
        Tensor::from_vec(x.rows, x.cols, x.data.iter().zip(&y.data).map(|(&p, &q)| f(p, q)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |p, q| p + q);
        let ng = self.needs(&[a, b]);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |p, q| p - q);
        let ng = self.needs(&[a, b]);
        self.push(value, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |p, q| p * q);
        let ng = self.needs(&[a, b]);
        self.push(value, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|v| v * s);
        let ng = self.needs(&[a]);
        self.push(value, Op::Scale(a, s), ng)
    }

    /// Inverted dropout; the identity outside training or when `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        if !self.is_training() || p <= 0.0 {
            return a;
        }
        let keep = 1.0 - p;
        let n = self.value(a).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let x = self.value(a);
        let value = Tensor::from_vec(x.rows, x.cols, x.data.iter().zip(&mask).map(|(v, m)| v * m).collect());
        let ng = self.needs(&[a]);
        self.push(value, Op::MaskMul(a, mask), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| 1.0 / (1.0 + (-v).exp()));
        let ng = self.needs(&[a]);
        self.push(value, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let ng = self.needs(&[a]);
        self.push(value, Op::Tanh(a), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        let ng = self.needs(&[a]);
        self.push(value, Op::Relu(a), ng)
    }

    /// Same-padded 1-D convolution over independent sequences.
    ///
    /// `x` is `(R·len) × cin` (row `r·len + p` holds position `p` of
    /// sequence `r`), `w` is `(kernel·cin) × cout` with row `kk·cin + c`
    /// weighting input channel `c` at tap `kk`, and `b` is `1 × cout`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, len: usize, kernel: usize) -> Var {
        let xv = self.value(x);
        let cin = xv.cols;
        assert_eq!(xv.rows % len, 0, "conv input rows must be a multiple of len");
        let wv = self.value(w);
        assert_eq!(wv.rows, kernel * cin, "conv weight rows");
        let cout = wv.cols;
        let seqs = xv.rows / len;
        let pad = (kernel - 1) / 2;
        let width = kernel * cin;
        let mut cols = vec![0.0; xv.rows * width];
        for r in 0..seqs {
            for p in 0..len {
                let dst = (r * len + p) * width;
                for kk in 0..kernel {
                    let src = p as isize + kk as isize - pad as isize;
                    if src >= 0 && (src as usize) < len {
                        let s = (r * len + src as usize) * cin;
                        cols[dst + kk * cin..dst + (kk + 1) * cin].copy_from_slice(&xv.data[s..s + cin]);
                    }
                }
            }
        }
        let mut value = Tensor::zeros(xv.rows, cout);
        gemm(xv.rows, width, cout, &cols, false, &wv.data, false, &mut value.data, 0.0);
        let bv = self.value(b);
        for row in value.data.chunks_mut(cout) {
            for (v, bb) in row.iter_mut().zip(&bv.data) {
                *v += bb;
            }
        }
        let ng = self.needs(&[x, w, b]);
        self.push(
            value,
            Op::Conv1d {
                x,
                w,
                b,
                len,
                kernel,
                cols,
            },
            ng,
        )
    }

    /// Non-overlapping max-pool of width 2 along positions; an odd last
    /// position is dropped.
    pub fn maxpool2(&mut self, x: Var, len: usize) -> Var {
        let xv = self.value(x);
        let c = xv.cols;
        let seqs = xv.rows / len;
        let half = len / 2;
        let mut value = Tensor::zeros(seqs * half, c);
        let mut argmax = vec![0; seqs * half * c];
        for r in 0..seqs {
            for p in 0..half {
                for ch in 0..c {
                    let i0 = (r * len + 2 * p) * c + ch;
                    let i1 = i0 + c;
                    let best = if xv.data[i1] > xv.data[i0] { i1 } else { i0 };
                    let o = (r * half + p) * c + ch;
                    value.data[o] = xv.data[best];
                    argmax[o] = best;
                }
            }
        }
        let ng = self.needs(&[x]);
        self.push(value, Op::MaxPool2 { x, argmax }, ng)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.len(), rows * cols, "reshape size");
        let value = Tensor::from_vec(rows, cols, x.data.clone());
        let ng = self.needs(&[a]);
        self.push(value, Op::Reshape(a), ng)
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let x = self.value(a);
        let mut value = Tensor::zeros(idx.len(), x.cols);
        for (i, &r) in idx.iter().enumerate() {
            value.row_mut(i).copy_from_slice(x.row(r));
        }
        let ng = self.needs(&[a]);
        self.push(value, Op::GatherRows(a, idx), ng)
    }

    /// Stacks T tensors of shape B×d into (B·T)×d with row `b·T + t`
    /// taken from row `b` of part `t`.
    pub fn interleave_rows(&mut self, parts: Vec<Var>) -> Var {
        let t = parts.len();
        let first = self.value(parts[0]);
        let (b, d) = (first.rows, first.cols);
        let mut value = Tensor::zeros(b * t, d);
        for (ti, &p) in parts.iter().enumerate() {
            let pv = self.value(p);
            assert_eq!(pv.shape(), [b, d], "interleave part shape");
            for bi in 0..b {
                value.row_mut(bi * t + ti).copy_from_slice(pv.row(bi));
            }
        }
        let ng = self.needs(&parts);
        self.push(value, Op::InterleaveRows(parts), ng)
    }

    /// Scaled dot-product scores for every (sequence, head):
    /// row `(b·H + h)·seq + i`, column `j` holds `q_i·k_j / √d_k`.
    pub fn attn_scores(&mut self, q: Var, k: Var, heads: usize, seq: usize) -> Var {
        let (qv, kv) = (self.value(q), self.value(k));
        assert_eq!(qv.shape(), kv.shape());
        let d = qv.cols;
        let dk = d / heads;
        let batch = qv.rows / seq;
        let scale = 1.0 / (dk as f64).sqrt();
        let mut value = Tensor::zeros(batch * heads * seq, seq);
        for b in 0..batch {
            for h in 0..heads {
                for i in 0..seq {
                    let qi = &qv.row(b * seq + i)[h * dk..(h + 1) * dk];
                    let out = value.row_mut((b * heads + h) * seq + i);
                    for (j, o) in out.iter_mut().enumerate() {
                        let kj = &kv.row(b * seq + j)[h * dk..(h + 1) * dk];
                        *o = qi.iter().zip(kj).map(|(x, y)| x * y).sum::<f64>() * scale;
                    }
                }
            }
        }
        let ng = self.needs(&[q, k]);
        self.push(value, Op::AttnScores { q, k, heads, seq }, ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut value = Tensor::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let (src, cols) = (x.row(r), x.cols);
            softmax_row(src, &mut value.data[r * cols..(r + 1) * cols]);
        }
        let ng = self.needs(&[a]);
        self.push(value, Op::SoftmaxRows(a), ng)
    }

    /// Mixes value rows with attention weights and concatenates the heads:
    /// output row `b·seq + i`, head block `h` is `Σ_j P[(b·H+h)·seq+i, j] · v_j`.
    pub fn attn_apply(&mut self, p: Var, v: Var, heads: usize, seq: usize) -> Var {
        let (pv, vv) = (self.value(p), self.value(v));
        let d = vv.cols;
        let dk = d / heads;
        let batch = vv.rows / seq;
        let mut value = Tensor::zeros(vv.rows, d);
        for b in 0..batch {
            for h in 0..heads {
                for i in 0..seq {
                    let weights = pv.row((b * heads + h) * seq + i);
                    let out = &mut value.data[(b * seq + i) * d + h * dk..(b * seq + i) * d + (h + 1) * dk];
                    for (j, &wgt) in weights.iter().enumerate() {
                        let vj = &vv.row(b * seq + j)[h * dk..(h + 1) * dk];
                        for (o, x) in out.iter_mut().zip(vj) {
                            *o += wgt * x;
                        }
                    }
                }
            }
        }
        let ng = self.needs(&[p, v]);
        self.push(value, Op::AttnApply { p, v, heads, seq }, ng)
    }

    /// Cosine similarity between row pairs of `a`; zero-norm rows give 0.
    pub fn cosine_pairs(&mut self, a: Var, pairs: Vec<(usize, usize)>) -> Var {
        let x = self.value(a);
        let norms: Vec<f64> = (0..x.rows)
            .map(|r| x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let mut value = Tensor::zeros(pairs.len(), 1);
        for (o, &(i, j)) in value.data.iter_mut().zip(&pairs) {
            *o = cosine_from(x.row(i), x.row(j), norms[i], norms[j]);
        }
        let ng = self.needs(&[a]);
        self.push(value, Op::CosinePairs { a, pairs, norms }, ng)
    }

    /// Mean negative log-likelihood of `labels` under softmax(`logits`).
    pub fn cross_entropy(&mut self, logits: Var, labels: Vec<usize>) -> Var {
        let x = self.value(logits);
        assert_eq!(x.rows, labels.len(), "one label per logit row");
        let mut probs = Tensor::zeros(x.rows, x.cols);
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = x.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[label];
            let cols = x.cols;
            softmax_row(row, &mut probs.data[r * cols..(r + 1) * cols]);
        }
        let value = Tensor::scalar(total / labels.len() as f64);
        let ng = self.needs(&[logits]);
        self.push(value, Op::CrossEntropy { logits, labels, probs }, ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let value = Tensor::scalar(x.data.iter().sum::<f64>() / x.len() as f64);
        let ng = self.needs(&[a]);
        self.push(value, Op::Mean(a), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data.iter().sum());
        let ng = self.needs(&[a]);
        self.push(value, Op::Sum(a), ng)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(Tensor::scalar(1.0));
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop(node, &g, &mut grads);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn backprop(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let mut da = Tensor::zeros(av.rows, av.cols);
                    gemm(av.rows, g.cols, av.cols, &g.data, false, &bv.data, true, &mut da.data, 0.0);
                    self.accumulate(grads, *a, da);
                }
                if self.wants(*b) {
                    let mut db = Tensor::zeros(bv.rows, bv.cols);
                    gemm(bv.rows, av.rows, bv.cols, &av.data, true, &g.data, false, &mut db.data, 0.0);
                    self.accumulate(grads, *b, db);
                }
            }
            Op::AddBias(a, bias) => {
                if self.wants(*bias) {
                    let mut db = Tensor::zeros(1, g.cols);
                    for row in g.data.chunks(g.cols) {
                        for (d, v) in db.data.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    self.accumulate(grads, *bias, db);
                }
                self.accumulate(grads, *a, g.clone());
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.wants(*b) {
                    self.accumulate(grads, *b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let d = g.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *a, Tensor::from_vec(g.rows, g.cols, d));
                }
                if self.wants(*b) {
                    let d = g.data.iter().zip(&av.data).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *b, Tensor::from_vec(g.rows, g.cols, d));
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.map(|v| v * s)),
            Op::MaskMul(a, mask) => {
                let d = g.data.iter().zip(mask).map(|(x, m)| x * m).collect();
                self.accumulate(grads, *a, Tensor::from_vec(g.rows, g.cols, d));
            }
            Op::Sigmoid(a) => {
                let d = g.data.iter().zip(&y.data).map(|(x, s)| x * s * (1.0 - s)).collect();
                self.accumulate(grads, *a, Tensor::from_vec(g.rows, g.cols, d));
            }
            Op::Tanh(a) => {
                let d = g.data.iter().zip(&y.data).map(|(x, t)| x * (1.0 - t * t)).collect();
                self.accumulate(grads, *a, Tensor::from_vec(g.rows, g.cols, d));
            }
            Op::Relu(a) => {
                let d = g
                    .data
                    .iter()
                    .zip(&y.data)
                    .map(|(x, r)| if *r > 0.0 { *x } else { 0.0 })
                    .collect();
                self.accumulate(grads, *a, Tensor::from_vec(g.rows, g.cols, d));
            }
            Op::Conv1d {
                x,
                w,
                b,
                len,
                kernel,
                cols,
            } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (rows, cin, cout) = (xv.rows, xv.cols, wv.cols);
                let width = kernel * cin;
                if self.wants(*w) {
                    let mut dw = Tensor::zeros(width, cout);
                    gemm(width, rows, cout, cols, true, &g.data, false, &mut dw.data, 0.0);
                    self.accumulate(grads, *w, dw);
                }
                if self.wants(*b) {
                    let mut db = Tensor::zeros(1, cout);
                    for row in g.data.chunks(cout) {
                        for (d, v) in db.data.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    self.accumulate(grads, *b, db);
                }
                if self.wants(*x) {
                    let mut dcols = vec![0.0; rows * width];
                    gemm(rows, cout, width, &g.data, false, &wv.data, true, &mut dcols, 0.0);
                    let mut dx = Tensor::zeros(rows, cin);
                    let pad = (kernel - 1) / 2;
                    let seqs = rows / len;
                    for r in 0..seqs {
                        for p in 0..*len {
                            let src_row = (r * len + p) * width;
                            for kk in 0..*kernel {
                                let src = p as isize + kk as isize - pad as isize;
                                if src >= 0 && (src as usize) < *len {
                                    let d = (r * len + src as usize) * cin;
                                    for c in 0..cin {
                                        dx.data[d + c] += dcols[src_row + kk * cin + c];
                                    }
                                }
                            }
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
            }
            Op::MaxPool2 { x, argmax } => {
                let xv = self.value(*x);
                let mut dx = Tensor::zeros(xv.rows, xv.cols);
                for (gv, &src) in g.data.iter().zip(argmax) {
                    dx.data[src] += gv;
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Reshape(a) => {
                let av = self.value(*a);
                self.accumulate(grads, *a, Tensor::from_vec(av.rows, av.cols, g.data.clone()));
            }
            Op::GatherRows(a, idx) => {
                let av = self.value(*a);
                let mut da = Tensor::zeros(av.rows, av.cols);
                for (i, &r) in idx.iter().enumerate() {
                    for (d, v) in da.row_mut(r).iter_mut().zip(g.row(i)) {
                        *d += v;
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::InterleaveRows(parts) => {
                let t = parts.len();
                for (ti, &p) in parts.iter().enumerate() {
                    if !self.wants(p) {
                        continue;
                    }
                    let b = self.value(p).rows;
                    let mut dp = Tensor::zeros(b, g.cols);
                    for bi in 0..b {
                        dp.row_mut(bi).copy_from_slice(g.row(bi * t + ti));
                    }
                    self.accumulate(grads, p, dp);
                }
            }
            Op::AttnScores { q, k, heads, seq } => {
                let (qv, kv) = (self.value(*q), self.value(*k));
                let d = qv.cols;
                let dk = d / heads;
                let batch = qv.rows / seq;
                let scale = 1.0 / (dk as f64).sqrt();
                let mut dq = Tensor::zeros(qv.rows, d);
                let mut dkm = Tensor::zeros(kv.rows, d);
                for b in 0..batch {
                    for h in 0..*heads {
                        for i in 0..*seq {
                            let grow = g.row((b * heads + h) * seq + i);
                            let qi = b * seq + i;
                            for (j, &gs) in grow.iter().enumerate() {
                                let kj = b * seq + j;
                                let gs = gs * scale;
                                for c in h * dk..(h + 1) * dk {
                                    dq.data[qi * d + c] += gs * kv.data[kj * d + c];
                                    dkm.data[kj * d + c] += gs * qv.data[qi * d + c];
                                }
                            }
                        }
                    }
                }
                self.accumulate(grads, *q, dq);
                self.accumulate(grads, *k, dkm);
            }
            Op::SoftmaxRows(a) => {
                let mut da = Tensor::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for ((d, p), q) in da.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *d = p * (q - dot);
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::AttnApply { p, v, heads, seq } => {
                let (pv, vv) = (self.value(*p), self.value(*v));
                let d = vv.cols;
                let dk = d / heads;
                let batch = vv.rows / seq;
                let mut dp = Tensor::zeros(pv.rows, pv.cols);
                let mut dv = Tensor::zeros(vv.rows, d);
                for b in 0..batch {
                    for h in 0..*heads {
                        for i in 0..*seq {
                            let prow = (b * heads + h) * seq + i;
                            let go = &g.data[(b * seq + i) * d + h * dk..(b * seq + i) * d + (h + 1) * dk];
                            for j in 0..*seq {
                                let vj = (b * seq + j) * d + h * dk;
                                let mut acc = 0.0;
                                let wgt = pv.data[prow * seq + j];
                                for (c, gv) in go.iter().enumerate() {
                                    acc += gv * vv.data[vj + c];
                                    dv.data[vj + c] += wgt * gv;
                                }
                                dp.data[prow * seq + j] = acc;
                            }
                        }
                    }
                }
                self.accumulate(grads, *p, dp);
                self.accumulate(grads, *v, dv);
            }
            Op::CosinePairs { a, pairs, norms } => {
                let av = self.value(*a);
                let mut da = Tensor::zeros(av.rows, av.cols);
                for ((&(i, j), gv), s) in pairs.iter().zip(&g.data).zip(&y.data) {
                    let (ni, nj) = (norms[i], norms[j]);
                    if ni == 0.0 || nj == 0.0 {
                        continue;
                    }
                    let inv = 1.0 / (ni * nj);
                    let (si, sj) = (s / (ni * ni), s / (nj * nj));
                    for c in 0..av.cols {
                        let (xi, xj) = (av.get(i, c), av.get(j, c));
                        da.data[i * av.cols + c] += gv * (xj * inv - si * xi);
                        da.data[j * av.cols + c] += gv * (xi * inv - sj * xj);
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let scale = g.item() / labels.len() as f64;
                let mut d = probs.clone();
                for (r, &label) in labels.iter().enumerate() {
                    d.data[r * d.cols + label] -= 1.0;
                }
                for v in &mut d.data {
                    *v *= scale;
                }
                self.accumulate(grads, *logits, d);
            }
            Op::Mean(a) => {
                let av = self.value(*a);
                let v = g.item() / av.len() as f64;
                self.accumulate(grads, *a, Tensor::from_vec(av.rows, av.cols, vec![v; av.len()]));
            }
            Op::Sum(a) => {
                let av = self.value(*a);
                self.accumulate(grads, *a, Tensor::from_vec(av.rows, av.cols, vec![g.item(); av.len()]));
            }
        }
    }
}

/// Cosine of two vectors with known norms; 0 when either norm is zero.
pub fn cosine_from(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        log::warn!("cosine similarity of a zero-norm vector; defined as 0");
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}
