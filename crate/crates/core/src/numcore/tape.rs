//! Reverse-mode differentiation over vectors.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are
//! read from a borrowed [`ParamStore`]; [`Tape::backward`] returns the
//! gradients of a scalar node with respect to every parameter it touched.

use rand::Rng;

use super::tensor::{GradBuf, Gradients, ParamId, ParamStore};

/// A node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Row(ParamId, usize),
    MatVec(ParamId, Var),
    MatTVec(ParamId, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Mask(Var, Vec<f64>),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Sum(Vec<Var>),
    Dot(Var, Var),
    Softmax(Var),
    WeightedSum(Var, Vec<Var>),
    Nll(Var, usize),
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of a non-empty slice.
pub(crate) fn softmax_slice(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn accumulate(grads: &mut [Vec<f64>], v: Var, len: usize, f: impl Fn(usize) -> f64) {
    let g = &mut grads[v.0];
    if g.is_empty() {
        *g = vec![0.0; len];
    }
    g.iter_mut().enumerate().for_each(|(i, x)| *x += f(i));
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn dim(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    /// A constant; receives no gradient.
    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.constant(vec![0.0; n])
    }

    /// The whole parameter, flattened.
    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.store.get(id).data.clone();
        self.push(value, Op::Param(id))
    }

    /// One row of a matrix parameter (embedding lookup).
    pub fn row(&mut self, id: ParamId, row: usize) -> Var {
        let value = self.store.get(id).row(row).to_vec();
        self.push(value, Op::Row(id, row))
    }

    /// `W x` for a parameter matrix `W`.
    pub fn matvec(&mut self, w: ParamId, x: Var) -> Var {
        let t = self.store.get(w);
        let (rows, cols) = (t.rows(), t.cols());
        let xv = &self.nodes[x.0].value;
        assert_eq!(xv.len(), cols, "matvec: {} has {cols} columns, input has {}", self.store.name(w), xv.len());
        let out = (0..rows)
            .map(|r| t.data[r * cols..(r + 1) * cols].iter().zip(xv).map(|(a, b)| a * b).sum())
            .collect();
        self.push(out, Op::MatVec(w, x))
    }

    /// `Wᵀ x` for a parameter matrix `W`.
    pub fn matvec_t(&mut self, w: ParamId, x: Var) -> Var {
        let t = self.store.get(w);
        let (rows, cols) = (t.rows(), t.cols());
        let xv = &self.nodes[x.0].value;
        assert_eq!(xv.len(), rows, "matvec_t: {} has {rows} rows, input has {}", self.store.name(w), xv.len());
        let mut out = vec![0.0; cols];
        for (r, xr) in xv.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(&t.data[r * cols..(r + 1) * cols]) {
                *o += a * xr;
            }
        }
        self.push(out, Op::MatTVec(w, x))
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.len(), bv.len(), "elementwise op on lengths {} and {}", av.len(), bv.len());
        av.iter().zip(bv).map(|(x, y)| f(*x, *y)).collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).iter().map(|x| x * c).collect();
        self.push(v, Op::Scale(a, c))
    }

    /// Elementwise product with a constant mask.
    pub fn mask(&mut self, a: Var, mask: Vec<f64>) -> Var {
        assert_eq!(self.dim(a), mask.len());
        let v = self.value(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        self.push(v, Op::Mask(a, mask))
    }

    /// Inverted dropout. Without a generator, or with `p == 0`, this is the
    /// identity and records nothing.
    pub fn dropout<R: Rng>(&mut self, a: Var, p: f64, rng: Option<&mut R>) -> Var {
        match rng {
            Some(rng) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let mask = (0..self.dim(a))
                    .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
                    .collect();
                self.mask(a, mask)
            }
            _ => a,
        }
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).iter().map(|x| x.tanh()).collect();
        self.push(v, Op::Tanh(a))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let v = parts.iter().flat_map(|p| self.value(*p).iter().copied()).collect();
        self.push(v, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a)[start..start + len].to_vec();
        self.push(v, Op::Slice(a, start))
    }

    /// Elementwise sum of equally sized vectors.
    pub fn sum(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "sum of nothing");
        let n = self.dim(parts[0]);
        let mut v = vec![0.0; n];
        for p in parts {
            assert_eq!(self.dim(*p), n);
            v.iter_mut().zip(self.value(*p)).for_each(|(a, b)| *a += b);
        }
        self.push(v, Op::Sum(parts.to_vec()))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let v: f64 = self.zip_with(a, b, |x, y| x * y).iter().sum();
        self.push(vec![v], Op::Dot(a, b))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        assert!(self.dim(a) > 0, "softmax of an empty vector");
        let v = softmax_slice(self.value(a));
        self.push(v, Op::Softmax(a))
    }

    /// `Σ_j weights[j] · items[j]`.
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Var {
        assert_eq!(self.dim(weights), items.len());
        assert!(!items.is_empty());
        let n = self.dim(items[0]);
        let mut v = vec![0.0; n];
        for (w, it) in self.value(weights).iter().zip(items) {
            v.iter_mut().zip(self.value(*it)).for_each(|(a, b)| *a += w * b);
        }
        self.push(v, Op::WeightedSum(weights, items.to_vec()))
    }

    /// Cross-entropy of `softmax(logits)` against `target`:
    /// `−log softmax(logits)[target]`.
    pub fn nll(&mut self, logits: Var, target: usize) -> Var {
        let lv = self.value(logits);
        assert!(target < lv.len());
        let v = log_sum_exp(lv) - lv[target];
        self.push(vec![v], Op::Nll(logits, target))
    }

    /// Gradients of the scalar `root` with respect to every parameter.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.dim(root), 1, "backward needs a scalar root");
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); root.0 + 1];
        grads[root.0] = vec![1.0];
        let mut out = Gradients::new(self.store.len());

        for i in (0..=root.0).rev() {
            if grads[i].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut grads[i]);
            let node = &self.nodes[i];
            let val = |v: Var| &self.nodes[v.0].value;
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    let t = self.store.get(*id);
                    let d = GradBuf::dense_mut(&mut out.bufs[id.0], t.len(), t.cols());
                    d.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                Op::Row(id, r) => {
                    let cols = self.store.get(*id).cols();
                    let d = GradBuf::row_mut(&mut out.bufs[id.0], *r, cols);
                    d.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                Op::MatVec(id, x) => {
                    let t = self.store.get(*id);
                    let (rows, cols) = (t.rows(), t.cols());
                    let xv = val(*x);
                    let d = GradBuf::dense_mut(&mut out.bufs[id.0], t.len(), cols);
                    for (r, gr) in g.iter().enumerate() {
                        if *gr != 0.0 {
                            for (dw, xc) in d[r * cols..(r + 1) * cols].iter_mut().zip(xv) {
                                *dw += gr * xc;
                            }
                        }
                    }
                    let mut dx = vec![0.0; cols];
                    for (r, gr) in g.iter().enumerate().take(rows) {
                        for (o, a) in dx.iter_mut().zip(&t.data[r * cols..(r + 1) * cols]) {
                            *o += a * gr;
                        }
                    }
                    accumulate(&mut grads, *x, cols, |c| dx[c]);
                }
                Op::MatTVec(id, x) => {
                    let t = self.store.get(*id);
                    let (rows, cols) = (t.rows(), t.cols());
                    let xv = val(*x);
                    let d = GradBuf::dense_mut(&mut out.bufs[id.0], t.len(), cols);
                    for (r, xr) in xv.iter().enumerate() {
                        for (dw, gc) in d[r * cols..(r + 1) * cols].iter_mut().zip(&g) {
                            *dw += xr * gc;
                        }
                    }
                    let dx: Vec<f64> = (0..rows)
                        .map(|r| t.data[r * cols..(r + 1) * cols].iter().zip(&g).map(|(a, b)| a * b).sum())
                        .collect();
                    accumulate(&mut grads, *x, rows, |r| dx[r]);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.len(), |k| g[k]);
                    accumulate(&mut grads, *b, g.len(), |k| g[k]);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    accumulate(&mut grads, *a, g.len(), |k| g[k] * bv[k]);
                    accumulate(&mut grads, *b, g.len(), |k| g[k] * av[k]);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g.len(), |k| g[k] * c),
                Op::Mask(a, m) => accumulate(&mut grads, *a, g.len(), |k| g[k] * m[k]),
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    accumulate(&mut grads, *a, g.len(), |k| g[k] * y[k] * (1.0 - y[k]));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    accumulate(&mut grads, *a, g.len(), |k| g[k] * (1.0 - y[k] * y[k]));
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.dim(*p);
                        accumulate(&mut grads, *p, n, |k| g[off + k]);
                        off += n;
                    }
                }
                Op::Slice(a, start) => {
                    let n = self.dim(*a);
                    let (s, e) = (*start, *start + g.len());
                    accumulate(&mut grads, *a, n, |k| if k >= s && k < e { g[k - s] } else { 0.0 });
                }
                Op::Sum(parts) => {
                    for p in parts {
                        accumulate(&mut grads, *p, g.len(), |k| g[k]);
                    }
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    accumulate(&mut grads, *a, av.len(), |k| g[0] * bv[k]);
                    accumulate(&mut grads, *b, bv.len(), |k| g[0] * av[k]);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let gy: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    accumulate(&mut grads, *a, y.len(), |k| y[k] * (g[k] - gy));
                }
                Op::WeightedSum(w, items) => {
                    let wv = val(*w);
                    let dw: Vec<f64> = items
                        .iter()
                        .map(|it| val(*it).iter().zip(&g).map(|(a, b)| a * b).sum())
                        .collect();
                    accumulate(&mut grads, *w, wv.len(), |j| dw[j]);
                    for (j, it) in items.iter().enumerate() {
                        accumulate(&mut grads, *it, g.len(), |k| wv[j] * g[k]);
                    }
                }
                Op::Nll(logits, target) => {
                    let p = softmax_slice(val(*logits));
                    let t = *target;
                    accumulate(&mut grads, *logits, p.len(), |k| {
                        g[0] * (p[k] - if k == t { 1.0 } else { 0.0 })
                    });
                }
            }
        }
        out
    }
}

impl Tape<'_> {
    /// `value(root) − other.value(root)` for two recordings of the same
    /// computation at nearby parameters, evaluated node by node from operand
    /// differences so that the large common part of both values never
    /// cancels. `None` when the two tapes do not share their structure.
    pub fn difference(&self, other: &Tape<'_>, root: Var) -> Option<f64> {
        if self.nodes.len() != other.nodes.len() || root.0 >= self.nodes.len() {
            return None;
        }
        let mut d: Vec<Vec<f64>> = Vec::with_capacity(root.0 + 1);
        for i in 0..=root.0 {
            let (p, m) = (&self.nodes[i], &other.nodes[i]);
            if p.value.len() != m.value.len() {
                return None;
            }
            let vp = |v: &Var| &self.nodes[v.0].value;
            let vm = |v: &Var| &other.nodes[v.0].value;
            let out: Vec<f64> = match (&p.op, &m.op) {
                (Op::Leaf, Op::Leaf) | (Op::Param(_), Op::Param(_)) | (Op::Row(..), Op::Row(..)) => {
                    p.value.iter().zip(&m.value).map(|(a, b)| a - b).collect()
                }
                (Op::MatVec(w, x), Op::MatVec(w2, x2)) if w == w2 && x == x2 => {
                    let (tp, tm) = (self.store.get(*w), other.store.get(*w));
                    let cols = tp.cols();
                    let (dx, xm) = (&d[x.0], vm(x));
                    (0..tp.rows())
                        .map(|r| {
                            let (rp, rm) = (&tp.data[r * cols..(r + 1) * cols], &tm.data[r * cols..(r + 1) * cols]);
                            (0..cols).map(|c| rp[c] * dx[c] + (rp[c] - rm[c]) * xm[c]).sum()
                        })
                        .collect()
                }
                (Op::MatTVec(w, x), Op::MatTVec(w2, x2)) if w == w2 && x == x2 => {
                    let (tp, tm) = (self.store.get(*w), other.store.get(*w));
                    let cols = tp.cols();
                    let (dx, xm) = (&d[x.0], vm(x));
                    let mut out = vec![0.0; cols];
                    for r in 0..tp.rows() {
                        for (c, o) in out.iter_mut().enumerate() {
                            let (a, b) = (tp.data[r * cols + c], tm.data[r * cols + c]);
                            *o += a * dx[r] + (a - b) * xm[r];
                        }
                    }
                    out
                }
                (Op::Add(a, b), Op::Add(..)) => d[a.0].iter().zip(&d[b.0]).map(|(x, y)| x + y).collect(),
                (Op::Mul(a, b), Op::Mul(..)) => {
                    let (ap, bm) = (vp(a), vm(b));
                    (0..p.value.len()).map(|k| ap[k] * d[b.0][k] + d[a.0][k] * bm[k]).collect()
                }
                (Op::Scale(a, c), Op::Scale(..)) => d[a.0].iter().map(|x| x * c).collect(),
                (Op::Mask(a, mk), Op::Mask(_, mk2)) if mk == mk2 => d[a.0].iter().zip(mk).map(|(x, y)| x * y).collect(),
                (Op::Sigmoid(a), Op::Sigmoid(_)) => {
                    let (ap, am) = (vp(a), vm(a));
                    (0..p.value.len())
                        .map(|k| {
                            let (tp, tm) = ((ap[k] / 2.0).tanh(), (am[k] / 2.0).tanh());
                            0.5 * (d[a.0][k] / 2.0).tanh() * (1.0 - tp * tm)
                        })
                        .collect()
                }
                (Op::Tanh(a), Op::Tanh(_)) => (0..p.value.len())
                    .map(|k| d[a.0][k].tanh() * (1.0 - p.value[k] * m.value[k]))
                    .collect(),
                (Op::Concat(parts), Op::Concat(_)) => parts.iter().flat_map(|q| d[q.0].iter().copied()).collect(),
                (Op::Slice(a, s), Op::Slice(..)) => d[a.0][*s..*s + p.value.len()].to_vec(),
                (Op::Sum(parts), Op::Sum(_)) => {
                    let mut out = vec![0.0; p.value.len()];
                    for q in parts {
                        out.iter_mut().zip(&d[q.0]).for_each(|(o, x)| *o += x);
                    }
                    out
                }
                (Op::Dot(a, b), Op::Dot(..)) => {
                    let (ap, bm) = (vp(a), vm(b));
                    vec![(0..ap.len()).map(|k| ap[k] * d[b.0][k] + d[a.0][k] * bm[k]).sum()]
                }
                (Op::Softmax(a), Op::Softmax(_)) => {
                    let (sm, da) = (&m.value, &d[a.0]);
                    let dz = sm.iter().zip(da).map(|(s, x)| s * x.exp_m1()).sum::<f64>().ln_1p();
                    sm.iter().zip(da).map(|(s, x)| s * (x - dz).exp_m1()).collect()
                }
                (Op::WeightedSum(w, items), Op::WeightedSum(..)) => {
                    let (wm, dw) = (vm(w), &d[w.0]);
                    let mut out = vec![0.0; p.value.len()];
                    for (j, it) in items.iter().enumerate() {
                        let (ip, di) = (vp(it), &d[it.0]);
                        for (k, o) in out.iter_mut().enumerate() {
                            *o += dw[j] * ip[k] + wm[j] * di[k];
                        }
                    }
                    out
                }
                (Op::Nll(l, t), Op::Nll(..)) => {
                    let pm = softmax_slice(vm(l));
                    let dl = &d[l.0];
                    let dlse = pm.iter().zip(dl).map(|(q, x)| q * x.exp_m1()).sum::<f64>().ln_1p();
                    vec![dlse - dl[*t]]
                }
                _ => return None,
            };
            d.push(out);
        }
        d[root.0].first().copied()
    }
}
