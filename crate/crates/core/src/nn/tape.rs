//! Eager reverse-mode differentiation over dense vectors.
//!
//! Every operation computes its value immediately and appends a node to the
//! tape. Node values live in one flat arena; a node only ever reads nodes
//! recorded before it, which is what lets the backward sweep split the
//! gradient arena into "inputs" and "output" halves without copying.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::nn::param::ParamTensor;

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

/// Handle to a value recorded on a [`Tape`].
///
/// A handle is only valid for the tape (and the recording epoch) that
/// produced it; clearing the tape invalidates all outstanding handles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    idx: u32,
    stamp: u64,
}

impl Var {
    pub fn index(self) -> usize {
        self.idx as usize
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    MatVec {
        w: u32,
        x: u32,
    },
    Affine {
        w: u32,
        x: u32,
        b: u32,
    },
    Add(u32, u32),
    Mul(u32, u32),
    Scale(u32, f64),
    Sigmoid(u32),
    Tanh(u32),
    /// `(1 - z) * h + z * c`
    GruMix {
        z: u32,
        h: u32,
        c: u32,
    },
    /// Column `col` of a matrix node, i.e. a one-hot matrix-vector product.
    Column {
        w: u32,
        col: u32,
    },
    Index(u32, u32),
    Softmax(u32),
    Dot(u32, u32),
    Concat {
        start: u32,
        len: u32,
    },
    Sum {
        start: u32,
        len: u32,
    },
    /// `sum_i weights[i] * items[i]`
    WeightedSum {
        weights: u32,
        start: u32,
        len: u32,
    },
    Bce {
        x: u32,
        target: f64,
        clamp: f64,
    },
}

#[derive(Clone, Copy, Debug)]
struct Node {
    op: Op,
    off: usize,
    rows: usize,
    cols: usize,
}

impl Node {
    fn len(&self) -> usize {
        self.rows * self.cols
    }
}

/// Ordered record of the primitive operations of a forward pass.
#[derive(Debug)]
pub struct Tape {
    stamp: u64,
    nodes: Vec<Node>,
    vals: Vec<f64>,
    links: Vec<u32>,
    first_nonfinite: Option<usize>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            stamp: fresh_stamp(),
            nodes: Vec::new(),
            vals: Vec::new(),
            links: Vec::new(),
            first_nonfinite: None,
        }
    }

    /// Forgets every recorded node. Handles issued before the call become
    /// stale; arena capacity is kept.
    pub fn clear(&mut self) {
        self.stamp = fresh_stamp();
        self.nodes.clear();
        self.vals.clear();
        self.links.clear();
        self.first_nonfinite = None;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Checks that `v` belongs to the current recording of this tape.
    pub fn owns(&self, v: Var) -> bool {
        v.stamp == self.stamp && v.index() < self.nodes.len()
    }

    fn node(&self, v: Var) -> &Node {
        assert!(
            v.stamp == self.stamp,
            "variable from another tape or a cleared recording"
        );
        &self.nodes[v.index()]
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let n = self.node(v);
        &self.vals[n.off..n.off + n.len()]
    }

    /// Value of a length-1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        assert_eq!(val.len(), 1, "scalar() on a node of length {}", val.len());
        val[0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    pub fn dim(&self, v: Var) -> usize {
        self.node(v).len()
    }

    /// First node whose value contained NaN or an infinity, if any.
    pub fn first_nonfinite(&self) -> Option<usize> {
        self.first_nonfinite
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.first_nonfinite {
            Some(i) => Err(Error::NonFinite(format!(
                "tape node {i} ({:?}) produced a non-finite value",
                self.nodes[i].op
            ))),
            None => Ok(()),
        }
    }

    // -- recording -------------------------------------------------------

    /// Appends a node of the given shape; `fill` writes its value given the
    /// arena holding all earlier nodes.
    fn push(
        &mut self,
        op: Op,
        rows: usize,
        cols: usize,
        fill: impl FnOnce(&[f64], &mut [f64]),
    ) -> Var {
        let off = self.vals.len();
        self.vals.resize(off + rows * cols, 0.0);
        let (lo, hi) = self.vals.split_at_mut(off);
        fill(lo, hi);
        if self.first_nonfinite.is_none() && hi.iter().any(|v| !v.is_finite()) {
            self.first_nonfinite = Some(self.nodes.len());
        }
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node {
            op,
            off,
            rows,
            cols,
        });
        Var {
            idx,
            stamp: self.stamp,
        }
    }

    fn raw(&self, v: Var) -> (usize, usize, usize, u32) {
        let n = self.node(v);
        (n.off, n.rows, n.cols, v.idx)
    }

    pub fn constant(&mut self, values: &[f64]) -> Var {
        self.push(Op::Leaf, values.len(), 1, |_, out| {
            out.copy_from_slice(values)
        })
    }

    pub fn constant_matrix(&mut self, rows: usize, cols: usize, values: &[f64]) -> Var {
        assert_eq!(values.len(), rows * cols);
        self.push(Op::Leaf, rows, cols, |_, out| out.copy_from_slice(values))
    }

    /// Records a copy of the parameter's current values as a leaf.
    pub fn param(&mut self, p: &ParamTensor) -> Var {
        self.constant_matrix(p.rows(), p.cols(), p.values())
    }

    pub fn params<'a>(&mut self, ps: impl IntoIterator<Item = &'a ParamTensor>) -> Vec<Var> {
        ps.into_iter().map(|p| self.param(p)).collect()
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Var {
        let (wo, r, c, wi) = self.raw(w);
        let (xo, xr, xc, xi) = self.raw(x);
        assert_eq!(
            xr * xc,
            c,
            "matvec: {r}x{c} matrix times vector of length {}",
            xr * xc
        );
        self.push(Op::MatVec { w: wi, x: xi }, r, 1, |lo, out| {
            let wm = &lo[wo..wo + r * c];
            let xv = &lo[xo..xo + c];
            for (o, row) in out.iter_mut().zip(wm.chunks_exact(c)) {
                *o = dot(row, xv);
            }
        })
    }

    /// `w x + b`
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Var {
        let (wo, r, c, wi) = self.raw(w);
        let (xo, xr, xc, xi) = self.raw(x);
        let (bo, br, bc, bi) = self.raw(b);
        assert_eq!(
            xr * xc,
            c,
            "affine: {r}x{c} matrix times vector of length {}",
            xr * xc
        );
        assert_eq!(br * bc, r, "affine: bias length {} for {r} rows", br * bc);
        self.push(
            Op::Affine {
                w: wi,
                x: xi,
                b: bi,
            },
            r,
            1,
            |lo, out| {
                let wm = &lo[wo..wo + r * c];
                let xv = &lo[xo..xo + c];
                let bv = &lo[bo..bo + r];
                for ((o, row), bias) in out.iter_mut().zip(wm.chunks_exact(c)).zip(bv) {
                    *o = dot(row, xv) + bias;
                }
            },
        )
    }

    fn zip_op(&mut self, op: Op, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Var {
        let (ao, ar, ac, _) = self.raw(a);
        let (bo, br, bc, _) = self.raw(b);
        assert_eq!(
            ar * ac,
            br * bc,
            "elementwise op on lengths {} and {}",
            ar * ac,
            br * bc
        );
        let n = ar * ac;
        self.push(op, ar, ac, |lo, out| {
            for ((o, x), y) in out.iter_mut().zip(&lo[ao..ao + n]).zip(&lo[bo..bo + n]) {
                *o = f(*x, *y);
            }
        })
    }

    fn map_op(&mut self, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let (ao, ar, ac, _) = self.raw(a);
        let n = ar * ac;
        self.push(op, ar, ac, |lo, out| {
            for (o, x) in out.iter_mut().zip(&lo[ao..ao + n]) {
                *o = f(*x);
            }
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_op(Op::Add(a.idx, b.idx), a, b, |x, y| x + y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_op(Op::Mul(a.idx, b.idx), a, b, |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map_op(Op::Scale(a.idx, c), a, |x| c * x)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map_op(Op::Sigmoid(a.idx), a, sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map_op(Op::Tanh(a.idx), a, f64::tanh)
    }

    /// `(1 - z) * h + z * c`, the GRU state interpolation.
    pub fn gru_mix(&mut self, z: Var, h: Var, c: Var) -> Var {
        let (zo, n, _, zi) = self.raw(z);
        let (ho, hn, _, hi) = self.raw(h);
        let (co, cn, _, ci) = self.raw(c);
        assert!(n == hn && n == cn, "gru_mix on lengths {n}, {hn}, {cn}");
        self.push(
            Op::GruMix {
                z: zi,
                h: hi,
                c: ci,
            },
            n,
            1,
            |lo, out| {
                for i in 0..n {
                    let z = lo[zo + i];
                    out[i] = (1.0 - z) * lo[ho + i] + z * lo[co + i];
                }
            },
        )
    }

    pub fn column(&mut self, w: Var, col: usize) -> Var {
        let (wo, r, c, wi) = self.raw(w);
        assert!(col < c, "column {col} of a {r}x{c} matrix");
        self.push(
            Op::Column {
                w: wi,
                col: col as u32,
            },
            r,
            1,
            |lo, out| {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = lo[wo + i * c + col];
                }
            },
        )
    }

    pub fn index(&mut self, a: Var, i: usize) -> Var {
        let (ao, ar, ac, aidx) = self.raw(a);
        assert!(i < ar * ac, "index {i} out of {}", ar * ac);
        self.push(Op::Index(aidx, i as u32), 1, 1, |lo, out| {
            out[0] = lo[ao + i]
        })
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let (ao, ar, ac, aidx) = self.raw(a);
        let n = ar * ac;
        self.push(Op::Softmax(aidx), n, 1, |lo, out| {
            softmax_into(&lo[ao..ao + n], out)
        })
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (ao, ar, ac, ai) = self.raw(a);
        let (bo, br, bc, bi) = self.raw(b);
        let n = ar * ac;
        assert_eq!(n, br * bc, "dot on lengths {n} and {}", br * bc);
        self.push(Op::Dot(ai, bi), 1, 1, |lo, out| {
            out[0] = dot(&lo[ao..ao + n], &lo[bo..bo + n])
        })
    }

    fn link(&mut self, vars: &[Var]) -> (u32, u32) {
        let start = self.links.len() as u32;
        for &v in vars {
            self.node(v);
            self.links.push(v.idx);
        }
        (start, vars.len() as u32)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let total: usize = parts.iter().map(|&p| self.dim(p)).sum();
        let (start, len) = self.link(parts);
        let spans: Vec<(usize, usize)> = parts
            .iter()
            .map(|&p| {
                let n = self.node(p);
                (n.off, n.len())
            })
            .collect();
        self.push(Op::Concat { start, len }, total, 1, |lo, out| {
            let mut at = 0;
            for (off, n) in spans {
                out[at..at + n].copy_from_slice(&lo[off..off + n]);
                at += n;
            }
        })
    }

    /// Elementwise sum of equally shaped nodes.
    pub fn sum(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "sum of nothing");
        let (rows, cols) = self.shape(parts[0]);
        let n = rows * cols;
        let offs: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let node = self.node(p);
                assert_eq!(node.len(), n, "sum over mismatched lengths");
                node.off
            })
            .collect();
        let (start, len) = self.link(parts);
        self.push(Op::Sum { start, len }, rows, cols, |lo, out| {
            for off in offs {
                for (o, v) in out.iter_mut().zip(&lo[off..off + n]) {
                    *o += v;
                }
            }
        })
    }

    /// `sum_i weights[i] * items[i]`
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Var {
        let (wo, wr, wc, wi) = self.raw(weights);
        assert_eq!(
            wr * wc,
            items.len(),
            "weighted_sum: {} weights for {} items",
            wr * wc,
            items.len()
        );
        assert!(!items.is_empty(), "weighted_sum of nothing");
        let n = self.dim(items[0]);
        let offs: Vec<usize> = items
            .iter()
            .map(|&p| {
                let node = self.node(p);
                assert_eq!(node.len(), n, "weighted_sum over mismatched lengths");
                node.off
            })
            .collect();
        let (start, len) = self.link(items);
        self.push(
            Op::WeightedSum {
                weights: wi,
                start,
                len,
            },
            n,
            1,
            |lo, out| {
                for (k, off) in offs.into_iter().enumerate() {
                    let a = lo[wo + k];
                    for (o, v) in out.iter_mut().zip(&lo[off..off + n]) {
                        *o += a * v;
                    }
                }
            },
        )
    }

    /// Binary cross entropy of a probability node against a 0/1 target,
    /// with the probability clamped into `[clamp, 1 - clamp]`.
    pub fn bce(&mut self, x: Var, target: f64, clamp: f64) -> Var {
        let (xo, xr, xc, xi) = self.raw(x);
        assert_eq!(xr * xc, 1, "bce on a node of length {}", xr * xc);
        self.push(
            Op::Bce {
                x: xi,
                target,
                clamp,
            },
            1,
            1,
            |lo, out| out[0] = bce(lo[xo], target, clamp),
        )
    }

    // -- differentiation ---------------------------------------------------

    /// Propagates d(loss)/d(node) for every node recorded before `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<'_>> {
        if loss.stamp != self.stamp || loss.index() >= self.nodes.len() {
            return Err(Error::Logic(
                "backward from a variable of a stale or foreign tape".into(),
            ));
        }
        self.check_finite()?;
        let root = self.nodes[loss.index()];
        if root.len() != 1 {
            return Err(Error::Logic(format!(
                "backward needs a scalar loss, got length {}",
                root.len()
            )));
        }

        let mut grads = vec![0.0; self.vals.len()];
        let mut live = vec![false; loss.index() + 1];
        grads[root.off] = 1.0;
        live[loss.index()] = true;
        let vals = &self.vals;

        for idx in (0..=loss.index()).rev() {
            if !live[idx] {
                continue;
            }
            let node = self.nodes[idx];
            let (lo, hi) = grads.split_at_mut(node.off);
            let g = &hi[..node.len()];
            let y = &vals[node.off..node.off + node.len()];
            let span = |i: u32| {
                let n = &self.nodes[i as usize];
                (n.off, n.len())
            };
            match node.op {
                Op::Leaf => {}
                Op::MatVec { w, x } => {
                    let (wo, _) = span(w);
                    let (xo, c) = span(x);
                    matvec_back(vals, lo, wo, xo, c, g);
                    live[w as usize] = true;
                    live[x as usize] = true;
                }
                Op::Affine { w, x, b } => {
                    let (wo, _) = span(w);
                    let (xo, c) = span(x);
                    let (bo, r) = span(b);
                    matvec_back(vals, lo, wo, xo, c, g);
                    for i in 0..r {
                        lo[bo + i] += g[i];
                    }
                    live[w as usize] = true;
                    live[x as usize] = true;
                    live[b as usize] = true;
                }
                Op::Add(a, b) => {
                    let (ao, n) = span(a);
                    let (bo, _) = span(b);
                    for i in 0..n {
                        lo[ao + i] += g[i];
                        lo[bo + i] += g[i];
                    }
                    live[a as usize] = true;
                    live[b as usize] = true;
                }
                Op::Mul(a, b) => {
                    let (ao, n) = span(a);
                    let (bo, _) = span(b);
                    for i in 0..n {
                        lo[ao + i] += g[i] * vals[bo + i];
                        lo[bo + i] += g[i] * vals[ao + i];
                    }
                    live[a as usize] = true;
                    live[b as usize] = true;
                }
                Op::Scale(a, c) => {
                    let (ao, n) = span(a);
                    for i in 0..n {
                        lo[ao + i] += c * g[i];
                    }
                    live[a as usize] = true;
                }
                Op::Sigmoid(a) => {
                    let (ao, n) = span(a);
                    for i in 0..n {
                        lo[ao + i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                    live[a as usize] = true;
                }
                Op::Tanh(a) => {
                    let (ao, n) = span(a);
                    for i in 0..n {
                        lo[ao + i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                    live[a as usize] = true;
                }
                Op::GruMix { z, h, c } => {
                    let (zo, n) = span(z);
                    let (ho, _) = span(h);
                    let (co, _) = span(c);
                    for i in 0..n {
                        let zv = vals[zo + i];
                        lo[zo + i] += g[i] * (vals[co + i] - vals[ho + i]);
                        lo[ho + i] += g[i] * (1.0 - zv);
                        lo[co + i] += g[i] * zv;
                    }
                    live[z as usize] = true;
                    live[h as usize] = true;
                    live[c as usize] = true;
                }
                Op::Column { w, col } => {
                    let wn = &self.nodes[w as usize];
                    for (i, gi) in g.iter().enumerate() {
                        lo[wn.off + i * wn.cols + col as usize] += gi;
                    }
                    live[w as usize] = true;
                }
                Op::Index(a, i) => {
                    let (ao, _) = span(a);
                    lo[ao + i as usize] += g[0];
                    live[a as usize] = true;
                }
                Op::Softmax(a) => {
                    let (ao, n) = span(a);
                    let gy = dot(g, y);
                    for i in 0..n {
                        lo[ao + i] += y[i] * (g[i] - gy);
                    }
                    live[a as usize] = true;
                }
                Op::Dot(a, b) => {
                    let (ao, n) = span(a);
                    let (bo, _) = span(b);
                    for i in 0..n {
                        lo[ao + i] += g[0] * vals[bo + i];
                        lo[bo + i] += g[0] * vals[ao + i];
                    }
                    live[a as usize] = true;
                    live[b as usize] = true;
                }
                Op::Concat { start, len } => {
                    let mut at = 0;
                    for &p in &self.links[start as usize..(start + len) as usize] {
                        let (po, n) = span(p);
                        for i in 0..n {
                            lo[po + i] += g[at + i];
                        }
                        at += n;
                        live[p as usize] = true;
                    }
                }
                Op::Sum { start, len } => {
                    for &p in &self.links[start as usize..(start + len) as usize] {
                        let (po, n) = span(p);
                        for i in 0..n {
                            lo[po + i] += g[i];
                        }
                        live[p as usize] = true;
                    }
                }
                Op::WeightedSum {
                    weights,
                    start,
                    len,
                } => {
                    let (wo, _) = span(weights);
                    let items = &self.links[start as usize..(start + len) as usize];
                    for (k, &p) in items.iter().enumerate() {
                        let (po, n) = span(p);
                        let a = vals[wo + k];
                        let mut gw = 0.0;
                        for i in 0..n {
                            gw += g[i] * vals[po + i];
                            lo[po + i] += a * g[i];
                        }
                        lo[wo + k] += gw;
                        live[p as usize] = true;
                    }
                    live[weights as usize] = true;
                }
                Op::Bce { x, target, clamp } => {
                    let (xo, _) = span(x);
                    lo[xo] += g[0] * bce_grad(vals[xo], target, clamp);
                    live[x as usize] = true;
                }
            }
        }

        Ok(Gradients { tape: self, grads })
    }
}

/// Result of a backward sweep: d(loss)/d(node) for every recorded node.
#[derive(Debug)]
pub struct Gradients<'t> {
    tape: &'t Tape,
    grads: Vec<f64>,
}

impl Gradients<'_> {
    pub fn wrt(&self, v: Var) -> &[f64] {
        let n = self.tape.node(v);
        &self.grads[n.off..n.off + n.len()]
    }

    /// Adds the gradients of `vars` into the matching parameter tensors.
    pub fn accumulate_into<'p>(
        &self,
        params: impl IntoIterator<Item = &'p mut ParamTensor>,
        vars: &[Var],
    ) -> Result<()> {
        let mut count = 0;
        for (p, &v) in params.into_iter().zip(vars) {
            p.accumulate_grad(self.wrt(v))?;
            count += 1;
        }
        if count != vars.len() {
            return Err(Error::Logic(format!(
                "{} bound variables but only {count} parameter tensors",
                vars.len()
            )));
        }
        Ok(())
    }
}

fn matvec_back(vals: &[f64], lo: &mut [f64], wo: usize, xo: usize, c: usize, g: &[f64]) {
    for (i, gi) in g.iter().enumerate() {
        if *gi == 0.0 {
            continue;
        }
        let row = wo + i * c;
        for j in 0..c {
            lo[row + j] += gi * vals[xo + j];
            lo[xo + j] += gi * vals[row + j];
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub(crate) fn bce(x: f64, target: f64, clamp: f64) -> f64 {
    let x = x.clamp(clamp, 1.0 - clamp);
    -(target * x.ln() + (1.0 - target) * (1.0 - x).ln())
}

pub(crate) fn bce_grad(x: f64, target: f64, clamp: f64) -> f64 {
    if x < clamp || x > 1.0 - clamp {
        return 0.0;
    }
    -target / x + (1.0 - target) / (1.0 - x)
}
