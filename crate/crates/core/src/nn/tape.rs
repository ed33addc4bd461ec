//! Reverse-mode differentiation over 2-D arrays.
//!
//! Feature maps are stored channel-major as `(C, F·T)` with column index
//! `f·T + t`; token sequences are stored row-major as `(N, C)`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

pub type Var = usize;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    /// `(m, n) + (1, n)`
    AddRow(Var, Var),
    MulConst(Var, Array2<f64>),
    Scale(Var, f64),
    Silu(Var),
    Sigmoid(Var),
    Conv {
        x: Var,
        w: Var,
        b: Var,
        f: usize,
        t: usize,
        k: usize,
        cols: Option<Array2<f64>>,
    },
    AvgPool {
        x: Var,
        f: usize,
        t: usize,
    },
    Upsample {
        x: Var,
        f: usize,
        t: usize,
    },
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    GatherCols(Var, Vec<usize>),
    LayerNorm {
        x: Var,
        g: Var,
        b: Var,
        xhat: Array2<f64>,
        inv_std: Array1<f64>,
    },
    ChannelNorm {
        x: Var,
        g: Var,
        b: Var,
        xhat: Array2<f64>,
        inv_std: Array1<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        groups: usize,
        shared_kv: bool,
        probs: Vec<Array2<f64>>,
    },
    L1Mean(Var, Array2<f64>),
    MeanOf(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Records operations for one forward pass. With `grad` off, values needed
/// only for the backward pass are not kept.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    grad: bool,
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const LN_EPS: f64 = 1e-5;

/// `(C, F·T)` → `(C·k·k, F·T)` patches with zero padding.
fn im2col(x: ArrayView2<f64>, f: usize, t: usize, k: usize) -> Array2<f64> {
    let c = x.nrows();
    let r = (k / 2) as isize;
    let mut cols = Array2::zeros((c * k * k, f * t));
    for ci in 0..c {
        let xr = x.row(ci);
        let xs = xr.as_slice().expect("contiguous row");
        for ky in 0..k {
            for kx in 0..k {
                let row = ci * k * k + ky * k + kx;
                let mut out = cols.row_mut(row);
                let out = out.as_slice_mut().expect("contiguous row");
                let dy = ky as isize - r;
                let dx = kx as isize - r;
                for fi in 0..f {
                    let sf = fi as isize + dy;
                    if sf < 0 || sf >= f as isize {
                        continue;
                    }
                    let src = &xs[sf as usize * t..(sf as usize + 1) * t];
                    let dst = &mut out[fi * t..(fi + 1) * t];
                    let lo = (-dx).max(0) as usize;
                    let hi = (t as isize - dx).min(t as isize) as usize;
                    for ti in lo..hi {
                        dst[ti] = src[(ti as isize + dx) as usize];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &Array2<f64>, c: usize, f: usize, t: usize, k: usize) -> Array2<f64> {
    let r = (k / 2) as isize;
    let mut x = Array2::zeros((c, f * t));
    for ci in 0..c {
        let mut xr = x.row_mut(ci);
        let xs = xr.as_slice_mut().expect("contiguous row");
        for ky in 0..k {
            for kx in 0..k {
                let row = cols.row(ci * k * k + ky * k + kx);
                let src = row.as_slice().expect("contiguous row");
                let dy = ky as isize - r;
                let dx = kx as isize - r;
                for fi in 0..f {
                    let sf = fi as isize + dy;
                    if sf < 0 || sf >= f as isize {
                        continue;
                    }
                    let lo = (-dx).max(0) as usize;
                    let hi = (t as isize - dx).min(t as isize) as usize;
                    for ti in lo..hi {
                        xs[sf as usize * t + (ti as isize + dx) as usize] += src[fi * t + ti];
                    }
                }
            }
        }
    }
    x
}

/// Gradient through per-row standardization given the gradient at `xhat`.
fn row_norm_backward(dxhat: Array2<f64>, xhat: &Array2<f64>, inv_std: &Array1<f64>) -> Array2<f64> {
    let n = dxhat.ncols() as f64;
    let m1 = dxhat.sum_axis(Axis(1)) / n;
    let m2 = (&dxhat * xhat).sum_axis(Axis(1)) / n;
    let mut gx = dxhat - &m1.insert_axis(Axis(1));
    gx = gx - &(xhat * &m2.insert_axis(Axis(1)));
    gx *= &inv_std.view().insert_axis(Axis(1));
    gx
}

fn add_into(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new(grad: bool) -> Self {
        Self { nodes: Vec::new(), grad }
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v].value[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().as_standard_layout().to_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul_const(&mut self, a: Var, c: Array2<f64>) -> Var {
        let v = self.value(a) * &c;
        self.push(v, Op::MulConst(a, c))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a) * s;
        self.push(v, Op::Scale(a, s))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(silu);
        self.push(v, Op::Silu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    /// Same-padded `k×k` convolution of a `(C_in, f·t)` map with weights
    /// `(C_out, C_in·k·k)` and bias `(C_out, 1)`.
    pub fn conv(&mut self, x: Var, w: Var, b: Var, f: usize, t: usize, k: usize) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.ncols(), f * t, "conv input size");
        let (value, cols) = if k == 1 {
            (self.value(w).dot(xv), None)
        } else {
            let cols = im2col(xv.view(), f, t, k);
            let v = self.value(w).dot(&cols);
            (v, self.grad.then_some(cols))
        };
        let value = value + self.value(b);
        self.push(value, Op::Conv { x, w, b, f, t, k, cols })
    }

    /// 2×2 average pooling; `f` and `t` must be even.
    pub fn avg_pool(&mut self, x: Var, f: usize, t: usize) -> Var {
        let xv = self.value(x);
        let (f2, t2) = (f / 2, t / 2);
        let mut out = Array2::zeros((xv.nrows(), f2 * t2));
        Zip::from(out.rows_mut()).and(xv.rows()).for_each(|mut o, i| {
            for a in 0..f2 {
                for b in 0..t2 {
                    let s = i[2 * a * t + 2 * b] + i[2 * a * t + 2 * b + 1] + i[(2 * a + 1) * t + 2 * b] + i[(2 * a + 1) * t + 2 * b + 1];
                    o[a * t2 + b] = 0.25 * s;
                }
            }
        });
        self.push(out, Op::AvgPool { x, f, t })
    }

    /// Nearest-neighbour 2× upsampling of an `(C, f·t)` map.
    pub fn upsample(&mut self, x: Var, f: usize, t: usize) -> Var {
        let xv = self.value(x);
        let t2 = 2 * t;
        let mut out = Array2::zeros((xv.nrows(), 4 * f * t));
        Zip::from(out.rows_mut()).and(xv.rows()).for_each(|mut o, i| {
            for a in 0..2 * f {
                for b in 0..t2 {
                    o[a * t2 + b] = i[(a / 2) * t + b / 2];
                }
            }
        });
        self.push(out, Op::Upsample { x, f, t })
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("equal column counts");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn gather_rows(&mut self, x: Var, idx: Vec<usize>) -> Var {
        let v = self.value(x).select(Axis(0), &idx);
        self.push(v, Op::GatherRows(x, idx))
    }

    pub fn gather_cols(&mut self, x: Var, idx: Vec<usize>) -> Var {
        let v = self.value(x).select(Axis(1), &idx);
        self.push(v, Op::GatherCols(x, idx))
    }

    fn normalize_rows(&self, x: Var) -> (Array2<f64>, Array1<f64>) {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mean = xv.sum_axis(Axis(1)) / n;
        let mut xhat = xv - &mean.view().insert_axis(Axis(1));
        let var = xhat.mapv(|e| e * e).sum_axis(Axis(1)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
        xhat *= &inv_std.view().insert_axis(Axis(1));
        (xhat, inv_std)
    }

    fn kept(&self, xhat: Array2<f64>, inv_std: Array1<f64>) -> (Array2<f64>, Array1<f64>) {
        if self.grad {
            (xhat, inv_std)
        } else {
            (Array2::zeros((0, 0)), Array1::zeros(0))
        }
    }

    /// Per-row layer normalization with gain and bias rows `(1, C)`.
    pub fn layer_norm(&mut self, x: Var, g: Var, b: Var) -> Var {
        let (xhat, inv_std) = self.normalize_rows(x);
        let value = &xhat * self.value(g) + self.value(b);
        let (xhat, inv_std) = self.kept(xhat, inv_std);
        self.push(value, Op::LayerNorm { x, g, b, xhat, inv_std })
    }

    /// Normalizes each channel of a `(C, F·T)` map over all positions, then
    /// applies per-channel gain and bias columns `(C, 1)`.
    pub fn channel_norm(&mut self, x: Var, g: Var, b: Var) -> Var {
        let (xhat, inv_std) = self.normalize_rows(x);
        let value = &xhat * self.value(g) + self.value(b);
        let (xhat, inv_std) = self.kept(xhat, inv_std);
        self.push(value, Op::ChannelNorm { x, g, b, xhat, inv_std })
    }

    /// Multi-head scaled dot-product attention. Queries are split into
    /// `groups` equal contiguous blocks; each attends to the matching key
    /// block, or to all keys when `shared_kv`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, groups: usize, shared_kv: bool) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let e = qv.ncols();
        assert!(e % heads == 0 && qv.nrows() % groups == 0);
        let d = e / heads;
        let scale = 1.0 / (d as f64).sqrt();
        let bq = qv.nrows() / groups;
        let bk = if shared_kv { kv.nrows() } else { kv.nrows() / groups };
        let mut out = Array2::zeros((qv.nrows(), e));
        let mut probs = Vec::new();
        for gi in 0..groups {
            let (q0, k0) = (gi * bq, if shared_kv { 0 } else { gi * bk });
            for h in 0..heads {
                let cs = h * d..(h + 1) * d;
                let qh = qv.slice(s![q0..q0 + bq, cs.clone()]);
                let kh = kv.slice(s![k0..k0 + bk, cs.clone()]);
                let vh = vv.slice(s![k0..k0 + bk, cs.clone()]);
                let mut p = qh.dot(&kh.t()) * scale;
                for mut row in p.rows_mut() {
                    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    row.mapv_inplace(|x| (x - m).exp());
                    let sum = row.sum();
                    row /= sum;
                }
                out.slice_mut(s![q0..q0 + bq, cs]).assign(&p.dot(&vh));
                if self.grad {
                    probs.push(p);
                }
            }
        }
        self.push(out, Op::Attention { q, k, v, heads, groups, shared_kv, probs })
    }

    /// Mean absolute difference to a constant target, as a `(1, 1)` value.
    pub fn l1_mean(&mut self, p: Var, target: Array2<f64>) -> Var {
        let pv = self.value(p);
        assert_eq!(pv.dim(), target.dim(), "l1 target shape");
        let n = pv.len().max(1) as f64;
        let l = Zip::from(pv).and(&target).fold(0.0, |acc, &a, &b| acc + (a - b).abs()) / n;
        self.push(Array2::from_elem((1, 1), l), Op::L1Mean(p, target))
    }

    /// Mean of `(1, 1)` values.
    pub fn mean_of(&mut self, parts: &[Var]) -> Var {
        let m = parts.iter().map(|&p| self.scalar(p)).sum::<f64>() / parts.len() as f64;
        self.push(Array2::from_elem((1, 1), m), Op::MeanOf(parts.to_vec()))
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Vec<Option<Array2<f64>>> {
        assert!(self.grad, "tape was recorded without gradients");
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root] = Some(Array2::ones((1, 1)));
        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    add_into(&mut grads[*a], ga);
                    add_into(&mut grads[*b], gb);
                }
                Op::Transpose(a) => add_into(&mut grads[*a], g.t().as_standard_layout().to_owned()),
                Op::Add(a, b) => {
                    add_into(&mut grads[*b], g.clone());
                    add_into(&mut grads[*a], g);
                }
                Op::AddRow(a, r) => {
                    add_into(&mut grads[*r], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    add_into(&mut grads[*a], g);
                }
                Op::MulConst(a, c) => add_into(&mut grads[*a], g * c),
                Op::Scale(a, s) => add_into(&mut grads[*a], g * *s),
                Op::Silu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|gi, &x| {
                        let sg = sigmoid(x);
                        *gi *= sg * (1.0 + x * (1.0 - sg));
                    });
                    add_into(&mut grads[*a], ga);
                }
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(&node.value).for_each(|gi, &y| *gi *= y * (1.0 - y));
                    add_into(&mut grads[*a], ga);
                }
                Op::Conv { x, w, b, f, t, k, cols } => {
                    add_into(&mut grads[*b], g.sum_axis(Axis(1)).insert_axis(Axis(1)));
                    let wv = self.value(*w);
                    if *k == 1 {
                        add_into(&mut grads[*w], g.dot(&self.value(*x).t()));
                        add_into(&mut grads[*x], wv.t().dot(&g));
                    } else {
                        let cols = cols.as_ref().expect("conv columns kept for backward");
                        add_into(&mut grads[*w], g.dot(&cols.t()));
                        let gcols = wv.t().dot(&g);
                        let c = self.value(*x).nrows();
                        add_into(&mut grads[*x], col2im(&gcols, c, *f, *t, *k));
                    }
                }
                Op::AvgPool { x, f, t } => {
                    let (f2, t2) = (f / 2, t / 2);
                    let mut gx = Array2::zeros((g.nrows(), f * t));
                    Zip::from(gx.rows_mut()).and(g.rows()).for_each(|mut o, i| {
                        for a in 0..*f {
                            for b in 0..*t {
                                o[a * t + b] = 0.25 * i[(a / 2) * t2 + b / 2];
                            }
                        }
                    });
                    let _ = f2;
                    add_into(&mut grads[*x], gx);
                }
                Op::Upsample { x, f, t } => {
                    let t2 = 2 * t;
                    let mut gx = Array2::zeros((g.nrows(), f * t));
                    Zip::from(gx.rows_mut()).and(g.rows()).for_each(|mut o, i| {
                        for a in 0..2 * f {
                            for b in 0..t2 {
                                o[(a / 2) * t + b / 2] += i[a * t2 + b];
                            }
                        }
                    });
                    add_into(&mut grads[*x], gx);
                }
                Op::ConcatRows(parts) => {
                    let mut r0 = 0;
                    for &p in parts {
                        let n = self.value(p).nrows();
                        add_into(&mut grads[p], g.slice(s![r0..r0 + n, ..]).to_owned());
                        r0 += n;
                    }
                }
                Op::GatherRows(x, idx) => {
                    let mut gx = Array2::zeros(self.value(*x).dim());
                    for (i, &src) in idx.iter().enumerate() {
                        let mut row = gx.row_mut(src);
                        row += &g.row(i);
                    }
                    add_into(&mut grads[*x], gx);
                }
                Op::GatherCols(x, idx) => {
                    let mut gx = Array2::zeros(self.value(*x).dim());
                    for (i, &src) in idx.iter().enumerate() {
                        let mut col = gx.column_mut(src);
                        col += &g.column(i);
                    }
                    add_into(&mut grads[*x], gx);
                }
                Op::LayerNorm { x, g: gain, b, xhat, inv_std } => {
                    add_into(&mut grads[*b], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    add_into(&mut grads[*gain], (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let dxhat = &g * self.value(*gain);
                    add_into(&mut grads[*x], row_norm_backward(dxhat, xhat, inv_std));
                }
                Op::ChannelNorm { x, g: gain, b, xhat, inv_std } => {
                    add_into(&mut grads[*b], g.sum_axis(Axis(1)).insert_axis(Axis(1)));
                    add_into(&mut grads[*gain], (&g * xhat).sum_axis(Axis(1)).insert_axis(Axis(1)));
                    let dxhat = &g * self.value(*gain);
                    add_into(&mut grads[*x], row_norm_backward(dxhat, xhat, inv_std));
                }
                Op::Attention { q, k, v, heads, groups, shared_kv, probs } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let e = qv.ncols();
                    let d = e / heads;
                    let scale = 1.0 / (d as f64).sqrt();
                    let bq = qv.nrows() / groups;
                    let bk = if *shared_kv { kv.nrows() } else { kv.nrows() / groups };
                    let mut gq = Array2::zeros(qv.dim());
                    let mut gk = Array2::zeros(kv.dim());
                    let mut gv = Array2::zeros(vv.dim());
                    for gi in 0..*groups {
                        let (q0, k0) = (gi * bq, if *shared_kv { 0 } else { gi * bk });
                        for h in 0..*heads {
                            let p = &probs[gi * heads + h];
                            let cs = h * d..(h + 1) * d;
                            let go = g.slice(s![q0..q0 + bq, cs.clone()]);
                            let qh = qv.slice(s![q0..q0 + bq, cs.clone()]);
                            let kh = kv.slice(s![k0..k0 + bk, cs.clone()]);
                            let vh = vv.slice(s![k0..k0 + bk, cs.clone()]);
                            let mut gvs = gv.slice_mut(s![k0..k0 + bk, cs.clone()]);
                            gvs += &p.t().dot(&go);
                            let gp = go.dot(&vh.t());
                            let row_dot = (&gp * p).sum_axis(Axis(1));
                            let gs = (gp - &row_dot.insert_axis(Axis(1))) * p * scale;
                            let mut gqs = gq.slice_mut(s![q0..q0 + bq, cs.clone()]);
                            gqs += &gs.dot(&kh);
                            let mut gks = gk.slice_mut(s![k0..k0 + bk, cs]);
                            gks += &gs.t().dot(&qh);
                        }
                    }
                    add_into(&mut grads[*q], gq);
                    add_into(&mut grads[*k], gk);
                    add_into(&mut grads[*v], gv);
                }
                Op::L1Mean(p, target) => {
                    let pv = self.value(*p);
                    let s = g[[0, 0]] / pv.len().max(1) as f64;
                    let mut gp = Array2::zeros(pv.dim());
                    Zip::from(&mut gp).and(pv).and(target).for_each(|o, &a, &b| {
                        *o = if a > b { s } else if a < b { -s } else { 0.0 };
                    });
                    add_into(&mut grads[*p], gp);
                }
                Op::MeanOf(parts) => {
                    let s = g[[0, 0]] / parts.len() as f64;
                    for &p in parts {
                        add_into(&mut grads[p], Array2::from_elem((1, 1), s));
                    }
                }
            }
        }
        grads
    }
}
