//! Reverse-mode automatic differentiation over a single-use tape.
//!
//! A [`Graph`] records one forward pass. [`Graph::backward`] walks the tape
//! in reverse and returns gradients for every node; parameters enter the
//! tape through [`Graph::param`].

mod gradcheck;
mod optim;
mod tensor;

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::{exp, sigmoid, sqrt, tanh};

pub use gradcheck::{check_gradients, rel_error, GradCheck, REL_FLOOR};
pub use optim::{adam_step, AdamState};
pub use tensor::{ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
struct LstmCache {
    /// Post-activation gates per step, `4H` wide in i, f, g, o order.
    gates: Vec<f64>,
    cells: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    Conv { x: Var, k: Var },
    AddBias { x: Var, b: Var },
    MatMul { a: Var, b: Var },
    Reshape { x: Var },
    Concat { parts: Vec<Var> },
    Stack { parts: Vec<Var> },
    Lstm { x: Var, wx: Var, wh: Var, b: Var, cache: LstmCache },
    Elu { x: Var },
    Tanh { x: Var },
    Dropout { x: Var, mask: Vec<f64> },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Div { a: Var, b: Var },
    Scale { x: Var, c: f64 },
    Abs { x: Var },
    Sqrt { x: Var },
    Sum { x: Var },
    Mean { x: Var },
    Std { x: Var },
    RowMean { x: Var },
    RowSum { x: Var },
    Diff { x: Var },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Tape for one forward pass. Dropout is active only when built with
/// [`Graph::training`].
#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    rng: Option<ChaCha8Rng>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn check(cond: bool, what: &str) {
    assert!(cond, "shape mismatch: {what}");
}

impl Graph {
    /// Evaluation mode.
    pub fn new() -> Self {
        Self { nodes: Vec::new(), rng: None }
    }

    /// Training mode with a seeded dropout stream.
    pub fn training(seed: u64) -> Self {
        Self { nodes: Vec::new(), rng: Some(ChaCha8Rng::seed_from_u64(seed)) }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id))
    }

    /// `x: (T, W, C_in)`, `k: (h, w, C_in, C_out)` -> `(T, W - w + 1, C_out)`.
    /// Rows before the start are zero, so output row `t` reads rows `<= t`.
    pub fn conv2d_causal(&mut self, x: Var, k: Var) -> Var {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(k).to_vec();
        check(xs.len() == 3 && ks.len() == 4, "conv2d_causal ranks");
        let (t_len, width, cin) = (xs[0], xs[1], xs[2]);
        let (h, w, kcin, cout) = (ks[0], ks[1], ks[2], ks[3]);
        check(kcin == cin && w <= width && w > 0 && h > 0, "conv2d_causal kernel");
        let wo = width - w + 1;
        let xv = &self.nodes[x.0].value.data;
        let kv = &self.nodes[k.0].value.data;
        let mut out = vec![0.0; t_len * wo * cout];
        for t in 0..t_len {
            for dt in 0..h {
                let Some(src) = (t + dt + 1).checked_sub(h) else { continue };
                for xo in 0..wo {
                    let o = &mut out[(t * wo + xo) * cout..(t * wo + xo + 1) * cout];
                    for dx in 0..w {
                        let xrow = &xv[(src * width + xo + dx) * cin..(src * width + xo + dx + 1) * cin];
                        for (ci, xval) in xrow.iter().enumerate() {
                            if *xval == 0.0 {
                                continue;
                            }
                            let kk = &kv[((dt * w + dx) * cin + ci) * cout..((dt * w + dx) * cin + ci + 1) * cout];
                            for (oc, kval) in o.iter_mut().zip(kk) {
                                *oc += xval * kval;
                            }
                        }
                    }
                }
            }
        }
        self.push(Tensor::new(&[t_len, wo, cout], out), Op::Conv { x, k })
    }

    /// Adds `b` (length = last axis) to every slice.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let c = *self.shape(x).last().unwrap_or(&0);
        check(self.value(b).len() == c, "bias width");
        let bv = self.value(b).data.clone();
        let mut v = self.value(x).clone();
        for (j, o) in v.data.iter_mut().enumerate() {
            *o += bv[j % c];
        }
        self.push(v, Op::AddBias { x, b })
    }

    /// `(m, k) @ (k, n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        check(sa.len() == 2 && sb.len() == 2 && sa[1] == sb[0], "matmul");
        let (m, kd, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(&self.value(a).data, &self.value(b).data, m, kd, n);
        self.push(Tensor::new(&[m, n], out), Op::MatMul { a, b })
    }

    /// `x @ w + b`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_bias(y, b)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let mut v = self.value(x).clone();
        check(shape.iter().product::<usize>() == v.len(), "reshape size");
        v.shape = shape.to_vec();
        self.push(v, Op::Reshape { x })
    }

    /// Column-wise concatenation of `(rows, c_k)` matrices.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        check(!parts.is_empty(), "concat of nothing");
        let rows = self.shape(parts[0])[0];
        let widths: Vec<usize> = parts
            .iter()
            .map(|p| {
                let s = self.shape(*p);
                check(s.len() == 2 && s[0] == rows, "concat rows");
                s[1]
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (p, w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(*p).data[r * w..(r + 1) * w]);
            }
        }
        self.push(Tensor::new(&[rows, total], out), Op::Concat { parts: parts.to_vec() })
    }

    /// `n` matrices `(T, C)` -> `(T, n, C)`.
    pub fn stack_axis1(&mut self, parts: &[Var]) -> Var {
        check(!parts.is_empty(), "stack of nothing");
        let s0 = self.shape(parts[0]).to_vec();
        check(s0.len() == 2 && parts.iter().all(|p| self.shape(*p) == s0.as_slice()), "stack shapes");
        let (t_len, c) = (s0[0], s0[1]);
        let mut out = Vec::with_capacity(t_len * parts.len() * c);
        for t in 0..t_len {
            for p in parts {
                out.extend_from_slice(&self.value(*p).data[t * c..(t + 1) * c]);
            }
        }
        self.push(Tensor::new(&[t_len, parts.len(), c], out), Op::Stack { parts: parts.to_vec() })
    }

    /// Single-layer LSTM from a zero state. `x: (T, D)`, `wx: (D, 4H)`,
    /// `wh: (H, 4H)`, `b: (4H)`; gate blocks are i, f, g, o.
    pub fn lstm(&mut self, x: Var, wx: Var, wh: Var, b: Var) -> Var {
        let (sx, swx, swh) = (self.shape(x).to_vec(), self.shape(wx).to_vec(), self.shape(wh).to_vec());
        check(sx.len() == 2 && swx.len() == 2 && swh.len() == 2, "lstm ranks");
        let (t_len, d) = (sx[0], sx[1]);
        let h = swh[0];
        check(swx[0] == d && swx[1] == 4 * h && swh[1] == 4 * h && self.value(b).len() == 4 * h, "lstm weights");
        let pre = matmul_raw(&self.value(x).data, &self.value(wx).data, t_len, d, 4 * h);
        let whv = &self.value(wh).data;
        let bv = &self.value(b).data;
        let mut gates = vec![0.0; t_len * 4 * h];
        let mut cells = vec![0.0; t_len * h];
        let mut hs = vec![0.0; t_len * h];
        let mut z = vec![0.0; 4 * h];
        for t in 0..t_len {
            z.copy_from_slice(&pre[t * 4 * h..(t + 1) * 4 * h]);
            for (zj, bj) in z.iter_mut().zip(bv) {
                *zj += bj;
            }
            if t > 0 {
                for (r, hv) in hs[(t - 1) * h..t * h].iter().enumerate() {
                    for (zj, wj) in z.iter_mut().zip(&whv[r * 4 * h..(r + 1) * 4 * h]) {
                        *zj += hv * wj;
                    }
                }
            }
            let gt = &mut gates[t * 4 * h..(t + 1) * 4 * h];
            for j in 0..h {
                let (i, f, g, o) = (sigmoid(z[j]), sigmoid(z[h + j]), tanh(z[2 * h + j]), sigmoid(z[3 * h + j]));
                gt[j] = i;
                gt[h + j] = f;
                gt[2 * h + j] = g;
                gt[3 * h + j] = o;
                let c_prev = if t > 0 { cells[(t - 1) * h + j] } else { 0.0 };
                let c = f * c_prev + i * g;
                cells[t * h + j] = c;
                hs[t * h + j] = o * tanh(c);
            }
        }
        self.push(Tensor::new(&[t_len, h], hs), Op::Lstm { x, wx, wh, b, cache: LstmCache { gates, cells } })
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let mut v = self.value(x).clone();
        v.data.iter_mut().for_each(|e| *e = f(*e));
        self.push(v, op)
    }

    /// ELU with unit alpha.
    pub fn elu(&mut self, x: Var) -> Var {
        self.unary(x, |e| if e > 0.0 { e } else { exp(e) - 1.0 }, Op::Elu { x })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, tanh, Op::Tanh { x })
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, f64::abs, Op::Abs { x })
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, sqrt, Op::Sqrt { x })
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |e| e * c, Op::Scale { x, c })
    }

    /// Inverted dropout; identity outside training mode or at rate 0.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Var {
        let n = self.value(x).len();
        let mask = match self.rng.as_mut() {
            Some(rng) if rate > 0.0 => {
                let keep = 1.0 - rate;
                (0..n).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect()
            }
            _ => vec![1.0; n],
        };
        let mut v = self.value(x).clone();
        v.data.iter_mut().zip(&mask).for_each(|(e, m)| *e *= m);
        self.push(v, Op::Dropout { x, mask })
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let bl = self.value(b).len();
        check(bl == 1 || self.shape(a) == self.shape(b), "elementwise operands");
        let bv = self.value(b).data.clone();
        let mut v = self.value(a).clone();
        for (j, e) in v.data.iter_mut().enumerate() {
            *e = f(*e, bv[if bl == 1 { 0 } else { j }]);
        }
        self.push(v, op)
    }

    /// Elementwise; `b` may be a single value broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul { a, b })
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x / y, Op::Div { a, b })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum { x })
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = &self.value(x).data;
        let m = v.iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean { x })
    }

    /// Unbiased standard deviation over all elements.
    pub fn std(&mut self, x: Var) -> Var {
        let v = &self.value(x).data;
        check(v.len() > 1, "std needs two values");
        let s = crate::math::sample_std(v);
        self.push(Tensor::scalar(s), Op::Std { x })
    }

    pub fn sum_abs(&mut self, x: Var) -> Var {
        let a = self.abs(x);
        self.sum(a)
    }

    /// `(T, N)` -> `(T)` mean across columns.
    pub fn row_mean(&mut self, x: Var) -> Var {
        let (rows, out) = self.row_reduce(x);
        let cols = self.shape(x)[1] as f64;
        self.push(Tensor::new(&[rows], out.into_iter().map(|s| s / cols).collect()), Op::RowMean { x })
    }

    pub fn row_sum(&mut self, x: Var) -> Var {
        let (rows, out) = self.row_reduce(x);
        self.push(Tensor::new(&[rows], out), Op::RowSum { x })
    }

    fn row_reduce(&self, x: Var) -> (usize, Vec<f64>) {
        let s = self.shape(x);
        check(s.len() == 2, "row reduction rank");
        let (rows, cols) = (s[0], s[1]);
        let v = &self.value(x).data;
        (rows, (0..rows).map(|r| v[r * cols..(r + 1) * cols].iter().sum()).collect())
    }

    /// First difference along axis 0 with a zero first row.
    pub fn diff_rows(&mut self, x: Var) -> Var {
        let s = self.shape(x).to_vec();
        let stride: usize = s[1..].iter().product();
        let v = &self.value(x).data;
        let mut out = vec![0.0; v.len()];
        for j in stride..v.len() {
            out[j] = v[j] - v[j - stride];
        }
        self.push(Tensor::new(&s, out), Op::Diff { x })
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients {
        check(self.value(loss).len() == 1, "backward from a non-scalar");
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(k, n)| if let Op::Param(id) = n.op { Some((id, k)) } else { None })
            .collect();
        Gradients { grads, params }
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Conv { x, k } => {
                let (xs, ks) = (&val(*x).shape, &val(*k).shape);
                let (t_len, width, cin) = (xs[0], xs[1], xs[2]);
                let (h, w, cout) = (ks[0], ks[1], ks[3]);
                let wo = width - w + 1;
                let (xv, kv) = (&val(*x).data, &val(*k).data);
                let mut gx = vec![0.0; xv.len()];
                let mut gk = vec![0.0; kv.len()];
                for t in 0..t_len {
                    for dt in 0..h {
                        let Some(src) = (t + dt + 1).checked_sub(h) else { continue };
                        for xo in 0..wo {
                            let go = &g[(t * wo + xo) * cout..(t * wo + xo + 1) * cout];
                            for dx in 0..w {
                                for ci in 0..cin {
                                    let xi = (src * width + xo + dx) * cin + ci;
                                    let kb = ((dt * w + dx) * cin + ci) * cout;
                                    let mut acc = 0.0;
                                    for oc in 0..cout {
                                        acc += go[oc] * kv[kb + oc];
                                        gk[kb + oc] += go[oc] * xv[xi];
                                    }
                                    gx[xi] += acc;
                                }
                            }
                        }
                    }
                }
                accumulate(grads, *x, gx);
                accumulate(grads, *k, gk);
            }
            Op::AddBias { x, b } => {
                let c = val(*b).len();
                let mut gb = vec![0.0; c];
                for (j, gj) in g.iter().enumerate() {
                    gb[j % c] += gj;
                }
                accumulate(grads, *x, g.to_vec());
                accumulate(grads, *b, gb);
            }
            Op::MatMul { a, b } => {
                let (m, kd, n) = (val(*a).shape[0], val(*a).shape[1], val(*b).shape[1]);
                let (av, bv) = (&val(*a).data, &val(*b).data);
                let mut ga = vec![0.0; m * kd];
                let mut gb = vec![0.0; kd * n];
                for i in 0..m {
                    let gi = &g[i * n..(i + 1) * n];
                    for p in 0..kd {
                        let brow = &bv[p * n..(p + 1) * n];
                        ga[i * kd + p] = gi.iter().zip(brow).map(|(x, y)| x * y).sum();
                        let aip = av[i * kd + p];
                        if aip != 0.0 {
                            for (gbj, gij) in gb[p * n..(p + 1) * n].iter_mut().zip(gi) {
                                *gbj += aip * gij;
                            }
                        }
                    }
                }
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::Reshape { x } => accumulate(grads, *x, g.to_vec()),
            Op::Concat { parts } => {
                let rows = node.value.shape[0];
                let total = node.value.shape[1];
                let mut off = 0;
                for p in parts {
                    let w = val(*p).shape[1];
                    let mut gp = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        gp.extend_from_slice(&g[r * total + off..r * total + off + w]);
                    }
                    accumulate(grads, *p, gp);
                    off += w;
                }
            }
            Op::Stack { parts } => {
                let (t_len, n, c) = (node.value.shape[0], node.value.shape[1], node.value.shape[2]);
                for (k, p) in parts.iter().enumerate() {
                    let mut gp = Vec::with_capacity(t_len * c);
                    for t in 0..t_len {
                        gp.extend_from_slice(&g[(t * n + k) * c..(t * n + k + 1) * c]);
                    }
                    accumulate(grads, *p, gp);
                }
            }
            Op::Lstm { x, wx, wh, b, cache } => {
                let (t_len, d) = (val(*x).shape[0], val(*x).shape[1]);
                let h = val(*wh).shape[0];
                let (xv, wxv, whv) = (&val(*x).data, &val(*wx).data, &val(*wh).data);
                let hs = &node.value.data;
                let mut gx = vec![0.0; xv.len()];
                let mut gwx = vec![0.0; wxv.len()];
                let mut gwh = vec![0.0; whv.len()];
                let mut gb = vec![0.0; 4 * h];
                let mut dh_next = vec![0.0; h];
                let mut dc_next = vec![0.0; h];
                let mut dz = vec![0.0; 4 * h];
                for t in (0..t_len).rev() {
                    let gt = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
                    for j in 0..h {
                        let (i, f, gg, o) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
                        let c = cache.cells[t * h + j];
                        let c_prev = if t > 0 { cache.cells[(t - 1) * h + j] } else { 0.0 };
                        let tc = tanh(c);
                        let dh = g[t * h + j] + dh_next[j];
                        let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                        dz[j] = dc * gg * i * (1.0 - i);
                        dz[h + j] = dc * c_prev * f * (1.0 - f);
                        dz[2 * h + j] = dc * i * (1.0 - gg * gg);
                        dz[3 * h + j] = dh * tc * o * (1.0 - o);
                        dc_next[j] = dc * f;
                    }
                    for (gbj, dzj) in gb.iter_mut().zip(&dz) {
                        *gbj += dzj;
                    }
                    for p in 0..d {
                        let xp = xv[t * d + p];
                        let row = &wxv[p * 4 * h..(p + 1) * 4 * h];
                        gx[t * d + p] = row.iter().zip(&dz).map(|(w, z)| w * z).sum();
                        if xp != 0.0 {
                            for (gw, z) in gwx[p * 4 * h..(p + 1) * 4 * h].iter_mut().zip(&dz) {
                                *gw += xp * z;
                            }
                        }
                    }
                    for r in 0..h {
                        let row = &whv[r * 4 * h..(r + 1) * 4 * h];
                        dh_next[r] = row.iter().zip(&dz).map(|(w, z)| w * z).sum();
                        if t > 0 {
                            let hp = hs[(t - 1) * h + r];
                            for (gw, z) in gwh[r * 4 * h..(r + 1) * 4 * h].iter_mut().zip(&dz) {
                                *gw += hp * z;
                            }
                        }
                    }
                }
                accumulate(grads, *x, gx);
                accumulate(grads, *wx, gwx);
                accumulate(grads, *wh, gwh);
                accumulate(grads, *b, gb);
            }
            Op::Elu { x } => {
                let gx = g
                    .iter()
                    .zip(&val(*x).data)
                    .zip(&node.value.data)
                    .map(|((gj, xj), yj)| if *xj > 0.0 { *gj } else { gj * (yj + 1.0) })
                    .collect();
                accumulate(grads, *x, gx);
            }
            Op::Tanh { x } => {
                let gx = g.iter().zip(&node.value.data).map(|(gj, yj)| gj * (1.0 - yj * yj)).collect();
                accumulate(grads, *x, gx);
            }
            Op::Dropout { x, mask } => {
                accumulate(grads, *x, g.iter().zip(mask).map(|(a, m)| a * m).collect());
            }
            Op::Add { a, b } => {
                accumulate(grads, *a, g.to_vec());
                accumulate(grads, *b, reduce_to(g, val(*b).len()));
            }
            Op::Sub { a, b } => {
                accumulate(grads, *a, g.to_vec());
                accumulate(grads, *b, reduce_to(&g.iter().map(|x| -x).collect::<Vec<_>>(), val(*b).len()));
            }
            Op::Mul { a, b } => {
                let (av, bv) = (&val(*a).data, &val(*b).data);
                let bl = bv.len();
                let ga = g.iter().enumerate().map(|(j, gj)| gj * bv[if bl == 1 { 0 } else { j }]).collect();
                let gb: Vec<f64> = g.iter().zip(av).map(|(gj, aj)| gj * aj).collect();
                accumulate(grads, *a, ga);
                accumulate(grads, *b, reduce_to(&gb, bl));
            }
            Op::Div { a, b } => {
                let bv = &val(*b).data;
                let bl = bv.len();
                let bj = |j: usize| bv[if bl == 1 { 0 } else { j }];
                let ga = g.iter().enumerate().map(|(j, gj)| gj / bj(j)).collect();
                let gb: Vec<f64> =
                    g.iter().zip(&node.value.data).enumerate().map(|(j, (gj, yj))| -gj * yj / bj(j)).collect();
                accumulate(grads, *a, ga);
                accumulate(grads, *b, reduce_to(&gb, bl));
            }
            Op::Scale { x, c } => accumulate(grads, *x, g.iter().map(|gj| gj * c).collect()),
            Op::Abs { x } => {
                let gx = g.iter().zip(&val(*x).data).map(|(gj, xj)| gj * crate::math::sign(*xj)).collect();
                accumulate(grads, *x, gx);
            }
            Op::Sqrt { x } => {
                let gx = g.iter().zip(&node.value.data).map(|(gj, yj)| gj * 0.5 / yj).collect();
                accumulate(grads, *x, gx);
            }
            Op::Sum { x } => accumulate(grads, *x, vec![g[0]; val(*x).len()]),
            Op::Mean { x } => {
                let n = val(*x).len();
                accumulate(grads, *x, vec![g[0] / n as f64; n]);
            }
            Op::Std { x } => {
                let v = &val(*x).data;
                let n = v.len() as f64;
                let m = v.iter().sum::<f64>() / n;
                let s = node.value.data[0];
                accumulate(grads, *x, v.iter().map(|xj| g[0] * (xj - m) / ((n - 1.0) * s)).collect());
            }
            Op::RowMean { x } | Op::RowSum { x } => {
                let cols = val(*x).shape[1];
                let c = if matches!(node.op, Op::RowMean { .. }) { 1.0 / cols as f64 } else { 1.0 };
                let gx = (0..val(*x).len()).map(|j| g[j / cols] * c).collect();
                accumulate(grads, *x, gx);
            }
            Op::Diff { x } => {
                let stride: usize = val(*x).shape[1..].iter().product();
                let mut gx = vec![0.0; g.len()];
                for j in stride..g.len() {
                    gx[j] += g[j];
                    gx[j - stride] -= g[j];
                }
                accumulate(grads, *x, gx);
            }
        }
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, kd: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let o = &mut out[i * n..(i + 1) * n];
        for p in 0..kd {
            let aip = a[i * kd + p];
            if aip == 0.0 {
                continue;
            }
            for (oj, bj) in o.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *oj += aip * bj;
            }
        }
    }
    out
}

fn reduce_to(g: &[f64], len: usize) -> Vec<f64> {
    if len == 1 && g.len() != 1 {
        vec![g.iter().sum()]
    } else {
        g.to_vec()
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        slot => *slot = Some(g),
    }
}

/// Result of [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// Gradient of node `v`, zero-filled if the loss does not depend on it.
    pub fn wrt(&self, graph: &Graph, v: Var) -> Tensor {
        let shape = graph.shape(v);
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()),
            None => Tensor::zeros(shape),
        }
    }

    /// One tensor per stored parameter, summed over every leaf that loaded it.
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = store.iter().map(|(_, t)| Tensor::zeros(&t.shape)).collect();
        for (id, node) in &self.params {
            if let Some(g) = &self.grads[*node] {
                out[id.0].data.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
    }

    #[test]
    fn sum_of_squares() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::new(&[3], vec![1.0, -2.0, 0.5]));
        let mut g = Graph::new();
        let v = g.param(&store, p);
        let sq = g.mul(v, v);
        let l = g.sum(sq);
        let gr = g.backward(l).param_grads(&store);
        assert_eq!(gr[0].data, vec![2.0, -4.0, 1.0]);
    }

    #[test]
    fn identity_kernel_passthrough() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(&[3, 2, 1], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let k = g.constant(Tensor::new(&[1, 1, 1, 1], vec![1.0]));
        let y = g.conv2d_causal(x, k);
        assert_eq!(g.value(y).data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn causal_smear() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(&[5, 1, 1], vec![0.0, 0.0, 1.0, 0.0, 0.0]));
        let k = g.constant(Tensor::new(&[2, 1, 1, 1], vec![1.0, 1.0]));
        let y = g.conv2d_causal(x, k);
        assert_eq!(g.value(y).data, vec![0.0, 0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn elu_tanh_dropout_basics() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(&[3], vec![0.0, 50.0, -50.0]));
        let e = g.elu(x);
        assert_eq!(g.value(e).data[0], 0.0);
        let t = g.tanh(x);
        assert!(g.value(t).data.iter().all(|v| v.abs() <= 1.0));
        let d = g.dropout(x, 0.5);
        assert_eq!(g.value(d).data, g.value(x).data);
    }

    #[test]
    fn zero_weight_lstm_is_silent() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(&[4, 2], vec![1.0; 8]));
        let wx = g.constant(Tensor::zeros(&[2, 12]));
        let wh = g.constant(Tensor::zeros(&[3, 12]));
        let b = g.constant(Tensor::zeros(&[12]));
        let h = g.lstm(x, wx, wh, b);
        assert!(g.value(h).data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        store.add("p", Tensor::new(&[2], vec![1.0, 1.0]));
        let mut st = AdamState::new(&store, 0.1);
        adam_step(&mut store, &[Tensor::new(&[2], vec![0.5, -3.0])], &mut st);
        // first bias-corrected step is lr * g / (|g| + eps)
        let p = &store.get(ParamId(0)).data;
        assert!((p[0] - (1.0 - 0.1 * 0.5 / (0.5 + 1e-8))).abs() < 1e-15);
        assert!((p[1] - (1.0 + 0.1 * 3.0 / (3.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let x = store.add("x", random(&[5, 3, 2], &mut rng));
        let k = store.add("k", random(&[2, 2, 2, 3], &mut rng));
        let kb = store.add("kb", random(&[3], &mut rng));
        let wx = store.add("wx", random(&[6, 8], &mut rng));
        let wh = store.add("wh", random(&[2, 8], &mut rng));
        let lb = store.add("lb", random(&[8], &mut rng));
        let d = store.add("d", random(&[2, 2], &mut rng));
        let build = |g: &mut Graph, s: &ParamStore| {
            let xv = g.param(s, x);
            let kv = g.param(s, k);
            let c = g.conv2d_causal(xv, kv);
            let bv = g.param(s, kb);
            let c = g.add_bias(c, bv);
            let c = g.elu(c);
            let flat = g.reshape(c, &[5, 6]);
            let (wxv, whv, lbv) = (g.param(s, wx), g.param(s, wh), g.param(s, lb));
            let h = g.lstm(flat, wxv, whv, lbv);
            let h2 = g.concat_cols(&[h, h]);
            let h2 = g.reshape(h2, &[10, 2]);
            let dv = g.param(s, d);
            let y = g.matmul(h2, dv);
            let y = g.tanh(y);
            let st = g.stack_axis1(&[y, y]);
            let st = g.reshape(st, &[10, 4]);
            let df = g.diff_rows(st);
            let ab = g.abs(df);
            let rs = g.row_sum(ab);
            let rm = g.row_mean(st);
            let sd = g.std(rm);
            let mn = g.mean(rm);
            let q = g.div(mn, sd);
            let cost = g.mean(rs);
            let cost = g.scale(cost, 0.1);
            let l = g.sub(q, cost);
            let sq = g.mul(l, l);
            let one = g.constant(Tensor::scalar(1.0));
            let sq = g.add(sq, one);
            g.sqrt(sq)
        };
        let r = check_gradients(&store, 1e-6, build);
        assert!(r.max_rel_error < 1e-5, "{r:?}");
    }
}
