//! Reverse-mode differentiation over a recorded tape.
//!
//! A [`Graph`] records every primitive as it is evaluated. Values are kept so
//! that [`Graph::backward`] can replay the tape in reverse. The set of
//! primitives is closed and covers exactly what the ansatz networks need.

use super::tensor::{dot, matmul_nt, matmul_tn};
use super::{Activation, Gradients, ParamId, ParameterStore, Tensor};
use crate::error::{NqsError, Result};

pub(crate) const NORM_EPS: f64 = 1e-5;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Unary(Var, Activation),
    RowNorm { x: Var, group: usize, rstd: Vec<f64> },
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    Rotate { x: Var, seq_len: usize, thetas: Vec<f64> },
    Retention { q: Var, k: Var, v: Var, seq_len: usize, gamma: f64 },
    Attention { q: Var, k: Var, v: Var, seq_len: usize, scale: f64, probs: Vec<f64> },
    Gather { table: Var, idx: Vec<usize> },
    Reshape(Var),
    TokenLogProb { logits: Var, targets: Vec<u8>, probs: Vec<f64> },
    SegmentSum { x: Var, seg: usize, scale: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Recorded forward computation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn dim_err(what: &str, a: &Tensor, b: &Tensor) -> NqsError {
    NqsError::Dimension(format!("{what}: {:?} vs {:?}", a.shape(), b.shape()))
}

/// Apply the position-dependent pairwise rotation in place. `sign` is +1 for
/// the forward map and -1 for its inverse (the adjoint).
fn rotate_rows(data: &mut [f64], cols: usize, seq_len: usize, thetas: &[f64], sign: f64) {
    for (r, row) in data.chunks_mut(cols).enumerate() {
        let pos = (r % seq_len) as f64;
        for (i, &th) in thetas.iter().enumerate() {
            let (s, c) = (sign * pos * th).sin_cos();
            let (a, b) = (row[2 * i], row[2 * i + 1]);
            row[2 * i] = a * c - b * s;
            row[2 * i + 1] = a * s + b * c;
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id.0))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn zip_same(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, what: &str) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err(what, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, |x, y| x + y, "add")?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, |x, y| x * y, "mul")?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    fn row_broadcast(&self, x: Var, r: Var, f: impl Fn(f64, f64) -> f64, what: &str) -> Result<Tensor> {
        let (tx, tr) = (self.value(x), self.value(r));
        if tr.len() != tx.cols() {
            return Err(dim_err(what, tx, tr));
        }
        let c = tx.cols();
        let data = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| f(v, tr.data()[i % c]))
            .collect();
        Tensor::new(tx.shape().to_vec(), data)
    }

    /// `x + b` with `b` broadcast over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let out = self.row_broadcast(x, b, |v, r| v + r, "add_row")?;
        Ok(self.push(out, Op::AddRow(x, b)))
    }

    /// `x * g` with `g` broadcast over rows.
    pub fn mul_row(&mut self, x: Var, g: Var) -> Result<Var> {
        let out = self.row_broadcast(x, g, |v, r| v * r, "mul_row")?;
        Ok(self.push(out, Op::MulRow(x, g)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).map(|v| v * s);
        self.push(out, Op::Scale(x, s))
    }

    pub fn unary(&mut self, x: Var, act: Activation) -> Var {
        let out = self.value(x).map(|v| act.eval(v));
        self.push(out, Op::Unary(x, act))
    }

    /// Normalise every contiguous group of `group` columns to zero mean and
    /// unit variance (no affine part).
    pub fn row_norm(&mut self, x: Var, group: usize) -> Result<Var> {
        let t = self.value(x);
        if group == 0 || !t.cols().is_multiple_of(group) {
            return Err(NqsError::Dimension(format!(
                "group size {group} does not divide {} columns",
                t.cols()
            )));
        }
        let mut out = t.clone();
        let rstd = super::normalize_groups(out.data_mut(), group, NORM_EPS);
        Ok(self.push(out, Op::RowNorm { x, group, rstd }))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        let c = t.cols();
        if start >= end || end > c {
            return Err(NqsError::Dimension(format!("column slice {start}..{end} of {c}")));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(t.rows() * w);
        for r in 0..t.rows() {
            data.extend_from_slice(&t.row(r)[start..end]);
        }
        let out = Tensor::matrix(t.rows(), w, data)?;
        Ok(self.push(out, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(NqsError::Dimension("concat_cols row mismatch".into()));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::matrix(rows, total, data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Rotate column pairs `(2i, 2i+1)` of row `r` by `(r mod seq_len) * thetas[i]`.
    pub fn rotate(&mut self, x: Var, seq_len: usize, thetas: &[f64]) -> Result<Var> {
        let t = self.value(x);
        if t.cols() != 2 * thetas.len() || !t.rows().is_multiple_of(seq_len) {
            return Err(NqsError::Dimension(format!(
                "rotation of {:?} with {} frequencies, sequence length {seq_len}",
                t.shape(),
                thetas.len()
            )));
        }
        let mut out = t.clone();
        let c = out.cols();
        rotate_rows(out.data_mut(), c, seq_len, thetas, 1.0);
        Ok(self.push(
            out,
            Op::Rotate {
                x,
                seq_len,
                thetas: thetas.to_vec(),
            },
        ))
    }

    /// Parallel retention `(Q K^T ⊙ D) V` for each length-`seq_len` block of rows,
    /// with `D[j][k] = gamma^(j-k)` for `j >= k`.
    pub fn retention(&mut self, q: Var, k: Var, v: Var, seq_len: usize, gamma: f64) -> Result<Var> {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        if tq.shape() != tk.shape() || tq.rows() != tv.rows() || tq.rows() % seq_len != 0 {
            return Err(dim_err("retention", tq, tv));
        }
        let out = super::retention_forward(tq, tk, tv, seq_len, gamma);
        Ok(self.push(
            out,
            Op::Retention {
                q,
                k,
                v,
                seq_len,
                gamma,
            },
        ))
    }

    /// Causal softmax attention over each length-`seq_len` block of rows.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, seq_len: usize) -> Result<Var> {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        if tq.shape() != tk.shape() || tq.rows() != tv.rows() || tq.rows() % seq_len != 0 {
            return Err(dim_err("attention", tq, tv));
        }
        let scale = 1.0 / (tq.cols() as f64).sqrt();
        let (dk, dv) = (tq.cols(), tv.cols());
        let n_seq = tq.rows() / seq_len;
        let mut probs = vec![0.0; n_seq * seq_len * seq_len];
        let mut out = vec![0.0; tq.rows() * dv];
        for b in 0..n_seq {
            for j in 0..seq_len {
                let rj = b * seq_len + j;
                let qj = &tq.data()[rj * dk..(rj + 1) * dk];
                let p = &mut probs[(b * seq_len + j) * seq_len..(b * seq_len + j + 1) * seq_len];
                let mut max = f64::NEG_INFINITY;
                for kk in 0..=j {
                    let rk = b * seq_len + kk;
                    p[kk] = scale * dot(qj, &tk.data()[rk * dk..(rk + 1) * dk]);
                    max = max.max(p[kk]);
                }
                let mut z = 0.0;
                for pk in p.iter_mut().take(j + 1) {
                    *pk = (*pk - max).exp();
                    z += *pk;
                }
                let orow = &mut out[rj * dv..(rj + 1) * dv];
                for kk in 0..=j {
                    p[kk] /= z;
                    let rk = b * seq_len + kk;
                    for (o, &vv) in orow.iter_mut().zip(&tv.data()[rk * dv..(rk + 1) * dv]) {
                        *o += p[kk] * vv;
                    }
                }
            }
        }
        let out = Tensor::matrix(tq.rows(), dv, out)?;
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                seq_len,
                scale,
                probs,
            },
        ))
    }

    /// Rows of `table` selected by `idx`.
    pub fn gather(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let c = t.cols();
        if let Some(&bad) = idx.iter().find(|&&i| i >= t.rows()) {
            return Err(NqsError::Dimension(format!("gather index {bad} of {} rows", t.rows())));
        }
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::matrix(idx.len(), c, data)?;
        Ok(self.push(
            out,
            Op::Gather {
                table,
                idx: idx.to_vec(),
            },
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x)))
    }

    /// `log p(target)` per row of four-way logits, with the softmax restricted
    /// to the entries allowed by `masks`. Every target must be allowed.
    pub fn token_log_prob(&mut self, logits: Var, targets: &[u8], masks: &[[bool; 4]]) -> Result<Var> {
        let t = self.value(logits);
        if t.cols() != 4 || t.rows() != targets.len() || masks.len() != targets.len() {
            return Err(NqsError::Dimension(format!(
                "token_log_prob: logits {:?}, {} targets, {} masks",
                t.shape(),
                targets.len(),
                masks.len()
            )));
        }
        let mut probs = vec![0.0; t.len()];
        let mut out = Vec::with_capacity(targets.len());
        for (r, (&tgt, mask)) in targets.iter().zip(masks).enumerate() {
            if !mask[tgt as usize] {
                return Err(NqsError::Domain(format!("target token {tgt} is masked at row {r}")));
            }
            let row = t.row(r);
            let p = &mut probs[4 * r..4 * r + 4];
            let lse = super::masked_softmax_into(row, mask, p);
            out.push(row[tgt as usize] - lse);
        }
        let out = Tensor::vector(out);
        Ok(self.push(
            out,
            Op::TokenLogProb {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Sum consecutive groups of `seg` entries and multiply by `scale`.
    pub fn segment_sum(&mut self, x: Var, seg: usize, scale: f64) -> Result<Var> {
        let t = self.value(x);
        if seg == 0 || !t.len().is_multiple_of(seg) {
            return Err(NqsError::Dimension(format!("segment {seg} of {} entries", t.len())));
        }
        let out: Vec<f64> = t.data().chunks(seg).map(|c| scale * c.iter().sum::<f64>()).collect();
        Ok(self.push(Tensor::vector(out), Op::SegmentSum { x, seg, scale }))
    }

    /// Back-propagate from `seeds` (node, upstream gradient) and return the
    /// gradient of every parameter in `store`.
    pub fn backward(&self, seeds: &[(Var, Tensor)], store: &ParameterStore) -> Result<Gradients> {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            if g.len() != self.value(*v).len() {
                return Err(dim_err("backward seed", self.value(*v), g));
            }
            let g = g.clone().reshape(self.value(*v).shape().to_vec())?;
            accumulate(&mut grads, *v, g);
        }
        let mut out = Gradients::zeros_like(store);
        let top = seeds.iter().map(|(v, _)| v.0).max().unwrap_or(0);
        for i in (0..=top).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, g, &mut grads, &mut out)?;
        }
        Ok(out)
    }

    fn backprop_node(
        &self,
        i: usize,
        g: Tensor,
        grads: &mut [Option<Tensor>],
        out: &mut Gradients,
    ) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Constant => {}
            Op::Param(p) => out.0[*p].add_assign(&g),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                let ga = matmul_nt(g.data(), tb.data(), m, n, k);
                let gb = matmul_tn(ta.data(), g.data(), m, k, n);
                accumulate(grads, *a, Tensor::new(ta.shape().to_vec(), ga)?);
                accumulate(grads, *b, Tensor::new(tb.shape().to_vec(), gb)?);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g);
            }
            Op::Mul(a, b) => {
                let ga = zip(&g, self.value(*b), |x, y| x * y);
                let gb = zip(&g, self.value(*a), |x, y| x * y);
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::AddRow(x, b) => {
                let c = g.cols();
                let mut gb = vec![0.0; c];
                for (i, v) in g.data().iter().enumerate() {
                    gb[i % c] += v;
                }
                let shape = self.value(*b).shape().to_vec();
                accumulate(grads, *b, Tensor::new(shape, gb)?);
                accumulate(grads, *x, g);
            }
            Op::MulRow(x, r) => {
                let (tx, tr) = (self.value(*x), self.value(*r));
                let c = g.cols();
                let mut gr = vec![0.0; c];
                let mut gx = g.clone();
                for (i, (gv, xv)) in gx.data_mut().iter_mut().zip(tx.data()).enumerate() {
                    gr[i % c] += *gv * xv;
                    *gv *= tr.data()[i % c];
                }
                accumulate(grads, *r, Tensor::new(tr.shape().to_vec(), gr)?);
                accumulate(grads, *x, gx);
            }
            Op::Scale(x, s) => accumulate(grads, *x, g.map(|v| v * s)),
            Op::Unary(x, act) => {
                let gx = zip(&g, self.value(*x), |gv, xv| gv * act.derivative(xv));
                accumulate(grads, *x, gx);
            }
            Op::RowNorm { x, group, rstd } => {
                let y = &node.value;
                let mut gx = g.clone();
                for ((gc, yc), rs) in gx
                    .data_mut()
                    .chunks_mut(*group)
                    .zip(y.data().chunks(*group))
                    .zip(rstd)
                {
                    let n = *group as f64;
                    let mg = gc.iter().sum::<f64>() / n;
                    let mgy = gc.iter().zip(yc).map(|(a, b)| a * b).sum::<f64>() / n;
                    for (gv, yv) in gc.iter_mut().zip(yc) {
                        *gv = rs * (*gv - mg - yv * mgy);
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::SliceCols { x, start } => {
                let tx = self.value(*x);
                let (c, w) = (tx.cols(), g.cols());
                let mut gx = Tensor::zeros(tx.shape());
                for r in 0..g.rows() {
                    gx.data_mut()[r * c + start..r * c + start + w].copy_from_slice(g.row(r));
                }
                accumulate(grads, *x, gx);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let tp = self.value(p);
                    let w = tp.cols();
                    let mut gp = Vec::with_capacity(tp.len());
                    for r in 0..g.rows() {
                        gp.extend_from_slice(&g.row(r)[off..off + w]);
                    }
                    accumulate(grads, p, Tensor::new(tp.shape().to_vec(), gp)?);
                    off += w;
                }
            }
            Op::Rotate { x, seq_len, thetas } => {
                let mut gx = g;
                let c = gx.cols();
                rotate_rows(gx.data_mut(), c, *seq_len, thetas, -1.0);
                accumulate(grads, *x, gx);
            }
            Op::Retention {
                q,
                k,
                v,
                seq_len,
                gamma,
            } => {
                let (tq, tk, tv) = (self.value(*q), self.value(*k), self.value(*v));
                let (dk, dv) = (tq.cols(), tv.cols());
                let l = *seq_len;
                let mut gq = vec![0.0; tq.len()];
                let mut gk = vec![0.0; tk.len()];
                let mut gvv = vec![0.0; tv.len()];
                let pow: Vec<f64> = (0..l).map(|e| gamma.powi(e as i32)).collect();
                for b in 0..tq.rows() / l {
                    for j in 0..l {
                        let rj = b * l + j;
                        let gj = &g.data()[rj * dv..(rj + 1) * dv];
                        let qj = &tq.data()[rj * dk..(rj + 1) * dk];
                        for kk in 0..=j {
                            let rk = b * l + kk;
                            let d = pow[j - kk];
                            let vk = &tv.data()[rk * dv..(rk + 1) * dv];
                            let kv = &tk.data()[rk * dk..(rk + 1) * dk];
                            let gv_dot = d * dot(gj, vk);
                            let qk = d * dot(qj, kv);
                            for c in 0..dk {
                                gq[rj * dk + c] += gv_dot * kv[c];
                                gk[rk * dk + c] += gv_dot * qj[c];
                            }
                            for c in 0..dv {
                                gvv[rk * dv + c] += qk * gj[c];
                            }
                        }
                    }
                }
                accumulate(grads, *q, Tensor::new(tq.shape().to_vec(), gq)?);
                accumulate(grads, *k, Tensor::new(tk.shape().to_vec(), gk)?);
                accumulate(grads, *v, Tensor::new(tv.shape().to_vec(), gvv)?);
            }
            Op::Attention {
                q,
                k,
                v,
                seq_len,
                scale,
                probs,
            } => {
                let (tq, tk, tv) = (self.value(*q), self.value(*k), self.value(*v));
                let (dk, dv) = (tq.cols(), tv.cols());
                let l = *seq_len;
                let mut gq = vec![0.0; tq.len()];
                let mut gk = vec![0.0; tk.len()];
                let mut gvv = vec![0.0; tv.len()];
                let mut da = vec![0.0; l];
                for b in 0..tq.rows() / l {
                    for j in 0..l {
                        let rj = b * l + j;
                        let gj = &g.data()[rj * dv..(rj + 1) * dv];
                        let p = &probs[(b * l + j) * l..(b * l + j + 1) * l];
                        let mut s = 0.0;
                        for kk in 0..=j {
                            let rk = b * l + kk;
                            da[kk] = dot(gj, &tv.data()[rk * dv..(rk + 1) * dv]);
                            s += p[kk] * da[kk];
                            for c in 0..dv {
                                gvv[rk * dv + c] += p[kk] * gj[c];
                            }
                        }
                        for kk in 0..=j {
                            let rk = b * l + kk;
                            let ds = scale * p[kk] * (da[kk] - s);
                            for c in 0..dk {
                                gq[rj * dk + c] += ds * tk.data()[rk * dk + c];
                                gk[rk * dk + c] += ds * tq.data()[rj * dk + c];
                            }
                        }
                    }
                }
                accumulate(grads, *q, Tensor::new(tq.shape().to_vec(), gq)?);
                accumulate(grads, *k, Tensor::new(tk.shape().to_vec(), gk)?);
                accumulate(grads, *v, Tensor::new(tv.shape().to_vec(), gvv)?);
            }
            Op::Gather { table, idx } => {
                let tt = self.value(*table);
                let c = tt.cols();
                let mut gt = Tensor::zeros(tt.shape());
                for (r, &i) in idx.iter().enumerate() {
                    for (a, b) in gt.data_mut()[i * c..(i + 1) * c].iter_mut().zip(g.row(r)) {
                        *a += b;
                    }
                }
                accumulate(grads, *table, gt);
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                accumulate(grads, *x, g.reshape(shape)?);
            }
            Op::TokenLogProb {
                logits,
                targets,
                probs,
            } => {
                let tl = self.value(*logits);
                let mut gl = vec![0.0; tl.len()];
                for (r, &t) in targets.iter().enumerate() {
                    let gr = g.data()[r];
                    for c in 0..4 {
                        let ind = if c == t as usize { 1.0 } else { 0.0 };
                        gl[4 * r + c] = gr * (ind - probs[4 * r + c]);
                    }
                }
                accumulate(grads, *logits, Tensor::new(tl.shape().to_vec(), gl)?);
            }
            Op::SegmentSum { x, seg, scale } => {
                let tx = self.value(*x);
                let data: Vec<f64> = (0..tx.len()).map(|i| scale * g.data()[i / seg]).collect();
                accumulate(grads, *x, Tensor::new(tx.shape().to_vec(), data)?);
            }
        }
        Ok(())
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(b.shape().to_vec(), data).unwrap()
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
