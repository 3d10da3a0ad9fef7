//! Dense-tensor primitives, reverse-mode gradients, Adam and schedules.

mod params;
mod schedule;
mod tape;
mod tensor;

pub use params::{AdamConfig, Gradients, ParamId, ParameterStore};
pub use schedule::ScheduleConfig;
pub use tape::{Graph, Var};
pub use tensor::Tensor;

pub(crate) use tape::NORM_EPS;
pub(crate) use tensor::dot;

use crate::error::{NqsError, Result};

/// Pointwise nonlinearities available on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Gelu,
    Swish,
    Tanh,
    Sigmoid,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Activation {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()),
            Activation::Swish => x * sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let u = GELU_C * (x + 0.044715 * x * x * x);
                let t = u.tanh();
                let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
            }
            Activation::Swish => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }
}

/// Variance floor of the standalone normalisation functions.
const STAT_EPS: f64 = 1e-12;

/// Normalise each contiguous group in place; returns `1/std` per group.
pub(crate) fn normalize_groups(data: &mut [f64], group: usize, eps: f64) -> Vec<f64> {
    data.chunks_mut(group)
        .map(|c| {
            let n = c.len() as f64;
            let mean = c.iter().sum::<f64>() / n;
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let rstd = 1.0 / (var + eps).sqrt();
            c.iter_mut().for_each(|v| *v = (*v - mean) * rstd);
            rstd
        })
        .collect()
}

/// Softmax over the allowed entries of a four-way row, written into `p`.
/// Masked entries are exactly zero. Returns the log-partition function.
pub(crate) fn masked_softmax_into(row: &[f64], mask: &[bool; 4], p: &mut [f64]) -> f64 {
    let max = row
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for c in 0..4 {
        p[c] = if mask[c] { (row[c] - max).exp() } else { 0.0 };
        z += p[c];
    }
    p.iter_mut().for_each(|v| *v /= z);
    max + z.ln()
}

/// Parallel retention kernel shared by the tape and the standalone function.
pub(crate) fn retention_forward(q: &Tensor, k: &Tensor, v: &Tensor, seq_len: usize, gamma: f64) -> Tensor {
    let (dk, dv) = (q.cols(), v.cols());
    let pow: Vec<f64> = (0..seq_len).map(|e| gamma.powi(e as i32)).collect();
    let mut out = vec![0.0; q.rows() * dv];
    for b in 0..q.rows() / seq_len {
        for j in 0..seq_len {
            let rj = b * seq_len + j;
            let qj = &q.data()[rj * dk..(rj + 1) * dk];
            let orow = &mut out[rj * dv..(rj + 1) * dv];
            for kk in 0..=j {
                let rk = b * seq_len + kk;
                let w = pow[j - kk] * dot(qj, &k.data()[rk * dk..(rk + 1) * dk]);
                for (o, &vv) in orow.iter_mut().zip(&v.data()[rk * dv..(rk + 1) * dv]) {
                    *o += w * vv;
                }
            }
        }
    }
    Tensor::matrix(q.rows(), dv, out).unwrap()
}

/// `x W (+ bias)`.
pub fn linear(x: &Tensor, w: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let mut y = x.matmul(w)?;
    if let Some(b) = bias {
        if b.len() != y.cols() {
            return Err(NqsError::Dimension(format!(
                "bias of length {} for {} outputs",
                b.len(),
                y.cols()
            )));
        }
        let c = y.cols();
        for (i, v) in y.data_mut().iter_mut().enumerate() {
            *v += b.data()[i % c];
        }
    }
    Ok(y)
}

/// Softmax along the last axis.
pub fn softmax(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let c = out.cols();
    for row in out.data_mut().chunks_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    out
}

pub fn swish(x: &Tensor) -> Tensor {
    x.map(|v| Activation::Swish.eval(v))
}

/// Normalise each row to zero mean and unit variance (no affine part).
pub fn layer_norm(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let c = out.cols();
    normalize_groups(out.data_mut(), c, STAT_EPS);
    out
}

/// Normalise `groups` equal column groups of each row independently.
pub fn group_norm(x: &Tensor, groups: usize) -> Result<Tensor> {
    if groups == 0 || !x.cols().is_multiple_of(groups) {
        return Err(NqsError::Dimension(format!(
            "{groups} groups do not divide {} channels",
            x.cols()
        )));
    }
    let mut out = x.clone();
    normalize_groups(out.data_mut(), x.cols() / groups, STAT_EPS);
    Ok(out)
}

#[cfg(test)]
mod tests;
