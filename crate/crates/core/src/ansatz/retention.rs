//! Retention in its parallel and recurrent forms, outside the tape.
//!
//! These functions power recurrent inference and serve as a reference for the
//! differentiable network. Queries and keys are rotated pairwise by
//! `position * theta`; keys carry the `1/sqrt(d_head)` scale.

use crate::error::{NqsError, Result};
use crate::nn::{dot, swish, Tensor, NORM_EPS};

/// Rotation frequencies `10000^(-2k/d_head)` for `k < d_head / 2`.
pub fn rotary_thetas(d_head: usize) -> Vec<f64> {
    (0..d_head / 2)
        .map(|k| 10000f64.powf(-2.0 * k as f64 / d_head as f64))
        .collect()
}

/// Fixed per-head decays `1 - 2^(-5-i)`.
pub fn head_decays(n_heads: usize) -> Vec<f64> {
    (0..n_heads).map(|i| 1.0 - 2f64.powi(-5 - i as i32)).collect()
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(NqsError::Config(format!("decay must lie in [0, 1], got {gamma}")));
    }
    Ok(())
}

/// Projection weights of one head, each `[d_model x d_head]`.
#[derive(Clone, Debug)]
pub struct RetentionHead {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
}

impl RetentionHead {
    pub fn d_head(&self) -> usize {
        self.wq.cols()
    }

    fn validate(&self, d_in: usize) -> Result<()> {
        let dh = self.d_head();
        for w in [&self.wq, &self.wk, &self.wv] {
            if w.shape() != [d_in, dh] {
                return Err(NqsError::Dimension(format!(
                    "head weight {:?}, expected [{d_in}, {dh}]",
                    w.shape()
                )));
            }
        }
        if !dh.is_multiple_of(2) {
            return Err(NqsError::Config(format!("head width {dh} must be even")));
        }
        Ok(())
    }

    /// Rotated query, scaled rotated key and value for one row at `position`.
    fn project(&self, x: &[f64], position: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let dh = self.d_head();
        let row = Tensor::matrix(1, x.len(), x.to_vec()).unwrap();
        let mut q = row.matmul(&self.wq).unwrap().into_data();
        let mut k = row.matmul(&self.wk).unwrap().into_data();
        let v = row.matmul(&self.wv).unwrap().into_data();
        let th = rotary_thetas(dh);
        rotate_at(&mut q, position, &th);
        rotate_at(&mut k, position, &th);
        let s = 1.0 / (dh as f64).sqrt();
        k.iter_mut().for_each(|v| *v *= s);
        (q, k, v)
    }
}

fn rotate_at(row: &mut [f64], position: usize, thetas: &[f64]) {
    for (i, &th) in thetas.iter().enumerate() {
        let (s, c) = (th * position as f64).sin_cos();
        let (x, y) = (row[2 * i], row[2 * i + 1]);
        row[2 * i] = x * c - y * s;
        row[2 * i + 1] = x * s + y * c;
    }
}

/// `(Q K^T ⊙ D) V` over the rows of `x`, which form one sequence.
pub fn parallel_retention(x: &Tensor, head: &RetentionHead, gamma: f64) -> Result<Tensor> {
    check_gamma(gamma)?;
    head.validate(x.cols())?;
    let n = x.rows();
    let dh = head.d_head();
    let (mut q, mut k, mut v) = (Vec::new(), Vec::new(), Vec::new());
    for t in 0..n {
        let (qt, kt, vt) = head.project(x.row(t), t);
        q.push(qt);
        k.push(kt);
        v.push(vt);
    }
    let mut out = vec![0.0; n * dh];
    for j in 0..n {
        for kk in 0..=j {
            let w = gamma.powi((j - kk) as i32) * dot(&q[j], &k[kk]);
            for (o, vv) in out[j * dh..(j + 1) * dh].iter_mut().zip(&v[kk]) {
                *o += w * vv;
            }
        }
    }
    Tensor::matrix(n, dh, out)
}

/// Recurrent state `S` of one head (`d_head x d_head`, row-major) and the
/// position of the next input.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadState {
    pub s: Vec<f64>,
    pub position: usize,
}

impl HeadState {
    pub fn zeros(d_head: usize) -> Self {
        HeadState {
            s: vec![0.0; d_head * d_head],
            position: 0,
        }
    }
}

/// `S_t = gamma S_{t-1} + k_t^T v_t`, output `q_t S_t`.
pub fn recurrent_retention_step(
    x_t: &[f64],
    state: &HeadState,
    head: &RetentionHead,
    gamma: f64,
) -> Result<(Vec<f64>, HeadState)> {
    check_gamma(gamma)?;
    head.validate(x_t.len())?;
    let dh = head.d_head();
    if state.s.len() != dh * dh {
        return Err(NqsError::Dimension(format!(
            "state of {} entries for head width {dh}",
            state.s.len()
        )));
    }
    let (q, k, v) = head.project(x_t, state.position);
    let mut s = state.s.clone();
    for i in 0..dh {
        for j in 0..dh {
            s[i * dh + j] = gamma * s[i * dh + j] + k[i] * v[j];
        }
    }
    let mut out = vec![0.0; dh];
    for i in 0..dh {
        for j in 0..dh {
            out[j] += q[i] * s[i * dh + j];
        }
    }
    Ok((
        out,
        HeadState {
            s,
            position: state.position + 1,
        },
    ))
}

/// Gated multi-scale retention: heads with fixed decays, per-head group
/// normalisation, a swish gate and an output projection.
#[derive(Clone, Debug)]
pub struct MultiScaleRetention {
    pub heads: Vec<RetentionHead>,
    pub gammas: Vec<f64>,
    /// `[d_model x d_retn]`
    pub wg: Tensor,
    /// `[d_retn x d_model]`
    pub wo: Tensor,
}

impl MultiScaleRetention {
    fn d_retn(&self) -> usize {
        self.heads.iter().map(|h| h.d_head()).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.heads.is_empty() || self.heads.len() != self.gammas.len() {
            return Err(NqsError::Config(format!(
                "{} heads with {} decays",
                self.heads.len(),
                self.gammas.len()
            )));
        }
        let dr = self.d_retn();
        if self.wg.cols() != dr || self.wo.rows() != dr {
            return Err(NqsError::Dimension(format!(
                "gate {:?} / output {:?} for retention width {dr}",
                self.wg.shape(),
                self.wo.shape()
            )));
        }
        Ok(())
    }

    /// Normalise each head's slice, gate and project one row.
    fn combine(&self, x: &[f64], mut y: Vec<f64>) -> Vec<f64> {
        let mut off = 0;
        for h in &self.heads {
            let dh = h.d_head();
            crate::nn::normalize_groups(&mut y[off..off + dh], dh, NORM_EPS);
            off += dh;
        }
        let row = Tensor::matrix(1, x.len(), x.to_vec()).unwrap();
        let g = swish(&row.matmul(&self.wg).unwrap());
        let gated: Vec<f64> = g.data().iter().zip(&y).map(|(a, b)| a * b).collect();
        let gated = Tensor::matrix(1, gated.len(), gated).unwrap();
        gated.matmul(&self.wo).unwrap().into_data()
    }

    pub fn parallel(&self, x: &Tensor) -> Result<Tensor> {
        self.validate()?;
        let outs = self
            .heads
            .iter()
            .zip(&self.gammas)
            .map(|(h, &g)| parallel_retention(x, h, g))
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(x.rows() * self.wo.cols());
        for t in 0..x.rows() {
            let y: Vec<f64> = outs.iter().flat_map(|o| o.row(t).to_vec()).collect();
            data.extend(self.combine(x.row(t), y));
        }
        Tensor::matrix(x.rows(), self.wo.cols(), data)
    }

    pub fn zero_state(&self) -> Vec<HeadState> {
        self.heads.iter().map(|h| HeadState::zeros(h.d_head())).collect()
    }

    pub fn step(&self, x_t: &[f64], states: &[HeadState]) -> Result<(Vec<f64>, Vec<HeadState>)> {
        self.validate()?;
        let mut y = Vec::with_capacity(self.d_retn());
        let mut next = Vec::with_capacity(states.len());
        for ((h, &g), st) in self.heads.iter().zip(&self.gammas).zip(states) {
            let (o, s) = recurrent_retention_step(x_t, st, h, g)?;
            y.extend(o);
            next.push(s);
        }
        Ok((self.combine(x_t, y), next))
    }
}

/// Parallel multi-scale retention over one sequence.
pub fn multiscale_retention(x: &Tensor, msr: &MultiScaleRetention) -> Result<Tensor> {
    msr.parallel(x)
}
