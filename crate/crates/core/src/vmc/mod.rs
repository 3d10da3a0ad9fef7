//! Variational Monte Carlo: local energies, estimators, the annealed
//! gradient and the training loop.

mod train;

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ansatz::{Ansatz, LogAmplitude, Mode};
use crate::basis::SpinConfig;
use crate::error::{NqsError, Result};
use crate::hamiltonian::QubitHamiltonian;
use crate::nn::Gradients;
use crate::par;

pub use train::{train, StepRecord, TrainConfig, TrainState};

/// One-sided 95% normal quantile.
pub const Z95: f64 = 1.645;

/// Local energies and the log-amplitudes of the configurations they belong to.
#[derive(Clone, Debug)]
pub struct LocalEnergies {
    pub values: Vec<Complex64>,
    pub log_amps: Vec<LogAmplitude>,
}

/// `l(x) = sum_y <x|H|y> psi(y) / psi(x)` for every `x`, evaluating the
/// amplitudes of all distinct connected configurations in `flip_batches`
/// batches.
pub fn local_energies_with<F>(
    h: &QubitHamiltonian,
    xs: &[SpinConfig],
    amp: F,
    flip_batches: usize,
) -> Result<LocalEnergies>
where
    F: Fn(&[SpinConfig]) -> Result<Vec<LogAmplitude>> + Sync,
{
    let rows: Vec<Vec<(SpinConfig, Complex64)>> = par::map(xs, |&x| h.connected_configs(x));
    let mut unique: Vec<SpinConfig> = xs.to_vec();
    unique.extend(rows.iter().flatten().map(|r| r.0));
    unique.sort_unstable();
    unique.dedup();

    let per = unique.len().div_ceil(flip_batches.max(1)).max(1);
    let mut amps = Vec::with_capacity(unique.len());
    for batch in unique.chunks(per) {
        let a = amp(batch)?;
        if a.len() != batch.len() {
            return Err(NqsError::Dimension(format!("{} amplitudes for {} configurations", a.len(), batch.len())));
        }
        amps.extend(a);
    }
    let index: HashMap<SpinConfig, usize> = unique.iter().enumerate().map(|(i, &x)| (x, i)).collect();

    let mut values = Vec::with_capacity(xs.len());
    let mut log_amps = Vec::with_capacity(xs.len());
    for (&x, row) in xs.iter().zip(&rows) {
        let ax = amps[index[&x]];
        if ax.is_zero() {
            return Err(NqsError::Domain(format!("configuration {} has zero amplitude", x.0)));
        }
        let l: Complex64 = row
            .iter()
            .map(|(y, hv)| hv * amps[index[y]].ratio(&ax).expect("nonzero denominator"))
            .sum();
        values.push(l);
        log_amps.push(ax);
    }
    Ok(LocalEnergies { values, log_amps })
}

/// Local energy of a single configuration.
pub fn local_energy<F>(h: &QubitHamiltonian, x: SpinConfig, amp: F, flip_batches: usize) -> Result<Complex64>
where
    F: Fn(&[SpinConfig]) -> Result<Vec<LogAmplitude>> + Sync,
{
    Ok(local_energies_with(h, &[x], amp, flip_batches)?.values[0])
}

/// Local energies under an ansatz, recurrent for RetNet and parallel otherwise.
pub fn local_energies(h: &QubitHamiltonian, xs: &[SpinConfig], ansatz: &Ansatz, flip_batches: usize) -> Result<LocalEnergies> {
    let mode = inference_mode(ansatz);
    local_energies_with(h, xs, |b| ansatz.log_amplitudes(b, mode), flip_batches)
}

pub fn inference_mode(ansatz: &Ansatz) -> Mode {
    match ansatz.config().kind {
        crate::ansatz::AnsatzKind::Retnet => Mode::Recurrent,
        _ => Mode::Parallel,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub mean: f64,
    pub variance: f64,
    pub n_eff: u64,
    pub step: u64,
}

impl EnergyEstimate {
    pub fn standard_error(&self) -> f64 {
        (self.variance / self.n_eff as f64).sqrt()
    }
}

/// Count-weighted mean and population variance of `Re l`.
pub fn energy_estimate(counts: &[u64], locals: &[Complex64], step: u64) -> Result<EnergyEstimate> {
    if counts.is_empty() {
        return Err(NqsError::Empty("energy estimate of an empty sample".into()));
    }
    if counts.len() != locals.len() {
        return Err(NqsError::Dimension(format!("{} counts, {} local energies", counts.len(), locals.len())));
    }
    let n: u64 = counts.iter().sum();
    let w = |c: u64| c as f64 / n as f64;
    let mean: f64 = counts.iter().zip(locals).map(|(&c, l)| w(c) * l.re).sum();
    let variance = counts.iter().zip(locals).map(|(&c, l)| w(c) * (l.re - mean).powi(2)).sum();
    Ok(EnergyEstimate { mean, variance, n_eff: n, step })
}

/// Regularised loss `E[Re l] + beta E[2 log|psi|]` under normalised weights.
pub fn regularized_loss(weights: &[f64], locals: &[Complex64], log_amps: &[LogAmplitude], beta: f64) -> f64 {
    weights
        .iter()
        .zip(locals)
        .zip(log_amps)
        .map(|((w, l), a)| w * (l.re + beta * 2.0 * a.log_modulus))
        .sum()
}

/// Per-configuration weights of the log-modulus and phase paths.
pub fn vna_weights(
    weights: &[f64],
    locals: &[Complex64],
    log_amps: &[LogAmplitude],
    beta: f64,
    baseline: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut wm = Vec::with_capacity(weights.len());
    let mut wp = Vec::with_capacity(weights.len());
    for ((&w, l), a) in weights.iter().zip(locals).zip(log_amps) {
        let c = l.re + beta * (1.0 + 2.0 * a.log_modulus) - baseline;
        let (m, p) = (2.0 * w * c, 2.0 * w * l.im);
        if !m.is_finite() || !p.is_finite() {
            return Err(NqsError::NonFinite(format!(
                "gradient weight for local energy {l} and log-modulus {}",
                a.log_modulus
            )));
        }
        wm.push(m);
        wp.push(p);
    }
    Ok((wm, wp))
}

/// Configurations per differentiable pass in [`vna_gradient`].
const GRAD_CHUNK: usize = 256;

/// `2 Re E[(l + beta (1 + 2 log|psi|) - b) grad log psi*]` with the given
/// normalised weights, from parallel passes over the configurations only.
pub fn vna_gradient(
    ansatz: &Ansatz,
    configs: &[SpinConfig],
    weights: &[f64],
    locals: &[Complex64],
    beta: f64,
    baseline: f64,
) -> Result<Gradients> {
    if configs.len() != weights.len() || configs.len() != locals.len() {
        return Err(NqsError::Dimension("configs, weights and local energies differ in length".into()));
    }
    if beta < 0.0 {
        return Err(NqsError::Domain(format!("negative annealing coefficient {beta}")));
    }
    let idx: Vec<usize> = (0..configs.len()).collect();
    let parts = par::map_chunks(&idx, GRAD_CHUNK, |c| -> Result<Gradients> {
        let xs: Vec<SpinConfig> = c.iter().map(|&i| configs[i]).collect();
        let trace = ansatz.forward(&xs, Mode::Parallel)?;
        let w: Vec<f64> = c.iter().map(|&i| weights[i]).collect();
        let l: Vec<Complex64> = c.iter().map(|&i| locals[i]).collect();
        let (wm, wp) = vna_weights(&w, &l, &trace.values, beta, baseline)?;
        trace.grad(ansatz, &wm, &wp)
    });
    let mut total = Gradients::zeros_like(ansatz.params());
    for p in parts {
        total.add_assign(&p?);
    }
    Ok(total)
}

/// Whether the baseline is refreshed at step `t` of `total`.
pub fn baseline_due(t: u64, total: u64, interval: u64) -> bool {
    let interval = interval.max(1);
    t.is_multiple_of(interval) || t as f64 >= 0.9 * total as f64
}

/// New baseline: the current loss when due, otherwise the previous value.
pub fn baseline_update(previous: Option<f64>, loss: f64, t: u64, total: u64, interval: u64) -> f64 {
    match previous {
        Some(b) if !baseline_due(t, total, interval) => b,
        _ => loss,
    }
}

/// Accept `est` when the current best exceeds its one-sided 95% upper bound.
pub fn best_energy_update(best: Option<EnergyEstimate>, est: EnergyEstimate) -> (EnergyEstimate, bool) {
    match best {
        Some(b) if b.mean <= est.mean + Z95 * est.standard_error() => (b, false),
        _ => (est, true),
    }
}
