use std::path::PathBuf;
use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::{
    baseline_update, best_energy_update, energy_estimate, local_energies, regularized_loss, vna_gradient,
    EnergyEstimate,
};
use crate::ansatz::Ansatz;
use crate::error::{NqsError, Result};
use crate::hamiltonian::QubitHamiltonian;
use crate::nn::ScheduleConfig;
use crate::sampler::{prune_and_cap, sample, sample_count_at, splitmix, SampleOptions, SampleScheduleConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub schedule: ScheduleConfig,
    pub sampling: SampleScheduleConfig,
    pub flip_batch_count: usize,
    pub baseline_interval: u64,
    pub seed: u64,
    /// Entropy regularisation on or off.
    pub vna: bool,
    pub checkpoint_dir: Option<PathBuf>,
    /// Save every this many steps; 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            schedule: ScheduleConfig::default(),
            sampling: SampleScheduleConfig::default(),
            flip_batch_count: 8,
            baseline_interval: 10,
            seed: 0,
            vna: true,
            checkpoint_dir: None,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.sampling.validate()?;
        if self.flip_batch_count == 0 {
            return Err(NqsError::Config("flip_batch_count must be positive".into()));
        }
        if self.baseline_interval == 0 {
            return Err(NqsError::Config("baseline_interval must be positive".into()));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> u64 {
        self.schedule.total_steps as u64
    }

    pub fn beta_at(&self, t: u64) -> f64 {
        if self.vna {
            self.schedule.beta_at(t as usize)
        } else {
            0.0
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub energy: f64,
    pub variance: f64,
    pub n_unique: usize,
    pub total_draws: u64,
    pub beta: f64,
    pub lr: f64,
    pub best_energy: f64,
    pub wall_ms: f64,
}

/// Loop state besides the parameters and Adam moments, which live in the ansatz.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub step: u64,
    pub baseline: Option<f64>,
    pub best: Option<EnergyEstimate>,
}

impl TrainState {
    pub fn best_energy(&self) -> Option<f64> {
        self.best.map(|b| b.mean)
    }
}

fn checkpoint(ansatz: &Ansatz, cfg: &TrainConfig, name: &str, step: u64) -> Result<Option<PathBuf>> {
    let Some(dir) = &cfg.checkpoint_dir else {
        return Ok(None);
    };
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    ansatz.save(&path, step)?;
    Ok(Some(path))
}

fn finite_or_abort(ansatz: &Ansatz, cfg: &TrainConfig, step: u64, what: &str, ok: bool) -> Result<()> {
    if ok {
        return Ok(());
    }
    let saved = checkpoint(ansatz, cfg, "last_good.json", step)?;
    let at = saved.map(|p| format!("; last good parameters in {}", p.display())).unwrap_or_default();
    Err(NqsError::NonFinite(format!("{what} at step {step}{at}")))
}

/// Run the optimisation loop, calling `observer` after every step.
pub fn train(
    h: &QubitHamiltonian,
    ansatz: &mut Ansatz,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&StepRecord),
) -> Result<TrainState> {
    cfg.validate()?;
    if ansatz.n_qubits() != h.n_qubits() {
        return Err(NqsError::Config(format!(
            "ansatz has {} qubits, Hamiltonian {}",
            ansatz.n_qubits(),
            h.n_qubits()
        )));
    }
    let total = cfg.total_steps();
    let opts = SampleOptions { prune_singletons: cfg.sampling.prune_singletons };
    let mut state = TrainState::default();
    let start = Instant::now();

    for t in 0..total {
        let n = sample_count_at(&cfg.sampling, t, total);
        let drawn = sample(ansatz, n, splitmix(cfg.seed ^ splitmix(t)), opts)?;
        let s = prune_and_cap(&drawn, &cfg.sampling);
        let locals = local_energies(h, &s.configs, ansatz, cfg.flip_batch_count)?;
        let est = energy_estimate(&s.counts, &locals.values, t)?;

        let beta = cfg.beta_at(t);
        let lr = cfg.schedule.lr_at(t as usize);
        let weights = s.weights();
        let loss = regularized_loss(&weights, &locals.values, &locals.log_amps, beta);
        finite_or_abort(ansatz, cfg, t, "non-finite loss", loss.is_finite() && est.mean.is_finite())?;
        let b = baseline_update(state.baseline, loss, t, total, cfg.baseline_interval);
        state.baseline = Some(b);

        let grads = match vna_gradient(ansatz, &s.configs, &weights, &locals.values, beta, b) {
            Err(NqsError::NonFinite(msg)) => return finite_or_abort(ansatz, cfg, t, &msg, false).map(|_| state),
            r => r?,
        };
        finite_or_abort(ansatz, cfg, t, "non-finite gradient", grads.is_finite())?;
        ansatz.params_mut().adam_step(&grads, lr)?;

        let (best, improved) = best_energy_update(state.best, est);
        state.best = Some(best);
        state.step = t + 1;
        if improved {
            debug!("step {t}: best energy {:.8} +- {:.2e}", best.mean, best.standard_error());
        }

        let record = StepRecord {
            step: t,
            energy: est.mean,
            variance: est.variance,
            n_unique: s.len(),
            total_draws: s.total_draws,
            beta,
            lr,
            best_energy: best.mean,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        observer(&record);

        if cfg.checkpoint_every > 0 && (t + 1) % cfg.checkpoint_every == 0 {
            checkpoint(ansatz, cfg, "checkpoint.json", t + 1)?;
        }
    }
    if let Some(best) = state.best {
        info!("finished {total} steps, best energy {:.8}", best.mean);
    }
    Ok(state)
}
