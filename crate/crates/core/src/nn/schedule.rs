use serde::{Deserialize, Serialize};

use crate::error::{NqsError, Result};

/// Learning-rate and annealing-temperature schedules over `total_steps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup_frac: f64,
    pub total_steps: usize,
    /// Exponent `r` of the polynomial temperature decay.
    pub anneal_exponent: f64,
    pub anneal_start_frac: f64,
    /// Temperature held before annealing starts.
    pub beta0: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            base_lr: 2.5e-3,
            min_lr: 5e-8,
            warmup_frac: 0.04,
            total_steps: 25_000,
            anneal_exponent: 4.0,
            anneal_start_frac: 0.04,
            beta0: 1.0,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(NqsError::Config("total_steps must be positive".into()));
        }
        if !(self.min_lr <= self.base_lr) || self.min_lr < 0.0 {
            return Err(NqsError::Config(format!(
                "need 0 <= min_lr <= base_lr, got {} and {}",
                self.min_lr, self.base_lr
            )));
        }
        for (name, v) in [
            ("warmup_frac", self.warmup_frac),
            ("anneal_start_frac", self.anneal_start_frac),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(NqsError::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.beta0 < 0.0 {
            return Err(NqsError::Config("beta0 must be non-negative".into()));
        }
        if self.anneal_exponent <= 1.0 {
            log::warn!(
                "anneal exponent {} <= 1: temperature decay is no longer super-linear at the start",
                self.anneal_exponent
            );
        }
        Ok(())
    }

    fn warmup_steps(&self) -> f64 {
        self.warmup_frac * self.total_steps as f64
    }

    /// Linear warmup to `base_lr`, then cosine decay to `min_lr` at the last step.
    pub fn lr_at(&self, t: usize) -> f64 {
        let t = t.min(self.total_steps) as f64;
        let total = self.total_steps as f64;
        let w = self.warmup_steps();
        if t < w {
            return self.base_lr * t / w;
        }
        let span = total - w;
        let progress = if span > 0.0 { (t - w) / span } else { 1.0 };
        self.min_lr
            + 0.5 * (self.base_lr - self.min_lr) * (1.0 + (std::f64::consts::PI * progress).cos())
    }

    /// `beta0` until annealing starts, then `beta0 * (1 - t'/T')^r`, reaching
    /// zero at the last step.
    pub fn beta_at(&self, t: usize) -> f64 {
        let t = t.min(self.total_steps) as f64;
        let total = self.total_steps as f64;
        let start = self.anneal_start_frac * total;
        if t < start {
            return self.beta0;
        }
        let span = total - start;
        if span <= 0.0 {
            return 0.0;
        }
        let remaining = (1.0 - (t - start) / span).max(0.0);
        self.beta0 * remaining.powf(self.anneal_exponent)
    }
}
