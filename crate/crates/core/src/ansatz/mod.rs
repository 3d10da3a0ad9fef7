//! Autoregressive wavefunctions over orbital tokens.
//!
//! The modulus is a product of masked four-way conditionals produced by a
//! RetNet, transformer or MADE trunk. A separate feedforward network supplies
//! the phase.

mod checkpoint;
mod encoding;
mod network;
mod recurrent;
mod retention;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NqsError, Result};

pub use checkpoint::{Checkpoint, NamedArray};
pub use encoding::{
    decode, encode, feasible_tokens, n_orbitals, sequence_masks, token_down, token_up, START_TOKEN, VOCAB,
};
pub use network::{masked_probs, Ansatz, Mode, Trace};
pub use recurrent::{RecurrentNet, RetentionState};
pub use retention::{
    head_decays, multiscale_retention, parallel_retention, recurrent_retention_step, rotary_thetas, HeadState,
    MultiScaleRetention, RetentionHead,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnsatzKind {
    #[default]
    Retnet,
    Transformer,
    Made,
}

impl AnsatzKind {
    pub const ALL: [AnsatzKind; 3] = [AnsatzKind::Retnet, AnsatzKind::Transformer, AnsatzKind::Made];

    pub fn name(self) -> &'static str {
        match self {
            AnsatzKind::Retnet => "retnet",
            AnsatzKind::Transformer => "transformer",
            AnsatzKind::Made => "made",
        }
    }
}

impl fmt::Display for AnsatzKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnsatzKind {
    type Err = NqsError;

    fn from_str(s: &str) -> Result<Self> {
        AnsatzKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| NqsError::Usage(format!("unknown ansatz `{s}` (retnet, transformer, made)")))
    }
}

/// Architecture descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnsatzConfig {
    pub kind: AnsatzKind,
    pub n_block: usize,
    pub d_model: usize,
    pub d_retn: usize,
    pub d_ff: usize,
    pub n_heads: usize,
    pub phase_hidden: Vec<usize>,
    pub made_hidden: Vec<usize>,
}

impl Default for AnsatzConfig {
    fn default() -> Self {
        AnsatzConfig {
            kind: AnsatzKind::Retnet,
            n_block: 1,
            d_model: 16,
            d_retn: 16,
            d_ff: 64,
            n_heads: 2,
            phase_hidden: vec![64, 64],
            made_hidden: vec![64, 64],
        }
    }
}

impl AnsatzConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NqsError::Config(m));
        if self.phase_hidden.contains(&0) {
            return bad("phase hidden widths must be positive".into());
        }
        match self.kind {
            AnsatzKind::Made => {
                if self.made_hidden.is_empty() || self.made_hidden.contains(&0) {
                    return bad("MADE needs at least one positive hidden width".into());
                }
            }
            AnsatzKind::Retnet | AnsatzKind::Transformer => {
                if self.n_block == 0 || self.d_model == 0 || self.d_retn == 0 || self.d_ff == 0 || self.n_heads == 0 {
                    return bad(format!("trunk dimensions must be positive: {self:?}"));
                }
                if !self.d_retn.is_multiple_of(self.n_heads) {
                    return bad(format!("n_heads {} does not divide d_retn {}", self.n_heads, self.d_retn));
                }
                if self.kind == AnsatzKind::Retnet && !(self.d_retn / self.n_heads).is_multiple_of(2) {
                    return bad(format!("retention head width {} must be even", self.d_retn / self.n_heads));
                }
            }
        }
        Ok(())
    }
}

/// `log <x|psi>` as (log-modulus, phase). A zero amplitude carries a
/// log-modulus of negative infinity and is never used in arithmetic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogAmplitude {
    pub log_modulus: f64,
    pub phase: f64,
}

impl LogAmplitude {
    pub const ZERO: LogAmplitude = LogAmplitude {
        log_modulus: f64::NEG_INFINITY,
        phase: 0.0,
    };

    pub fn new(log_modulus: f64, phase: f64) -> Self {
        LogAmplitude {
            log_modulus,
            phase: wrap_phase(phase),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.log_modulus == f64::NEG_INFINITY
    }

    pub fn probability(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            (2.0 * self.log_modulus).exp()
        }
    }

    pub fn amplitude(&self) -> Complex64 {
        if self.is_zero() {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::from_polar(self.log_modulus.exp(), self.phase)
        }
    }

    /// `psi(self) / psi(denominator)`, or `None` when the denominator is zero.
    pub fn ratio(&self, denominator: &LogAmplitude) -> Option<Complex64> {
        if denominator.is_zero() {
            return None;
        }
        if self.is_zero() {
            return Some(Complex64::new(0.0, 0.0));
        }
        Some(Complex64::new(self.log_modulus - denominator.log_modulus, self.phase - denominator.phase).exp())
    }
}

/// Wrap an angle into `[-pi, pi)`.
pub fn wrap_phase(p: f64) -> f64 {
    if (-PI..PI).contains(&p) {
        p
    } else {
        (p + PI).rem_euclid(2.0 * PI) - PI
    }
}

#[cfg(test)]
mod tests;
