//! Leading-order parameter and FLOP counts for the retention and attention
//! trunks, ignoring nonlinearities, biases and normalisation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{NqsError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub n_block: u64,
    pub d_model: u64,
    pub d_retn: u64,
    pub d_ff: u64,
    pub n_seq: u64,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if [self.n_block, self.d_model, self.d_retn, self.d_ff, self.n_seq].contains(&0) {
            return Err(NqsError::Config(format!("all model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    RetnetParallel,
    RetnetRecurrent,
    Transformer,
}

impl Form {
    pub const ALL: [Form; 3] = [Form::RetnetParallel, Form::RetnetRecurrent, Form::Transformer];

    pub fn name(self) -> &'static str {
        match self {
            Form::RetnetParallel => "retnet_parallel",
            Form::RetnetRecurrent => "retnet_recurrent",
            Form::Transformer => "transformer",
        }
    }
}

impl FromStr for Form {
    type Err = NqsError;

    fn from_str(s: &str) -> Result<Self> {
        Form::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| NqsError::Usage(format!("unknown form `{s}`")))
    }
}

/// Trunk parameters, `2 n_block d_model (2.5 d_retn + d_ff)`.
pub fn param_count(d: &ModelDims) -> u64 {
    d.n_block * d.d_model * (5 * d.d_retn + 2 * d.d_ff)
}

pub fn flops_per_token(d: &ModelDims, form: Form) -> u64 {
    let n2 = 2 * param_count(d);
    match form {
        Form::RetnetParallel => n2 + 4 * d.n_block * d.n_seq * d.d_retn,
        Form::RetnetRecurrent => n2 + 5 * d.n_block * d.d_retn * d.d_retn,
        Form::Transformer => n2 + 4 * d.n_block * d.n_seq * d.d_retn - 2 * d.n_block * d.d_model * d.d_retn,
    }
}

/// Sequence length above which recurrent retention is cheaper per token than
/// attention. Infinite when `d_retn` is zero.
pub fn crossover_seq_len(d: &ModelDims) -> f64 {
    if d.d_retn == 0 {
        return f64::INFINITY;
    }
    let (m, r) = (d.d_model as f64, d.d_retn as f64);
    (5.0 * r * r + 2.0 * m * r) / (4.0 * r)
}

/// Plain-text cost table.
#[derive(Clone, Debug)]
pub struct FlopReport(pub ModelDims);

impl fmt::Display for FlopReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = &self.0;
        writeln!(
            f,
            "n_block={} d_model={} d_retn={} d_ff={} n_seq={}",
            d.n_block, d.d_model, d.d_retn, d.d_ff, d.n_seq
        )?;
        writeln!(f, "{:<18}{:>14}", "params", param_count(d))?;
        for form in Form::ALL {
            writeln!(f, "{:<18}{:>14}", form.name(), flops_per_token(d, form))?;
        }
        write!(f, "{:<18}{:>14.4}", "crossover_n_seq", crossover_seq_len(d))
    }
}
