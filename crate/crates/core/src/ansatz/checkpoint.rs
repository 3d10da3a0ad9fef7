use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::Ansatz;
use super::AnsatzConfig;
use crate::basis::Sector;
use crate::error::{NqsError, Result};
use crate::nn::Tensor;

const FORMAT: &str = "nqs-ansatz-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Self-describing JSON snapshot of an ansatz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: AnsatzConfig,
    pub n_qubits: usize,
    pub sector: Option<Sector>,
    pub step: u64,
    pub params: Vec<NamedArray>,
}

impl Ansatz {
    pub fn to_checkpoint(&self, step: u64) -> Checkpoint {
        Checkpoint {
            format: FORMAT.into(),
            config: self.config().clone(),
            n_qubits: self.n_qubits(),
            sector: self.sector(),
            step,
            params: self
                .params()
                .iter()
                .map(|(name, t)| NamedArray {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuild from a snapshot. Every parameter must be present exactly once
    /// with the shape the configuration implies.
    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.format != FORMAT {
            return Err(NqsError::Config(format!("unsupported checkpoint format `{}`", c.format)));
        }
        let mut a = Ansatz::new(c.config.clone(), c.n_qubits, c.sector, 0)?;
        let mut seen = HashSet::new();
        for p in &c.params {
            if !seen.insert(p.name.as_str()) {
                return Err(NqsError::Config(format!("parameter {} appears twice", p.name)));
            }
            let t = Tensor::new(p.shape.clone(), p.data.clone())?;
            a.params_mut().set(&p.name, t)?;
        }
        if let Some(missing) = a.params().names().iter().find(|n| !seen.contains(n.as_str())) {
            return Err(NqsError::Config(format!("checkpoint lacks parameter {missing}")));
        }
        Ok(a)
    }

    pub fn save(&self, path: impl AsRef<Path>, step: u64) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint(step))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, u64)> {
        let c: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok((Ansatz::from_checkpoint(&c)?, c.step))
    }
}
