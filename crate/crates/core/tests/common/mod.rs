#![allow(dead_code)]

use std::path::PathBuf;

use nqs_core::hamiltonian::{parse_fcidump, second_quantize_jw, MolecularIntegrals, QubitHamiltonian};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn integrals(name: &str) -> MolecularIntegrals {
    parse_fcidump(fixture(&format!("{name}.fcidump"))).unwrap()
}

pub fn hamiltonian(name: &str) -> QubitHamiltonian {
    second_quantize_jw(&integrals(name)).unwrap()
}

/// Exact (FCI or CASCI) energy recorded when the fixture was generated.
pub fn reference_energy(name: &str) -> f64 {
    let text = std::fs::read_to_string(fixture("reference_energies.txt")).unwrap();
    for line in text.lines() {
        let Some((key, rest)) = line.split_once(':') else { continue };
        if key.trim() != name {
            continue;
        }
        let last = rest.split_whitespace().last().unwrap();
        return last.split('=').nth(1).unwrap().parse().unwrap();
    }
    panic!("no reference energy for {name}")
}

use nqs_core::ansatz::{Ansatz, AnsatzConfig, AnsatzKind};
use nqs_core::basis::Sector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small configuration of each architecture for fast tests.
pub fn small_config(kind: AnsatzKind) -> AnsatzConfig {
    AnsatzConfig {
        kind,
        n_block: 1,
        d_model: 8,
        d_retn: 8,
        d_ff: 16,
        n_heads: 2,
        phase_hidden: vec![8, 8],
        made_hidden: vec![16, 16],
    }
}

/// Ansatz with every parameter drawn uniformly from `[-scale, scale]`.
pub fn random_ansatz(cfg: AnsatzConfig, n_qubits: usize, sector: Option<Sector>, seed: u64, scale: f64) -> Ansatz {
    let mut a = Ansatz::new(cfg, n_qubits, sector, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let flat: Vec<f64> = (0..a.n_params()).map(|_| rng.random_range(-scale..scale)).collect();
    a.params_mut().set_flat(&flat).unwrap();
    a
}

use nqs_core::sampler::SampleSet;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pearson chi-square p-value of a sample set against exact probabilities
/// over `basis`. Bins expecting fewer than five draws are pooled.
pub fn chi_square_p(s: &SampleSet, basis: &[nqs_core::SpinConfig], probs: &[f64]) -> f64 {
    let n = s.total_draws as f64;
    let observed = |x: &nqs_core::SpinConfig| {
        s.configs.binary_search(x).map(|i| s.counts[i] as f64).unwrap_or(0.0)
    };
    let (mut stat, mut bins) = (0.0, 0usize);
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (x, &p) in basis.iter().zip(probs) {
        let e = n * p;
        if e < 5.0 {
            pool_o += observed(x);
            pool_e += e;
            continue;
        }
        stat += (observed(x) - e).powi(2) / e;
        bins += 1;
    }
    if pool_e > 0.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e.max(1e-300);
        bins += 1;
    }
    let dof = (bins.max(2) - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}
