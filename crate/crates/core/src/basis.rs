//! Computational-basis configurations and particle-number sectors.
//!
//! Qubit `q` is bit `q` of the packed word. Spatial orbital `p` owns qubits
//! `2p` (spin up) and `2p + 1` (spin down).

use serde::{Deserialize, Serialize};

use crate::error::{NqsError, Result};

pub const MAX_QUBITS: usize = 64;

const EVEN_BITS: u64 = 0x5555_5555_5555_5555;
const ODD_BITS: u64 = 0xAAAA_AAAA_AAAA_AAAA;

/// A qubit occupancy bitstring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpinConfig(pub u64);

impl SpinConfig {
    #[inline]
    pub fn bit(self, q: usize) -> bool {
        (self.0 >> q) & 1 == 1
    }

    #[inline]
    pub fn n_up(self) -> u32 {
        (self.0 & EVEN_BITS).count_ones()
    }

    #[inline]
    pub fn n_down(self) -> u32 {
        (self.0 & ODD_BITS).count_ones()
    }

    #[inline]
    pub fn flip(self, mask: u64) -> SpinConfig {
        SpinConfig(self.0 ^ mask)
    }

    /// `'0'`/`'1'` characters, qubit 0 first.
    pub fn to_bitstring(self, n_qubits: usize) -> String {
        (0..n_qubits)
            .map(|q| if self.bit(q) { '1' } else { '0' })
            .collect()
    }

    pub fn from_bitstring(s: &str) -> Result<SpinConfig> {
        if s.len() > MAX_QUBITS {
            return Err(NqsError::TooLarge(format!("{} qubits", s.len())));
        }
        let mut bits = 0u64;
        for (q, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => bits |= 1 << q,
                other => {
                    return Err(NqsError::Domain(format!("invalid bit character {other:?}")));
                }
            }
        }
        Ok(SpinConfig(bits))
    }

    /// `+1` for occupied, `-1` for empty, qubit 0 first.
    pub fn spins(self, n_qubits: usize) -> impl Iterator<Item = f64> {
        (0..n_qubits).map(move |q| if self.bit(q) { 1.0 } else { -1.0 })
    }
}

/// Fixed spin-resolved electron counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sector {
    pub n_up: usize,
    pub n_down: usize,
}

impl Sector {
    pub fn new(n_up: usize, n_down: usize) -> Self {
        Sector { n_up, n_down }
    }

    /// Split `n_electrons` using `ms2 = n_up - n_down`.
    pub fn from_electrons(n_electrons: usize, ms2: i64) -> Result<Self> {
        let n = n_electrons as i64;
        if (n + ms2) % 2 != 0 || ms2.abs() > n {
            return Err(NqsError::Config(format!(
                "inconsistent electron count {n_electrons} and MS2 {ms2}"
            )));
        }
        Ok(Sector {
            n_up: ((n + ms2) / 2) as usize,
            n_down: ((n - ms2) / 2) as usize,
        })
    }

    pub fn n_electrons(&self) -> usize {
        self.n_up + self.n_down
    }

    pub fn ms2(&self) -> i64 {
        self.n_up as i64 - self.n_down as i64
    }

    #[inline]
    pub fn contains(&self, x: SpinConfig) -> bool {
        x.n_up() as usize == self.n_up && x.n_down() as usize == self.n_down
    }

    /// All configurations of `n_qubits` qubits in this sector, ascending.
    pub fn configs(&self, n_qubits: usize) -> Vec<SpinConfig> {
        let n_orb = n_qubits / 2;
        let ups = combinations(n_orb, self.n_up);
        let downs = combinations(n_orb, self.n_down);
        let mut out = Vec::with_capacity(ups.len() * downs.len());
        for &u in &ups {
            for &d in &downs {
                out.push(SpinConfig(spread(u, 0) | spread(d, 1)));
            }
        }
        out.sort_unstable();
        out
    }
}

/// Subsets of `k` out of `n` items as bitmasks.
fn combinations(n: usize, k: usize) -> Vec<u64> {
    if k > n {
        return Vec::new();
    }
    (0u64..(1u64 << n))
        .filter(|m| m.count_ones() as usize == k)
        .collect()
}

/// Place bit `p` of `orbitals` at qubit `2p + offset`.
fn spread(orbitals: u64, offset: usize) -> u64 {
    let mut out = 0;
    let mut m = orbitals;
    while m != 0 {
        let p = m.trailing_zeros() as usize;
        out |= 1 << (2 * p + offset);
        m &= m - 1;
    }
    out
}

/// All `2^n` configurations.
pub fn all_configs(n_qubits: usize) -> Vec<SpinConfig> {
    (0..(1u64 << n_qubits)).map(SpinConfig).collect()
}
