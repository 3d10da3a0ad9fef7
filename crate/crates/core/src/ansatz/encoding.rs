//! Orbital tokens and electron-number feasibility.
//!
//! Orbital `p` occupies qubits `2p` (up) and `2p + 1` (down) and is encoded as
//! the token `2 * up + down`. Sequences list orbitals from the highest index
//! down, so sequence position `j` holds orbital `L - 1 - j`.

use crate::basis::{Sector, SpinConfig};
use crate::error::{NqsError, Result};

pub const VOCAB: usize = 4;
pub const START_TOKEN: usize = 4;

pub fn n_orbitals(n_qubits: usize) -> Result<usize> {
    if n_qubits == 0 || !n_qubits.is_multiple_of(2) || n_qubits > crate::basis::MAX_QUBITS {
        return Err(NqsError::Config(format!(
            "orbital encoding needs an even, positive qubit count up to 64, got {n_qubits}"
        )));
    }
    Ok(n_qubits / 2)
}

pub fn token_up(t: u8) -> usize {
    (t >> 1) as usize
}

pub fn token_down(t: u8) -> usize {
    (t & 1) as usize
}

pub fn encode(x: SpinConfig, n_qubits: usize) -> Result<Vec<u8>> {
    let l = n_orbitals(n_qubits)?;
    Ok(encode_unchecked(x, l))
}

pub(crate) fn encode_unchecked(x: SpinConfig, l: usize) -> Vec<u8> {
    (0..l)
        .map(|j| {
            let p = l - 1 - j;
            ((x.0 >> (2 * p)) & 0b11) as u8
        })
        .map(|pair| ((pair & 1) << 1) | (pair >> 1))
        .collect()
}

pub fn decode(tokens: &[u8]) -> SpinConfig {
    let l = tokens.len();
    let mut bits = 0u64;
    for (j, &t) in tokens.iter().enumerate() {
        let p = l - 1 - j;
        bits |= (token_up(t) as u64) << (2 * p);
        bits |= (token_down(t) as u64) << (2 * p + 1);
    }
    SpinConfig(bits)
}

/// Tokens allowed at position `j` of `l` after a prefix holding `up` and
/// `down` electrons. Without a sector every token is allowed.
pub fn feasible_tokens(sector: Option<Sector>, l: usize, j: usize, up: usize, down: usize) -> [bool; 4] {
    let Some(s) = sector else {
        return [true; 4];
    };
    let rest = l - j - 1;
    let ok = |have: usize, add: usize, want: usize| have + add <= want && want - have - add <= rest;
    let mut m = [false; 4];
    for (t, slot) in m.iter_mut().enumerate() {
        let t = t as u8;
        *slot = ok(up, token_up(t), s.n_up) && ok(down, token_down(t), s.n_down);
    }
    m
}

/// Feasibility masks for every position of a full sequence, or `None` if
/// the sequence itself is infeasible.
pub fn sequence_masks(sector: Option<Sector>, tokens: &[u8]) -> Option<Vec<[bool; 4]>> {
    let l = tokens.len();
    let (mut up, mut down) = (0, 0);
    let mut out = Vec::with_capacity(l);
    for (j, &t) in tokens.iter().enumerate() {
        let m = feasible_tokens(sector, l, j, up, down);
        if !m[t as usize] {
            return None;
        }
        out.push(m);
        up += token_up(t);
        down += token_down(t);
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_config_is_zero_tokens() {
        assert_eq!(encode(SpinConfig(0), 4).unwrap(), vec![0, 0]);
    }

    #[test]
    fn token_layout() {
        let x = SpinConfig::from_bitstring("1010").unwrap();
        assert_eq!(encode(x, 4).unwrap(), vec![2, 2]);
        let y = SpinConfig::from_bitstring("0110").unwrap();
        // orbital 1 (up empty, down set) comes first
        assert_eq!(encode(y, 4).unwrap(), vec![2, 1]);
        assert_eq!(decode(&[2, 1]), y);
    }

    #[test]
    fn odd_qubits_rejected() {
        assert!(encode(SpinConfig(0), 3).is_err());
    }

    #[test]
    fn masks_force_completion() {
        let s = Some(Sector::new(1, 1));
        assert_eq!(feasible_tokens(s, 2, 0, 0, 0), [true; 4]);
        assert_eq!(feasible_tokens(s, 2, 1, 0, 0), [false, false, false, true]);
        assert_eq!(feasible_tokens(s, 2, 1, 1, 0), [false, true, false, false]);
        assert_eq!(feasible_tokens(s, 2, 1, 1, 1), [true, false, false, false]);
        assert!(sequence_masks(s, &[3, 3]).is_none());
        assert!(sequence_masks(s, &[2, 1]).is_some());
    }
}
