//! FCIDUMP reader (Molpro convention).

use std::path::Path;

use crate::basis::Sector;
use crate::error::{NqsError, Result};

/// One- and two-electron integrals over spatial orbitals.
///
/// `h2` is stored in chemist notation `(pq|rs)` as a flat `n^4` array.
#[derive(Clone, Debug, PartialEq)]
pub struct MolecularIntegrals {
    pub n_orbitals: usize,
    pub n_electrons: usize,
    pub ms2: i64,
    pub core_energy: f64,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
}

impl MolecularIntegrals {
    pub fn zeros(n_orbitals: usize, n_electrons: usize) -> Self {
        MolecularIntegrals {
            n_orbitals,
            n_electrons,
            ms2: 0,
            core_energy: 0.0,
            h1: vec![0.0; n_orbitals * n_orbitals],
            h2: vec![0.0; n_orbitals.pow(4)],
        }
    }

    #[inline]
    pub fn one(&self, p: usize, q: usize) -> f64 {
        self.h1[p * self.n_orbitals + q]
    }

    #[inline]
    pub fn two(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        let n = self.n_orbitals;
        self.h2[((p * n + q) * n + r) * n + s]
    }

    pub fn set_one(&mut self, p: usize, q: usize, v: f64) {
        let n = self.n_orbitals;
        self.h1[p * n + q] = v;
        self.h1[q * n + p] = v;
    }

    /// Set `(pq|rs)` and its seven symmetry partners.
    pub fn set_two(&mut self, p: usize, q: usize, r: usize, s: usize, v: f64) {
        let n = self.n_orbitals;
        let idx = |a: usize, b: usize, c: usize, d: usize| ((a * n + b) * n + c) * n + d;
        for (a, b, c, d) in [
            (p, q, r, s),
            (q, p, r, s),
            (p, q, s, r),
            (q, p, s, r),
            (r, s, p, q),
            (s, r, p, q),
            (r, s, q, p),
            (s, r, q, p),
        ] {
            self.h2[idx(a, b, c, d)] = v;
        }
    }

    pub fn n_qubits(&self) -> usize {
        2 * self.n_orbitals
    }

    pub fn sector(&self) -> Result<Sector> {
        Sector::from_electrons(self.n_electrons, self.ms2)
    }

    /// Check the symmetry and occupancy invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_orbitals;
        if self.n_electrons > 2 * n {
            return Err(NqsError::Config(format!(
                "{} electrons do not fit in {n} orbitals",
                self.n_electrons
            )));
        }
        for p in 0..n {
            for q in 0..n {
                if (self.one(p, q) - self.one(q, p)).abs() > 1e-10 {
                    return Err(NqsError::Config(format!("h1 not symmetric at ({p},{q})")));
                }
                for r in 0..n {
                    for s in 0..n {
                        let v = self.two(p, q, r, s);
                        let others = [self.two(q, p, r, s), self.two(p, q, s, r), self.two(r, s, p, q)];
                        if others.iter().any(|o| (o - v).abs() > 1e-10) {
                            return Err(NqsError::Config(format!(
                                "h2 lacks 8-fold symmetry at ({p}{q}|{r}{s})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn parse_fcidump(path: impl AsRef<Path>) -> Result<MolecularIntegrals> {
    let text = std::fs::read_to_string(path)?;
    parse_fcidump_str(&text)
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    tok.replace(['D', 'd'], "E")
        .parse::<f64>()
        .map_err(|_| NqsError::parse(line, format!("not a number: {tok:?}")))
}

pub fn parse_fcidump_str(text: &str) -> Result<MolecularIntegrals> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    // Header: everything from "&FCI" to "&END" (or a lone "/").
    let mut header = String::new();
    let mut started = false;
    let mut closed = false;
    for (ln, line) in lines.by_ref() {
        let t = line.trim();
        if !started {
            if t.is_empty() {
                continue;
            }
            if !t.to_ascii_uppercase().starts_with("&FCI") {
                return Err(NqsError::parse(ln, "expected &FCI header"));
            }
            started = true;
        }
        let upper = t.to_ascii_uppercase();
        if let Some(pos) = upper.find("&END") {
            header.push_str(&t[..pos]);
            closed = true;
            break;
        }
        if t == "/" || t.ends_with('/') {
            header.push_str(t.trim_end_matches('/'));
            closed = true;
            break;
        }
        header.push_str(t);
        header.push(' ');
    }
    if !closed {
        return Err(NqsError::parse(0, "unterminated &FCI header"));
    }

    let header = header.trim_start();
    let header = &header[4..];
    let mut norb = None;
    let mut nelec = None;
    let mut ms2 = 0i64;
    let mut current_key = String::new();
    for tok in header.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
        let value = if let Some((k, v)) = tok.split_once('=') {
            current_key = k.trim().to_ascii_uppercase();
            v.trim()
        } else {
            tok
        };
        if value.is_empty() {
            continue;
        }
        let as_int = || {
            value
                .parse::<i64>()
                .map_err(|_| NqsError::parse(1, format!("bad value {value:?} for {current_key}")))
        };
        match current_key.as_str() {
            "NORB" => norb = Some(as_int()?),
            "NELEC" => nelec = Some(as_int()?),
            "MS2" => ms2 = as_int()?,
            _ => {}
        }
    }
    let norb = norb.ok_or_else(|| NqsError::parse(1, "header lacks NORB"))?;
    let nelec = nelec.ok_or_else(|| NqsError::parse(1, "header lacks NELEC"))?;
    if norb <= 0 || nelec < 0 {
        return Err(NqsError::parse(1, "NORB must be positive and NELEC non-negative"));
    }
    let n = norb as usize;
    let mut mi = MolecularIntegrals::zeros(n, nelec as usize);
    mi.ms2 = ms2;

    for (ln, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 5 {
            return Err(NqsError::parse(ln, format!("expected 5 fields, found {}", toks.len())));
        }
        let value = parse_number(toks[0], ln)?;
        let mut idx = [0usize; 4];
        for (slot, tok) in idx.iter_mut().zip(&toks[1..]) {
            let i: i64 = tok
                .parse()
                .map_err(|_| NqsError::parse(ln, format!("bad index {tok:?}")))?;
            if i < 0 || i as usize > n {
                return Err(NqsError::parse(ln, format!("index {i} out of range 0..={n}")));
            }
            *slot = i as usize;
        }
        match idx {
            [0, 0, 0, 0] => mi.core_energy = value,
            [i, j, 0, 0] if i > 0 && j > 0 => mi.set_one(i - 1, j - 1, value),
            [_, 0, 0, 0] => {} // orbital energies
            [i, j, k, l] if i > 0 && j > 0 && k > 0 && l > 0 => {
                mi.set_two(i - 1, j - 1, k - 1, l - 1, value)
            }
            _ => return Err(NqsError::parse(ln, format!("unsupported index pattern {idx:?}"))),
        }
    }
    if mi.n_electrons > 2 * n {
        return Err(NqsError::parse(1, "more electrons than spin orbitals"));
    }
    Ok(mi)
}
