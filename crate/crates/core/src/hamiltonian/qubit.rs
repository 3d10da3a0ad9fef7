use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use super::pauli::{jordan_wigner, PauliString};
use super::MolecularIntegrals;
use crate::basis::{Sector, SpinConfig, MAX_QUBITS};
use crate::error::{NqsError, Result};

/// Coefficients below this are dropped after like terms are combined.
pub const PRUNE_TOL: f64 = 1e-12;
/// Connected entries whose summed coefficient falls below this are skipped.
pub const CONNECTED_TOL: f64 = 1e-14;

/// A real-coefficient Pauli string.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PauliTerm {
    pub coefficient: f64,
    pub string: PauliString,
}

impl PauliTerm {
    pub fn ops(&self, n_qubits: usize) -> String {
        self.string.to_letters(n_qubits)
    }
}

/// A Pauli term split into the bits it flips and the bits whose occupancy
/// contributes a sign.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlipTerm {
    pub coefficient: f64,
    pub flip_mask: u64,
    pub sign_mask: u64,
    pub y_count: u32,
}

impl FlipTerm {
    pub fn from_pauli(t: &PauliTerm) -> Self {
        FlipTerm {
            coefficient: t.coefficient,
            flip_mask: t.string.x,
            sign_mask: t.string.z,
            y_count: t.string.y_count(),
        }
    }

    /// `<ket ^ flip| P |ket>` for this term.
    #[inline]
    pub fn element(&self, ket: SpinConfig) -> Complex64 {
        let sign = if (self.sign_mask & ket.0).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        let v = self.coefficient * sign;
        match self.y_count % 4 {
            0 => Complex64::new(v, 0.0),
            1 => Complex64::new(0.0, v),
            2 => Complex64::new(-v, 0.0),
            _ => Complex64::new(0.0, -v),
        }
    }
}

/// Terms sharing one flip mask.
#[derive(Clone, Debug, PartialEq)]
pub struct FlipGroup {
    pub flip_mask: u64,
    pub terms: Vec<FlipTerm>,
}

/// Qubit Hamiltonian grouped by unique flip mask.
#[derive(Clone, Debug)]
pub struct QubitHamiltonian {
    n_qubits: usize,
    sector: Sector,
    /// Core energy plus the identity-string coefficient.
    identity: f64,
    groups: Vec<FlipGroup>,
    lookup: HashMap<u64, usize>,
}

impl QubitHamiltonian {
    /// Build from individual terms. Identity strings are folded into the
    /// offset; duplicate strings are combined and small results pruned.
    pub fn from_terms(
        n_qubits: usize,
        sector: Sector,
        identity: f64,
        terms: impl IntoIterator<Item = PauliTerm>,
    ) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(NqsError::Config(format!("unsupported qubit count {n_qubits}")));
        }
        if sector.n_up > n_qubits / 2 + n_qubits % 2 || sector.n_down > n_qubits / 2 {
            return Err(NqsError::Config(format!("sector {sector:?} does not fit {n_qubits} qubits")));
        }
        let limit = if n_qubits == 64 { u64::MAX } else { (1u64 << n_qubits) - 1 };
        let mut combined: HashMap<PauliString, f64> = HashMap::new();
        let mut identity = identity;
        for t in terms {
            if (t.string.x | t.string.z) & !limit != 0 {
                return Err(NqsError::Dimension(format!(
                    "Pauli string acts beyond qubit {}",
                    n_qubits - 1
                )));
            }
            if t.string == PauliString::IDENTITY {
                identity += t.coefficient;
            } else {
                *combined.entry(t.string).or_default() += t.coefficient;
            }
        }
        let mut strings: Vec<(PauliString, f64)> = combined
            .into_iter()
            .filter(|(_, c)| c.abs() >= PRUNE_TOL)
            .collect();
        strings.sort_by_key(|(p, _)| (p.x, p.z));
        let mut groups: Vec<FlipGroup> = Vec::new();
        for (p, c) in strings {
            let ft = FlipTerm::from_pauli(&PauliTerm {
                coefficient: c,
                string: p,
            });
            match groups.last_mut() {
                Some(g) if g.flip_mask == p.x => g.terms.push(ft),
                _ => groups.push(FlipGroup {
                    flip_mask: p.x,
                    terms: vec![ft],
                }),
            }
        }
        let lookup = groups.iter().enumerate().map(|(i, g)| (g.flip_mask, i)).collect();
        Ok(QubitHamiltonian {
            n_qubits,
            sector,
            identity,
            groups,
            lookup,
        })
    }

    /// Second-quantise and Jordan-Wigner transform molecular integrals.
    pub fn from_integrals(mi: &MolecularIntegrals) -> Result<Self> {
        mi.validate()?;
        let sum = jordan_wigner(mi, PRUNE_TOL);
        let mut terms = Vec::with_capacity(sum.terms.len());
        for (p, c) in sum.terms {
            if c.im.abs() > 1e-10 {
                return Err(NqsError::Domain(format!(
                    "non-Hermitian coefficient {c} on {}",
                    p.to_letters(mi.n_qubits())
                )));
            }
            terms.push(PauliTerm {
                coefficient: c.re,
                string: p,
            });
        }
        Self::from_terms(mi.n_qubits(), mi.sector()?, 0.0, terms)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn n_electrons(&self) -> usize {
        self.sector.n_electrons()
    }

    pub fn identity_offset(&self) -> f64 {
        self.identity
    }

    pub fn groups(&self) -> &[FlipGroup] {
        &self.groups
    }

    pub fn n_flip_masks(&self) -> usize {
        self.groups.len()
    }

    /// Number of Pauli strings, counting the identity when nonzero.
    pub fn n_terms(&self) -> usize {
        self.groups.iter().map(|g| g.terms.len()).sum::<usize>() + usize::from(self.identity != 0.0)
    }

    /// All Pauli strings, identity first when nonzero.
    pub fn pauli_terms(&self) -> Vec<PauliTerm> {
        let mut out = Vec::with_capacity(self.n_terms());
        if self.identity != 0.0 {
            out.push(PauliTerm {
                coefficient: self.identity,
                string: PauliString::IDENTITY,
            });
        }
        for g in &self.groups {
            for t in &g.terms {
                out.push(PauliTerm {
                    coefficient: t.coefficient,
                    string: PauliString {
                        x: t.flip_mask,
                        z: t.sign_mask,
                    },
                });
            }
        }
        out
    }

    fn check_len(&self, bits: SpinConfig) -> Result<()> {
        if self.n_qubits < 64 && bits.0 >> self.n_qubits != 0 {
            return Err(NqsError::Dimension(format!(
                "configuration {:#x} has bits beyond {} qubits",
                bits.0, self.n_qubits
            )));
        }
        Ok(())
    }

    /// `<x|H|y>`.
    pub fn matrix_element(&self, x: SpinConfig, y: SpinConfig) -> Result<Complex64> {
        self.check_len(x)?;
        self.check_len(y)?;
        let flip = x.0 ^ y.0;
        let mut acc = Complex64::new(if flip == 0 { self.identity } else { 0.0 }, 0.0);
        if let Some(&gi) = self.lookup.get(&flip) {
            for t in &self.groups[gi].terms {
                acc += t.element(y);
            }
        }
        Ok(acc)
    }

    /// Nonzero entries of row `x`: one `(x ^ flip, <x|H|x ^ flip>)` per flip mask.
    pub fn connected_configs(&self, x: SpinConfig) -> Vec<(SpinConfig, Complex64)> {
        let mut out = Vec::with_capacity(self.groups.len() + 1);
        let has_diag_group = self.groups.first().is_some_and(|g| g.flip_mask == 0);
        if !has_diag_group && self.identity.abs() >= CONNECTED_TOL {
            out.push((x, Complex64::new(self.identity, 0.0)));
        }
        for g in &self.groups {
            let y = x.flip(g.flip_mask);
            let mut acc = Complex64::new(if g.flip_mask == 0 { self.identity } else { 0.0 }, 0.0);
            for t in &g.terms {
                acc += t.element(y);
            }
            if acc.norm() >= CONNECTED_TOL {
                out.push((y, acc));
            }
        }
        out
    }

    /// Text export: header `n_qubits n_electrons [ms2]`, then one
    /// `coefficient<TAB>letters` line per Pauli string.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if self.sector.ms2() == 0 {
            writeln!(s, "{} {}", self.n_qubits, self.n_electrons()).unwrap();
        } else {
            writeln!(s, "{} {} {}", self.n_qubits, self.n_electrons(), self.sector.ms2()).unwrap();
        }
        for t in self.pauli_terms() {
            writeln!(s, "{:.16e}\t{}", t.coefficient, t.ops(self.n_qubits)).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (ln, header) = lines.next().ok_or_else(|| NqsError::parse(1, "empty file"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(NqsError::parse(ln, "header must be `n_qubits n_electrons [ms2]`"));
        }
        let int = |s: &str| {
            s.parse::<i64>()
                .map_err(|_| NqsError::parse(ln, format!("bad header field {s:?}")))
        };
        let n_qubits = int(fields[0])?;
        let n_electrons = int(fields[1])?;
        let ms2 = fields.get(2).map(|f| int(f)).transpose()?.unwrap_or(0);
        if n_qubits <= 0 || n_qubits as usize > MAX_QUBITS || n_electrons < 0 {
            return Err(NqsError::parse(ln, "qubit or electron count out of range"));
        }
        let n_qubits = n_qubits as usize;
        let sector = Sector::from_electrons(n_electrons as usize, ms2)?;
        let mut terms = Vec::new();
        for (ln, line) in lines {
            let (c, ops) = line
                .split_once(|c: char| c.is_whitespace())
                .ok_or_else(|| NqsError::parse(ln, "expected `coefficient<TAB>pauli_string`"))?;
            let coefficient: f64 = c
                .parse()
                .map_err(|_| NqsError::parse(ln, format!("bad coefficient {c:?}")))?;
            let ops = ops.trim();
            if ops.len() != n_qubits {
                return Err(NqsError::parse(
                    ln,
                    format!("Pauli string of length {} for {n_qubits} qubits", ops.len()),
                ));
            }
            let string = PauliString::from_letters(ops)
                .ok_or_else(|| NqsError::parse(ln, format!("bad Pauli string {ops:?}")))?;
            terms.push(PauliTerm { coefficient, string });
        }
        Self::from_terms(n_qubits, sector, 0.0, terms)
    }

    pub fn save_text(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load_text(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Load either an FCIDUMP file or a Pauli text export, by content.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if text.trim_start().to_ascii_uppercase().starts_with("&FCI") {
            Self::from_integrals(&super::parse_fcidump_str(&text)?)
        } else {
            Self::from_text(&text)
        }
    }
}
