//! Pauli-string algebra in the symplectic `(x, z)` representation and the
//! Jordan-Wigner mapping of the molecular Hamiltonian.
//!
//! `PauliString { x, z }` denotes `i^{|x & z|} X^x Z^z`, so a qubit with both
//! bits set carries `Y = i X Z`.

use std::collections::HashMap;

use num_complex::Complex64;

use super::MolecularIntegrals;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    pub x: u64,
    pub z: u64,
}

fn i_pow(k: u32) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

impl PauliString {
    pub const IDENTITY: PauliString = PauliString { x: 0, z: 0 };

    pub fn y_count(self) -> u32 {
        (self.x & self.z).count_ones()
    }

    /// `self * other = phase * result`.
    pub fn mul(self, other: PauliString) -> (Complex64, PauliString) {
        let out = PauliString {
            x: self.x ^ other.x,
            z: self.z ^ other.z,
        };
        let k = self.y_count() + other.y_count() + 2 * (self.z & other.x).count_ones();
        // i^k / i^{y_count(out)}; y_count(out) <= 64 so add a multiple of 4 first
        let phase = i_pow(k + 4 * 64 - out.y_count());
        (phase, out)
    }

    /// Single-qubit letters, qubit 0 first.
    pub fn to_letters(self, n_qubits: usize) -> String {
        (0..n_qubits)
            .map(|q| match ((self.x >> q) & 1, (self.z >> q) & 1) {
                (0, 0) => 'I',
                (1, 0) => 'X',
                (1, 1) => 'Y',
                _ => 'Z',
            })
            .collect()
    }

    pub fn from_letters(s: &str) -> Option<PauliString> {
        let mut p = PauliString::IDENTITY;
        for (q, c) in s.chars().enumerate() {
            let bit = 1u64 << q;
            match c {
                'I' => {}
                'X' => p.x |= bit,
                'Y' => {
                    p.x |= bit;
                    p.z |= bit
                }
                'Z' => p.z |= bit,
                _ => return None,
            }
        }
        Some(p)
    }
}

/// A linear combination of Pauli strings with complex coefficients.
#[derive(Clone, Debug, Default)]
pub struct PauliSum {
    pub terms: HashMap<PauliString, Complex64>,
}

impl PauliSum {
    pub fn scalar(c: Complex64) -> Self {
        let mut terms = HashMap::new();
        terms.insert(PauliString::IDENTITY, c);
        PauliSum { terms }
    }

    pub fn add_term(&mut self, p: PauliString, c: Complex64) {
        *self.terms.entry(p).or_default() += c;
    }

    pub fn add_sum(&mut self, other: &PauliSum, scale: Complex64) {
        for (&p, &c) in &other.terms {
            self.add_term(p, c * scale);
        }
    }

    pub fn mul(&self, other: &PauliSum) -> PauliSum {
        let mut out = PauliSum::default();
        for (&p1, &c1) in &self.terms {
            for (&p2, &c2) in &other.terms {
                let (ph, p) = p1.mul(p2);
                out.add_term(p, c1 * c2 * ph);
            }
        }
        out
    }

    /// Jordan-Wigner image of `a_j` (`dagger = false`) or `a_j^†`.
    pub fn ladder(j: usize, dagger: bool) -> PauliSum {
        let zs = (1u64 << j) - 1;
        let bit = 1u64 << j;
        let x = PauliString { x: bit, z: zs };
        let y = PauliString { x: bit, z: zs | bit };
        let s = if dagger { -0.5 } else { 0.5 };
        let mut out = PauliSum::default();
        out.add_term(x, Complex64::new(0.5, 0.0));
        out.add_term(y, Complex64::new(0.0, s));
        out
    }

    /// Product of ladder operators, leftmost first: `(mode, dagger)`.
    pub fn ladder_product(ops: &[(usize, bool)]) -> PauliSum {
        let mut acc = PauliSum::scalar(Complex64::new(1.0, 0.0));
        for &(j, d) in ops {
            acc = acc.mul(&PauliSum::ladder(j, d));
        }
        acc
    }

    /// Drop terms below `tol` in magnitude.
    pub fn prune(&mut self, tol: f64) {
        self.terms.retain(|_, c| c.norm() >= tol);
    }
}

/// Spin-orbital index of spatial orbital `p` with spin `sigma` (0 up, 1 down).
#[inline]
pub fn spin_orbital(p: usize, sigma: usize) -> usize {
    2 * p + sigma
}

/// Second-quantised molecular Hamiltonian mapped to qubits. The returned sum
/// includes the core energy on the identity string.
pub fn jordan_wigner(mi: &MolecularIntegrals, prune_tol: f64) -> PauliSum {
    let n = mi.n_orbitals;
    let mut h = PauliSum::scalar(Complex64::new(mi.core_energy, 0.0));
    // Cache a_j and a_j^† images.
    let n_modes = 2 * n;
    let ann: Vec<PauliSum> = (0..n_modes).map(|j| PauliSum::ladder(j, false)).collect();
    let cre: Vec<PauliSum> = (0..n_modes).map(|j| PauliSum::ladder(j, true)).collect();

    for p in 0..n {
        for q in 0..n {
            let v = mi.one(p, q);
            if v == 0.0 {
                continue;
            }
            for sigma in 0..2 {
                let (a, b) = (spin_orbital(p, sigma), spin_orbital(q, sigma));
                h.add_sum(&cre[a].mul(&ann[b]), Complex64::new(v, 0.0));
            }
        }
    }

    // 1/2 sum (pq|rs) a†_{pσ} a†_{rτ} a_{sτ} a_{qσ}
    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                for s in 0..n {
                    let v = mi.two(p, q, r, s);
                    if v == 0.0 {
                        continue;
                    }
                    for sigma in 0..2 {
                        for tau in 0..2 {
                            let (ps, qs) = (spin_orbital(p, sigma), spin_orbital(q, sigma));
                            let (rs, ss) = (spin_orbital(r, tau), spin_orbital(s, tau));
                            if ps == rs || qs == ss {
                                continue;
                            }
                            let left = cre[ps].mul(&cre[rs]);
                            let right = ann[ss].mul(&ann[qs]);
                            h.add_sum(&left.mul(&right), Complex64::new(0.5 * v, 0.0));
                        }
                    }
                }
            }
        }
    }
    h.prune(prune_tol);
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeff(s: &PauliSum, letters: &str) -> Complex64 {
        s.terms
            .get(&PauliString::from_letters(letters).unwrap())
            .copied()
            .unwrap_or_default()
    }

    #[test]
    fn single_qubit_products() {
        let x = PauliString::from_letters("X").unwrap();
        let y = PauliString::from_letters("Y").unwrap();
        let z = PauliString::from_letters("Z").unwrap();
        // XY = iZ, YZ = iX, ZX = iY, YX = -iZ
        assert_eq!(x.mul(y), (Complex64::new(0.0, 1.0), z));
        assert_eq!(y.mul(z), (Complex64::new(0.0, 1.0), x));
        assert_eq!(z.mul(x), (Complex64::new(0.0, 1.0), y));
        assert_eq!(y.mul(x), (Complex64::new(0.0, -1.0), z));
        assert_eq!(y.mul(y), (Complex64::new(1.0, 0.0), PauliString::IDENTITY));
    }

    #[test]
    fn number_operator() {
        let mut s = PauliSum::ladder_product(&[(0, true), (0, false)]);
        s.prune(1e-14);
        assert_eq!(s.terms.len(), 2);
        assert!((coeff(&s, "I") - 0.5).norm() < 1e-15);
        assert!((coeff(&s, "Z") + 0.5).norm() < 1e-15);
    }

    #[test]
    fn hopping_operator() {
        let mut s = PauliSum::ladder_product(&[(0, true), (1, false)]);
        s.add_sum(&PauliSum::ladder_product(&[(1, true), (0, false)]), Complex64::new(1.0, 0.0));
        s.prune(1e-14);
        assert_eq!(s.terms.len(), 2);
        assert!((coeff(&s, "XX") - 0.5).norm() < 1e-15);
        assert!((coeff(&s, "YY") - 0.5).norm() < 1e-15);
    }

    #[test]
    fn letters_round_trip() {
        let p = PauliString::from_letters("IXYZ").unwrap();
        assert_eq!(p.to_letters(4), "IXYZ");
        assert_eq!(p.y_count(), 1);
        assert!(PauliString::from_letters("IQ").is_none());
    }
}
