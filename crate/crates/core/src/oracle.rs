//! Exact reference machinery for small systems: dense and Lanczos
//! diagonalisation, full enumeration of expectations and entropies, finite
//! differences, and a Pauli-free fermionic construction of the Hamiltonian.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{all_configs, Sector, SpinConfig};
use crate::error::{NqsError, Result};
use crate::hamiltonian::{MolecularIntegrals, PauliTerm, QubitHamiltonian};
use crate::par;

/// Largest basis handled by dense eigensolves and enumeration.
pub const MAX_DENSE_DIM: usize = 4096;
/// Largest basis handled by Lanczos.
pub const MAX_LANCZOS_DIM: usize = 1 << 20;
pub const LANCZOS_TOL: f64 = 1e-10;
pub const LANCZOS_MAX_ITER: usize = 5000;

/// Explicit amplitudes on an ordered basis.
#[derive(Clone, Debug)]
pub struct DenseState {
    pub basis: Vec<SpinConfig>,
    pub amplitudes: Vec<Complex64>,
}

impl DenseState {
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Amplitude of `x`, zero outside the basis. The basis must be sorted.
    pub fn amplitude(&self, x: SpinConfig) -> Complex64 {
        self.basis
            .binary_search(&x)
            .map(|i| self.amplitudes[i])
            .unwrap_or_default()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// Basis of a sector, or the whole space.
pub fn basis(n_qubits: usize, sector: Option<Sector>) -> Vec<SpinConfig> {
    match sector {
        Some(s) => s.configs(n_qubits),
        None => all_configs(n_qubits),
    }
}

/// Dense matrix of `h` restricted to `basis`, built from matrix elements.
pub fn dense_matrix(h: &QubitHamiltonian, basis: &[SpinConfig]) -> Result<DMatrix<Complex64>> {
    let dim = basis.len();
    if dim > MAX_DENSE_DIM {
        return Err(NqsError::TooLarge(format!("dense matrix of dimension {dim}")));
    }
    let mut m = DMatrix::zeros(dim, dim);
    for (i, &x) in basis.iter().enumerate() {
        for (y, v) in h.connected_configs(x) {
            if let Ok(j) = basis.binary_search(&y) {
                m[(i, j)] += v;
            }
        }
    }
    Ok(m)
}

/// Full `2^n` matrix of `h` in computational-basis order.
pub fn dense_hamiltonian(h: &QubitHamiltonian) -> Result<DMatrix<Complex64>> {
    dense_matrix(h, &all_configs(h.n_qubits()))
}

fn pauli_1q(letter: char) -> DMatrix<Complex64> {
    let (o, z, i) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 1.0));
    match letter {
        'I' => DMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        'X' => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        'Y' => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        'Z' => DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
        _ => unreachable!(),
    }
}

/// Dense matrix of a Pauli sum from explicit Kronecker products. Qubit 0 is
/// the least significant bit of the row index.
pub fn dense_from_paulis(n_qubits: usize, terms: &[PauliTerm]) -> Result<DMatrix<Complex64>> {
    if n_qubits > 10 {
        return Err(NqsError::TooLarge(format!("Kronecker oracle for {n_qubits} qubits")));
    }
    let dim = 1 << n_qubits;
    let mut out = DMatrix::zeros(dim, dim);
    for t in terms {
        let letters: Vec<char> = t.ops(n_qubits).chars().collect();
        // highest qubit is the most significant factor
        let mut m = DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        for q in (0..n_qubits).rev() {
            m = m.kronecker(&pauli_1q(letters[q]));
        }
        out += m * Complex64::new(t.coefficient, 0.0);
    }
    Ok(out)
}

/// Annihilation operator `a_j` on `n_modes` modes with Jordan-Wigner signs,
/// built directly on occupation-number states.
pub fn annihilation_matrix(n_modes: usize, j: usize) -> DMatrix<f64> {
    let dim = 1usize << n_modes;
    let mut m = DMatrix::zeros(dim, dim);
    for y in 0..dim {
        if (y >> j) & 1 == 1 {
            let below = (y & ((1 << j) - 1)).count_ones();
            m[(y ^ (1 << j), y)] = if below.is_multiple_of(2) { 1.0 } else { -1.0 };
        }
    }
    m
}

/// Total number operator.
pub fn number_operator(n_modes: usize) -> DMatrix<f64> {
    let dim = 1usize << n_modes;
    DMatrix::from_fn(dim, dim, |r, c| if r == c { (r as u64).count_ones() as f64 } else { 0.0 })
}

/// Sparse column action of `a_j` (or `a_j^†`): basis index to (index, sign).
fn ladder_action(dim: usize, j: usize, dagger: bool) -> Vec<Option<(usize, f64)>> {
    (0..dim)
        .map(|y| {
            let occ = (y >> j) & 1 == 1;
            if occ == dagger {
                return None;
            }
            let below = (y & ((1 << j) - 1)).count_ones();
            Some((y ^ (1 << j), if below.is_multiple_of(2) { 1.0 } else { -1.0 }))
        })
        .collect()
}

/// Molecular Hamiltonian assembled from fermionic ladder matrices, with no
/// Pauli algebra involved.
pub fn dense_fermionic_hamiltonian(mi: &MolecularIntegrals) -> Result<DMatrix<f64>> {
    let n_modes = mi.n_qubits();
    if n_modes > 8 {
        return Err(NqsError::TooLarge(format!("fermionic oracle for {n_modes} modes")));
    }
    let dim = 1usize << n_modes;
    let ann: Vec<_> = (0..n_modes).map(|j| ladder_action(dim, j, false)).collect();
    let cre: Vec<_> = (0..n_modes).map(|j| ladder_action(dim, j, true)).collect();
    let apply = |ops: &[&Vec<Option<(usize, f64)>>], y: usize| -> Option<(usize, f64)> {
        // rightmost operator acts first
        let mut state = (y, 1.0);
        for op in ops.iter().rev() {
            let (s, sign) = op[state.0]?;
            state = (s, state.1 * sign);
        }
        Some(state)
    };
    let n = mi.n_orbitals;
    let mut h = DMatrix::<f64>::identity(dim, dim) * mi.core_energy;
    for y in 0..dim {
        for p in 0..n {
            for q in 0..n {
                let v = mi.one(p, q);
                if v == 0.0 {
                    continue;
                }
                for sig in 0..2 {
                    if let Some((x, s)) = apply(&[&cre[2 * p + sig], &ann[2 * q + sig]], y) {
                        h[(x, y)] += v * s;
                    }
                }
            }
        }
        for p in 0..n {
            for q in 0..n {
                for r in 0..n {
                    for s_ in 0..n {
                        let v = mi.two(p, q, r, s_);
                        if v == 0.0 {
                            continue;
                        }
                        for sig in 0..2 {
                            for tau in 0..2 {
                                let ops = [
                                    &cre[2 * p + sig],
                                    &cre[2 * r + tau],
                                    &ann[2 * s_ + tau],
                                    &ann[2 * q + sig],
                                ];
                                if let Some((x, s)) = apply(&ops, y) {
                                    h[(x, y)] += 0.5 * v * s;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(h)
}

/// Lowest eigenpair of a Hermitian matrix.
fn lowest_dense(m: &DMatrix<Complex64>) -> (f64, Vec<Complex64>) {
    let eig = SymmetricEigen::new(m.clone());
    let (i, &e) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    (e, eig.eigenvectors.column(i).iter().copied().collect())
}

/// Ground state via a dense Hermitian eigensolve on the (sector) basis.
pub fn ground_state_dense(h: &QubitHamiltonian, sector: Option<Sector>) -> Result<(f64, DenseState)> {
    let basis = basis(h.n_qubits(), sector);
    let m = dense_matrix(h, &basis)?;
    let (e, v) = lowest_dense(&m);
    Ok((
        e,
        DenseState {
            basis,
            amplitudes: v,
        },
    ))
}

fn matvec(h: &QubitHamiltonian, basis: &[SpinConfig], v: &[Complex64]) -> Vec<Complex64> {
    let full = basis.len() == 1 << h.n_qubits();
    par::map(basis, |&x| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (y, hv) in h.connected_configs(x) {
            let j = if full {
                Some(y.0 as usize)
            } else {
                basis.binary_search(&y).ok()
            };
            if let Some(j) = j {
                acc += hv * v[j];
            }
        }
        acc
    })
}

fn vdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn vnorm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Ground state via Lanczos with full reorthogonalisation and sparse
/// matrix-vector products over flip groups.
pub fn ground_state_lanczos(h: &QubitHamiltonian, sector: Option<Sector>) -> Result<(f64, DenseState)> {
    let basis = basis(h.n_qubits(), sector);
    let dim = basis.len();
    if dim > MAX_LANCZOS_DIM {
        return Err(NqsError::TooLarge(format!("Lanczos basis of dimension {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a2c_305);
    let mut v: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), 0.0))
        .collect();
    let n0 = vnorm(&v);
    v.iter_mut().for_each(|x| *x /= n0);

    let mut krylov: Vec<Vec<Complex64>> = vec![v];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut prev = f64::INFINITY;
    let max_iter = LANCZOS_MAX_ITER.min(dim);
    let mut converged = false;
    let mut ritz: (f64, Vec<f64>) = (0.0, vec![1.0]);

    for it in 0..max_iter {
        let q = krylov.last().unwrap();
        let mut w = matvec(h, &basis, q);
        let alpha = vdot(q, &w).re;
        alphas.push(alpha);
        // full reorthogonalisation (twice for stability)
        for _ in 0..2 {
            for b in &krylov {
                let c = vdot(b, &w);
                w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= c * bi);
            }
        }
        let beta = vnorm(&w);

        let k = alphas.len();
        let t = DMatrix::from_fn(k, k, |r, c| {
            if r == c {
                alphas[r]
            } else if r + 1 == c {
                betas[r]
            } else if c + 1 == r {
                betas[c]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (i, &e) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        ritz = (e, eig.eigenvectors.column(i).iter().copied().collect());
        let exhausted = beta < 1e-12 || it + 1 == dim;
        if (prev - e).abs() < LANCZOS_TOL || exhausted {
            converged = true;
            break;
        }
        prev = e;
        betas.push(beta);
        krylov.push(w.into_iter().map(|x| x / beta).collect());
    }

    let mut psi = vec![Complex64::new(0.0, 0.0); dim];
    for (c, b) in ritz.1.iter().zip(&krylov) {
        psi.iter_mut().zip(b).for_each(|(p, bi)| *p += *c * bi);
    }
    let n = vnorm(&psi);
    psi.iter_mut().for_each(|p| *p /= n);
    let hpsi = matvec(h, &basis, &psi);
    let residual = vnorm(
        &hpsi
            .iter()
            .zip(&psi)
            .map(|(a, b)| a - b * ritz.0)
            .collect::<Vec<_>>(),
    );
    if !converged || residual > 1e-4 {
        return Err(NqsError::Convergence {
            iterations: alphas.len(),
            residual,
        });
    }
    Ok((
        ritz.0,
        DenseState {
            basis,
            amplitudes: psi,
        },
    ))
}

/// Lowest eigenvalue, dense for small bases and Lanczos otherwise.
pub fn ground_state(h: &QubitHamiltonian, sector: Option<Sector>) -> Result<(f64, DenseState)> {
    let dim = match sector {
        Some(s) => s.configs(h.n_qubits()).len(),
        None => 1usize << h.n_qubits(),
    };
    if dim <= 1024 {
        ground_state_dense(h, sector)
    } else {
        ground_state_lanczos(h, sector)
    }
}

/// Evaluate `amp` on every basis configuration.
pub fn enumerate_state(
    n_qubits: usize,
    sector: Option<Sector>,
    amp: impl FnOnce(&[SpinConfig]) -> Vec<Complex64>,
) -> Result<DenseState> {
    let basis = basis(n_qubits, sector);
    if basis.len() > MAX_DENSE_DIM {
        return Err(NqsError::TooLarge(format!("enumeration over {} states", basis.len())));
    }
    let amplitudes = amp(&basis);
    Ok(DenseState { basis, amplitudes })
}

/// `<psi|H|psi>` by full enumeration (amplitudes outside the basis are zero).
pub fn exact_expectation(h: &QubitHamiltonian, psi: &DenseState) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (&x, &a) in psi.basis.iter().zip(&psi.amplitudes) {
        if a == Complex64::new(0.0, 0.0) {
            continue;
        }
        let mut row = Complex64::new(0.0, 0.0);
        for (y, hv) in h.connected_configs(x) {
            row += hv * psi.amplitude(y);
        }
        acc += a.conj() * row;
    }
    acc.re
}

/// Shannon entropy of `|psi|^2`, with `0 log 0 = 0`.
pub fn exact_entropy(psi: &DenseState) -> f64 {
    -psi.probabilities()
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, params: &[f64], h: f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let fp = f(&p);
            p[i] = orig - h;
            let fm = f(&p);
            p[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}
