//! Molecular Hamiltonians: FCIDUMP ingestion, Jordan-Wigner mapping and the
//! flip-mask grouped qubit representation used for local energies.

mod fcidump;
mod pauli;
mod qubit;

pub use fcidump::{parse_fcidump, parse_fcidump_str, MolecularIntegrals};
pub use pauli::{jordan_wigner, spin_orbital, PauliString, PauliSum};
pub use qubit::{FlipGroup, FlipTerm, PauliTerm, QubitHamiltonian, CONNECTED_TOL, PRUNE_TOL};

/// `second_quantize_jw`: integrals to grouped qubit Hamiltonian.
pub fn second_quantize_jw(mi: &MolecularIntegrals) -> crate::Result<QubitHamiltonian> {
    QubitHamiltonian::from_integrals(mi)
}
