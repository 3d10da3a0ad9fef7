"""Regenerate the bundled FCIDUMP fixtures (STO-3G, RHF canonical orbitals).

Requires pyscf. Run from this directory: python3 generate.py
"""
import numpy as np
from pyscf import gto, scf, fci, mcscf, ao2mo
from pyscf.tools import fcidump


def h2o_atom(r=0.97, angle=104.5):
    half = np.deg2rad(angle / 2)
    y, z = r * np.sin(half), r * np.cos(half)
    return f"O 0 0 0; H 0 {y:.10f} {z:.10f}; H 0 {-y:.10f} {z:.10f}"


MOLECULES = {
    "h2": "H 0 0 0; H 0 0 0.7414",
    "lih": "Li 0 0 0; H 0 0 1.5949",
    "h2o": h2o_atom(),
}


def full_space(name, atom):
    mol = gto.M(atom=atom, basis="sto-3g", verbose=0)
    mf = scf.RHF(mol).run()
    fcidump.from_scf(mf, f"{name}.fcidump", tol=1e-15)
    e_fci = fci.FCI(mf).kernel()[0]
    print(f"{name}: norb={mol.nao} nelec={mol.nelectron} rhf={mf.e_tot:.10f} fci={e_fci:.10f}")


def active_space(name, atom, ncas, nelecas):
    mol = gto.M(atom=atom, basis="sto-3g", verbose=0)
    mf = scf.RHF(mol).run()
    cas = mcscf.CASCI(mf, ncas, nelecas)
    h1, ecore = cas.get_h1eff()
    h2 = ao2mo.restore(1, cas.get_h2eff(), ncas)
    fcidump.from_integrals(f"{name}.fcidump", h1, h2, ncas, nelecas, nuc=ecore, ms=0, tol=1e-15)
    e = cas.kernel()[0]
    print(f"{name}: norb={ncas} nelec={nelecas} casci={e:.10f}")


if __name__ == "__main__":
    for name, atom in MOLECULES.items():
        full_space(name, atom)
    active_space("lih_cas3", MOLECULES["lih"], 3, 2)
    active_space("lih_cas5", MOLECULES["lih"], 5, 2)
