"""Regenerate the molecular FCIDUMP fixtures under tests/data.

Requires pyscf, which is not a runtime dependency of the package:

    pip install pyscf
    python scripts/make_fixtures.py
"""

import json
from pathlib import Path

import numpy as np
from pyscf import fci, gto, mcscf, scf
from pyscf.tools import fcidump

DATA = Path(__file__).resolve().parents[1] / "tests" / "data"
H4_SIDES = [0.85, 1.0, 1.23, 1.5, 2.0, 2.5]


def h4_square(a):
    mol = gto.M(
        atom=[("H", (0, 0, 0)), ("H", (0, 0, a)), ("H", (a, 0, 0)), ("H", (a, 0, a))],
        basis="sto-3g",
        unit="Angstrom",
        verbose=0,
    )
    mf = scf.RHF(mol)
    mf.conv_tol = 1e-12
    mf.kernel()
    # stability-check the restricted solution so the stretched points do not sit on a saddle
    mo = mf.stability()[0]
    if not np.allclose(mo, mf.mo_coeff):
        mf.kernel(dm0=mf.make_rdm1(mo, mf.mo_occ))
    path = DATA / f"h4_a{a:.2f}.fcidump"
    fcidump.from_scf(mf, str(path), tol=1e-15)
    e_fci = fci.FCI(mf).kernel()[0]
    return {"a": a, "file": path.name, "e_rhf": mf.e_tot, "e_fci": e_fci}


def ozone_cas():
    mol = gto.M(
        atom=[("O", (0, 0, 0)), ("O", (0, 0, 1.2717)), ("O", (1.138385, 0, 1.838534))],
        basis="cc-pvdz",
        unit="Angstrom",
        verbose=0,
    )
    mf = scf.RHF(mol).run(conv_tol=1e-10)
    mc = mcscf.CASSCF(mf, 9, 12)
    mc.conv_tol = 1e-10
    mc.kernel()
    path = DATA / "o3_cas12e9o.fcidump"
    # CASCI Hamiltonian in the converged CASSCF orbitals
    h1, ecore = mc.get_h1eff()
    h2 = mc.get_h2eff()
    fcidump.from_integrals(str(path), h1, h2, 9, 12, nuc=ecore, ms=0, tol=1e-15)
    return {"file": path.name, "e_rhf": mf.e_tot, "e_casscf": mc.e_tot, "basis": "cc-pvdz"}


if __name__ == "__main__":
    DATA.mkdir(parents=True, exist_ok=True)
    h4 = [h4_square(a) for a in H4_SIDES]
    o3 = ozone_cas()
    ref = {"h4_sto3g": h4, "o3_cas12e9o": o3}
    (DATA / "molecular_references.json").write_text(json.dumps(ref, indent=2))
    print(json.dumps(ref, indent=2))
