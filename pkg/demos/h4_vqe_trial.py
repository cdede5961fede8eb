"""Square H4: restricted Hartree-Fock, UCCSD-VQE and exact trials for AFQMC.

The integrals come from the STO-3G FCIDUMP fixtures in ``tests/data``. A
UCCSD ansatz, started from MP2 amplitudes and optimized with COBYLA on an
exact statevector simulator, is used as an AFQMC trial and compared with the
single restricted determinant and with the exact ground state.

Run with ``python demos/h4_vqe_trial.py [side length]`` (about a minute).
"""

import sys
from pathlib import Path

from phaseless.fockspace import fidelity, ground_state
from phaseless.gaussian import mean_field_ground_state
from phaseless.hamiltonians import read_fcidump
from phaseless.propagation import QmcConfig, run_afqmc
from phaseless.trials import SingleDetTrial, StateVecTrial
from phaseless.vqe import vqe_optimize

side = sys.argv[1] if len(sys.argv) > 1 else "1.23"
path = Path(__file__).resolve().parents[1] / "tests" / "data" / f"h4_a{float(side):.2f}.fcidump"
with open(path) as fh:
    ham = read_fcidump(fh)

e0, psi0 = ground_state(ham)
rhf = SingleDetTrial(mean_field_ground_state(ham, seed=0, restarts=16, restricted=True).det)
vqe = vqe_optimize(ham)
print(f"H4 side {side} A: E_FCI = {e0:.6f} Ha")
print(f"VQE: E - E_FCI = {1e3 * (vqe.energy - e0):.3f} mHa after {len(vqe.trajectory)} evaluations, "
      f"fidelity {fidelity(vqe.trial(), psi0):.4f}")

config = QmcConfig(dtau=0.005, nwalkers=100, nblocks=200, steps_per_block=20, equilibration_blocks=40, seed=7)
for name, trial in (("RHF", rhf), ("VQE", vqe.trial()), ("exact", StateVecTrial(psi0))):
    s = run_afqmc(ham, trial, config)
    print(f"AFQMC({name}): E - E_FCI = {1e3 * (s.mean - e0):+8.3f} +- {1e3 * s.stderr:.3f} mHa")
