"""A mean-field trial guiding AFQMC to the exact ground state of a Hubbard chain.

The six-site chain with first-, second- and third-neighbour hopping has a
400-state (3 up, 3 down) sector, small enough for exact diagonalization. The
trial is the unrestricted mean-field determinant found by imaginary-time
self-consistency; the walkers start from the spin-restricted solution, which
shares the ground state's spin-flip symmetry and so carries no weight on the
nearly degenerate first excited state.

Run with ``python demos/hubbard_chain_hf_trial.py`` (about a minute).
"""

from phaseless.fockspace import enumerate_sector, fidelity, ground_state
from phaseless.gaussian import mean_field_ground_state
from phaseless.hamiltonians import CUBR2_CHAIN, build_hubbard_chain
from phaseless.propagation import QmcConfig, run_afqmc
from phaseless.trials import SingleDetTrial, trial_energy

ham = build_hubbard_chain(CUBR2_CHAIN.with_length(6))
basis = enumerate_sector(6, ham.nup, ham.ndn)
e0, psi0 = ground_state(ham, basis)
print(f"sector dimension {basis.size}, exact E0 = {e0:.8f} eV")

uhf = mean_field_ground_state(ham, seed=0, restarts=16)
rhf = mean_field_ground_state(ham, seed=0, restarts=16, restricted=True)
trial = SingleDetTrial(uhf.det)
print(f"mean-field trial: E_T - E0 = {trial_energy(trial, ham) - e0:.5f} eV, fidelity {fidelity(trial, psi0):.3f}")

config = QmcConfig(dtau=0.005, nwalkers=100, nblocks=400, steps_per_block=10, equilibration_blocks=100, seed=1)
series = run_afqmc(ham, trial, config, initial=rhf.det)
print(f"AFQMC: E = {series.mean:.8f} +- {series.stderr:.1e} eV, E - E0 = {series.mean - e0:+.1e} eV")
print(f"walltime {series.runtime['walltime_s']:.1f} s")
