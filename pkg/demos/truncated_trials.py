"""How the quality of a multi-determinant trial shows up in AFQMC.

The exact ground state of the six-site chain is truncated to its largest
amplitudes. The biggest ones belong to singly occupied (spin) configurations,
which all have the same energy, so the trial energy barely moves until
determinants with doubly occupied sites are kept, while the fidelity climbs
steadily. Each truncated trial then guides a short AFQMC run.

Run with ``python demos/truncated_trials.py`` (a few minutes).
"""

from phaseless.fockspace import enumerate_sector, fidelity, ground_state, truncate_statevector
from phaseless.gaussian import mean_field_ground_state
from phaseless.hamiltonians import CUBR2_CHAIN, build_hubbard_chain
from phaseless.propagation import QmcConfig, run_afqmc
from phaseless.trials import trial_energy

ham = build_hubbard_chain(CUBR2_CHAIN.with_length(6))
e0, psi0 = ground_state(ham, enumerate_sector(6, ham.nup, ham.ndn))
start = mean_field_ground_state(ham, seed=0, restarts=16).det

print(f"{'threshold':>9} {'ndets':>5} {'fidelity':>8} {'E0-E_T':>10} {'E_AFQMC-E0':>11} {'stderr':>8}")
for threshold in (0.3, 0.15, 0.05, 0.01, 0.0):
    trial = truncate_statevector(psi0, threshold=threshold)
    config = QmcConfig(dtau=0.05, nwalkers=100, nblocks=400, steps_per_block=10, equilibration_blocks=100, seed=2)
    s = run_afqmc(ham, trial, config, initial=start)
    print(
        f"{threshold:9.2f} {trial.ndets:5d} {fidelity(trial, psi0):8.4f} {e0 - trial_energy(trial, ham):10.2e} "
        f"{s.mean - e0:+11.2e} {s.stderr:8.1e}"
    )
