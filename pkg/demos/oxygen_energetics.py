"""Relative energies of singlet oxygen and ozone from tabulated total energies.

Loads the bundled total energies (two typeset values are corrected, with the
corrections listed in a separate table), recomputes every relative energy
against triplet oxygen, extrapolates the CCSD(T) correlation energy to the
basis-set limit and removes the zero-point energy from the experimental
ozone formation enthalpy.

Run with ``python demos/oxygen_energetics.py``.
"""

from phaseless.analysis import (
    BasisSeriesPoint,
    apply_corrections,
    cbs_extrapolate,
    compare_with_printed,
    implied_reference_cbs,
    load_reference_corrections,
    load_reference_energies,
    load_reference_relative,
    relative_energy_table,
    zpve_correct,
)

records = apply_corrections(load_reference_energies(), load_reference_corrections())
rows = compare_with_printed(relative_energy_table(records), load_reference_relative(), tol=0.2)
print(f"{'geometry':>8} {'method':>11} {'basis':>5} {'species':>7} {'recomputed':>10} {'printed':>8} {'dev':>6}")
for r in rows:
    print(f"{r['geometry']:>8} {r['method']:>11} {r['basis']:>5} {r['species']:>7} "
          f"{r['delta_kjmol']:10.2f} {r['printed']:8.2f} {r['deviation']:+6.2f}")


def energy(method, basis):
    (hit,) = [r for r in records if r.key() == ("exp", method, basis, "3O2")]
    return hit.energy


tz = BasisSeriesPoint(3, energy("CCSD(T)", "TZ"), energy("R(O)HF", "TZ"))
qz = BasisSeriesPoint(4, energy("CCSD(T)", "QZ"), energy("R(O)HF", "QZ"))
hf_limit = implied_reference_cbs(tz, qz, energy("CCSD(T)", "CBS"))
cbs = cbs_extrapolate(tz, qz, reference_cbs=hf_limit)
print(f"\ntriplet O2 CCSD(T): correlation energy at the basis-set limit {cbs.correlation:.4f} Ha, "
      f"total {cbs.total:.4f} Ha (mean-field limit {hf_limit:.4f} Ha)")

z = zpve_correct(142.7, {"O3": 0.0064, "3O2": 0.0037}, {"O3": 1, "3O2": -1.5})
print(f"ozone: delta ZPVE {z.delta_zpve_kjmol:.1f} kJ/mol, electronic reaction energy {z.corrected:.1f} kJ/mol")
