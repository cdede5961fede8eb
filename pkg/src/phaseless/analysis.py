"""Post-processing of total energies: basis-set extrapolation, relative
energies, zero-point corrections and unit conversion.

All energies are in Hartree unless a function says otherwise. Statistical
errors are propagated linearly (extrapolation) or in quadrature (differences)
and are kept apart from any extrapolation uncertainty.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

__all__ = [
    "HARTREE_TO_KJMOL",
    "CBS_SCHEME",
    "hartree_to_kjmol",
    "kjmol_to_hartree",
    "BasisSeriesPoint",
    "CbsResult",
    "cbs_extrapolate",
    "implied_reference_cbs",
    "SpeciesEnergy",
    "relative_energy",
    "ZpveCorrection",
    "zpve_correct",
    "parse_uncertain",
    "EnergyRecord",
    "read_energy_csv",
    "write_energy_csv",
    "relative_energy_table",
    "compare_with_printed",
    "load_reference_energies",
    "load_reference_relative",
    "load_reference_corrections",
    "apply_corrections",
    "write_report",
    "CARDINALS",
]

HARTREE_TO_KJMOL = 2625.4996
"""kJ/mol per Hartree (CODATA value rounded to 8 significant digits)."""

CBS_SCHEME = "two-point inverse-cubic correlation extrapolation"

CARDINALS = {"DZ": 2, "TZ": 3, "QZ": 4, "5Z": 5, "6Z": 6}


def hartree_to_kjmol(energy):
    """Convert Hartree to kJ/mol with the fixed :data:`HARTREE_TO_KJMOL`."""
    return energy * HARTREE_TO_KJMOL


def kjmol_to_hartree(energy):
    return energy / HARTREE_TO_KJMOL


# ---------------------------------------------------------------------------
# Basis-set extrapolation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BasisSeriesPoint:
    """Total and mean-field energy of one species in the basis with cardinal ``X``."""

    cardinal: int
    energy: float
    reference: float
    error: float = 0.0

    def __post_init__(self):
        if int(self.cardinal) != self.cardinal or self.cardinal < 2:
            raise ValueError(f"cardinal number must be an integer >= 2, got {self.cardinal}")
        for name in ("energy", "reference", "error"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.error < 0:
            raise ValueError("statistical error must be non-negative")

    @property
    def correlation(self) -> float:
        return self.energy - self.reference


@dataclass(frozen=True)
class CbsResult:
    """Extrapolated total energy with its parts.

    ``stat_error`` is the linearly propagated statistical error of the inputs;
    no extrapolation uncertainty is folded into it.
    """

    total: float
    correlation: float
    slope: float
    reference_cbs: float
    stat_error: float
    scheme: str = CBS_SCHEME
    cardinals: tuple[int, int] = (3, 4)

    def to_dict(self) -> dict:
        return asdict(self)


def cbs_extrapolate(p: BasisSeriesPoint, q: BasisSeriesPoint, reference_cbs: float | None) -> CbsResult:
    """Two-point solve of ``E_corr(X) = E_corr(inf) + a X^-3``.

    Parameters
    ----------
    p, q
        Points at two distinct cardinal numbers.
    reference_cbs
        Mean-field energy taken as its own basis-set limit (typically a
        large-basis Hartree-Fock value). Added to the extrapolated
        correlation energy to form the total.

    Returns
    -------
    CbsResult
        ``correlation = (X^3 E_X - Y^3 E_Y) / (X^3 - Y^3)`` and
        ``slope = a``.
    """
    if reference_cbs is None or not math.isfinite(reference_cbs):
        raise ValueError("a basis-set-limit reference energy is required")
    if p.cardinal == q.cardinal:
        raise ValueError("extrapolation needs two distinct cardinal numbers")
    x3, y3 = float(p.cardinal) ** 3, float(q.cardinal) ** 3
    corr = (x3 * p.correlation - y3 * q.correlation) / (x3 - y3)
    slope = (p.correlation - q.correlation) / (1.0 / x3 - 1.0 / y3)
    # the solve is linear in both energies; independent errors add in quadrature
    err = math.hypot(x3 * p.error, y3 * q.error) / abs(x3 - y3)
    return CbsResult(
        total=reference_cbs + corr,
        correlation=corr,
        slope=slope,
        reference_cbs=reference_cbs,
        stat_error=err,
        cardinals=(int(p.cardinal), int(q.cardinal)),
    )


def implied_reference_cbs(p: BasisSeriesPoint, q: BasisSeriesPoint, total_cbs: float) -> float:
    """Mean-field limit that makes :func:`cbs_extrapolate` return ``total_cbs``."""
    return total_cbs - cbs_extrapolate(p, q, 0.0).correlation


# ---------------------------------------------------------------------------
# Relative energies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpeciesEnergy:
    """Total energy of a species and its stoichiometric weight.

    ``weight`` is the number of reference units the species corresponds to
    (1.5 for ozone relative to molecular oxygen).
    """

    label: str
    energy: float
    error: float = 0.0
    weight: Fraction | float = 1
    unit: str = "Ha"

    def __post_init__(self):
        w = Fraction(self.weight).limit_denominator(1000) if not isinstance(self.weight, Fraction) else self.weight
        if w == 0:
            raise ValueError("stoichiometric weight must be nonzero")
        object.__setattr__(self, "weight", w)
        if self.unit not in ("Ha", "kJ/mol"):
            raise ValueError(f"unknown energy unit {self.unit!r}")
        if not math.isfinite(self.energy):
            raise ValueError("energy must be finite")


def relative_energy(species: SpeciesEnergy, reference: SpeciesEnergy) -> tuple[float, float]:
    """``Delta E = E_species - w E_reference`` in kJ/mol and its error.

    ``w`` is ``species.weight / reference.weight``. Errors are combined in
    quadrature.
    """
    if species.unit != reference.unit:
        raise ValueError(f"unit mismatch: {species.unit} vs {reference.unit}")
    w = float(species.weight / reference.weight)
    de = species.energy - w * reference.energy
    err = math.hypot(species.error, w * reference.error)
    if species.unit == "Ha":
        return hartree_to_kjmol(de), hartree_to_kjmol(err)
    return de, err


# ---------------------------------------------------------------------------
# Zero-point correction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZpveCorrection:
    delta_zpve: float
    delta_zpve_kjmol: float
    corrected: float
    enthalpy_0k: float
    unit: str


def zpve_correct(
    enthalpy_0k: float,
    zpve: Mapping[str, float],
    stoichiometry: Mapping[str, float],
    unit: str = "Ha",
) -> ZpveCorrection:
    """Remove the zero-point energy difference from a 0 K reaction enthalpy.

    Parameters
    ----------
    enthalpy_0k
        Experimental enthalpy in kJ/mol.
    zpve
        Zero-point energies per species, in ``unit`` (``"Ha"`` or ``"kJ/mol"``).
    stoichiometry
        Signed coefficients: positive for products, negative for reactants,
        e.g. ``{"O3": 1, "3O2": -1.5}``.

    Returns
    -------
    ZpveCorrection
        ``delta_zpve = sum_s c_s ZPVE_s`` and ``corrected = enthalpy_0k -
        delta_zpve`` (kJ/mol).
    """
    if unit not in ("Ha", "kJ/mol"):
        raise ValueError(f"unknown unit {unit!r}")
    missing = [s for s in stoichiometry if s not in zpve]
    if missing:
        raise KeyError(f"missing zero-point energy for {', '.join(missing)}")
    delta = sum(float(c) * float(zpve[s]) for s, c in stoichiometry.items())
    delta_kj = hartree_to_kjmol(delta) if unit == "Ha" else delta
    return ZpveCorrection(delta, delta_kj, enthalpy_0k - delta_kj, enthalpy_0k, unit)


# ---------------------------------------------------------------------------
# Tabulated energies
# ---------------------------------------------------------------------------

_UNCERTAIN = re.compile(r"^\s*([+-]?\d*\.?\d+)(?:\((\d+)\))?\s*$")


def parse_uncertain(text: str) -> tuple[float, float]:
    """Parse ``"-149.9827(7)"`` into ``(-149.9827, 0.0007)``.

    The digits in parentheses apply to the last printed decimal places; a
    bare number has zero error.
    """
    m = _UNCERTAIN.match(text.replace("−", "-"))
    if not m:
        raise ValueError(f"cannot parse energy {text!r}")
    value_s, err_s = m.groups()
    value = float(value_s)
    if err_s is None:
        return value, 0.0
    decimals = len(value_s.split(".")[1]) if "." in value_s else 0
    return value, int(err_s) * 10.0 ** (-decimals)


@dataclass(frozen=True)
class EnergyRecord:
    method: str
    species: str
    basis: str
    energy: float
    error: float = 0.0
    extra: Mapping[str, str] = field(default_factory=dict)

    def key(self) -> tuple:
        return (self.extra.get("geometry", ""), self.method, self.basis, self.species)


REQUIRED_COLUMNS = ("method", "species", "basis", "energy", "error")


def read_energy_csv(source) -> list[EnergyRecord]:
    """Read ``method, species, basis, energy, error`` rows.

    Extra columns are kept in ``EnergyRecord.extra``. An empty ``error`` field
    means zero. Raises ``ValueError`` on missing columns, empty input or
    non-numeric energies.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return read_energy_csv(fh)
    reader = csv.DictReader(line for line in source if line.strip() and not line.lstrip().startswith("#"))
    if reader.fieldnames is None:
        raise ValueError("empty energy table")
    missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise ValueError(f"energy table lacks columns: {', '.join(missing)}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        try:
            energy = float(row["energy"])
            error = float(row["error"]) if row["error"].strip() else 0.0
        except (TypeError, ValueError) as exc:
            raise ValueError(f"row {lineno}: bad number ({exc})") from None
        if not (math.isfinite(energy) and math.isfinite(error)):
            raise ValueError(f"row {lineno}: non-finite value")
        extra = {k: v for k, v in row.items() if k not in REQUIRED_COLUMNS and k is not None}
        out.append(EnergyRecord(row["method"].strip(), row["species"].strip(), row["basis"].strip(), energy, error, extra))
    if not out:
        raise ValueError("energy table has no rows")
    return out


def write_energy_csv(records: Iterable[EnergyRecord], path) -> None:
    records = list(records)
    extras = sorted({k for r in records for k in r.extra})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(REQUIRED_COLUMNS) + extras)
        for r in records:
            w.writerow([r.method, r.species, r.basis, repr(r.energy), repr(r.error)] + [r.extra.get(k, "") for k in extras])


DEFAULT_WEIGHTS = {"3O2": 1, "1O2": 1, "O3": Fraction(3, 2)}


def relative_energy_table(
    records: Iterable[EnergyRecord],
    reference: str = "3O2",
    weights: Mapping[str, float] | None = None,
) -> list[dict]:
    """Relative energies for every (geometry, method, basis) group.

    Each group must contain the reference species; every other species in it
    yields one row ``{geometry, method, basis, species, delta_kjmol, error_kjmol}``.
    """
    weights = dict(DEFAULT_WEIGHTS if weights is None else weights)
    groups: dict[tuple, dict[str, EnergyRecord]] = {}
    for r in records:
        groups.setdefault((r.extra.get("geometry", ""), r.method, r.basis), {})[r.species] = r
    rows = []
    for (geom, method, basis), members in groups.items():
        if reference not in members:
            continue
        ref = members[reference]
        ref_se = SpeciesEnergy(reference, ref.energy, ref.error, weights.get(reference, 1))
        for sp, rec in members.items():
            if sp == reference:
                continue
            if sp not in weights:
                raise KeyError(f"no stoichiometric weight for species {sp!r}")
            de, err = relative_energy(SpeciesEnergy(sp, rec.energy, rec.error, weights[sp]), ref_se)
            rows.append(dict(geometry=geom, method=method, basis=basis, species=sp, delta_kjmol=de, error_kjmol=err))
    return rows


def compare_with_printed(computed: Iterable[dict], printed: Iterable[dict], tol: float = 0.2) -> list[dict]:
    """Join recomputed and printed relative energies; flag deviations above ``tol``."""
    index = {(r["geometry"], r["method"], r["basis"], r["species"]): r for r in computed}
    out = []
    for p in printed:
        key = (p["geometry"], p["method"], p["basis"], p["species"])
        if key not in index:
            raise KeyError(f"no recomputed value for {key}")
        c = index[key]
        dev = c["delta_kjmol"] - float(p["delta_kjmol"])
        out.append({**c, "printed": float(p["delta_kjmol"]), "deviation": dev, "within": abs(dev) <= tol})
    return out


def _data_file(name: str):
    return resources.files("phaseless").joinpath("data", name)


def load_reference_energies() -> list[EnergyRecord]:
    """Bundled oxygen/ozone total energies (printed values, uncorrected)."""
    with _data_file("oxygen_energies.csv").open("r") as fh:
        return read_energy_csv(fh)


def load_reference_relative() -> list[dict]:
    """Bundled printed relative energies in kJ/mol."""
    with _data_file("oxygen_relative.csv").open("r") as fh:
        return [dict(r) for r in csv.DictReader(l for l in fh if not l.startswith("#"))]


def load_reference_corrections() -> list[dict]:
    """Bundled corrections of typographical errors in the bundled energies."""
    with _data_file("oxygen_corrections.csv").open("r") as fh:
        return [dict(r) for r in csv.DictReader(l for l in fh if not l.startswith("#"))]


def apply_corrections(records: Iterable[EnergyRecord], corrections: Iterable[dict]) -> list[EnergyRecord]:
    """Replace energies listed in ``corrections`` (matched on geometry, method, basis, species)."""
    fix = {(c["geometry"], c["method"], c["basis"], c["species"]): c for c in corrections}
    out = []
    for r in records:
        c = fix.get(r.key())
        if c is not None:
            if abs(float(c["printed"]) - r.energy) > 1e-12:
                raise ValueError(f"correction for {r.key()} does not match the tabulated value {r.energy}")
            r = EnergyRecord(r.method, r.species, r.basis, float(c["corrected"]), r.error, {**r.extra, "corrected": "yes"})
        out.append(r)
    return out


def write_report(report: Mapping, path, inputs: Iterable[Path | str] = ()) -> dict:
    """Write a JSON report; input files are echoed with their sha256 digests."""
    prov = []
    for p in inputs:
        data = Path(p).read_bytes()
        prov.append({"path": str(p), "sha256": hashlib.sha256(data).hexdigest()})
    doc = {**report, "provenance": {"inputs": prov, "conversion_kjmol_per_hartree": HARTREE_TO_KJMOL}}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
    return doc


def _json_default(obj):
    if isinstance(obj, Fraction):
        return float(obj)
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
