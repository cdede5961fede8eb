"""Statevector UCCSD variational eigensolver.

Spin orbitals are numbered ``sigma * M + p`` (all up orbitals, then all down
orbitals), which is the mode order of :mod:`phaseless.fockspace`. Excitation
generators act directly on sector statevectors as sparse matrices.

Generators
----------
single ``(i -> a)``:        tau = a+_a a_i
double ``(i, j -> a, b)``:  tau = a+_a a+_b a_j a_i,   i > j, a > b

The ansatz is a single first-order Trotter product
``prod_k exp(theta_k (tau_k - tau_k^+))`` (singles first, then doubles, in
list order, the first factor acting first). Because
``G = tau - tau^+`` satisfies ``G^3 = -G`` for distinct indices, every factor is
applied exactly as ``1 + sin(theta) G + (1 - cos(theta)) G^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.optimize
import scipy.sparse as sp

from .fockspace import SectorBasis, Statevector, build_sector_matrix, enumerate_sector

__all__ = [
    "Excitation",
    "UccsdParameters",
    "VqeResult",
    "uccsd_excitations",
    "reference_statevector",
    "generator_matrix",
    "UccsdAnsatz",
    "apply_trotterized_uccsd",
    "antisymmetrized_integral",
    "reference_orbital_energies",
    "mp2_initial_amplitudes",
    "vqe_optimize",
]


@dataclass(frozen=True)
class Excitation:
    """Spin-orbital excitation from ``occ`` to ``vir`` (tuples of length 1 or 2)."""

    occ: tuple[int, ...]
    vir: tuple[int, ...]

    @property
    def rank(self) -> int:
        return len(self.occ)


def uccsd_excitations(norb: int, occ_up, occ_dn) -> list[Excitation]:
    """Spin-conserving singles then doubles over the given reference occupation."""
    occ = sorted(list(occ_up) + [norb + p for p in occ_dn])
    vir = sorted(set(range(2 * norb)) - set(occ))
    spin = lambda so: so // norb  # noqa: E731
    singles = [Excitation((i,), (a,)) for i in occ for a in vir if spin(i) == spin(a)]
    doubles = []
    for j, i in combinations(occ, 2):  # j < i
        for b, a in combinations(vir, 2):  # b < a
            if sorted((spin(i), spin(j))) == sorted((spin(a), spin(b))):
                doubles.append(Excitation((i, j), (a, b)))
    return singles + doubles


@dataclass(frozen=True, eq=False)
class UccsdParameters:
    """Amplitudes aligned with a list of excitations."""

    excitations: tuple[Excitation, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size != len(self.excitations):
            raise ValueError(f"{v.size} amplitudes for {len(self.excitations)} excitations")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite amplitude")
        for ex in self.excitations:
            if ex.rank == 2 and not (ex.occ[0] > ex.occ[1] and ex.vir[0] > ex.vir[1]):
                raise ValueError(f"double excitation {ex} violates i > j, a > b ordering")
        object.__setattr__(self, "excitations", tuple(self.excitations))
        object.__setattr__(self, "values", v)

    def with_values(self, values) -> "UccsdParameters":
        return UccsdParameters(self.excitations, values)

    @property
    def singles(self) -> np.ndarray:
        return np.array([v for v, e in zip(self.values, self.excitations) if e.rank == 1])

    @property
    def doubles(self) -> np.ndarray:
        return np.array([v for v, e in zip(self.values, self.excitations) if e.rank == 2])


# ---------------------------------------------------------------------------
# Fock-space generators
# ---------------------------------------------------------------------------


def _apply_string(ops, state: int):
    """Apply a product of ladder operators (rightmost first) to a bit string.

    ``ops`` is a sequence of ``(mode, is_creation)`` in written order. Returns
    ``(sign, new_state)`` or ``None`` if the result vanishes.
    """
    sign = 1
    for mode, create in reversed(ops):
        occupied = (state >> mode) & 1
        if create == bool(occupied):
            return None
        if bin(state & ((1 << mode) - 1)).count("1") % 2:
            sign = -sign
        state ^= 1 << mode
    return sign, state


def _excitation_ops(ex: Excitation):
    if ex.rank == 1:
        return [(ex.vir[0], True), (ex.occ[0], False)]
    a, b = ex.vir
    i, j = ex.occ
    return [(a, True), (b, True), (j, False), (i, False)]


def generator_matrix(ex: Excitation, basis: SectorBasis) -> sp.csr_matrix:
    """Sparse matrix of ``tau - tau^+`` in the sector."""
    L = basis.L
    mask = (1 << L) - 1
    ops = _excitation_ops(ex)
    rows, cols, vals = [], [], []
    nd = len(basis.dn_strings)
    for iu, u in enumerate(basis.up_strings):
        for idn, d in enumerate(basis.dn_strings):
            combined = int(u) | (int(d) << L)
            res = _apply_string(ops, combined)
            if res is None:
                continue
            sign, new = res
            try:
                target = basis.index(new & mask, new >> L)
            except KeyError:
                continue
            col = iu * nd + idn
            rows += [target, col]
            cols += [col, target]
            vals += [sign, -sign]
    n = basis.size
    return sp.csr_matrix((np.array(vals, dtype=float), (rows, cols)), shape=(n, n))


def reference_statevector(basis: SectorBasis, occ_up, occ_dn) -> Statevector:
    """Occupation-number reference state with amplitude +1."""
    u = sum(1 << p for p in occ_up)
    d = sum(1 << p for p in occ_dn)
    amps = np.zeros(basis.size, dtype=complex)
    amps[basis.index(u, d)] = 1.0
    return Statevector(amps, basis, True)


class UccsdAnsatz:
    """Precomputed generators and Hamiltonian for repeated ansatz evaluations."""

    def __init__(self, ham, occ_up=None, occ_dn=None, excitations=None):
        self.ham = ham
        self.occ_up = list(range(ham.nup)) if occ_up is None else list(occ_up)
        self.occ_dn = list(range(ham.ndn)) if occ_dn is None else list(occ_dn)
        self.basis = enumerate_sector(ham.norb, len(self.occ_up), len(self.occ_dn))
        if (self.basis.nup, self.basis.ndn) != (ham.nup, ham.ndn):
            raise ValueError("reference occupation does not match the Hamiltonian sector")
        self.excitations = tuple(excitations or uccsd_excitations(ham.norb, self.occ_up, self.occ_dn))
        self.generators = [generator_matrix(ex, self.basis) for ex in self.excitations]
        self.hmat = build_sector_matrix(ham, self.basis)
        self.reference = reference_statevector(self.basis, self.occ_up, self.occ_dn)

    def zero_parameters(self) -> UccsdParameters:
        return UccsdParameters(self.excitations, np.zeros(len(self.excitations)))

    def state(self, values, reference: Statevector | None = None) -> np.ndarray:
        v = (reference or self.reference).amplitudes.copy()
        for theta, G in zip(np.asarray(values, dtype=float), self.generators):
            if theta == 0.0:
                continue
            gv = G @ v
            v = v + math.sin(theta) * gv + (1.0 - math.cos(theta)) * (G @ gv)
        return v

    def energy(self, values) -> float:
        v = self.state(values)
        return float(np.vdot(v, self.hmat @ v).real / np.vdot(v, v).real)


def apply_trotterized_uccsd(params: UccsdParameters, reference: Statevector) -> Statevector:
    """Apply ``prod_k exp(theta_k (tau_k - tau_k^+))`` to ``reference``."""
    v = reference.amplitudes.copy()
    for theta, ex in zip(params.values, params.excitations):
        if theta == 0.0:
            continue
        G = generator_matrix(ex, reference.basis)
        gv = G @ v
        v = v + math.sin(theta) * gv + (1.0 - math.cos(theta)) * (G @ gv)
    return Statevector(v, reference.basis)


# ---------------------------------------------------------------------------
# MP2 initial guess
# ---------------------------------------------------------------------------


def antisymmetrized_integral(ham, p: int, q: int, r: int, s: int) -> float:
    """``<pq||rs> = <pq|rs> - <pq|sr>`` over spin orbitals, ``<pq|rs> = (pr|qs)``."""
    M = ham.norb

    def phys(p, q, r, s):
        if p // M != r // M or q // M != s // M:
            return 0.0
        return float(ham.eri[p % M, r % M, q % M, s % M])

    return phys(p, q, r, s) - phys(p, q, s, r)


def reference_orbital_energies(ham, occ_up, occ_dn) -> np.ndarray:
    """Diagonal of the spin-resolved Fock operator of the reference determinant,
    as a vector over the ``2M`` spin orbitals."""
    M = ham.norb
    eri = ham.eri
    out = np.zeros(2 * M)
    for spin, occ_same, occ_other in ((0, occ_up, occ_dn), (1, occ_dn, occ_up)):
        for p in range(M):
            e = ham.h1[p, p]
            for k in occ_same:
                e += eri[p, p, k, k] - eri[p, k, k, p]
            for k in occ_other:
                e += eri[p, p, k, k]
            out[spin * M + p] = e
    return out


def mp2_initial_amplitudes(ham, occ_up=None, occ_dn=None, excitations=None, degeneracy_tol: float = 1e-8) -> UccsdParameters:
    """First-order amplitudes ``t_ij^ab = <ab||ij> / (e_i + e_j - e_a - e_b)``; singles zero.

    Orbital energies are the diagonal of the reference Fock operator, so the
    orbitals are assumed canonical. A denominator below ``degeneracy_tol``
    raises ``ValueError``: explicit starting amplitudes are needed then.
    """
    occ_up = list(range(ham.nup)) if occ_up is None else list(occ_up)
    occ_dn = list(range(ham.ndn)) if occ_dn is None else list(occ_dn)
    excitations = tuple(excitations or uccsd_excitations(ham.norb, occ_up, occ_dn))
    eps = reference_orbital_energies(ham, occ_up, occ_dn)
    values = np.zeros(len(excitations))
    for k, ex in enumerate(excitations):
        if ex.rank != 2:
            continue
        (i, j), (a, b) = ex.occ, ex.vir
        denom = eps[i] + eps[j] - eps[a] - eps[b]
        num = antisymmetrized_integral(ham, a, b, i, j)
        if abs(denom) < degeneracy_tol:
            if num == 0.0:
                continue
            raise ValueError(
                f"vanishing orbital-energy denominator for excitation {ex}; supply initial amplitudes explicitly"
            )
        values[k] = num / denom
    return UccsdParameters(excitations, values)


# ---------------------------------------------------------------------------
# Optimization
# ---------------------------------------------------------------------------


@dataclass
class VqeResult:
    """Outcome of :func:`vqe_optimize`.

    ``trajectory`` holds every energy evaluation in order; ``best_so_far`` is
    its running minimum.
    """

    params: UccsdParameters
    energy: float
    trajectory: np.ndarray
    best_so_far: np.ndarray
    statevector: Statevector
    iterations: int
    converged: bool
    initial_energy: float
    message: str = ""
    options: dict = field(default_factory=dict)

    def trial(self):
        from .trials import StateVecTrial

        return StateVecTrial(self.statevector.normalize(), provenance={"source": "vqe", "energy": self.energy})


def vqe_optimize(
    ham,
    initial: UccsdParameters | None = None,
    method: str = "COBYLA",
    maxiter: int = 20000,
    fatol: float = 1e-8,
    xatol: float = 1e-6,
    ansatz: UccsdAnsatz | None = None,
) -> VqeResult:
    """Minimize the UCCSD energy with a gradient-free local optimizer.

    ``method`` is ``"COBYLA"`` (default) or ``"Nelder-Mead"`` (adaptive
    simplex). Both runs are deterministic functions of the starting
    amplitudes. The returned energy is that of the returned state.
    """
    ansatz = ansatz or UccsdAnsatz(ham)
    if initial is None:
        initial = mp2_initial_amplitudes(ham, ansatz.occ_up, ansatz.occ_dn, ansatz.excitations)
    if tuple(initial.excitations) != ansatz.excitations:
        raise ValueError("initial amplitudes do not match the ansatz excitations")
    trajectory: list[float] = []

    def objective(x):
        e = ansatz.energy(x)
        trajectory.append(e)
        return e

    x0 = initial.values.copy()
    if method == "Nelder-Mead":
        opts = dict(maxfev=maxiter, maxiter=maxiter, fatol=fatol, xatol=xatol, adaptive=x0.size > 8)
    elif method == "COBYLA":
        opts = dict(maxiter=maxiter, tol=fatol)
    else:
        raise ValueError(f"unsupported optimizer {method!r}")
    if x0.size == 0:
        e = objective(x0)
        res = scipy.optimize.OptimizeResult(x=x0, fun=e, success=True, nit=0, message="no parameters")
    else:
        res = scipy.optimize.minimize(objective, x0, method=method, options=opts)
    traj = np.array(trajectory)
    best = np.minimum.accumulate(traj)
    xbest = np.asarray(res.x, dtype=float)
    ebest = ansatz.energy(xbest)
    final = initial.with_values(xbest)
    psi = Statevector(ansatz.state(xbest), ansatz.basis)
    return VqeResult(
        params=final,
        energy=float(ebest),
        trajectory=traj,
        best_so_far=best,
        statevector=psi,
        iterations=int(getattr(res, "nit", 0) or 0),
        converged=bool(res.success),
        initial_energy=float(traj[0]),
        message=str(res.message),
        options={"method": method, **{k_: v for k_, v in opts.items()}} if x0.size else {"method": method},
    )
