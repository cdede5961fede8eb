"""Slater-determinant algebra: overlaps, Green's functions, one-body propagation.

A determinant is stored per spin as an ``M x N_sigma`` orbital matrix plus a
scalar log-norm, so that repeated propagation can strip norms off the
orbitals (see :func:`reorthonormalize`) without losing track of them.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "SlaterDeterminant",
    "SingularOverlapError",
    "OVERLAP_FLOOR",
    "overlap",
    "greens_function",
    "one_body_expectation",
    "apply_one_body",
    "reorthonormalize",
    "cached_expm",
    "density_matrices",
    "mean_field_energy",
    "mean_field_ground_state",
    "MeanFieldResult",
]

#: overlaps below this magnitude are treated as an exact node
OVERLAP_FLOOR = 1e-250


class SingularOverlapError(ArithmeticError):
    """The overlap matrix between two determinants is (numerically) singular."""


@dataclass(frozen=True, eq=False)
class SlaterDeterminant:
    """Unrestricted Slater determinant.

    Attributes
    ----------
    up, dn : ndarray
        Orbital coefficient matrices, shapes (M, N_up) and (M, N_dn).
    log_norm : complex
        The represented state is ``exp(log_norm)`` times the determinant
        built from ``up`` and ``dn``.
    """

    up: np.ndarray
    dn: np.ndarray
    log_norm: complex = 0.0

    def __post_init__(self):
        up = np.asarray(self.up, dtype=complex)
        dn = np.asarray(self.dn, dtype=complex)
        if up.ndim != 2 or dn.ndim != 2 or up.shape[0] != dn.shape[0]:
            raise ValueError(f"incompatible orbital shapes {up.shape} and {dn.shape}")
        if up.shape[1] > up.shape[0] or dn.shape[1] > dn.shape[0]:
            raise ValueError("more electrons than orbitals")
        if not (np.all(np.isfinite(up)) and np.all(np.isfinite(dn))):
            raise ValueError("non-finite orbital coefficients")
        object.__setattr__(self, "up", up)
        object.__setattr__(self, "dn", dn)

    @property
    def orbitals(self) -> tuple[np.ndarray, np.ndarray]:
        return (self.up, self.dn)

    @property
    def norb(self) -> int:
        return self.up.shape[0]

    @property
    def nelec(self) -> tuple[int, int]:
        return (self.up.shape[1], self.dn.shape[1])

    @classmethod
    def from_occupations(cls, M: int, occ_up, occ_dn) -> "SlaterDeterminant":
        """Determinant whose columns are unit vectors on the given sites."""
        eye = np.eye(M)
        return cls(eye[:, list(occ_up)], eye[:, list(occ_dn)])

    def with_orbitals(self, up, dn, log_norm=None) -> "SlaterDeterminant":
        return SlaterDeterminant(up, dn, self.log_norm if log_norm is None else log_norm)


def _check_shapes(a: SlaterDeterminant, b: SlaterDeterminant) -> None:
    if a.up.shape != b.up.shape or a.dn.shape != b.dn.shape:
        raise ValueError(f"shape mismatch: {a.up.shape}/{a.dn.shape} vs {b.up.shape}/{b.dn.shape}")


def overlap(bra: SlaterDeterminant, ket: SlaterDeterminant) -> complex:
    """``<bra|ket> = prod_sigma det(bra_sigma^H ket_sigma)`` including log-norms."""
    _check_shapes(bra, ket)
    value = np.linalg.det(bra.up.conj().T @ ket.up) * np.linalg.det(bra.dn.conj().T @ ket.dn)
    return complex(value * np.exp(np.conj(bra.log_norm) + ket.log_norm))


def greens_function(trial: SlaterDeterminant, walker: SlaterDeterminant) -> tuple[np.ndarray, np.ndarray]:
    """Mixed Green's functions ``G_sigma = phi (psi^H phi)^-1 psi^H`` per spin.

    The mixed expectation ``<psi| a+_p a_q |phi> / <psi|phi>`` equals ``G[q, p]``.
    """
    _check_shapes(trial, walker)
    out = []
    for psi, phi in ((trial.up, walker.up), (trial.dn, walker.dn)):
        S = psi.conj().T @ phi
        if S.size and abs(np.linalg.det(S)) < OVERLAP_FLOOR:
            raise SingularOverlapError("trial and walker determinants are orthogonal")
        out.append(phi @ np.linalg.solve(S, psi.conj().T) if S.size else np.zeros((psi.shape[0],) * 2, complex))
    return out[0], out[1]


def one_body_expectation(h: np.ndarray, trial: SlaterDeterminant, walker: SlaterDeterminant) -> complex:
    """Mixed expectation of the spin-summed operator ``sum_pq h_pq E_pq``."""
    Gu, Gd = greens_function(trial, walker)
    return complex(np.trace(h @ Gu) + np.trace(h @ Gd))


def apply_one_body(propagator, det: SlaterDeterminant) -> SlaterDeterminant:
    """Multiply each spin block by a one-body propagator matrix.

    ``propagator`` is a single ``M x M`` matrix applied to both spins or a
    pair ``(B_up, B_dn)``.
    """
    if isinstance(propagator, (tuple, list)):
        bu, bd = propagator
    else:
        bu = bd = propagator
    bu = np.asarray(bu)
    bd = np.asarray(bd)
    if not (np.all(np.isfinite(bu)) and np.all(np.isfinite(bd))):
        raise ValueError("non-finite propagator")
    return det.with_orbitals(bu @ det.up, bd @ det.dn)


def _qr_positive(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q, r = np.linalg.qr(a)
    d = np.diagonal(r)
    phase = np.where(np.abs(d) > 0, d / np.where(np.abs(d) > 0, np.abs(d), 1.0), 1.0)
    return q * phase, np.abs(d)


def reorthonormalize(det: SlaterDeterminant, rank_tol: float = 1e-14) -> SlaterDeterminant:
    """QR-orthonormalize each spin block, moving ``log|det R|`` into ``log_norm``.

    The R factors are chosen with a positive real diagonal so the represented
    state is unchanged, not merely unchanged up to a phase.
    """
    lognorm = det.log_norm
    blocks = []
    for a in (det.up, det.dn):
        if a.shape[1] == 0:
            blocks.append(a)
            continue
        q, rdiag = _qr_positive(a)
        scale = max(1.0, float(np.max(np.abs(a))))
        if np.min(rdiag) <= rank_tol * scale:
            raise np.linalg.LinAlgError("determinant orbitals are rank deficient")
        lognorm = lognorm + float(np.sum(np.log(rdiag)))
        blocks.append(q)
    return SlaterDeterminant(blocks[0], blocks[1], lognorm)


_EXPM_CACHE: dict[tuple, np.ndarray] = {}
_EXPM_CACHE_SIZE = 256


def cached_expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential memoised on a hash of the content of ``a``.

    Propagators such as ``exp(-dtau K / 2)`` are requested repeatedly with
    identical content, so the cache turns them into a lookup. The returned
    array is read-only.
    """
    a = np.ascontiguousarray(a)
    key = (hashlib.sha256(a.tobytes()).hexdigest(), a.shape, a.dtype.str)
    out = _EXPM_CACHE.get(key)
    if out is None:
        out = scipy.linalg.expm(a)
        out.setflags(write=False)
        if len(_EXPM_CACHE) >= _EXPM_CACHE_SIZE:
            _EXPM_CACHE.pop(next(iter(_EXPM_CACHE)))
        _EXPM_CACHE[key] = out
    return out


# ---------------------------------------------------------------------------
# Mean-field trial by imaginary-time evolution
# ---------------------------------------------------------------------------


def density_matrices(det: SlaterDeterminant) -> tuple[np.ndarray, np.ndarray]:
    """Pure-state one-body density matrices ``rho[p, q] = <a+_q a_p>`` per spin."""
    out = []
    for a in det.orbitals:
        if a.shape[1] == 0:
            out.append(np.zeros((a.shape[0],) * 2, complex))
            continue
        S = a.conj().T @ a
        out.append(a @ np.linalg.solve(S, a.conj().T))
    return out[0], out[1]


def _fock(ham, rho_up, rho_dn):
    eri = ham.eri
    J = np.einsum("pqrs,sr->pq", eri, rho_up + rho_dn)
    Ku = np.einsum("psrq,sr->pq", eri, rho_up)
    Kd = np.einsum("psrq,sr->pq", eri, rho_dn)
    return J, Ku, Kd


def mean_field_energy(ham, det: SlaterDeterminant) -> float:
    """Expectation ``<Phi|H|Phi>`` of a determinant (Hartree-Fock energy functional)."""
    ru, rd = density_matrices(det)
    J, Ku, Kd = _fock(ham, ru, rd)
    h = ham.h1
    e = ham.ecore + np.trace(h @ ru) + np.trace(h @ rd)
    e += 0.5 * (np.trace((J - Ku) @ ru) + np.trace((J - Kd) @ rd))
    return float(np.real(e))


@dataclass
class MeanFieldResult:
    """Outcome of :func:`mean_field_ground_state`."""

    det: SlaterDeterminant
    energy: float
    converged: bool
    energies: list[float] = field(default_factory=list)
    seed: int | None = None
    steps: int = 0


def mean_field_ground_state(
    ham,
    nup: int | None = None,
    ndn: int | None = None,
    dtau: float = 0.1,
    max_steps: int = 20000,
    tol: float = 1e-11,
    seed: int | None = 7,
    perturbation: float = 0.05,
    initial: SlaterDeterminant | None = None,
    restarts: int = 1,
    restricted: bool = False,
) -> MeanFieldResult:
    """Unrestricted mean-field determinant from self-consistent imaginary-time evolution.

    Each step builds the spin-resolved mean-field operator
    ``F_sigma = h + J[rho_up + rho_dn] - K[rho_sigma]`` from the current
    determinant, applies ``exp(-dtau F_sigma)`` to the spin-sigma orbitals and
    re-orthonormalizes. For a Hubbard chain ``F_sigma`` is ``h`` plus
    ``U <n_{i,-sigma}>`` on the diagonal.

    The start is the lowest eigenvectors of ``h`` with a seeded random
    admixture of size ``perturbation``, which lets the evolution find
    spin-symmetry-broken solutions. Evolution stops once the energy changes by
    less than ``tol`` between steps; if ``max_steps`` is reached the last
    determinant is returned with ``converged=False`` and a warning.

    ``restricted=True`` starts both spins from the same orbitals (requires
    ``N_up == N_dn``); the evolution then stays spin-restricted.

    With ``restarts > 1`` the evolution is repeated from seeds
    ``seed, seed + 1, ...`` and the lowest-energy solution is returned; its
    seed is stored in the result.
    """
    if restarts > 1:
        if seed is None or initial is not None:
            raise ValueError("restarts need an integer seed and no explicit initial determinant")
        runs = [
            mean_field_ground_state(ham, nup, ndn, dtau, max_steps, tol, seed + k, perturbation, restricted=restricted)
            for k in range(restarts)
        ]
        return min(runs, key=lambda r: r.energy)
    if dtau <= 0:
        raise ValueError("dtau must be positive")
    nup = ham.nup if nup is None else nup
    ndn = ham.ndn if ndn is None else ndn
    M = ham.norb
    if initial is None:
        _, vecs = np.linalg.eigh(ham.h1)
        rng = np.random.default_rng(seed)
        up = vecs[:, :nup] + perturbation * rng.standard_normal((M, nup))
        dn = vecs[:, :ndn] + perturbation * rng.standard_normal((M, ndn))
        if restricted:
            if nup != ndn:
                raise ValueError("a restricted determinant needs N_up == N_dn")
            dn = up.copy()
        det = reorthonormalize(SlaterDeterminant(up, dn))
    else:
        det = reorthonormalize(initial)
    det = SlaterDeterminant(det.up, det.dn)
    energies = [mean_field_energy(ham, det)]
    converged = False
    step = 0
    for step in range(1, max_steps + 1):
        ru, rd = density_matrices(det)
        J, Ku, Kd = _fock(ham, ru, rd)
        Fu = ham.h1 + J - Ku
        Fd = ham.h1 + J - Kd
        Fu = 0.5 * (Fu + Fu.conj().T)
        Fd = 0.5 * (Fd + Fd.conj().T)
        new = apply_one_body((scipy.linalg.expm(-dtau * Fu), scipy.linalg.expm(-dtau * Fd)), det)
        new = reorthonormalize(new)
        det = SlaterDeterminant(new.up, new.dn)
        energies.append(mean_field_energy(ham, det))
        if abs(energies[-1] - energies[-2]) < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"mean-field evolution not converged after {max_steps} steps", RuntimeWarning, stacklevel=2)
    return MeanFieldResult(det, energies[-1], converged, energies, seed, step)
