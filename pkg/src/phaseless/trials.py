"""Trial wavefunctions: overlaps, local energies and force biases against walkers.

Three kinds are supported:

* :class:`SingleDetTrial` evaluates everything by Wick contraction with the
  mixed Green's function.
* :class:`MultiDetTrial` (coefficients on occupation strings) and
  :class:`StateVecTrial` (a full sector vector) are both handled in Fock
  space. A walker enters only through the minors ``det(Phi_sigma[rows(s)])``
  of the strings ``s`` that occur in the trial, so the cost scales with the
  trial support rather than with the sector.

All batched routines take walker orbitals as arrays of shape
``(n_walkers, M, N_sigma)``.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np
import scipy.sparse as sp

from . import fockspace
from .fockspace import SectorBasis, Statevector, enumerate_sector, string_minors
from .gaussian import (
    OVERLAP_FLOOR,
    SingularOverlapError,
    SlaterDeterminant,
    mean_field_energy,
    reorthonormalize,
)

__all__ = [
    "SingleDetTrial",
    "MultiDetTrial",
    "StateVecTrial",
    "LocalEnergyValue",
    "trial_overlap",
    "local_energy",
    "mixed_one_body",
    "force_bias",
    "trial_energy",
    "load_determinant_file",
    "save_trial",
    "save_orbital_trial",
    "load_orbital_trial",
]


@dataclass(frozen=True)
class LocalEnergyValue:
    """Local energy of one walker.

    ``value = core + one_body + two_body``; the split is only available for
    single-determinant trials and is ``nan`` otherwise.
    """

    value: complex
    overlap: complex
    one_body: complex = complex("nan")
    two_body: complex = complex("nan")
    core: float = 0.0


# ---------------------------------------------------------------------------
# Trial types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SingleDetTrial:
    """A single Slater determinant."""

    det: SlaterDeterminant
    provenance: dict = field(default_factory=dict)

    @property
    def norb(self) -> int:
        return self.det.norb

    @property
    def nelec(self) -> tuple[int, int]:
        return self.det.nelec

    def to_statevector(self, basis: SectorBasis | None = None) -> Statevector:
        if basis is None:
            basis = enumerate_sector(self.norb, *self.nelec)
        return fockspace.embed_determinant(self.det, basis)

    def evaluator(self, ham) -> "SingleDetEvaluator":
        return SingleDetEvaluator(self, ham)


@dataclass(frozen=True, eq=False)
class MultiDetTrial:
    """Linear combination ``sum_k c_k |u_k, d_k>`` of occupation-string determinants.

    Parameters
    ----------
    coeffs : array_like of complex
    ups, dns : array_like of int
        Up and down occupation strings (bit ``i`` = site ``i``).
    L : int
        Number of spatial orbitals.
    provenance : dict
        Free-form metadata (truncation rule, source file hash, ...).
    """

    coeffs: np.ndarray
    ups: np.ndarray
    dns: np.ndarray
    L: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex).ravel()
        u = np.asarray(self.ups, dtype=np.int64).ravel()
        d = np.asarray(self.dns, dtype=np.int64).ravel()
        if not (c.size == u.size == d.size) or c.size == 0:
            raise ValueError("coefficients and occupation lists must be non-empty and of equal length")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite determinant coefficient")
        if np.any(u < 0) or np.any(d < 0) or np.any(u >= 1 << self.L) or np.any(d >= 1 << self.L):
            raise ValueError(f"occupation string outside {self.L} orbitals")
        nu = np.bitwise_count(u)
        nd = np.bitwise_count(d)
        if np.any(nu != nu[0]) or np.any(nd != nd[0]):
            raise ValueError("determinants have inconsistent particle numbers")
        pairs = set(zip(u.tolist(), d.tolist()))
        if len(pairs) != c.size:
            raise ValueError("duplicate occupation pair in multi-determinant trial")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "ups", u)
        object.__setattr__(self, "dns", d)

    @property
    def norb(self) -> int:
        return self.L

    @property
    def nelec(self) -> tuple[int, int]:
        return (int(np.bitwise_count(self.ups[0])), int(np.bitwise_count(self.dns[0])))

    @property
    def ndets(self) -> int:
        return self.coeffs.size

    def to_statevector(self, basis: SectorBasis | None = None) -> Statevector:
        if basis is None:
            basis = enumerate_sector(self.L, *self.nelec)
        if (basis.L, basis.nup, basis.ndn) != (self.L, *self.nelec):
            raise ValueError("sector mismatch")
        amps = np.zeros(basis.size, dtype=complex)
        for c, u, d in zip(self.coeffs, self.ups, self.dns):
            amps[basis.index(u, d)] = c
        return Statevector(amps, basis)

    def determinants(self) -> list[SlaterDeterminant]:
        """Each term as a unit-vector Slater determinant (coefficient excluded)."""
        out = []
        for u, d in zip(self.ups, self.dns):
            ou = [i for i in range(self.L) if (u >> i) & 1]
            od = [i for i in range(self.L) if (d >> i) & 1]
            out.append(SlaterDeterminant.from_occupations(self.L, ou, od))
        return out

    def evaluator(self, ham) -> "FockEvaluator":
        return FockEvaluator(self.to_statevector(), ham)


@dataclass(frozen=True, eq=False)
class StateVecTrial:
    """A dense sector statevector (exact ground state, VQE output, ...)."""

    psi: Statevector
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.psi.norm == 0:
            raise ValueError("zero statevector")

    @property
    def norb(self) -> int:
        return self.psi.basis.L

    @property
    def nelec(self) -> tuple[int, int]:
        return (self.psi.basis.nup, self.psi.basis.ndn)

    def to_statevector(self, basis: SectorBasis | None = None) -> Statevector:
        return self.psi.to_statevector(basis)

    def evaluator(self, ham) -> "FockEvaluator":
        return FockEvaluator(self.psi, ham)


# ---------------------------------------------------------------------------
# Batched evaluators
# ---------------------------------------------------------------------------


def _check_sector(trial, ham) -> None:
    if trial.norb != ham.norb or tuple(trial.nelec) != (ham.nup, ham.ndn):
        raise ValueError(
            f"trial ({trial.norb} orbitals, {trial.nelec}) does not match Hamiltonian "
            f"({ham.norb} orbitals, {(ham.nup, ham.ndn)})"
        )


class SingleDetEvaluator:
    """Wick-contraction evaluator for a single-determinant trial."""

    def __init__(self, trial: SingleDetTrial, ham):
        _check_sector(trial, ham)
        self.ham = ham
        self.psi = (trial.det.up, trial.det.dn)
        self.psi_h = tuple(p.conj().T for p in self.psi)
        self.scale = np.exp(np.conj(trial.det.log_norm))
        chol = np.asarray(ham.chol)
        # psi^H L_g, shape (G, N_sigma, M)
        self.rot_chol = tuple(np.einsum("kp,gpq->gkq", ph, chol) for ph in self.psi_h)
        self.rot_h1 = tuple(ph @ ham.h1 for ph in self.psi_h)

    def _theta(self, up, dn):
        out = []
        ov = self.scale * np.ones(up.shape[0], dtype=complex)
        for ph, phi in zip(self.psi_h, (up, dn)):
            if phi.shape[-1] == 0:
                out.append(phi)
                continue
            S = ph @ phi
            ov = ov * np.linalg.det(S)
            out.append(np.linalg.solve(S.transpose(0, 2, 1), phi.transpose(0, 2, 1)).transpose(0, 2, 1))
        return ov, out

    def overlap(self, up, dn) -> np.ndarray:
        ov = self.scale * np.ones(up.shape[0], dtype=complex)
        for ph, phi in zip(self.psi_h, (up, dn)):
            if phi.shape[-1]:
                ov = ov * np.linalg.det(ph @ phi)
        return ov

    def fields(self, up, dn):
        """Overlaps and mixed expectations ``<L_g>`` of every Cholesky factor."""
        ov, thetas = self._theta(up, dn)
        lbar = np.zeros((up.shape[0], self.ham.nchol), dtype=complex)
        for rc, th in zip(self.rot_chol, thetas):
            if th.shape[-1]:
                lbar += np.einsum("gkq,wqk->wg", rc, th)
        return ov, lbar

    def local_energy(self, up, dn, breakdown: bool = False):
        ov, thetas = self._theta(up, dn)
        nw = up.shape[0]
        e1 = np.zeros(nw, dtype=complex)
        trLG = np.zeros((nw, self.ham.nchol), dtype=complex)
        exch = np.zeros(nw, dtype=complex)
        for rh, rc, th in zip(self.rot_h1, self.rot_chol, thetas):
            if th.shape[-1] == 0:
                continue
            e1 += np.einsum("kq,wqk->w", rh, th)
            # (psi^H L Theta)_{kl}
            X = np.einsum("gkq,wql->wgkl", rc, th)
            trLG += np.einsum("wgkk->wg", X)
            exch += np.einsum("wgkl,wglk->w", X, X)
        e2 = 0.5 * (np.sum(trLG * trLG, axis=1) - exch)
        total = self.ham.ecore + e1 + e2
        if breakdown:
            return ov, total, e1, e2
        return ov, total


class FockEvaluator:
    """Fock-space evaluator shared by multi-determinant and statevector trials.

    The trial ``psi`` and ``H psi`` are vectors over ``(up string, down
    string)`` pairs, contracted with walker minors either as a sparse list of
    terms or, when the support fills most of the sector, as a dense
    ``n_up x n_dn`` matrix. Off-diagonal one-body elements (needed when the
    Cholesky factors are not diagonal) come from sparse string operators
    acting on the trial already contracted with one spin's minors.

    No operation mixes walkers through a BLAS call, so every walker's numbers
    are bitwise independent of the batch it is evaluated in.
    """

    dense_fraction = 0.3

    def __init__(self, psi: Statevector, ham):
        basis = psi.basis
        if basis.L != ham.norb or (basis.nup, basis.ndn) != (ham.nup, ham.ndn):
            raise ValueError("trial sector does not match the Hamiltonian")
        self.ham = ham
        self.basis = basis
        L = basis.L
        chol = np.asarray(ham.chol)
        C = psi.as_matrix()
        self.psi = psi
        self.norm2 = float(np.vdot(psi.amplitudes, psi.amplitudes).real)
        # off-diagonal (p, q) elements needed by the Cholesky factors
        mask = np.any(chol != 0, axis=0) if chol.size else np.zeros((L, L), bool)
        np.fill_diagonal(mask, False)
        self.offdiag = [tuple(pq) for pq in np.argwhere(mask)]
        self.diag_chol = np.einsum("gpp->gp", chol) if chol.size else np.zeros((0, L))
        self.off_chol = np.array([chol[:, p, q] for p, q in self.offdiag]).T if self.offdiag else np.zeros((chol.shape[0], 0))

        self.n_off = len(self.offdiag)
        if self.n_off:
            # <a+_q a_p psi|walker> = a_up^T E_qp (conj(C) a_dn) for the up spin
            # (and the transposed form for the down spin): contract the trial
            # once with each walker's minors, then apply sparse string operators.
            self.coef = C.conj()
            self.ops = []
            for strings in (basis.up_strings, basis.dn_strings):
                self.ops.append(sp.vstack([fockspace.string_operator(strings, q, p) for p, q in self.offdiag]).tocsr())
            self.occ = [((st[:, None] >> np.arange(L)) & 1).astype(float) for st in (basis.up_strings, basis.dn_strings)]
        self.step_bras = _BraStack(np.array([C]), basis)
        self._energy_bra = None

    # -- energy bra is built lazily: it needs the full sector matrix
    def _hpsi(self):
        if self._energy_bra is None:
            H = fockspace.build_sector_matrix(self.ham, self.basis)
            hpsi = H @ self.psi.amplitudes
            self._energy_bra = _BraStack(np.array([self.psi.as_matrix(), hpsi.reshape(self.basis.shape)]), self.basis)
        return self._energy_bra

    def overlap(self, up, dn) -> np.ndarray:
        return self.step_bras.contract(up, dn, only_first=True)[0][:, 0]

    def fields(self, up, dn):
        if not self.n_off:
            vals, diag_up, diag_dn = self.step_bras.contract(up, dn, with_diagonal=True)
            ov = vals[:, 0]
            _check_overlaps(ov)
            return ov, np.einsum("wp,gp->wg", diag_up + diag_dn, self.diag_chol) / ov[:, None]
        L = self.basis.L
        au = string_minors(up, self.basis.up_strings, L)
        ad = string_minors(dn, self.basis.dn_strings, L)
        v = np.einsum("ud,wd->wu", self.coef, ad)  # trial contracted with down minors
        z = np.einsum("ud,wu->wd", self.coef, au)  # trial contracted with up minors
        ov = np.einsum("wu,wu->w", au, v)
        _check_overlaps(ov)
        diag = np.einsum("wu,up->wp", au * v, self.occ[0]) + np.einsum("wd,dp->wp", ad * z, self.occ[1])
        nw = ov.size
        off = np.zeros((nw, self.n_off), dtype=complex)
        for op, minors, contracted in ((self.ops[0], au, v), (self.ops[1], ad, z)):
            applied = (op @ contracted.T).reshape(self.n_off, minors.shape[1], nw)
            off += np.einsum("kuw,wu->wk", applied, minors)
        lbar = np.einsum("wp,gp->wg", diag, self.diag_chol) + np.einsum("wk,gk->wg", off, self.off_chol)
        return ov, lbar / ov[:, None]

    def local_energy(self, up, dn):
        vals = self._hpsi().contract(up, dn)[0]
        ov = vals[:, 0]
        _check_overlaps(ov)
        return ov, vals[:, 1] / ov


def _check_overlaps(ov: np.ndarray) -> None:
    if np.any(np.abs(ov) < OVERLAP_FLOOR):
        raise SingularOverlapError("walker orthogonal to the trial")


class _BraStack:
    """A stack of bra vectors over a common support, ready to meet walker minors."""

    def __init__(self, mats: np.ndarray, basis: SectorBasis):
        self.L = basis.L
        support = np.any(mats != 0, axis=0)
        rows = np.nonzero(np.any(support, axis=1))[0]
        cols = np.nonzero(np.any(support, axis=0))[0]
        self.up_strings = basis.up_strings[rows]
        self.dn_strings = basis.dn_strings[cols]
        sub = mats[:, rows][:, :, cols].conj()
        self.dense = support.sum() > FockEvaluator.dense_fraction * max(1, rows.size * cols.size)
        iu, idn = np.nonzero(support[np.ix_(rows, cols)])
        self.occ_up = ((self.up_strings[iu][:, None] >> np.arange(self.L)) & 1).astype(float)
        self.occ_dn = ((self.dn_strings[idn][:, None] >> np.arange(self.L)) & 1).astype(float)
        self.iu, self.idn = iu, idn
        if self.dense:
            self.mats = sub  # (nb, nu, nd), conjugated
            self.string_occ_up = ((self.up_strings[:, None] >> np.arange(self.L)) & 1).astype(float)
            self.string_occ_dn = ((self.dn_strings[:, None] >> np.arange(self.L)) & 1).astype(float)
        else:
            self.terms = sub[:, iu, idn]  # (nb, K), conjugated

    def contract(self, up, dn, only_first: bool = False, with_diagonal: bool = False):
        """``<bra_b|walker>`` for every bra; optionally the diagonal density numerators
        ``<psi|n_p,sigma|walker>`` (first bra only)."""
        au = string_minors(up, self.up_strings, self.L)
        ad = string_minors(dn, self.dn_strings, self.L)
        if self.dense:
            mats = self.mats[:1] if only_first else self.mats
            Y = np.einsum("wu,bud->bwd", au, mats)
            vals = np.einsum("bwd,wd->wb", Y, ad)
            if not with_diagonal:
                return vals, None, None
            X = np.einsum("bud,wd->bwu", mats[:1], ad)[0]
            diag_up = np.einsum("wu,up->wp", au * X, self.string_occ_up)
            diag_dn = np.einsum("wd,dp->wp", ad * Y[0], self.string_occ_dn)
            return vals, diag_up, diag_dn
        terms = self.terms[:1] if only_first else self.terms
        T = au[:, self.iu] * ad[:, self.idn]  # (nw, K)
        vals = np.einsum("wk,bk->wb", T, terms)
        if not with_diagonal:
            return vals, None, None
        weighted = T * terms[0]
        return vals, np.einsum("wk,kp->wp", weighted, self.occ_up), np.einsum("wk,kp->wp", weighted, self.occ_dn)


# ---------------------------------------------------------------------------
# Single-walker functional interface
# ---------------------------------------------------------------------------


def _walker_arrays(walker: SlaterDeterminant):
    return walker.up[None], walker.dn[None]


def trial_overlap(trial, walker: SlaterDeterminant) -> complex:
    """``<Psi_T|walker>`` (the walker's log-norm included)."""
    if isinstance(trial, SingleDetTrial):
        from .gaussian import overlap

        return overlap(trial.det, walker)
    basis = enumerate_sector(trial.norb, *trial.nelec)
    psi = trial.to_statevector(basis)
    au = string_minors(walker.up, basis.up_strings, basis.L)
    ad = string_minors(walker.dn, basis.dn_strings, basis.L)
    value = np.einsum("u,ud,d->", au, psi.as_matrix().conj(), ad)
    return complex(value * np.exp(walker.log_norm))


def local_energy(trial, walker: SlaterDeterminant, ham) -> LocalEnergyValue:
    """``<Psi_T|H|walker> / <Psi_T|walker>``."""
    up, dn = _walker_arrays(walker)
    scale = np.exp(walker.log_norm)
    if isinstance(trial, SingleDetTrial):
        ev = SingleDetEvaluator(trial, ham)
        ov, total, e1, e2 = ev.local_energy(up, dn, breakdown=True)
        if abs(ov[0]) < OVERLAP_FLOOR:
            raise SingularOverlapError("walker orthogonal to the trial")
        return LocalEnergyValue(complex(total[0]), complex(ov[0] * scale), complex(e1[0]), complex(e2[0]), ham.ecore)
    ov, e = trial.evaluator(ham).local_energy(up, dn)
    return LocalEnergyValue(complex(e[0]), complex(ov[0] * scale), core=ham.ecore)


def mixed_one_body(trial, walker: SlaterDeterminant, ham) -> np.ndarray:
    """Mixed expectations ``<Psi_T|L_g|walker> / <Psi_T|walker>`` of the Cholesky factors."""
    up, dn = _walker_arrays(walker)
    _, lbar = trial.evaluator(ham).fields(up, dn)
    return lbar[0]


def force_bias(
    trial,
    walker: SlaterDeterminant,
    ham,
    dtau: float,
    mean_shift: np.ndarray | None = None,
    cap: float | None = 1.0,
) -> tuple[np.ndarray, int]:
    """Optimal auxiliary-field shift ``-sqrt(dtau) * (<L_g>_mixed - m_g)``.

    The propagator samples ``exp(i sqrt(dtau) sum_g x_g (L_g - m_g))``, so the
    one-body operator of field ``g`` is ``v_g = i (L_g - m_g)`` and the shift
    equals ``sqrt(dtau) <v_g>`` up to the sign convention. Components whose
    magnitude exceeds ``cap`` are rescaled onto the cap; the number of capped
    components is returned alongside.
    """
    lbar = mixed_one_body(trial, walker, ham)
    m = np.zeros(ham.nchol) if mean_shift is None else np.asarray(mean_shift)
    xbar = -1j * math.sqrt(dtau) * (lbar - m)
    return cap_force_bias(xbar, cap)


def cap_force_bias(xbar: np.ndarray, cap: float | None):
    """Rescale components with ``|xbar| > cap`` onto the cap; returns (xbar, count)."""
    if cap is None:
        return xbar, 0
    mag = np.abs(xbar)
    over = mag > cap
    if not np.any(over):
        return xbar, 0
    xbar = np.where(over, xbar * (cap / np.where(over, mag, 1.0)), xbar)
    return xbar, int(np.count_nonzero(over))


def trial_energy(trial, ham) -> float:
    """Variational energy ``<Psi_T|H|Psi_T> / <Psi_T|Psi_T>``."""
    _check_sector(trial, ham)
    if isinstance(trial, SingleDetTrial):
        return mean_field_energy(ham, trial.det)
    psi = trial.to_statevector()
    H = fockspace.build_sector_matrix(ham, psi.basis)
    a = psi.amplitudes
    e = np.vdot(a, H @ a) / np.vdot(a, a)
    if abs(e.imag) > 1e-10 * max(1.0, abs(e.real)):
        raise ArithmeticError(f"trial energy has imaginary part {e.imag:.3e}")
    return float(e.real)


# ---------------------------------------------------------------------------
# Determinant files
# ---------------------------------------------------------------------------


def load_determinant_file(stream: IO[str] | Iterable[str]) -> MultiDetTrial:
    """Read a determinant list into a normalized :class:`MultiDetTrial`.

    Duplicate occupation pairs, particle-number mismatches and non-finite
    coefficients are rejected. The provenance records the SHA-256 of the
    file content.
    """
    raw = fockspace.read_determinant_file(stream)
    pairs = list(zip(raw.up.tolist(), raw.dn.tolist()))
    if len(set(pairs)) != len(pairs):
        seen = set()
        dup = next(p for p in pairs if p in seen or seen.add(p))
        raise ValueError(
            f"duplicate occupation pair {fockspace.string_to_bits(dup[0], raw.L)} "
            f"{fockspace.string_to_bits(dup[1], raw.L)}"
        )
    norm = math.sqrt(float(np.vdot(raw.coeffs, raw.coeffs).real))
    if norm == 0:
        raise ValueError("all determinant coefficients are zero")
    coeffs = raw.coeffs if abs(norm - 1.0) < 1e-12 else raw.coeffs / norm
    return MultiDetTrial(coeffs, raw.up, raw.dn, raw.L, provenance={"sha256": raw.digest, "input_norm": norm})


def save_trial(stream: IO[str], trial) -> None:
    """Write any trial as a determinant list (statevectors keep their nonzero amplitudes)."""
    if isinstance(trial, MultiDetTrial):
        nup, ndn = trial.nelec
        fockspace.write_determinant_file(stream, trial.L, nup, ndn, trial.coeffs, trial.ups, trial.dns)
        return
    psi = trial.to_statevector()
    keep = np.nonzero(psi.amplitudes)[0]
    nd = len(psi.basis.dn_strings)
    fockspace.write_determinant_file(
        stream,
        psi.basis.L,
        psi.basis.nup,
        psi.basis.ndn,
        psi.amplitudes[keep],
        psi.basis.up_strings[keep // nd],
        psi.basis.dn_strings[keep % nd],
    )


def save_orbital_trial(path, trial: SingleDetTrial) -> None:
    """Store a single-determinant trial as its orbital matrices (``.npz``)."""
    if not isinstance(trial, SingleDetTrial):
        raise TypeError("only single-determinant trials have an orbital representation")
    with open(path, "wb") as fh:
        np.savez(fh, up=trial.det.up, dn=trial.det.dn)


def load_orbital_trial(path) -> SingleDetTrial:
    """Inverse of :func:`save_orbital_trial`; orbitals are re-orthonormalized."""
    with open(path, "rb") as fh:
        data = fh.read()
    with np.load(io.BytesIO(data)) as z:
        if "up" not in z or "dn" not in z:
            raise ValueError(f"{path}: orbital file needs arrays 'up' and 'dn'")
        up, dn = z["up"], z["dn"]
    if up.ndim != 2 or dn.ndim != 2 or up.shape[0] != dn.shape[0]:
        raise ValueError(f"{path}: orbital arrays must be (M, N_up) and (M, N_dn)")
    if not (np.all(np.isfinite(up)) and np.all(np.isfinite(dn))):
        raise ValueError(f"{path}: non-finite orbital coefficients")
    det = reorthonormalize(SlaterDeterminant(up, dn))
    det = SlaterDeterminant(det.up, det.dn)
    return SingleDetTrial(det, provenance={"sha256": hashlib.sha256(data).hexdigest()})
