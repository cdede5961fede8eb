"""Exact diagonalization in fixed-particle-number sectors.

Ordering convention
-------------------
Spin-orbital modes are ordered with all spin-up sites first and all spin-down
sites after them, each block in ascending site index. A basis state with
up-string ``u`` and down-string ``d`` is

    |u, d> = prod_{i in u, ascending} a+_{i up}  prod_{j in d, ascending} a+_{j dn} |0>.

Bit ``i`` of a string marks site ``i``. States are indexed as
``index(u, d) = rank(u) * n_dn_strings + rank(d)`` where strings are sorted as
integers. Because every down-spin operator passes an even number of up-spin
operators when acting on ``|u, d>``, spin-resolved one-body operators factor
into Kronecker products of single-spin matrices without extra signs.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import IO, Iterable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .gaussian import SlaterDeterminant

__all__ = [
    "ORDERING",
    "DEFAULT_DIMENSION_CAP",
    "SectorBasis",
    "Statevector",
    "enumerate_sector",
    "string_operator",
    "one_body_operator",
    "build_sector_matrix",
    "ground_state",
    "embed_determinant",
    "string_minors",
    "fidelity",
    "one_body_density",
    "truncate_statevector",
    "bits_to_string",
    "string_to_bits",
    "write_determinant_file",
    "read_determinant_file",
    "DeterminantList",
]

ORDERING = "up block then down block, ascending site index"
DEFAULT_DIMENSION_CAP = 10**6


# ---------------------------------------------------------------------------
# Bases
# ---------------------------------------------------------------------------


def _strings(L: int, n: int) -> np.ndarray:
    out = sorted(sum(1 << i for i in c) for c in combinations(range(L), n))
    return np.array(out, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Occupation-number basis of the ``(N_up, N_dn)`` sector on ``L`` orbitals."""

    L: int
    nup: int
    ndn: int
    up_strings: np.ndarray
    dn_strings: np.ndarray
    _up_index: dict = field(repr=False, default_factory=dict)
    _dn_index: dict = field(repr=False, default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.up_strings) * len(self.dn_strings)

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.up_strings), len(self.dn_strings))

    def __len__(self) -> int:
        return self.size

    def up_rank(self, u: int) -> int:
        return self._up_index[int(u)]

    def dn_rank(self, d: int) -> int:
        return self._dn_index[int(d)]

    def index(self, u: int, d: int) -> int:
        """Position of the state ``|u, d>``; raises ``KeyError`` outside the sector."""
        return self._up_index[int(u)] * len(self.dn_strings) + self._dn_index[int(d)]

    def state(self, idx: int) -> tuple[int, int]:
        iu, idn = divmod(int(idx), len(self.dn_strings))
        return int(self.up_strings[iu]), int(self.dn_strings[idn])

    def compatible(self, other: "SectorBasis") -> bool:
        return (self.L, self.nup, self.ndn) == (other.L, other.nup, other.ndn)


def enumerate_sector(L: int, nup: int, ndn: int, cap: int = DEFAULT_DIMENSION_CAP) -> SectorBasis:
    """All occupation strings of the sector, sorted as integers per spin."""
    if L < 0 or not (0 <= nup <= L and 0 <= ndn <= L):
        raise ValueError(f"invalid sector L={L}, N_up={nup}, N_dn={ndn}")
    if L > 62:
        raise ValueError("at most 62 orbitals fit the integer string encoding")
    dim = math.comb(L, nup) * math.comb(L, ndn)
    if dim > cap:
        raise ValueError(f"sector dimension {dim} exceeds the cap {cap}")
    up = _strings(L, nup)
    dn = _strings(L, ndn)
    return SectorBasis(
        L, nup, ndn, up, dn,
        {int(s): i for i, s in enumerate(up)},
        {int(s): i for i, s in enumerate(dn)},
    )


def string_to_bits(s: int, L: int) -> str:
    """Little-endian 0/1 text: character ``k`` is site ``k``."""
    return "".join("1" if (s >> k) & 1 else "0" for k in range(L))


def bits_to_string(bits: str) -> int:
    if not bits or set(bits) - {"0", "1"}:
        raise ValueError(f"invalid occupation bitstring {bits!r}")
    return sum(1 << k for k, c in enumerate(bits) if c == "1")


def occupied_rows(strings: np.ndarray, L: int) -> np.ndarray:
    """Row indices of occupied sites for each string, shape (n_strings, N)."""
    strings = np.asarray(strings, dtype=np.int64)
    if strings.size == 0:
        return np.zeros((0, 0), dtype=np.int64)
    bits = (strings[:, None] >> np.arange(L)) & 1
    n = int(bits[0].sum())
    rows = np.nonzero(bits)[1].reshape(len(strings), n)
    return rows


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


def _sign_below(s: int, k: int) -> int:
    return -1 if bin(s & ((1 << k) - 1)).count("1") % 2 else 1


def string_operator(strings: np.ndarray, p: int, q: int) -> sp.csr_matrix:
    """Single-spin matrix of ``a+_p a_q`` on a list of same-length strings."""
    index = {int(s): i for i, s in enumerate(strings)}
    rows, cols, vals = [], [], []
    for j, s in enumerate(strings):
        s = int(s)
        if not (s >> q) & 1:
            continue
        sign = _sign_below(s, q)
        t = s ^ (1 << q)
        if (t >> p) & 1:
            continue
        sign *= _sign_below(t, p)
        t |= 1 << p
        rows.append(index[t])
        cols.append(j)
        vals.append(sign)
    n = len(strings)
    return sp.csr_matrix((np.array(vals, dtype=float), (rows, cols)), shape=(n, n))


def one_body_operator(strings: np.ndarray, L: int, matrix: np.ndarray) -> sp.csr_matrix:
    """Single-spin matrix of ``sum_pq matrix[p, q] a+_p a_q``."""
    n = len(strings)
    out = sp.csr_matrix((n, n), dtype=np.result_type(matrix, float))
    for p in range(L):
        for q in range(L):
            if matrix[p, q] != 0:
                out = out + matrix[p, q] * string_operator(strings, p, q)
    return out.tocsr()


def build_sector_matrix(ham, basis: SectorBasis) -> sp.csr_matrix:
    """Sparse matrix of ``ham`` in the sector ``basis``.

    With single-spin excitation matrices ``e_pq`` and
    ``D_pq = sum_rs (pq|rs) e_rs`` the Hamiltonian is

        E_core + sum_sigma [K e_sigma + 1/2 sum_pq e_pq D_pq]_sigma
               + sum_pq e^up_pq (x) D^dn_pq,

    where ``K = h - 1/2 sum_r (pr|rq)``.
    """
    if ham.norb != basis.L:
        raise ValueError(f"Hamiltonian has {ham.norb} orbitals, basis has {basis.L}")
    L = basis.L
    eri = np.asarray(ham.eri)
    K = ham.h1 - 0.5 * np.einsum("prrq->pq", eri)
    pairs = [(p, q) for p in range(L) for q in range(L)]
    blocks = {}
    for spin, strings in (("up", basis.up_strings), ("dn", basis.dn_strings)):
        n = len(strings)
        e = {pq: string_operator(strings, *pq) for pq in pairs}
        one = sp.csr_matrix((n, n))
        for pq in pairs:
            if K[pq] != 0:
                one = one + K[pq] * e[pq]
        D = {}
        for p, q in pairs:
            acc = sp.csr_matrix((n, n))
            for r, s_ in pairs:
                v = eri[p, q, r, s_]
                if v != 0:
                    acc = acc + v * e[(r, s_)]
            D[(p, q)] = acc.tocsr()
        same = sp.csr_matrix((n, n))
        for pq in pairs:
            if D[pq].nnz and e[pq].nnz:
                same = same + 0.5 * (e[pq] @ D[pq])
        blocks[spin] = (one + same, e, D)
    nu, nd = basis.shape
    Iu = sp.identity(nu, format="csr")
    Id = sp.identity(nd, format="csr")
    H = sp.kron(blocks["up"][0], Id) + sp.kron(Iu, blocks["dn"][0])
    e_up = blocks["up"][1]
    D_dn = blocks["dn"][2]
    for pq in pairs:
        if e_up[pq].nnz and D_dn[pq].nnz:
            H = H + sp.kron(e_up[pq], D_dn[pq])
    H = H + ham.ecore * sp.identity(basis.size)
    H = sp.csr_matrix(H)
    H.sum_duplicates()
    H.eliminate_zeros()
    return H


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Statevector:
    """Amplitudes of a state in a :class:`SectorBasis`."""

    amplitudes: np.ndarray
    basis: SectorBasis
    normalized: bool = False

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).ravel()
        if amps.size != self.basis.size:
            raise ValueError(f"{amps.size} amplitudes for a basis of size {self.basis.size}")
        if not np.all(np.isfinite(amps)):
            raise ValueError("non-finite amplitudes")
        if self.normalized and abs(np.linalg.norm(amps) - 1.0) > 1e-12:
            raise ValueError("statevector flagged normalized but its norm differs from 1")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "Statevector":
        n = self.norm
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return Statevector(self.amplitudes / n, self.basis, True)

    def inner(self, other: "Statevector") -> complex:
        """``<self|other>``."""
        if not self.basis.compatible(other.basis):
            raise ValueError("statevectors live in different sectors")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def as_matrix(self) -> np.ndarray:
        """Amplitudes arranged as (up strings) x (down strings)."""
        return self.amplitudes.reshape(self.basis.shape)

    def to_statevector(self, basis: SectorBasis | None = None) -> "Statevector":
        if basis is not None and not basis.compatible(self.basis):
            raise ValueError("sector mismatch")
        return self


def string_minors(orbitals: np.ndarray, strings: np.ndarray, L: int) -> np.ndarray:
    """``det(orbitals[rows(s), :])`` for every string ``s``.

    ``orbitals`` may carry leading batch axes, shape (..., L, N); the result
    has shape (..., n_strings).
    """
    orbitals = np.asarray(orbitals)
    rows = occupied_rows(strings, L)
    if rows.shape[1] != orbitals.shape[-1]:
        raise ValueError("string occupation does not match the number of orbitals")
    if rows.shape[1] == 0:
        return np.ones(orbitals.shape[:-2] + (len(strings),), dtype=orbitals.dtype)
    sub = orbitals[..., rows, :]  # (..., n_strings, N, N)
    return np.linalg.det(sub)


def embed_determinant(det: SlaterDeterminant, basis: SectorBasis) -> Statevector:
    """Fock-space amplitudes of a Slater determinant.

    The amplitude of ``|u, d>`` is ``det(Phi_up[u, :]) det(Phi_dn[d, :])``
    times ``exp(log_norm)``, rows taken in ascending site order.
    """
    if det.norb != basis.L or det.nelec != (basis.nup, basis.ndn):
        raise ValueError(f"determinant with {det.norb} orbitals / {det.nelec} electrons is not in the sector")
    au = string_minors(det.up, basis.up_strings, basis.L)
    ad = string_minors(det.dn, basis.dn_strings, basis.L)
    amps = np.exp(det.log_norm) * np.outer(au, ad).ravel()
    return Statevector(amps, basis)


def one_body_density(psi: Statevector) -> tuple[np.ndarray, np.ndarray]:
    """Spin-resolved ``rho_sigma[p, q] = <psi|a+_p,sigma a_q,sigma|psi> / <psi|psi>``."""
    basis = psi.basis
    C = psi.as_matrix()
    n2 = float(np.vdot(C, C).real)
    out = []
    for spin, strings in (("up", basis.up_strings), ("dn", basis.dn_strings)):
        rho = np.zeros((basis.L, basis.L), dtype=complex)
        for p in range(basis.L):
            for q in range(basis.L):
                e = string_operator(strings, p, q)
                if e.nnz == 0:
                    continue
                moved = e @ C if spin == "up" else (e @ C.T).T
                rho[p, q] = np.vdot(C, moved) / n2
        out.append(rho)
    return out[0], out[1]


def _as_statevector(obj, basis: SectorBasis) -> Statevector:
    if isinstance(obj, Statevector):
        if not obj.basis.compatible(basis):
            raise ValueError("sector mismatch")
        return obj
    if isinstance(obj, SlaterDeterminant):
        return embed_determinant(obj, basis)
    if hasattr(obj, "to_statevector"):
        return obj.to_statevector(basis)
    raise TypeError(f"cannot express {type(obj).__name__} as a statevector")


def fidelity(trial, psi0: Statevector) -> float:
    """``|<trial|psi0>|^2 / (<trial|trial><psi0|psi0>)``."""
    t = _as_statevector(trial, psi0.basis)
    nt = np.vdot(t.amplitudes, t.amplitudes).real
    n0 = np.vdot(psi0.amplitudes, psi0.amplitudes).real
    if nt == 0 or n0 == 0:
        raise ValueError("fidelity of a zero vector is undefined")
    return float(abs(np.vdot(t.amplitudes, psi0.amplitudes)) ** 2 / (nt * n0))


# ---------------------------------------------------------------------------
# Ground state
# ---------------------------------------------------------------------------


def ground_state(
    ham,
    basis: SectorBasis | None = None,
    dense_limit: int = 2000,
    seed: int = 1234,
    tol: float = 1e-12,
    maxiter: int | None = None,
    residual_tol: float = 1e-9,
) -> tuple[float, Statevector]:
    """Lowest eigenpair of ``ham`` in a sector.

    Dense ``eigh`` is used up to ``dense_limit`` states, implicitly restarted
    Lanczos (ARPACK) above. The eigenvector is normalized with its
    largest-magnitude amplitude made real and positive.
    """
    if basis is None:
        basis = enumerate_sector(ham.norb, ham.nup, ham.ndn)
    H = build_sector_matrix(ham, basis)
    n = basis.size
    if n <= dense_limit:
        w, v = np.linalg.eigh(H.toarray())
        e0, vec = float(w[0]), v[:, 0].astype(complex)
    else:
        v0 = np.random.default_rng(seed).standard_normal(n)
        try:
            w, v = spla.eigsh(H, k=1, which="SA", v0=v0, tol=tol, maxiter=maxiter)
        except spla.ArpackNoConvergence as exc:
            raise RuntimeError(f"Lanczos eigensolver did not converge: {exc}") from exc
        e0, vec = float(w[0]), v[:, 0].astype(complex)
    vec /= np.linalg.norm(vec)
    k = int(np.argmax(np.abs(vec)))
    vec *= abs(vec[k]) / vec[k]
    resid = np.linalg.norm(H @ vec - e0 * vec)
    if resid > residual_tol * max(1.0, abs(e0)):
        raise RuntimeError(f"ground-state residual {resid:.3e} above tolerance")
    return e0, Statevector(vec, basis, True)


# ---------------------------------------------------------------------------
# Truncation and determinant files
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DeterminantList:
    """Raw content of a determinant-list file."""

    L: int
    nup: int
    ndn: int
    coeffs: np.ndarray
    up: np.ndarray
    dn: np.ndarray
    digest: str = ""


def truncate_statevector(psi: Statevector, threshold: float | None = None, top_k: int | None = None):
    """Multi-determinant trial from the large amplitudes of ``psi``.

    Exactly one of ``threshold`` (keep ``|c| > threshold``; amplitudes exactly
    zero are dropped even at threshold 0) and ``top_k`` (keep the ``k``
    largest, ties broken by basis index) must be given. Kept coefficients are
    renormalized; the rule and the discarded weight go into the trial's
    provenance.
    """
    from .trials import MultiDetTrial

    if (threshold is None) == (top_k is None):
        raise ValueError("give exactly one of threshold or top_k")
    amps = psi.amplitudes
    total = float(np.vdot(amps, amps).real)
    if total == 0:
        raise ValueError("cannot truncate the zero vector")
    mags = np.abs(amps) / math.sqrt(total)
    if threshold is not None:
        if threshold < 0:
            raise ValueError("threshold must be non-negative")
        keep = np.nonzero((mags > threshold) & (mags > 0))[0]
        rule = {"rule": "threshold", "threshold": float(threshold)}
    else:
        if top_k < 1:
            raise ValueError("top_k must be positive")
        order = np.lexsort((np.arange(amps.size), -mags))
        keep = np.sort(order[:top_k])
        keep = keep[mags[keep] > 0]
        rule = {"rule": "top_k", "top_k": int(top_k)}
    if keep.size == 0:
        raise ValueError("truncation rule selects no determinants")
    kept = amps[keep]
    kept_weight = float(np.vdot(kept, kept).real) / total
    coeffs = kept / math.sqrt(float(np.vdot(kept, kept).real))
    ups = psi.basis.up_strings[keep // len(psi.basis.dn_strings)]
    dns = psi.basis.dn_strings[keep % len(psi.basis.dn_strings)]
    provenance = {**rule, "discarded_weight": 1.0 - kept_weight, "ndets": int(keep.size)}
    return MultiDetTrial(coeffs, ups, dns, psi.basis.L, provenance=provenance)


def write_determinant_file(stream: IO[str], L: int, nup: int, ndn: int, coeffs, ups, dns) -> None:
    """Write ``L N_up N_dn`` then ``re im up_bits dn_bits`` per determinant.

    Coefficients are printed with ``repr`` precision so a round trip is exact.
    """
    stream.write(f"{L} {nup} {ndn}\n")
    for c, u, d in zip(coeffs, ups, dns):
        c = complex(c)
        stream.write(f"{c.real!r} {c.imag!r} {string_to_bits(int(u), L)} {string_to_bits(int(d), L)}\n")


def read_determinant_file(stream: IO[str] | Iterable[str]) -> DeterminantList:
    """Parse a determinant-list file without normalizing or deduplicating."""
    lines = [ln.split("#", 1)[0].strip() for ln in stream]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError("empty determinant file")
    digest = hashlib.sha256("\n".join(lines).encode()).hexdigest()
    head = lines[0].split()
    try:
        L, nup, ndn = (int(x) for x in head)
    except ValueError:
        raise ValueError(f"bad header {lines[0]!r}; expected 'L N_up N_dn'") from None
    if not (0 <= nup <= L and 0 <= ndn <= L):
        raise ValueError(f"inconsistent header {lines[0]!r}")
    coeffs, ups, dns = [], [], []
    for k, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if len(parts) != 4:
            raise ValueError(f"record {k}: expected 'coeff_re coeff_im up_bits dn_bits'")
        re_, im_ = float(parts[0]), float(parts[1])
        if not (math.isfinite(re_) and math.isfinite(im_)):
            raise ValueError(f"record {k}: non-finite coefficient")
        if len(parts[2]) != L or len(parts[3]) != L:
            raise ValueError(f"record {k}: bitstrings must have length {L}")
        u, d = bits_to_string(parts[2]), bits_to_string(parts[3])
        if bin(u).count("1") != nup or bin(d).count("1") != ndn:
            raise ValueError(f"record {k}: particle numbers differ from the header")
        coeffs.append(complex(re_, im_))
        ups.append(u)
        dns.append(d)
    if not coeffs:
        raise ValueError("determinant file lists no determinants")
    return DeterminantList(L, nup, ndn, np.array(coeffs), np.array(ups, dtype=np.int64),
                           np.array(dns, dtype=np.int64), digest)
