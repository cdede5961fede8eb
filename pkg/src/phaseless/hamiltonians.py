"""Problem Hamiltonians: Hubbard chains, multi-orbital coupling tables, FCIDUMP integrals.

Every Hamiltonian is reduced to the same form,

    H = E_core + sum_pq h_pq E_pq + 1/2 sum_pqrs (pq|rs) (E_pq E_rs - delta_qr E_ps),

with spin-summed excitation operators ``E_pq`` and real chemists'-notation
integrals. The two-body tensor is additionally stored as Cholesky factors
``L[g, p, q]`` with ``sum_g L[g,p,q] L[g,r,s] ~ (pq|rs)``, which is the form the
auxiliary-field propagator consumes.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

__all__ = [
    "HubbardChainParams",
    "CUBR2_CHAIN",
    "Hamiltonian",
    "LatticeHamiltonian",
    "AbInitioHamiltonian",
    "GeneralizedHubbardTable",
    "TableReduction",
    "build_hubbard_chain",
    "reduce_generalized_table",
    "read_coupling_table",
    "read_fcidump",
    "write_fcidump",
    "cholesky_factorize_eri",
    "FcidumpError",
]


class FcidumpError(ValueError):
    """Malformed or unsupported FCIDUMP input."""


# ---------------------------------------------------------------------------
# Hubbard chain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HubbardChainParams:
    """Parameters of the single-band chain with up to third-neighbour hopping.

    Energies are in eV. ``boundary`` is ``"open"`` or ``"periodic"``.
    """

    t_x: float = 0.0
    t_xx: float = 0.0
    t_xxx: float = 0.0
    U: float = 0.0
    L: int = 2
    boundary: str = "open"

    def __post_init__(self):
        values = (self.t_x, self.t_xx, self.t_xxx, self.U)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite Hubbard parameter in {values}")
        if int(self.L) != self.L or self.L < 2:
            raise ValueError(f"chain length must be an integer >= 2, got {self.L}")
        if self.U < 0:
            raise ValueError(f"on-site repulsion must be non-negative, got {self.U}")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"boundary must be 'open' or 'periodic', got {self.boundary!r}")

    @property
    def hoppings(self) -> tuple[float, float, float]:
        return (self.t_x, self.t_xx, self.t_xxx)

    def interaction_ratio(self) -> float:
        """U / max|t|, the strong-coupling indicator."""
        tmax = max(abs(t) for t in self.hoppings)
        return math.inf if tmax == 0 else self.U / tmax

    def with_length(self, L: int) -> "HubbardChainParams":
        return HubbardChainParams(self.t_x, self.t_xx, self.t_xxx, self.U, L, self.boundary)


#: Cu d(x2-y2) chain of CuBr2 (eV), hoppings kept up to third neighbour.
CUBR2_CHAIN = HubbardChainParams(t_x=0.0478, t_xx=0.1570, t_xxx=0.0339, U=4.15, L=6)


# ---------------------------------------------------------------------------
# Generic second-quantized Hamiltonian
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """Real spin-restricted Hamiltonian with a fixed particle sector.

    Attributes
    ----------
    h1 : (M, M) ndarray
        One-body matrix.
    eri : (M, M, M, M) ndarray
        Two-electron integrals (pq|rs), full 8-fold symmetric tensor.
    chol : (G, M, M) ndarray
        Cholesky factors of ``eri``.
    ecore : float
        Constant energy.
    nup, ndn : int
        Electrons per spin in the target sector.
    unit : str
        Energy unit, ``"eV"`` or ``"Hartree"``.
    """

    h1: np.ndarray
    eri: np.ndarray
    chol: np.ndarray
    ecore: float = 0.0
    nup: int = 0
    ndn: int = 0
    unit: str = "Hartree"
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("h1", "eri", "chol"):
            object.__setattr__(self, name, np.array(getattr(self, name), copy=True))
        M = self.h1.shape[0]
        if self.h1.ndim != 2 or self.h1.shape != (M, M):
            raise ValueError("one-body matrix must be square")
        if np.iscomplexobj(self.h1) or np.iscomplexobj(self.eri):
            raise ValueError("only real integrals are supported")
        if not np.allclose(self.h1, self.h1.T, atol=1e-12):
            raise ValueError("one-body matrix is not symmetric")
        if self.eri.shape != (M, M, M, M):
            raise ValueError(f"ERI tensor has shape {self.eri.shape}, expected {(M,) * 4}")
        if self.chol.ndim != 3 or self.chol.shape[1:] != (M, M):
            raise ValueError("Cholesky factors must have shape (G, M, M)")
        if not (0 <= self.nup <= M and 0 <= self.ndn <= M):
            raise ValueError(f"sector ({self.nup}, {self.ndn}) does not fit {M} orbitals")
        for arr in (self.h1, self.eri, self.chol):
            arr.setflags(write=False)

    @property
    def norb(self) -> int:
        return self.h1.shape[0]

    @property
    def nchol(self) -> int:
        return self.chol.shape[0]

    @property
    def nelec(self) -> tuple[int, int]:
        return (self.nup, self.ndn)

    def with_sector(self, nup: int, ndn: int) -> "Hamiltonian":
        return type(self)(**{**self.__dict__, "nup": nup, "ndn": ndn})

    def exchange_corrected_h1(self) -> np.ndarray:
        """``h_pq - 1/2 sum_r (pr|rq)``: the one-body part left after writing
        the interaction as ``1/2 sum_g (sum_pq L^g_pq E_pq)^2``."""
        return self.h1 - 0.5 * np.einsum("prrq->pq", self.eri)

    def cholesky_residual(self) -> float:
        M = self.norb
        rebuilt = np.einsum("gpq,grs->pqrs", self.chol, self.chol) if self.nchol else 0.0
        return float(np.max(np.abs(self.eri - rebuilt))) if M else 0.0


@dataclass(frozen=True, eq=False)
class LatticeHamiltonian(Hamiltonian):
    """Hamiltonian of a Hubbard chain; keeps the generating parameters."""

    params: HubbardChainParams | None = None


@dataclass(frozen=True, eq=False)
class AbInitioHamiltonian(Hamiltonian):
    """Molecular Hamiltonian read from integral files (energies in Hartree)."""


def build_hubbard_chain(
    params: HubbardChainParams, nup: int | None = None, ndn: int | None = None
) -> LatticeHamiltonian:
    """Hubbard chain with the on-site term written out as -U/2 per spin-orbital.

    Hopping amplitude ``t_k`` couples sites ``i`` and ``i+k`` with matrix element
    ``-t_k``. Open chains drop bonds that would wrap around. The default sector
    is half filling with zero spin.
    """
    if not isinstance(params, HubbardChainParams):
        raise TypeError("params must be a HubbardChainParams")
    L = int(params.L)
    h1 = np.zeros((L, L))
    for dist, t in enumerate(params.hoppings, start=1):
        if t == 0.0:
            continue
        for i in range(L):
            j = i + dist
            if j >= L:
                if params.boundary == "open" or dist >= L:
                    continue
                j %= L
                if j == i:
                    continue
            h1[i, j] -= t
            h1[j, i] -= t
    h1 -= 0.5 * params.U * np.eye(L)
    eri = np.zeros((L, L, L, L))
    chol = np.zeros((L if params.U > 0 else 0, L, L))
    for i in range(L):
        eri[i, i, i, i] = params.U
        if params.U > 0:
            chol[i, i, i] = math.sqrt(params.U)
    nup = L // 2 if nup is None else nup
    ndn = L // 2 if ndn is None else ndn
    return LatticeHamiltonian(
        h1=h1,
        eri=eri,
        chol=chol,
        ecore=0.0,
        nup=nup,
        ndn=ndn,
        unit="eV",
        label=f"hubbard-L{L}-{params.boundary}",
        params=params,
    )


# ---------------------------------------------------------------------------
# Multi-orbital coupling tables
# ---------------------------------------------------------------------------


@dataclass
class GeneralizedHubbardTable:
    """Transfer, direct and exchange integrals of a generalized Hubbard model.

    ``transfer`` maps ``(m, m', (Rx, Ry, Rz))`` to ``t_mm'(R)``; ``direct`` and
    ``exchange`` map ``(m, m')`` to the on-site ``U_mm'(0)`` and ``J_mm'(0)``.
    Only the static limit of the interactions is represented.
    """

    transfer: dict = field(default_factory=dict)
    direct: dict = field(default_factory=dict)
    exchange: dict = field(default_factory=dict)
    unit: str = "eV"

    def hopping(self, m: int, mp: int, R: tuple[int, int, int]) -> complex:
        """``t_mm'(R)``, completed through ``t_mm'(R) = conj(t_m'm(-R))``."""
        R = tuple(R)
        if (m, mp, R) in self.transfer:
            return self.transfer[(m, mp, R)]
        neg = tuple(-x for x in R)
        if (mp, m, neg) in self.transfer:
            return np.conj(self.transfer[(mp, m, neg)])
        return 0.0

    def validate(self, atol: float = 1e-10) -> None:
        for (m, mp, R), t in self.transfer.items():
            neg = tuple(-x for x in R)
            partner = self.transfer.get((mp, m, neg))
            if partner is not None and abs(t - np.conj(partner)) > atol:
                raise ValueError(f"transfer integrals at R={R} and {neg} are not hermitian partners")
        for (m, mp), u in self.direct.items():
            if m == mp and (m, m) in self.exchange and abs(u - self.exchange[(m, m)]) > atol:
                raise ValueError(f"U_{m}{m}(0) != J_{m}{m}(0); Pauli term would not cancel")

    def orbitals(self) -> list[int]:
        idx = {m for m, _, _ in self.transfer} | {mp for _, mp, _ in self.transfer}
        idx |= {m for m, _ in self.direct} | {mp for _, mp in self.direct}
        return sorted(idx)


_SECTION = re.compile(r"^\[(\w+)\]$")


def read_coupling_table(stream: IO[str] | Iterable[str]) -> GeneralizedHubbardTable:
    """Parse a coupling-table file.

    Layout (``#`` starts a comment)::

        unit = eV
        [t]
        m m' Rx Ry Rz value
        [U]
        m m' value
        [J]
        m m' value
    """
    table = GeneralizedHubbardTable()
    section = None
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            section = m.group(1).lower()
            if section not in ("t", "u", "j"):
                raise ValueError(f"line {lineno}: unknown section [{m.group(1)}]")
            continue
        if section is None:
            key, sep, value = line.partition("=")
            if not sep or key.strip().lower() != "unit":
                raise ValueError(f"line {lineno}: expected 'unit = ...' header, got {line!r}")
            table.unit = value.strip()
            continue
        parts = line.split()
        try:
            if section == "t":
                if len(parts) != 6:
                    raise ValueError
                m1, m2, rx, ry, rz = (int(p) for p in parts[:5])
                value = float(parts[5])
                table.transfer[(m1, m2, (rx, ry, rz))] = value
            else:
                if len(parts) != 3:
                    raise ValueError
                m1, m2 = int(parts[0]), int(parts[1])
                value = float(parts[2])
                (table.direct if section == "u" else table.exchange)[(m1, m2)] = value
        except ValueError:
            raise ValueError(f"line {lineno}: malformed [{section}] record {line!r}") from None
        if not math.isfinite(value):
            raise ValueError(f"line {lineno}: non-finite value")
    table.validate()
    return table


_CHAIN_NAMES = {1: "t_x", 2: "t_xx", 3: "t_xxx"}


def _coupling_name(R: tuple[int, int, int]) -> str:
    rx, ry, rz = (abs(x) for x in R)
    if ry == rz == 0:
        return "t_" + "x" * rx if rx else "mu"
    if rx == rz == 0 and ry == 1:
        return "t_y"
    if rx == ry == 0 and rz == 1:
        return "t_z"
    if rz == 0 and rx == ry == 1:
        return "t_xy"
    return f"t({R[0]}{R[1]}{R[2]})"


@dataclass
class TableReduction:
    """Result of mapping a coupling table onto the chain model."""

    params: HubbardChainParams
    dropped: dict[str, float]
    onsite: float
    noncontiguous: bool = False
    diagnostics: list[str] = field(default_factory=list)


def reduce_generalized_table(
    table: GeneralizedHubbardTable,
    threshold: float,
    L: int = 6,
    boundary: str = "open",
) -> TableReduction:
    """Keep chain hoppings above ``threshold`` and report what was discarded.

    The on-site energy ``t(000)`` is reported in ``onsite`` but not put into the
    model. A coupling outside the first three chain neighbours that exceeds the
    threshold raises, since the chain model has no place for it. Keeping a longer
    hopping while a shorter one is dropped is allowed but flagged.
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    orbs = table.orbitals()
    if len(orbs) > 1:
        raise ValueError(f"single-orbital table required, found orbitals {orbs}")
    m = orbs[0] if orbs else 1
    kept = {1: 0.0, 2: 0.0, 3: 0.0}
    dropped: dict[str, float] = {}
    onsite = 0.0
    seen = set()
    for (m1, m2, R), _ in sorted(table.transfer.items()):
        key = tuple(R)
        if key in seen or tuple(-x for x in key) in seen:
            continue
        seen.add(key)
        t = float(np.real(table.hopping(m, m, key)))
        if key == (0, 0, 0):
            onsite = t
            continue
        name = _coupling_name(key)
        on_chain = key[1] == key[2] == 0 and abs(key[0]) in kept
        if abs(t) > threshold:
            if not on_chain:
                raise ValueError(
                    f"coupling {name} = {t} exceeds threshold {threshold} but the chain model "
                    "only has first- to third-neighbour hopping"
                )
            kept[abs(key[0])] = t
        else:
            dropped[name] = t
    U = float(table.direct.get((m, m), 0.0))
    params = HubbardChainParams(kept[1], kept[2], kept[3], U, L, boundary)
    present = [abs(v) > 0 for v in (kept[1], kept[2], kept[3])]
    noncontiguous = any(not present[i] and any(present[i + 1 :]) for i in range(3))
    diagnostics = []
    if noncontiguous:
        short = [_CHAIN_NAMES[i + 1] for i in range(3) if not present[i]]
        msg = (
            f"non-contiguous hopping range at threshold {threshold}: {', '.join(short)} dropped "
            "while a longer-range hopping is kept"
        )
        diagnostics.append(msg)
        warnings.warn(msg, stacklevel=2)
    return TableReduction(params, dropped, onsite, noncontiguous, diagnostics)


# ---------------------------------------------------------------------------
# Cholesky factorization
# ---------------------------------------------------------------------------


def cholesky_factorize_eri(eri: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Pivoted incomplete Cholesky decomposition of ``(pq|rs)``.

    Returns factors ``L[g, p, q]``. Stops once the largest remaining diagonal
    element is below ``tol``, which bounds every reconstruction error by ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = eri.shape[0]
    V = np.asarray(eri, dtype=float).reshape(M * M, M * M)
    diag = V.diagonal().copy()
    if diag.size and diag.min() < -tol:
        raise ValueError(f"negative ERI diagonal {diag.min():.3e}: tensor is not positive semidefinite")
    vectors: list[np.ndarray] = []
    while len(vectors) < M * M:
        k = int(np.argmax(diag)) if diag.size else 0
        if not diag.size or diag[k] <= tol:
            break
        col = V[:, k].copy()
        for v in vectors:
            col -= v * v[k]
        vec = col / math.sqrt(diag[k])
        vectors.append(vec)
        diag -= vec * vec
    if not vectors:
        return np.zeros((0, M, M))
    return np.array(vectors).reshape(-1, M, M)


# ---------------------------------------------------------------------------
# FCIDUMP
# ---------------------------------------------------------------------------

_NAMELIST_KEY = re.compile(r"([A-Za-z_]\w*)\s*=\s*([^=]*?)\s*,?\s*(?=[A-Za-z_]\w*\s*=|$)")


def _parse_header(text: str) -> dict[str, str]:
    body = re.sub(r"&FCI", "", text, flags=re.IGNORECASE)
    body = re.sub(r"(&END|/)\s*$", "", body.strip(), flags=re.IGNORECASE)
    body = " ".join(body.split())
    out = {}
    for key, value in _NAMELIST_KEY.findall(body):
        out[key.upper()] = value.strip().rstrip(",")
    return out


def read_fcidump(stream: IO[str] | Iterable[str], chol_tol: float = 1e-10) -> Hamiltonian:
    """Read a real, 8-fold symmetric FCIDUMP and Cholesky-factorize its ERIs."""
    lines = iter(stream)
    header = []
    for line in lines:
        header.append(line)
        if re.search(r"(&END|^\s*/\s*$)", line, flags=re.IGNORECASE):
            break
    else:
        raise FcidumpError("FCIDUMP header is not terminated by &END or /")
    head = "".join(header)
    if "&FCI" not in head.upper():
        raise FcidumpError("missing &FCI namelist")
    fields_ = _parse_header(head)
    try:
        norb = int(fields_["NORB"])
        nelec = int(fields_["NELEC"])
    except (KeyError, ValueError):
        raise FcidumpError(f"header lacks integer NORB/NELEC: {fields_}") from None
    ms2 = int(fields_.get("MS2", "0") or 0)
    if fields_.get("UHF", "").strip(".").upper() in ("TRUE", "T"):
        raise FcidumpError("unrestricted FCIDUMP files are not supported")
    if norb <= 0 or nelec < 0 or (nelec + ms2) % 2 or abs(ms2) > nelec:
        raise FcidumpError(f"inconsistent NORB/NELEC/MS2 = {norb}/{nelec}/{ms2}")
    nup, ndn = (nelec + ms2) // 2, (nelec - ms2) // 2
    if nup > norb or ndn > norb:
        raise FcidumpError("more electrons per spin than orbitals")

    h1 = np.zeros((norb, norb))
    eri = np.zeros((norb,) * 4)
    ecore = 0.0
    for lineno, line in enumerate(lines, start=len(header) + 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 5 or "(" in parts[0]:
            raise FcidumpError(f"line {lineno}: expected 'value i j k l', got {line.strip()!r}")
        try:
            value = float(parts[0].replace("D", "E").replace("d", "e"))
            i, j, k, l = (int(p) for p in parts[1:])
        except ValueError:
            raise FcidumpError(f"line {lineno}: unparsable record {line.strip()!r}") from None
        if not math.isfinite(value):
            raise FcidumpError(f"line {lineno}: non-finite integral")
        if any(x < 0 or x > norb for x in (i, j, k, l)):
            raise FcidumpError(f"line {lineno}: orbital index out of range 1..{norb}")
        if i == j == k == l == 0:
            ecore = value
        elif k == l == 0:
            if i == 0 or j == 0:
                continue  # orbital energies are not needed
            h1[i - 1, j - 1] = h1[j - 1, i - 1] = value
        else:
            if 0 in (i, j, k, l):
                raise FcidumpError(f"line {lineno}: partial zero index in two-electron record")
            p, q, r, s = i - 1, j - 1, k - 1, l - 1
            for a, b, c, d in (
                (p, q, r, s), (q, p, r, s), (p, q, s, r), (q, p, s, r),
                (r, s, p, q), (s, r, p, q), (r, s, q, p), (s, r, q, p),
            ):
                eri[a, b, c, d] = value
    chol = cholesky_factorize_eri(eri, tol=chol_tol)
    return AbInitioHamiltonian(
        h1=h1,
        eri=eri,
        chol=chol,
        ecore=ecore,
        nup=nup,
        ndn=ndn,
        unit="Hartree",
        label=getattr(stream, "name", "fcidump"),
    )


def write_fcidump(stream: IO[str], ham: Hamiltonian, tol: float = 1e-15) -> None:
    """Write ``ham`` as an 8-fold symmetric FCIDUMP."""
    M = ham.norb
    ms2 = ham.nup - ham.ndn
    stream.write(f" &FCI NORB={M:4d},NELEC={ham.nup + ham.ndn:2d},MS2={ms2},\n")
    stream.write("  ORBSYM=" + "1," * M + "\n  ISYM=1,\n &END\n")
    for i in range(M):
        for j in range(i + 1):
            for k in range(i + 1):
                for l in range(k + 1):
                    if (i * (i + 1) // 2 + j) < (k * (k + 1) // 2 + l):
                        continue
                    v = ham.eri[i, j, k, l]
                    if abs(v) > tol:
                        stream.write(f" {v:.16g} {i + 1:4d} {j + 1:4d} {k + 1:4d} {l + 1:4d}\n")
    for i in range(M):
        for j in range(i + 1):
            if abs(ham.h1[i, j]) > tol:
                stream.write(f" {ham.h1[i, j]:.16g} {i + 1:4d} {j + 1:4d}    0    0\n")
    stream.write(f" {ham.ecore:.16g}    0    0    0    0\n")
