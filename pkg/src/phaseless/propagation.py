"""Phaseless auxiliary-field propagation of a walker population.

With Cholesky factors ``L_g`` and the mean-field shift ``m_g = <L_g>_trial``
the Hamiltonian is rewritten as

    H = c + K' + 1/2 sum_g (L_g - m_g)^2,
    K' = h - 1/2 sum_g L_g L_g + sum_g m_g L_g,      c = E_core - 1/2 sum_g m_g^2,

and one step of length ``dtau`` applies

    exp(-dtau K'/2)  exp(i sqrt(dtau) sum_g (x_g - xbar_g) L_g)  exp(-dtau K'/2)

to each walker, with ``x`` standard normal and the force bias
``xbar_g = -i sqrt(dtau) (<L_g>_mixed - m_g)``. The scalar part
``exp(-i sqrt(dtau) sum_g (x_g - xbar_g) m_g)`` and the importance factor
``exp(x.xbar - xbar.xbar / 2)`` enter the weight through the hybrid energy

    E_hyb = -(log R + c_mf + x.xbar - xbar.xbar / 2) / dtau + c,

where ``R`` is the ratio of trial overlaps after and before the step. The
weight is multiplied by ``exp(-dtau Re(E_hyb - E_shift)) max(0, cos dtheta)``
with ``dtheta = Im(log R + c_mf)``.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from . import rng as rngmod
from .fockspace import one_body_density
from .gaussian import OVERLAP_FLOOR, SlaterDeterminant, cached_expm, mean_field_ground_state
from .stats import reblock
from .trials import SingleDetTrial, cap_force_bias, trial_energy

__all__ = [
    "QmcConfig",
    "Walker",
    "EstimatorSeries",
    "PopulationCollapse",
    "Propagator",
    "propagate_step",
    "phaseless_update",
    "population_control",
    "mixed_estimator",
    "run_afqmc",
    "TABLE_PRESETS",
]

THREADS_ENV = "PHASELESS_THREADS"


class PopulationCollapse(RuntimeError):
    """Every walker has zero weight."""


# ---------------------------------------------------------------------------
# Configuration and data types
# ---------------------------------------------------------------------------


@dataclass
class QmcConfig:
    """Run parameters.

    Attributes
    ----------
    dtau : float
        Imaginary-time step.
    nwalkers, nblocks, steps_per_block, equilibration_blocks : int
        Population size, number of blocks, steps per block and the number of
        leading blocks excluded from averages.
    seed : int
        Key of every random stream of the run.
    pop_control_every : int
        Population control cadence in blocks.
    pop_control : str
        ``"pair_branch"`` or ``"comb"``.
    stabilize_every : int
        Steps between QR re-orthonormalizations.
    xi : float
        Energy cap: hybrid and local energies are clamped to
        ``E_shift +/- xi / sqrt(dtau)``.
    force_bias_cap : float
        Maximum magnitude of a force-bias component.
    update : str
        ``"hybrid"`` (default) or ``"local"`` (weights from the local energy
        at every step).
    cosine_projection : bool
        If false, phases are accumulated instead of projected out (free
        projection); the estimator then uses complex weights.
    threads : int or None
        Worker threads; ``None`` reads the ``PHASELESS_THREADS`` environment
        variable and falls back to 1.
    shift_window : int
        Number of recent blocks averaged for the energy shift.
    """

    dtau: float = 0.005
    nwalkers: int = 1000
    nblocks: int = 1000
    steps_per_block: int = 10
    equilibration_blocks: int = 100
    seed: int = 0
    pop_control_every: int = 1
    pop_control: str = "pair_branch"
    stabilize_every: int = 5
    xi: float = 10.0
    force_bias_cap: float = 1.0
    update: str = "hybrid"
    cosine_projection: bool = True
    threads: int | None = None
    shift_window: int = 50

    def __post_init__(self):
        for name in ("dtau", "xi", "force_bias_cap"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        for name in ("nwalkers", "nblocks", "steps_per_block", "pop_control_every", "stabilize_every", "shift_window"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if int(self.equilibration_blocks) != self.equilibration_blocks or self.equilibration_blocks < 0:
            raise ValueError("equilibration_blocks must be a non-negative integer")
        if self.equilibration_blocks >= self.nblocks:
            raise ValueError("equilibration_blocks must be smaller than nblocks")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.pop_control not in ("pair_branch", "comb"):
            raise ValueError(f"unknown population control {self.pop_control!r}")
        if self.update not in ("hybrid", "local"):
            raise ValueError(f"unknown weight update {self.update!r}")
        if self.threads is not None and (int(self.threads) != self.threads or self.threads < 1):
            raise ValueError("threads must be a positive integer")

    def resolved_threads(self) -> int:
        if self.threads is not None:
            return int(self.threads)
        value = os.environ.get(THREADS_ENV, "1")
        try:
            n = int(value)
        except ValueError:
            raise ValueError(f"{THREADS_ENV}={value!r} is not an integer") from None
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be positive")
        return n

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, values: dict) -> "QmcConfig":
        """Build from string or typed values (as read from a config file)."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.strip().lower()
            if key not in known:
                raise ValueError(f"unknown qmc option {key!r}")
            default = getattr(cls, key, None)
            if isinstance(raw, str):
                raw = raw.strip()
                if key in ("pop_control", "update"):
                    value = raw
                elif key == "cosine_projection":
                    if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                        raise ValueError(f"{key} must be a boolean, got {raw!r}")
                    value = raw.lower() in ("true", "1", "yes")
                elif key == "threads":
                    value = None if raw.lower() in ("", "none", "auto") else int(raw)
                elif isinstance(default, float):
                    value = float(raw)
                else:
                    value = int(raw)
            else:
                value = raw
            kwargs[key] = value
        return cls(**kwargs)


#: Production settings per system class (walkers, blocks, equilibration blocks).
TABLE_PRESETS = {
    "h4": dict(dtau=0.005, nwalkers=1000, nblocks=1000, steps_per_block=10, equilibration_blocks=100),
    "oxygen": dict(dtau=0.005, nwalkers=1000, nblocks=10000, steps_per_block=10, equilibration_blocks=1000),
    "hubbard": dict(dtau=0.005, nwalkers=1000, nblocks=10000, steps_per_block=10, equilibration_blocks=3000),
}


@dataclass
class Walker:
    """One walker: determinant, weight, phase, cached trial overlap and hybrid energy."""

    det: SlaterDeterminant
    weight: float = 1.0
    phase: float = 0.0
    overlap: complex = 1.0
    hybrid_energy: complex = 0.0


@dataclass
class EstimatorSeries:
    """Per-block output of a run."""

    energy: np.ndarray
    total_weight: np.ndarray
    clamps: np.ndarray
    projections: np.ndarray
    projected_weight: np.ndarray
    equilibration_blocks: int
    unit: str = ""
    meta: dict = field(default_factory=dict)
    runtime: dict = field(default_factory=dict)

    @property
    def production(self) -> np.ndarray:
        return self.energy[self.equilibration_blocks :]

    def reblocked(self):
        return reblock(self.production.real)

    @property
    def mean(self) -> float:
        return self.reblocked().mean

    @property
    def stderr(self) -> float:
        return self.reblocked().stderr

    @property
    def block_variance(self) -> float:
        return float(np.var(self.production.real, ddof=1))

    def summary(self) -> dict:
        rb = self.reblocked()
        return {
            "energy": rb.mean,
            "stderr": rb.stderr,
            "reblock_level": rb.level,
            "reblock_converged": rb.converged,
            "energy_imag_mean": float(np.mean(self.production.imag)),
            "block_variance": self.block_variance,
            "nblocks": int(self.energy.size),
            "equilibration_blocks": int(self.equilibration_blocks),
            "clamps": int(self.clamps.sum()),
            "projections": int(self.projections.sum()),
            "mean_projected_weight_fraction": float(np.mean(self.projected_weight)),
            "unit": self.unit,
            **self.meta,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["block", "energy_re", "energy_im", "total_weight", "clamps", "projections"])
            for b in range(self.energy.size):
                w.writerow([
                    b,
                    repr(float(self.energy[b].real)),
                    repr(float(self.energy[b].imag)),
                    repr(float(self.total_weight[b])),
                    int(self.clamps[b]),
                    int(self.projections[b]),
                ])

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Elementary updates
# ---------------------------------------------------------------------------


def phaseless_update(
    weight,
    overlap_ratio,
    cmf,
    cfb,
    dtau: float,
    e_shift: float,
    const: float = 0.0,
    cap: float | None = None,
    cosine_projection: bool = True,
    phase=0.0,
):
    """Hybrid-energy weight update with cosine projection.

    Parameters
    ----------
    weight : float or ndarray
        Current weights.
    overlap_ratio : complex or ndarray
        ``<Psi_T|phi'> / <Psi_T|phi>``.
    cmf : complex or ndarray
        Scalar mean-field factor ``-i sqrt(dtau) sum_g (x_g - xbar_g) m_g``.
    cfb : complex or ndarray
        Importance-sampling factor ``x.xbar - xbar.xbar / 2``.
    const : float
        Constant energy ``E_core - 1/2 sum_g m_g^2``.
    cap : float, optional
        Clamp the real part of the hybrid energy to ``e_shift +/- cap``.

    Returns
    -------
    weight, phase, hybrid_energy, clamped, projected
        ``projected`` marks walkers whose cosine factor was zero.
    """
    ratio = np.asarray(overlap_ratio, dtype=complex)
    log_ratio = np.log(np.where(ratio == 0, 1.0, ratio))
    e_hyb = -(log_ratio + cmf + cfb) / dtau + const
    clamped = np.zeros(e_hyb.shape, dtype=bool)
    if cap is not None:
        re = e_hyb.real
        clipped = np.clip(re, e_shift - cap, e_shift + cap)
        clamped = clipped != re
        e_hyb = clipped + 1j * e_hyb.imag
    dtheta = np.imag(log_ratio + cmf)
    magnitude = np.exp(-dtau * (e_hyb.real - e_shift))
    if cosine_projection:
        cosine = np.maximum(0.0, np.cos(dtheta))
        new_weight = np.asarray(weight) * magnitude * cosine
        new_phase = np.asarray(phase, dtype=float) + np.zeros(e_hyb.shape)
        projected = cosine == 0.0
    else:
        new_weight = np.asarray(weight) * magnitude
        new_phase = np.asarray(phase, dtype=float) + dtheta
        projected = np.zeros(e_hyb.shape, dtype=bool)
    dead = ratio == 0
    new_weight = np.where(dead, 0.0, new_weight)
    projected = projected | dead
    return new_weight, new_phase, e_hyb, clamped, projected


def mixed_estimator(weights, local_energies, phases=None, floor: float = 1e-300) -> complex:
    """``sum_w W_w e^{i theta_w} E_w / sum_w W_w e^{i theta_w}``.

    With ``phases=None`` the phaseless form ``sum W E / sum W`` is used.
    """
    w = np.asarray(weights, dtype=float)
    e = np.asarray(local_energies, dtype=complex)
    cw = w if phases is None else w * np.exp(1j * np.asarray(phases))
    den = np.sum(cw)
    if abs(den) < floor:
        raise ZeroDivisionError("estimator denominator vanishes")
    alive = w > 0
    return complex(np.sum(cw[alive] * e[alive]) / den)


def population_control(
    weights: np.ndarray,
    generator: np.random.Generator,
    method: str = "pair_branch",
    min_weight: float = 0.1,
    max_weight: float = 2.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Resample a population at fixed size.

    Returns ``(parents, new_weights)``: slot ``i`` of the new population is a
    copy of walker ``parents[i]`` carrying weight ``new_weights[i]``. Total
    weight is preserved.

    ``"pair_branch"`` sorts walkers by weight and pairs the lightest with the
    heaviest while the lightest is below ``min_weight`` or the heaviest above
    ``max_weight`` (both relative to the mean weight). In a pair with weights
    ``w_a`` and ``w_b`` the heavy walker is duplicated with probability
    ``w_b / (w_a + w_b)``, else the light one is; both copies carry
    ``(w_a + w_b) / 2``. ``"comb"`` draws ``N`` equally spaced teeth with one
    uniform offset and gives every copy weight ``W_total / N``.
    """
    w = np.asarray(weights, dtype=float)
    n = w.size
    total = float(np.sum(w))
    if not np.isfinite(total):
        raise PopulationCollapse("non-finite total weight")
    if total <= 0:
        raise PopulationCollapse("all walkers have zero weight")
    parents = np.arange(n)
    if method == "comb":
        cum = np.cumsum(w)
        teeth = (np.arange(n) + generator.uniform()) * (total / n)
        parents = np.minimum(np.searchsorted(cum, teeth, side="right"), n - 1)
        # skip zero-weight walkers that searchsorted can land on at the boundaries
        while np.any(w[parents] == 0):
            bad = w[parents] == 0
            parents[bad] = np.minimum(parents[bad] + 1, n - 1)
        return parents, np.full(n, total / n)
    if method != "pair_branch":
        raise ValueError(f"unknown population control {method!r}")
    mean = total / n
    new = w.copy()
    order = np.argsort(w, kind="stable")
    lo, hi = 0, n - 1
    while lo < hi:
        a, b = order[lo], order[hi]
        if not (w[a] < min_weight * mean or w[b] > max_weight * mean):
            break
        pair = w[a] + w[b]
        if generator.uniform() < w[b] / pair:
            parents[a] = b
        else:
            parents[b] = a
        new[a] = new[b] = 0.5 * pair
        lo += 1
        hi -= 1
    return parents, new


# ---------------------------------------------------------------------------
# Propagator
# ---------------------------------------------------------------------------


def _qr_batch(a: np.ndarray) -> np.ndarray:
    if a.shape[-1] == 0:
        return a
    q, r = np.linalg.qr(a)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    mag = np.abs(d)
    phase = np.where(mag > 0, d / np.where(mag > 0, mag, 1.0), 1.0)
    return q * phase[:, None, :]


class Propagator:
    """Batched phaseless propagator for one Hamiltonian/trial pair.

    Walker orbitals are held as arrays ``up`` of shape (n, M, N_up) and ``dn``
    of shape (n, M, N_dn). All per-walker arithmetic is independent across the
    walker axis, so any contiguous split of the population gives bitwise the
    same result.
    """

    taylor_order = 10

    def __init__(self, ham, trial, dtau: float, force_bias_cap: float | None = 1.0, xi: float = 10.0):
        self.ham = ham
        self.trial = trial
        self.dtau = float(dtau)
        self.evaluator = trial.evaluator(ham)
        chol = np.asarray(ham.chol, dtype=float)
        self.chol = chol
        self.nfields = chol.shape[0]
        self.mean_shift = self._mean_shift()
        K = ham.exchange_corrected_h1()
        Kp = K + np.einsum("g,gpq->pq", self.mean_shift, chol) if self.nfields else K
        self.half_one_body = np.asarray(cached_expm(-0.5 * self.dtau * Kp), dtype=complex)
        self.const = float(ham.ecore - 0.5 * np.dot(self.mean_shift, self.mean_shift))
        offdiag = chol.copy()
        idx = np.arange(ham.norb)
        offdiag[:, idx, idx] = 0.0
        self.diagonal_fields = not np.any(offdiag)
        self.chol_diag = np.einsum("gpp->gp", chol)
        self.force_bias_cap = force_bias_cap
        self.energy_cap = xi / math.sqrt(self.dtau)

    def _mean_shift(self) -> np.ndarray:
        if self.nfields == 0:
            return np.zeros(0)
        if isinstance(self.trial, SingleDetTrial):
            det = self.trial.det
            _, lbar = self.evaluator.fields(det.up[None], det.dn[None])
            return np.real(lbar[0])
        ru, rd = one_body_density(self.trial.to_statevector())
        rho = ru + rd  # rho[p, q] = <E_pq>
        return np.real(np.einsum("gpq,pq->g", self.chol, rho))

    # -- pieces of a step --------------------------------------------------
    def apply_one_body_half(self, up, dn):
        B = self.half_one_body
        return B @ up, B @ dn

    def apply_two_body(self, up, dn, shifted):
        """Apply ``exp(i sqrt(dtau) sum_g shifted_g L_g)`` walker by walker.

        Diagonal factors (Hubbard on-site terms) are exponentiated exactly;
        otherwise a fixed-order Taylor series is applied to the orbitals, so
        the arithmetic per walker does not depend on the rest of the batch.
        """
        if self.nfields == 0:
            return up, dn
        coeff = 1j * math.sqrt(self.dtau) * shifted
        if self.diagonal_fields:
            expd = np.exp(np.einsum("wg,gp->wp", coeff, self.chol_diag))[:, :, None]
            return expd * up, expd * dn
        A = np.einsum("wg,gpq->wpq", coeff, self.chol)
        out = []
        for phi in (up, dn):
            term = phi
            acc = phi
            for n in range(1, self.taylor_order + 1):
                term = (A @ term) / n
                acc = acc + term
            out.append(acc)
        return out[0], out[1]

    def step(self, up, dn, ovlp, weight, phase, x, e_shift, cosine_projection=True, update="hybrid"):
        """Advance a chunk of walkers by one time step.

        Walkers with zero weight are left untouched. Returns the new arrays and
        per-walker counters ``(clamped, projected, capped_fields)``.
        """
        n = up.shape[0]
        alive = weight > 0
        clamped = np.zeros(n, dtype=bool)
        projected = np.zeros(n, dtype=bool)
        capped = np.zeros(n, dtype=np.int64)
        e_hyb = np.zeros(n, dtype=complex)
        if not np.any(alive):
            return up, dn, ovlp, weight, phase, e_hyb, clamped, projected, capped
        idx = np.nonzero(alive)[0]
        u, d = up[idx], dn[idx]
        xs = x[idx]
        u, d = self.apply_one_body_half(u, d)
        if self.nfields:
            _, lbar = self.evaluator.fields(u, d)
            xbar = -1j * math.sqrt(self.dtau) * (lbar - self.mean_shift)
            if self.force_bias_cap is not None:
                mag = np.abs(xbar)
                over = mag > self.force_bias_cap
                capped[idx] = over.sum(axis=1)
                xbar = np.where(over, xbar * (self.force_bias_cap / np.where(over, mag, 1.0)), xbar)
            shifted = xs - xbar
            u, d = self.apply_two_body(u, d, shifted)
            cmf = -1j * math.sqrt(self.dtau) * np.einsum("wg,g->w", shifted, self.mean_shift)
            cfb = np.sum(xs * xbar, axis=1) - 0.5 * np.sum(xbar * xbar, axis=1)
        else:
            cmf = np.zeros(idx.size, dtype=complex)
            cfb = np.zeros(idx.size, dtype=complex)
        u, d = self.apply_one_body_half(u, d)
        new_ov = self.evaluator.overlap(u, d)
        ratio = new_ov / ovlp[idx]
        ratio = np.where(np.abs(new_ov) < OVERLAP_FLOOR, 0.0, ratio)
        if update == "local":
            _, eloc = self.evaluator.local_energy(u, d)
            eloc = np.clip(eloc.real, e_shift - self.energy_cap, e_shift + self.energy_cap) + 1j * eloc.imag
            cfb = -self.dtau * (eloc - self.const) - np.log(np.where(ratio == 0, 1.0, ratio)) - cmf
        w, ph, eh, cl, pr = phaseless_update(
            weight[idx], ratio, cmf, cfb, self.dtau, e_shift, self.const, self.energy_cap,
            cosine_projection, phase[idx],
        )
        up = up.copy()
        dn = dn.copy()
        ovlp = ovlp.copy()
        weight = weight.copy()
        phase = phase.copy()
        up[idx], dn[idx], ovlp[idx] = u, d, new_ov
        weight[idx], phase[idx] = w, ph
        e_hyb[idx] = eh
        clamped[idx] = cl
        projected[idx] = pr
        return up, dn, ovlp, weight, phase, e_hyb, clamped, projected, capped

    def stabilize(self, up, dn, weight):
        """QR re-orthonormalization; returns new orbitals and refreshed overlaps."""
        up, dn = _qr_batch(up), _qr_batch(dn)
        ovlp = np.zeros(up.shape[0], dtype=complex)
        alive = weight > 0
        if np.any(alive):
            ovlp[alive] = self.evaluator.overlap(up[alive], dn[alive])
        return up, dn, ovlp

    def measure(self, up, dn, weight, phase, e_shift, use_phase=False):
        """Clamped local energies of the live walkers (zero for dead ones)."""
        eloc = np.zeros(up.shape[0], dtype=complex)
        clamped = np.zeros(up.shape[0], dtype=bool)
        alive = weight > 0
        if np.any(alive):
            _, e = self.evaluator.local_energy(up[alive], dn[alive])
            re = np.clip(e.real, e_shift - self.energy_cap, e_shift + self.energy_cap)
            clamped[alive] = re != e.real
            eloc[alive] = re + 1j * e.imag
        return eloc, clamped


# ---------------------------------------------------------------------------
# Single-walker interface
# ---------------------------------------------------------------------------


def propagate_step(
    walker: Walker,
    ham,
    trial,
    dtau: float,
    fields: np.ndarray | None = None,
    generator: np.random.Generator | None = None,
    e_shift: float | None = None,
    propagator: Propagator | None = None,
) -> Walker:
    """Propagate one walker by one step (reference interface; the driver works in batches).

    ``fields`` are the standard-normal auxiliary fields; if omitted they are
    drawn from ``generator``.
    """
    prop = propagator or Propagator(ham, trial, dtau)
    if fields is None:
        generator = generator or np.random.default_rng()
        fields = generator.standard_normal(prop.nfields)
    fields = np.asarray(fields, dtype=float).reshape(1, prop.nfields)
    if e_shift is None:
        e_shift = 0.0
    up = walker.det.up[None]
    dn = walker.det.dn[None]
    ov = np.array([walker.overlap if walker.overlap is not None else prop.evaluator.overlap(up, dn)[0]])
    up, dn, ov, w, ph, eh, *_ = prop.step(
        up, dn, ov, np.array([walker.weight]), np.array([walker.phase]), fields, e_shift
    )
    return Walker(SlaterDeterminant(up[0], dn[0], walker.det.log_norm), float(w[0]), float(ph[0]), complex(ov[0]), complex(eh[0]))


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def _chunks(n: int, k: int) -> list[slice]:
    k = max(1, min(k, n))
    bounds = np.linspace(0, n, k + 1).astype(int)
    return [slice(bounds[i], bounds[i + 1]) for i in range(k)]


def run_afqmc(
    ham,
    trial,
    config: QmcConfig,
    initial: SlaterDeterminant | None = None,
    progress: Callable[[int, complex], None] | None = None,
) -> EstimatorSeries:
    """Phaseless AFQMC run.

    All walkers start from ``initial`` (default: the trial itself for a
    single determinant, else the mean-field determinant of ``ham``). Each
    block runs ``steps_per_block`` steps, then measures the mixed estimator,
    applies population control and updates the energy shift to the mean of
    the last ``shift_window`` block energies minus
    ``log(W_total / N_W) / (steps_per_block * dtau)``, which steers the
    total weight back towards ``N_W``.
    """
    t0 = time.perf_counter()
    if initial is None:
        if isinstance(trial, SingleDetTrial):
            initial = trial.det
        else:
            initial = mean_field_ground_state(ham, seed=0, restarts=16).det
    init = initial if initial.log_norm == 0 else SlaterDeterminant(initial.up, initial.dn)
    if init.norb != ham.norb or init.nelec != (ham.nup, ham.ndn):
        raise ValueError("initial walker determinant does not match the Hamiltonian sector")
    prop = Propagator(ham, trial, config.dtau, config.force_bias_cap, config.xi)
    nw = config.nwalkers
    up = np.repeat(_qr_batch(init.up[None]), nw, axis=0)
    dn = np.repeat(_qr_batch(init.dn[None]), nw, axis=0)
    weight = np.ones(nw)
    phase = np.zeros(nw)
    ovlp = prop.evaluator.overlap(up, dn)
    if np.any(np.abs(ovlp) < OVERLAP_FLOOR):
        raise ValueError("initial walkers are orthogonal to the trial")
    e_trial = trial_energy(trial, ham)
    e_shift = e_trial
    nthreads = config.resolved_threads()
    parts = _chunks(nw, nthreads)
    pool = ThreadPoolExecutor(max_workers=nthreads) if nthreads > 1 else None

    def parallel(fn, *arrays):
        if pool is None:
            return [fn(*arrays)]
        futs = [pool.submit(fn, *(a[s] for a in arrays)) for s in parts]
        return [f.result() for f in futs]

    def join(results, i):
        return np.concatenate([r[i] for r in results])

    nb = config.nblocks
    energies = np.zeros(nb, dtype=complex)
    total_weight = np.zeros(nb)
    clamps = np.zeros(nb, dtype=np.int64)
    projections = np.zeros(nb, dtype=np.int64)
    projected_weight = np.zeros(nb)
    capped_fields = 0
    use_phase = not config.cosine_projection
    try:
        for block in range(nb):
            block_clamps = 0
            block_proj = 0
            lost = 0.0
            for s in range(config.steps_per_block):
                step = block * config.steps_per_block + s
                x = rngmod.normal_fields(config.seed, step, nw, prop.nfields)

                def work(u, d, o, w, p, xx, e_shift=e_shift):
                    return prop.step(u, d, o, w, p, xx, e_shift, config.cosine_projection, config.update)

                before = weight
                res = parallel(work, up, dn, ovlp, weight, phase, x)
                up, dn, ovlp, weight, phase = (join(res, i) for i in range(5))
                cl, pr, cap = join(res, 6), join(res, 7), join(res, 8)
                block_clamps += int(cl.sum())
                block_proj += int(pr.sum())
                lost += float(np.sum(before[pr]))
                capped_fields += int(cap.sum())
                if (step + 1) % config.stabilize_every == 0:
                    res = parallel(prop.stabilize, up, dn, weight)
                    up, dn, ovlp = (join(res, i) for i in range(3))
            wsum = float(np.sum(weight))
            if not np.isfinite(wsum) or wsum <= 0:
                raise PopulationCollapse(f"population collapsed in block {block}")
            res = parallel(lambda u, d, w, p: prop.measure(u, d, w, p, e_shift), up, dn, weight, phase)
            eloc = join(res, 0)
            block_clamps += int(join(res, 1).sum())
            energies[block] = mixed_estimator(weight, eloc, phase if use_phase else None)
            if not np.isfinite(energies[block]):
                raise FloatingPointError(f"non-finite estimator in block {block}")
            total_weight[block] = wsum
            clamps[block] = block_clamps
            projections[block] = block_proj
            projected_weight[block] = lost / (lost + wsum) if lost + wsum > 0 else 0.0
            if (block + 1) % config.pop_control_every == 0:
                gen = rngmod.stream(config.seed, block, rngmod.BRANCHING)
                parents, weight = population_control(weight, gen, config.pop_control)
                up, dn, ovlp, phase = up[parents], dn[parents], ovlp[parents], phase[parents]
            window = energies[max(0, block + 1 - config.shift_window) : block + 1].real
            e_shift = float(np.mean(window)) - math.log(np.sum(weight) / nw) / (config.steps_per_block * config.dtau)
            if progress is not None:
                progress(block, energies[block])
    finally:
        if pool is not None:
            pool.shutdown()
    meta = {
        "trial_energy": e_trial,
        "mean_shift_norm": float(np.linalg.norm(prop.mean_shift)),
        "capped_force_bias_components": capped_fields,
        "config": {k: v for k, v in config.to_dict().items() if k != "threads"},
    }
    runtime = {"threads": nthreads, "walltime_s": time.perf_counter() - t0}
    return EstimatorSeries(
        energies, total_weight, clamps, projections, projected_weight,
        config.equilibration_blocks, ham.unit, meta, runtime,
    )
