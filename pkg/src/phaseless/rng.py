"""Counter-based random streams.

Every random draw in a run is addressed by ``(seed, step, purpose)``; the
counter of a Philox generator is set from that address, so a stream can be
regenerated anywhere without replaying earlier draws. Walker ``w`` always
reads row ``w`` of a per-step array, which makes results independent of how
walkers are distributed over threads.
"""

from __future__ import annotations

import numpy as np

#: purposes of the streams used by the propagator
FIELDS = 0
BRANCHING = 1
MEAN_FIELD_SEED = 2


def stream(seed: int, step: int, purpose: int = FIELDS) -> np.random.Generator:
    """Independent generator for one ``(step, purpose)`` address."""
    if seed < 0 or step < 0 or purpose < 0:
        raise ValueError("seed, step and purpose must be non-negative")
    bitgen = np.random.Philox(key=int(seed), counter=[0, 0, int(step), int(purpose)])
    return np.random.Generator(bitgen)


def normal_fields(seed: int, step: int, nwalkers: int, nfields: int) -> np.ndarray:
    """Standard-normal auxiliary fields for one propagation step, shape (nwalkers, nfields)."""
    return stream(seed, step, FIELDS).standard_normal((nwalkers, nfields))
