"""Blocking analysis of serially correlated Monte Carlo series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ReblockResult:
    """Reblocked estimate of a series mean.

    Attributes
    ----------
    mean, stderr : float
        Sample mean and its standard error at the chosen blocking level.
    level : int
        Number of pairwise blocking transforms applied at the chosen level.
    stderrs : ndarray
        Naive standard error at every blocking level (level 0 first).
    converged : bool
        False when no level satisfied the plateau criterion and the deepest
        usable level was returned instead.
    """

    mean: float
    stderr: float
    level: int
    stderrs: np.ndarray
    converged: bool


def reblock(series, min_blocks: int = 16) -> ReblockResult:
    """Flyvbjerg-Petersen blocking with a fixed plateau rule.

    The series is repeatedly halved by averaging neighbouring pairs. The
    chosen level is the first one whose block size ``B = 2**level`` satisfies
    ``B**3 > 2 n (sigma_B / sigma_0)**4``, where ``sigma_B`` is the naive
    standard error at that level and ``n`` the series length (Lee, Needs and
    co-workers' criterion, as used by the pyblock package).

    Parameters
    ----------
    series : array_like
        Real samples in order of generation.
    min_blocks : int
        Minimum series length accepted.
    """
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if n < min_blocks:
        raise ValueError(f"reblocking needs at least {min_blocks} samples, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    mean = float(x.mean())
    errs = []
    y = x.copy()
    while y.size >= 2:
        errs.append(float(np.std(y, ddof=1) / np.sqrt(y.size)))
        m = y.size // 2
        y = 0.5 * (y[: 2 * m : 2] + y[1 : 2 * m : 2])
    errs = np.array(errs)
    if errs[0] == 0.0:
        return ReblockResult(mean, 0.0, 0, errs, True)
    for level, err in enumerate(errs):
        if (2.0**level) ** 3 > 2.0 * n * (err / errs[0]) ** 4:
            return ReblockResult(mean, float(err), level, errs, True)
    # keep at least 4 blocks at the deepest level considered
    level = max(0, int(np.floor(np.log2(n / 4))))
    level = min(level, errs.size - 1)
    return ReblockResult(mean, float(errs[level]), level, errs, False)
