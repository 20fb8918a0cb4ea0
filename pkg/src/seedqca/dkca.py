"""Domany-Kinzel cellular automaton grown from a single seed.

Coordinates follow the quantum row: the child at ``x`` has parents ``x-1``
and ``x``, so after ``t`` steps the light cone is ``[0, t]``. A child with
one occupied parent is occupied with probability ``p1``, with two with
probability ``p2``, and never with none.

Random numbers: runs are grouped into fixed blocks and each block owns a
generator seeded with ``(rng_seed, block index)``. A step from time ``t``
draws ``t + 2`` uniforms per run, one per light-cone site, so each draw is
fixed by ``(rng_seed, run, t, site)`` whatever the worker schedule.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analysis import TimeSeries, effective_exponent, window_theta

log = logging.getLogger(__name__)

__all__ = [
    "SITE_DP_PC", "DkConfig", "DkRow", "ClassicalSeries", "dk_step",
    "dk_run", "dk_block",
]

# site-DP threshold of the DK automaton from series and Monte Carlo
# literature (p_c = 0.705485(5)); a suggested default, not a derived value
SITE_DP_PC = 0.70548515

BLOCK_RUNS = 1000


@dataclass(frozen=True)
class DkConfig:
    p1: float
    p2: float
    t_max: int
    runs: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("p1", "p2"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.t_max < 0:
            raise ValueError("t_max must be non-negative")

    @classmethod
    def site(cls, p: float, t_max: int, runs: int = 1, rng_seed: int = 0):
        """Site-DP line ``p1 = p2 = p``."""
        return cls(p, p, t_max, runs, rng_seed)


@dataclass(frozen=True)
class DkRow:
    """Occupied coordinates (sorted) of the row at ``time``."""

    time: int
    occupied: tuple = ()

    @classmethod
    def seed(cls) -> "DkRow":
        return cls(0, (0,))

    def __len__(self) -> int:
        return len(self.occupied)


def dk_step(row: DkRow, cfg: DkConfig, rng: np.random.Generator) -> DkRow:
    """One DK update of a sparse row; draws ``row.time + 2`` uniforms."""
    u = rng.random(row.time + 2)
    if not row.occupied:
        return DkRow(row.time + 1, ())
    occ = set(row.occupied)
    prob = (0.0, cfg.p1, cfg.p2)
    children = []
    for x in sorted(occ | {x + 1 for x in occ}):
        n = (x - 1 in occ) + (x in occ)
        if u[x] < prob[n]:
            children.append(x)
    return DkRow(row.time + 1, tuple(children))


def dk_block(cfg: DkConfig, block: int, n_runs: int) -> np.ndarray:
    """Occupation counts ``N(t)``, ``t = 0..t_max``, for ``n_runs`` runs
    of one block. Shape ``(n_runs, t_max + 1)``."""
    rng = np.random.default_rng([cfg.rng_seed, block])
    width = cfg.t_max + 1
    row = np.zeros((n_runs, width + 1), dtype=bool)     # column 0 is x = -1
    row[:, 1] = True
    counts = np.zeros((n_runs, width), dtype=np.int64)
    counts[:, 0] = 1
    p1, p2 = cfg.p1, cfg.p2
    for t in range(cfg.t_max):
        u = rng.random((n_runs, t + 2))
        left = row[:, 0:t + 2]
        right = row[:, 1:t + 3]
        n = left.astype(np.int8) + right
        child = ((n == 1) & (u < p1)) | ((n == 2) & (u < p2))
        row[:, 1:t + 3] = child
        counts[:, t + 1] = child.sum(axis=1)
    return counts


@dataclass
class ClassicalSeries:
    t: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    p1: float
    p2: float
    runs: int
    rng_seed: int
    survival: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def occupation_map(self) -> dict:
        return {int(t): float(n) for t, n in zip(self.t, self.mean)}

    def theta(self, window) -> float:
        """Window average of the effective exponent of the mean."""
        return window_theta(self.occupation_map(), window)

    def effective_exponent(self):
        return effective_exponent(self.occupation_map())

    def to_timeseries(self) -> TimeSeries:
        """Rows in the quantum CSV schema plus ``stderr_N``; ``t >= 1``."""
        s = TimeSeries(omega=0.0, gamma=float("nan"), chi=None,
                       scheme="dkca")
        for t, n, e in zip(self.t, self.mean, self.stderr):
            if t < 1:
                continue
            s.append(t=int(t), L=int(t) + 1, N=float(n), trace_drift=0.0,
                     max_bond=0, fit_residual=0.0, sweeps=0, converged=True,
                     wall_ms=0.0, stderr_N=float(e))
        return s


def _block_task(args):
    cfg, block, n = args
    counts = dk_block(cfg, block, n)
    return counts.sum(axis=0), (counts.astype(float) ** 2).sum(axis=0), \
        (counts > 0).sum(axis=0)


def dk_run(cfg: DkConfig, workers: Optional[int] = None,
           block_runs: int = BLOCK_RUNS) -> ClassicalSeries:
    """Ensemble mean and standard error of ``N(t)`` for ``t = 0..t_max``.

    ``workers`` defaults to 1; blocks are reduced in block order so the
    result does not depend on the worker count.
    """
    blocks = []
    done = 0
    while done < cfg.runs:
        n = min(block_runs, cfg.runs - done)
        blocks.append((cfg, len(blocks), n))
        done += n
    workers = workers or 1
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(blocks),
                                                 os.cpu_count() or 1)) as ex:
            parts = list(ex.map(_block_task, blocks))
    else:
        parts = [_block_task(b) for b in blocks]
    s1 = np.zeros(cfg.t_max + 1)
    s2 = np.zeros(cfg.t_max + 1)
    alive = np.zeros(cfg.t_max + 1)
    for a, b, c in parts:
        s1 += a
        s2 += b
        alive += c
    m = cfg.runs
    mean = s1 / m
    if m > 1:
        var = np.maximum(s2 - m * mean ** 2, 0.0) / (m - 1)
        stderr = np.sqrt(var / m)
    else:
        stderr = np.zeros_like(mean)
    return ClassicalSeries(np.arange(cfg.t_max + 1), mean, stderr, cfg.p1,
                           cfg.p2, cfg.runs, cfg.rng_seed, alive / m)
