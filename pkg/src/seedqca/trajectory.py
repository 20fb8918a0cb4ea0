"""Run configuration and single-trajectory driver with checkpoints."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .analysis import CSV_FIELDS, TimeSeries, _fmt, meta_path
from .evolution import (RowState, StepScheme, TraceDriftError, apply_step,
                        seed_state)
from .gates import build_gate
from .mps import CompressionPolicy, load_network, save_network

log = logging.getLogger(__name__)

__all__ = ["RunConfig", "InvariantViolation", "run_trajectory",
           "checkpoint_name", "find_checkpoint", "parse_config_text",
           "series_csv_name"]


class InvariantViolation(RuntimeError):
    """A run finished but a checked invariant failed (e.g. --dense-check)."""


@dataclass
class RunConfig:
    """Everything a quantum run, a sweep or a classical ensemble needs.

    ``gamma`` and ``chi`` are lists; a single trajectory uses one entry of
    each. ``chi`` entries of 0 mean unbounded. ``scheme`` is
    ``alternating``, ``odd_even`` or ``odd_even_mirrored``.
    """

    omega: float = 0.0
    gamma: list = field(default_factory=lambda: [0.997])
    scheme: str = "alternating"
    chi: list = field(default_factory=lambda: [64])
    svd_cutoff: float = 1e-24
    fit_tolerance: float = 1e-6
    max_sweeps: int = 4
    variational: bool = True
    gate_order: str = "UP"
    renormalize: bool = True
    hermitian_tol: float = 1e-10
    trace_threshold: float = 1e-4
    t_max: int = 50
    window: list = field(default_factory=lambda: [25, 50])
    checkpoint_every: int = 10
    output_dir: str = "out"
    record_timing: bool = True
    dense_check: int = 0
    # classical ensemble
    p1: float = 0.70548515
    p2: float = 0.70548515
    runs: int = 10000
    rng_seed: int = 0

    def __post_init__(self):
        if not isinstance(self.gamma, (list, tuple)):
            self.gamma = [float(self.gamma)]
        if not isinstance(self.chi, (list, tuple)):
            self.chi = [int(self.chi)]
        self.gamma = [float(g) for g in self.gamma]
        self.chi = [int(c) for c in self.chi]
        self.window = [int(w) for w in self.window]
        self.validate()

    def validate(self) -> None:
        StepScheme.from_label(self.scheme)
        if any(c < 0 for c in self.chi):
            raise ValueError("chi must be positive (0 for unbounded)")
        if sorted(self.chi, key=lambda c: c or 1 << 62) != self.chi:
            raise ValueError("chi list must be sorted ascending")
        if self.t_max < 0:
            raise ValueError("t_max must be non-negative")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")
        if self.fit_tolerance <= 0:
            raise ValueError("fit_tolerance must be positive")
        if len(self.window) != 2 or self.window[0] > self.window[1]:
            raise ValueError("window must be two times lo <= hi")
        if self.gate_order not in ("UP", "PU"):
            raise ValueError("gate_order must be UP or PU")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be non-negative")

    def policy(self, chi: int) -> CompressionPolicy:
        return CompressionPolicy(chi=chi or None, svd_cutoff=self.svd_cutoff,
                                 fit_tolerance=self.fit_tolerance,
                                 max_sweeps=self.max_sweeps,
                                 variational=self.variational)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                v = ", ".join(repr(x) if isinstance(x, float) else str(x)
                              for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        kw = {}
        types = {f.name: f for f in dataclasses.fields(cls)}
        for k, raw in values.items():
            k = k.strip().replace("-", "_")
            if k not in types:
                raise ValueError(f"unknown config key {k!r}")
            kw[k] = _coerce(k, raw, cls)
        return cls(**kw)


_LIST_KEYS = {"gamma": float, "chi": int, "window": int}
_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def _expand_grid(text: str) -> list[float]:
    # lo:hi:step, inclusive of hi within round-off
    lo, hi, step = (float(x) for x in text.split(":"))
    if step <= 0:
        raise ValueError("grid step must be positive")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + k * step, 12) for k in range(n)]


def _coerce(key, raw, cls):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if key in _LIST_KEYS:
        conv = _LIST_KEYS[key]
        if key == "gamma" and ":" in raw:
            return _expand_grid(raw)
        return [conv(x) for x in re.split(r"[,\s]+", raw) if x]
    default = next(f for f in dataclasses.fields(cls) if f.name == key)
    proto = default.default
    if isinstance(proto, bool):
        if raw.lower() not in _BOOL:
            raise ValueError(f"{key}: expected a boolean, got {raw!r}")
        return _BOOL[raw.lower()]
    if isinstance(proto, int):
        return int(raw)
    if isinstance(proto, float):
        return float(raw)
    return raw


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _tag(omega: float, gamma: float, chi: int, scheme: str) -> str:
    return f"w{omega:g}_g{gamma:g}_chi{chi or 'inf'}_{scheme}"


def series_csv_name(omega, gamma, chi, scheme) -> str:
    return f"run_{_tag(omega, gamma, chi, scheme)}.csv"


def checkpoint_name(omega, gamma, chi, scheme, t) -> str:
    return f"ckpt_{_tag(omega, gamma, chi, scheme)}_t{t:05d}.sqtn"


def find_checkpoint(directory, omega, gamma, chi, scheme,
                    t_max: Optional[int] = None) -> Optional[Path]:
    """Latest checkpoint for the cell, at or before ``t_max``."""
    directory = Path(directory)
    if not directory.is_dir():
        return None
    prefix = f"ckpt_{_tag(omega, gamma, chi, scheme)}_t"
    best, best_t = None, -1
    for p in directory.glob(prefix + "*.sqtn"):
        try:
            t = int(p.stem[len(prefix):])
        except ValueError:
            continue
        if t > best_t and (t_max is None or t <= t_max):
            best, best_t = p, t
    return best


def _row(diag, record_timing: bool) -> dict:
    return dict(t=diag.time, L=diag.length, N=diag.occupation,
                trace_drift=diag.trace_correction, max_bond=diag.max_bond,
                fit_residual=diag.fit.final_distance,
                sweeps=diag.fit.sweeps_used, converged=diag.fit.converged,
                wall_ms=round(diag.wall_ms, 3) if record_timing else 0.0)


def run_trajectory(config: RunConfig, gamma: Optional[float] = None,
                   chi: Optional[int] = None, *, resume: bool = True,
                   write: bool = True) -> TimeSeries:
    """Evolve the seed for ``config.t_max`` steps at one ``(gamma, chi)``.

    With ``write`` the series goes to ``output_dir`` as CSV (one row per
    step, flushed as it is produced) and the state is checkpointed every
    ``checkpoint_every`` steps. With ``resume`` the latest matching
    checkpoint is picked up and only the remaining steps are run.

    Raises
    ------
    TraceDriftError
        Per-step trace drift above ``config.trace_threshold``.
    InvariantViolation
        ``dense_check`` found a deviation from the dense oracle above 1e-8.
    """
    gamma = config.gamma[0] if gamma is None else float(gamma)
    chi = config.chi[-1] if chi is None else int(chi)
    scheme = StepScheme.from_label(config.scheme)
    gate = build_gate(gamma, config.omega, config.gate_order)
    policy = config.policy(chi)
    out = Path(config.output_dir)
    ckdir = out / "checkpoints"
    csv_path = out / series_csv_name(config.omega, gamma, chi, config.scheme)

    series = TimeSeries(config.omega, gamma, chi or None, config.scheme)
    state = seed_state()
    cumulative = 0.0
    if resume and write:
        ck = find_checkpoint(ckdir, config.omega, gamma, chi, config.scheme,
                             config.t_max)
        if ck is not None:
            rho, meta = load_network(ck)
            state = RowState(rho, int(meta["time"]), int(meta["left_offset"]))
            for r in meta["rows"]:
                series.append(**r)
            cumulative = float(meta.get("cumulative_trace_correction", 0.0))
            log.info("resuming %s from t=%d", csv_path.name, state.time)

    if write:
        out.mkdir(parents=True, exist_ok=True)
        fh = open(csv_path, "w", newline="")
        fh.write(",".join(CSV_FIELDS) + "\n")
        for r in series.rows:
            fh.write(",".join(_fmt(r[k]) for k in CSV_FIELDS) + "\n")
        fh.flush()
    else:
        fh = None

    dense = None
    dense_dev = 0.0
    if config.dense_check and state.time == 0:
        from .oracle import dense_seed
        dense = dense_seed()

    try:
        while state.time < config.t_max:
            state, diag = apply_step(state, gate, scheme, policy,
                                     renormalize=config.renormalize,
                                     hermitian_tol=config.hermitian_tol,
                                     trace_threshold=config.trace_threshold)
            cumulative += diag.trace_correction
            if not diag.fit.converged:
                log.info("t=%d: fit not converged (gap %.3e, %d sweeps%s)",
                         diag.time, diag.fit.observable_gap,
                         diag.fit.sweeps_used,
                         ", fallback" if diag.fit.fallback else "")
            row = _row(diag, config.record_timing)
            series.append(**row)
            if fh is not None:
                fh.write(",".join(_fmt(row[k]) for k in CSV_FIELDS) + "\n")
                fh.flush()
            if dense is not None and state.time <= config.dense_check:
                from .oracle import dense_step, dense_total_occupation
                dense = dense_step(dense, gate, scheme)
                dense_dev = max(dense_dev, abs(
                    dense_total_occupation(dense) - diag.occupation))
            if write and config.checkpoint_every and (
                    state.time % config.checkpoint_every == 0
                    or state.time == config.t_max):
                ckdir.mkdir(parents=True, exist_ok=True)
                save_network(ckdir / checkpoint_name(
                    config.omega, gamma, chi, config.scheme, state.time),
                    state.rho, meta={
                        "time": state.time, "left_offset": state.left_offset,
                        "rows": series.rows,
                        "cumulative_trace_correction": cumulative})
    finally:
        if fh is not None:
            fh.close()

    series.notes["cumulative_trace_correction"] = cumulative
    log.info("%s: cumulative trace correction %.3e", csv_path.name,
             cumulative)
    if config.dense_check:
        series.notes["dense_check_max_deviation"] = dense_dev
    if write:
        meta = series.meta()
        meta.update(series.notes)
        meta_path(csv_path).write_text(json.dumps(meta, sort_keys=True) + "\n")
    if config.dense_check and dense_dev > 1e-8:
        raise InvariantViolation(
            f"dense check failed: max |N - N_dense| = {dense_dev:.3e}")
    return series
