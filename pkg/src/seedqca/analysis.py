"""Observables of a row state and the critical-point protocol.

``N(t)`` is the summed site occupation, ``theta(t) = log2(N(t) / N(t/2))``
the effective exponent at even ``t``. The critical angle is the grid value
whose ``theta(t)`` is flattest over a time window.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .evolution import RowState, row_occupations

log = logging.getLogger(__name__)

__all__ = [
    "CSV_FIELDS", "CLASSICAL_FIELDS", "TimeSeries", "CriticalEstimate",
    "total_occupation", "density_profile", "effective_exponent",
    "window_flatness", "window_theta", "estimate_critical",
    "write_series_csv", "read_series_csv", "meta_path", "write_summary",
    "plot_series",
]

CSV_FIELDS = ["t", "L", "N", "trace_drift", "max_bond", "fit_residual",
              "sweeps", "converged", "wall_ms"]
CLASSICAL_FIELDS = CSV_FIELDS + ["stderr_N"]

IMAG_LOG_TOL = 1e-8


@dataclass
class TimeSeries:
    """Per-step record of one trajectory.

    ``rows`` holds one dict per time step with the :data:`CSV_FIELDS` keys
    (``stderr_N`` as well for classical series).
    """

    omega: float
    gamma: float
    chi: Optional[int]
    scheme: str
    rows: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def append(self, **row) -> None:
        if self.rows and row["t"] <= self.rows[-1]["t"]:
            raise ValueError("time must increase strictly")
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    @property
    def t(self) -> np.ndarray:
        return self.column("t").astype(int)

    @property
    def N(self) -> np.ndarray:
        return self.column("N")

    def occupation_map(self) -> dict:
        return {int(r["t"]): float(r["N"]) for r in self.rows}

    def meta(self) -> dict:
        return {"omega": self.omega, "gamma": self.gamma, "chi": self.chi,
                "scheme": self.scheme}


def total_occupation(s: RowState) -> float:
    """``sum_k Tr(n_k rho)``; the imaginary residue is logged, not returned."""
    total = complex(row_occupations(s).sum())
    if abs(total.imag) > IMAG_LOG_TOL:
        log.info("t=%d: imaginary occupation residue %.3e", s.time,
                 abs(total.imag))
    return float(total.real)


def density_profile(s: RowState) -> list[tuple[int, float]]:
    """``(lattice coordinate, occupation)`` for every supported site."""
    occ = np.real(row_occupations(s))
    return [(int(x), float(o)) for x, o in zip(s.coordinates, occ)]


def effective_exponent(series) -> list[tuple[int, Optional[float]]]:
    """``theta(t)`` at every even ``t`` whose half time is in the series.

    Points where ``N(t/2) <= 0`` or ``N(t) <= 0`` are reported as None.

    Parameters
    ----------
    series : TimeSeries or mapping t -> N(t)
    """
    occ = series.occupation_map() if isinstance(series, TimeSeries) \
        else {int(k): float(v) for k, v in dict(series).items()}
    out = []
    for t in sorted(occ):
        if t < 2 or t % 2 or (t // 2) not in occ:
            continue
        n, half = occ[t], occ[t // 2]
        if half <= 0 or n <= 0:
            out.append((t, None))
        else:
            out.append((t, math.log2(n / half)))
    return out


def _window_points(series, window) -> list[tuple[int, float]]:
    lo, hi = window
    pts = [(t, th) for t, th in effective_exponent(series) if lo <= t <= hi]
    if any(th is None for _, th in pts):
        raise ValueError("theta(t) undefined inside the window "
                         "(the occupation vanished)")
    return pts


def window_flatness(series, window) -> float:
    """Mean absolute forward difference of ``theta`` over consecutive even
    times inside ``window``, per unit time."""
    pts = _window_points(series, window)
    if len(pts) < 2:
        raise ValueError(f"window {window} holds fewer than two even times")
    grads = [abs(b - a) / (tb - ta) for (ta, a), (tb, b) in zip(pts, pts[1:])]
    return float(np.mean(grads))


def window_theta(series, window) -> float:
    """Average of ``theta(t)`` over the even times inside ``window``."""
    pts = _window_points(series, window)
    if not pts:
        raise ValueError(f"no even times inside window {window}")
    return float(np.mean([th for _, th in pts]))


@dataclass
class CriticalEstimate:
    gamma_c: float
    gamma_error: float
    theta: float
    theta_error: float
    chi_error: Optional[float]
    flatness: dict
    chi_gap: dict
    thetas: dict
    window: tuple
    grid: list
    chi: Optional[int] = None
    chi_low: Optional[int] = None
    on_boundary: bool = False
    one_sided: bool = False

    def summary(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        for key in ("flatness", "chi_gap", "thetas"):
            d[key] = {repr(float(k)): v for k, v in d[key].items()}
        return d


def _by_chi(entry) -> dict:
    if isinstance(entry, TimeSeries):
        return {entry.chi: entry}
    return dict(entry)


def _chi_key(c):
    # unbounded runs rank above any finite bond dimension
    return math.inf if c is None else c


def estimate_critical(series_by_gamma: Mapping[float, object],
                      window: Sequence[int] = (50, 100)) -> CriticalEstimate:
    """Pick the flattest ``theta(t)`` curve on a grid of gate angles.

    Parameters
    ----------
    series_by_gamma : mapping
        ``gamma -> TimeSeries`` or ``gamma -> {chi: TimeSeries}``. The
        largest ``chi`` is used for the selection, the next one (normally
        ``chi/2``) for the bond-dimension error.
    window : (int, int)
        Inclusive time window.

    Returns
    -------
    CriticalEstimate
        ``gamma_error`` is the larger grid spacing to the neighbours of the
        selected angle; ``theta_error`` the largest ``|theta|`` difference to
        those neighbours; ``chi_error`` the ``|theta|`` difference between
        the two largest bond dimensions at the selected angle.
    """
    window = (int(window[0]), int(window[1]))
    grid = sorted(float(g) for g in series_by_gamma)
    if len(grid) < 3:
        raise ValueError(f"grid too small: need at least 3 values of gamma, "
                         f"got {len(grid)}")
    runs = {float(g): _by_chi(v) for g, v in series_by_gamma.items()}
    top, low = {}, {}
    for g in grid:
        chis = sorted(runs[g], key=_chi_key)
        top[g] = runs[g][chis[-1]]
        if len(chis) > 1:
            low[g] = runs[g][chis[-2]]
    flat = {g: window_flatness(top[g], window) for g in grid}
    thetas = {g: window_theta(top[g], window) for g in grid}
    best = min(grid, key=lambda g: (flat[g], g))
    i = grid.index(best)
    neighbours = [grid[k] for k in (i - 1, i + 1) if 0 <= k < len(grid)]
    on_boundary = i in (0, len(grid) - 1)
    if on_boundary:
        log.warning("selected gamma %.6g lies on the grid boundary; widen "
                    "the grid", best)
    gamma_err = max(abs(best - g) for g in neighbours)
    theta_err = max(abs(thetas[best] - thetas[g]) for g in neighbours)

    chi_gap, chi_err = {}, None
    lo, hi = window
    for g in grid:
        if g not in low:
            continue
        a, b = top[g].occupation_map(), low[g].occupation_map()
        common = [t for t in a if t in b and lo <= t <= hi]
        if common:
            chi_gap[g] = max(abs(a[t] - b[t]) for t in common)
    if best in low:
        chi_err = abs(thetas[best] - window_theta(low[best], window))
    else:
        log.warning("no lower bond-dimension run at gamma %.6g; chi error "
                    "omitted", best)

    chi_hi = top[best].chi
    chi_lo = low[best].chi if best in low else None
    return CriticalEstimate(
        gamma_c=best, gamma_error=gamma_err, theta=thetas[best],
        theta_error=theta_err, chi_error=chi_err, flatness=flat,
        chi_gap=chi_gap, thetas=thetas, window=window, grid=grid,
        chi=chi_hi, chi_low=chi_lo, on_boundary=on_boundary,
        one_sided=len(neighbours) < 2)


# ---------------------------------------------------------------------------
# files


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_series_csv(series: TimeSeries, path, append: bool = False) -> None:
    """Write (or append) rows plus a ``.meta.json`` sidecar holding
    ``omega, gamma, chi, scheme``."""
    path = Path(path)
    fields = CLASSICAL_FIELDS if any("stderr_N" in r for r in series.rows) \
        else CSV_FIELDS
    new = not (append and path.exists())
    with open(path, "w" if new else "a", newline="") as fh:
        if new:
            fh.write(",".join(fields) + "\n")
        for r in series.rows:
            fh.write(",".join(_fmt(r[k]) for k in fields) + "\n")
    meta_path(path).write_text(json.dumps(series.meta(), sort_keys=True) + "\n")


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def read_series_csv(path) -> TimeSeries:
    """Inverse of :func:`write_series_csv`; missing metadata becomes NaN."""
    path = Path(path)
    mp = meta_path(path)
    meta = json.loads(mp.read_text()) if mp.exists() else {}
    s = TimeSeries(float(meta.get("omega", math.nan)),
                   float(meta.get("gamma", math.nan)),
                   meta.get("chi"), meta.get("scheme", "unknown"))
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for k, v in raw.items():
                if k in ("t", "L", "max_bond", "sweeps"):
                    row[k] = int(float(v))
                elif k == "converged":
                    row[k] = v.strip() in ("1", "True", "true")
                else:
                    row[k] = float(v)
            s.append(**row)
    return s


def write_summary(est: CriticalEstimate, path, omega: Optional[float] = None
                  ) -> None:
    d = est.summary()
    d["omega"] = omega
    Path(path).write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")


def plot_series(series_by_gamma: Mapping[float, object], path,
                window: Optional[Sequence[int]] = None,
                title: Optional[str] = None) -> None:
    """Log-log ``N(t)`` with a ``theta(t)`` panel, saved as SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax_n, ax_th) = plt.subplots(1, 2, figsize=(10, 4))
    for g in sorted(series_by_gamma):
        runs = _by_chi(series_by_gamma[g])
        for chi in sorted(runs, key=_chi_key):
            s = runs[chi]
            keep = s.N > 0
            style = "-" if chi == max(runs, key=_chi_key) else "--"
            ax_n.loglog(s.t[keep], s.N[keep], style, lw=1,
                        label=f"Γ={g:g}, χ={chi}")
            pts = [(t, th) for t, th in effective_exponent(s)
                   if th is not None]
            if pts:
                tt, th = zip(*pts)
                ax_th.plot(tt, th, style, lw=1)
    ax_th.axhline(0.314, color="g", ls=":", lw=1)
    if window is not None:
        ax_th.axvspan(window[0], window[1], color="0.9", zorder=0)
    ax_n.set_xlabel("t")
    ax_n.set_ylabel("N(t)")
    ax_th.set_xlabel("t")
    ax_th.set_ylabel("θ(t)")
    ax_n.legend(fontsize=6)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
