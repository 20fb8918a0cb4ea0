"""Command line: ``evolve``, ``sweep``, ``dkca`` and ``analyze``.

Every subcommand reads an optional ``key = value`` config file
(``--config``) and then applies flag overrides. Each field of
:class:`~seedqca.trajectory.RunConfig` has a flag of the same name, e.g.
``--gamma 0.98,0.997,1.01`` or ``--gamma 0.99:1.0:0.002``.

The sweep worker count comes from ``SEEDQCA_WORKERS`` (default 1).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

from . import __version__
from .analysis import (estimate_critical, plot_series, read_series_csv,
                       write_series_csv, write_summary)
from .dkca import DkConfig, dk_run
from .evolution import TraceDriftError
from .trajectory import (InvariantViolation, RunConfig, parse_config_text,
                         run_trajectory, series_csv_name)

log = logging.getLogger("seedqca")

WORKERS_ENV = "SEEDQCA_WORKERS"

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    g = p.add_argument_group("config overrides")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        g.add_argument(flag, dest="cfg_" + f.name, default=None,
                       metavar=f.name.upper())


def _load_config(args) -> RunConfig:
    values = {}
    if args.config:
        values.update(parse_config_text(Path(args.config).read_text()))
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, "cfg_" + f.name, None)
        if v is not None:
            values[f.name] = v
    return RunConfig.from_mapping(values)


# ---------------------------------------------------------------------------


def cmd_evolve(args) -> int:
    cfg = _load_config(args)
    try:
        series = run_trajectory(cfg, resume=not args.no_resume)
    except TraceDriftError as exc:
        log.error("%s", exc)
        return EXIT_FAIL
    except InvariantViolation as exc:
        log.error("%s", exc)
        return EXIT_FAIL
    path = Path(cfg.output_dir) / series_csv_name(
        cfg.omega, cfg.gamma[0], cfg.chi[-1], cfg.scheme)
    last = series.rows[-1] if series.rows else None
    print(f"wrote {path}")
    if last is not None:
        print(f"t={last['t']} N={last['N']:.10g} L={last['L']} "
              f"max_bond={last['max_bond']}")
    if "dense_check_max_deviation" in series.notes:
        print(f"dense check: max |N - N_dense| = "
              f"{series.notes['dense_check_max_deviation']:.3e}")
    return EXIT_OK


def _sweep_cell(cfg: RunConfig, gamma: float, chi: int, resume: bool):
    t0 = time.perf_counter()
    try:
        run_trajectory(cfg, gamma, chi, resume=resume)
        status, err = "ok", None
    except Exception as exc:                    # reported per cell
        status, err = "failed", f"{type(exc).__name__}: {exc}"
    return {"gamma": gamma, "chi": chi, "status": status, "error": err,
            "csv": series_csv_name(cfg.omega, gamma, chi, cfg.scheme),
            "seconds": round(time.perf_counter() - t0, 3)}


def _write_manifest(out: Path, cfg: RunConfig, cells: list) -> None:
    manifest = {
        "config_sha256": cfg.digest(),
        "code_version": __version__,
        "config": cfg.to_text(),
        "cells": sorted(cells, key=lambda c: (c["gamma"], c["chi"])),
    }
    tmp = out / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    tmp.replace(out / "manifest.json")


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    jobs = [(g, c) for g in cfg.gamma for c in cfg.chi]
    cells = []
    workers = _workers()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_sweep_cell, cfg, g, c, not args.no_resume)
                    for g, c in jobs]
            for fut in as_completed(futs):
                cells.append(fut.result())
                _write_manifest(out, cfg, cells)
    else:
        for g, c in jobs:
            cells.append(_sweep_cell(cfg, g, c, not args.no_resume))
            _write_manifest(out, cfg, cells)
    failed = [c for c in cells if c["status"] != "ok"]
    for c in failed:
        log.error("cell gamma=%g chi=%s failed: %s", c["gamma"], c["chi"],
                  c["error"])
    print(f"{len(cells) - len(failed)}/{len(cells)} cells completed; "
          f"manifest {out / 'manifest.json'}")
    if len(cfg.gamma) >= 3 and not args.no_analysis:
        ok = _analyze_paths([out / c["csv"] for c in cells
                             if c["status"] == "ok"], cfg.window, out,
                            cfg.omega)
        if ok != EXIT_OK:
            return ok
    return EXIT_FAIL if failed else EXIT_OK


def cmd_dkca(args) -> int:
    cfg = _load_config(args)
    p1, p2 = cfg.p1, cfg.p2
    if args.p is not None:
        p1 = p2 = float(args.p)
    try:
        dk = DkConfig(p1, p2, cfg.t_max, cfg.runs, cfg.rng_seed)
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    res = dk_run(dk, workers=_workers())
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    series = res.to_timeseries()
    series.gamma = float("nan")
    series.notes.update(p1=p1, p2=p2, runs=cfg.runs, rng_seed=cfg.rng_seed)
    path = out / f"dkca_p{p1:g}_{p2:g}_runs{cfg.runs}_seed{cfg.rng_seed}.csv"
    write_series_csv(series, path)
    print(f"wrote {path}")
    lo, hi = cfg.window
    if 2 <= lo <= hi <= cfg.t_max:
        try:
            print(f"theta over [{lo}, {hi}] = {res.theta((lo, hi)):.4f}")
        except ValueError as exc:
            print(f"theta undefined: {exc}")
    return EXIT_OK


def _collect(paths) -> list[Path]:
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.glob("run_*.csv")))
        else:
            files.append(p)
    return files


def _analyze_paths(files, window, out: Path, omega=None) -> int:
    grid = {}
    for f in files:
        s = read_series_csv(f)
        grid.setdefault(s.gamma, {})[s.chi] = s
        if omega is None:
            omega = s.omega
    if len(grid) < 3:
        print(f"grid too small: {len(grid)} value(s) of gamma, need 3",
              file=sys.stderr)
        return EXIT_USAGE
    if any(len(v) < 2 for v in grid.values()):
        log.warning("missing chi/2 data for some gamma; chi error omitted "
                    "there")
    try:
        est = estimate_critical(grid, window)
    except ValueError as exc:
        print(f"analysis failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out.mkdir(parents=True, exist_ok=True)
    write_summary(est, out / "summary.json", omega)
    plot_series(grid, out / "critical.svg", window,
                title=f"ω = {omega:g}" if omega is not None else None)
    chi_txt = "n/a" if est.chi_error is None else f"{est.chi_error:.4f}"
    print(f"gamma_c = {est.gamma_c:g} +/- {est.gamma_error:g}"
          f"{' (grid boundary)' if est.on_boundary else ''}")
    print(f"theta = {est.theta:.4f} +/- {est.theta_error:.4f} "
          f"(chi error {chi_txt})")
    print(f"summary {out / 'summary.json'}, plot {out / 'critical.svg'}")
    return EXIT_FAIL if est.on_boundary else EXIT_OK


def cmd_analyze(args) -> int:
    files = _collect(args.inputs)
    if not files:
        print("no input CSVs found", file=sys.stderr)
        return EXIT_USAGE
    window = args.window
    if window is None:
        window = [50, 100]
    out = Path(args.out) if args.out else files[0].parent
    return _analyze_paths(files, window, out)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="seedqca",
        description="Seeded absorbing-state QCA on a growing MPO row.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("evolve", help="run one quantum trajectory")
    _add_config_flags(e)
    e.add_argument("--no-resume", action="store_true",
                   help="ignore existing checkpoints")
    e.set_defaults(func=cmd_evolve)

    s = sub.add_parser("sweep", help="run a (gamma, chi) grid, then analyze")
    _add_config_flags(s)
    s.add_argument("--no-resume", action="store_true")
    s.add_argument("--no-analysis", action="store_true")
    s.set_defaults(func=cmd_sweep)

    d = sub.add_parser("dkca", help="classical Domany-Kinzel ensemble")
    _add_config_flags(d)
    d.add_argument("--p", type=float, default=None,
                   help="site-DP probability (sets p1 = p2)")
    d.set_defaults(func=cmd_dkca)

    a = sub.add_parser("analyze", help="critical point from run CSVs")
    a.add_argument("inputs", nargs="+", help="CSV files or directories")
    a.add_argument("--window", type=int, nargs=2, metavar=("LO", "HI"))
    a.add_argument("--out", help="directory for summary.json and plots")
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose,
                                                               2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: "
                                            "%(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
