"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records one ``criterion N: PASS|FAIL ...`` line; the lines are
printed together at the end of the session (see ``conftest.py``).

Criterion 8 is the hours-long full reproduction and only runs with
``SEEDQCA_LONG=1`` (output goes to ``SEEDQCA_LONG_DIR``, default
``long_run``, and resumes from its checkpoints).
"""

import itertools
import os
import time
from pathlib import Path

import numpy as np
import pytest

from seedqca.analysis import density_profile, estimate_critical
from seedqca.compression import compress
from seedqca.dkca import SITE_DP_PC, DkConfig, dk_run
from seedqca.evolution import (StepScheme, TraceDriftError, apply_step,
                               extend_with_vacuum, exact_step_network,
                               seed_state, vacuum_state)
from seedqca.gates import build_gate, gate_to_mpo
from seedqca.mps import CompressionPolicy, canonicalize, mpo_to_dense, mps_norm
from seedqca.oracle import (dense_profile, dense_seed, dense_step,
                            dense_total_occupation, mpo_max_abs_difference)
from seedqca.trajectory import RunConfig, run_trajectory

RESULTS = []

SCHEMES = [StepScheme.alternating(), StepScheme.odd_even()]


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append((n, line))
    print(line)
    return ok


def ket(*bits):
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int("".join(map(str, bits)), 2)] = 1
    return v


# 1. oracle equivalence


def test_criterion_01_oracle_equivalence():
    worst_n = worst_m = worst_p = 0.0
    offsets_ok = True
    t0 = time.perf_counter()
    for omega, gamma, scheme in itertools.product(
            (0.0, 1.0), (0.5, 0.997, 1.034), SCHEMES):
        g = build_gate(gamma, omega)
        s, d = seed_state(), dense_seed()
        for _ in range(6):
            s, diag = apply_step(s, g, scheme, CompressionPolicy(chi=None))
            d = dense_step(d, g, scheme)
            offsets_ok &= s.left_offset == d.left_offset
            worst_n = max(worst_n, abs(diag.occupation
                                       - dense_total_occupation(d)))
            prof = np.array([o for _, o in density_profile(s)])
            worst_p = max(worst_p, np.max(np.abs(prof - dense_profile(d))))
            worst_m = max(worst_m, mpo_max_abs_difference(s.rho, d.matrix))
    ok = offsets_ok and max(worst_n, worst_p, worst_m) <= 1e-8
    record(1, ok, f"max |dN| = {worst_n:.1e}, max |d profile| = "
                  f"{worst_p:.1e}, max |d rho_ij| = {worst_m:.1e} "
                  f"(tol 1e-8, {time.perf_counter() - t0:.0f} s)")
    assert ok


# 2. absorbing-state exactness


def test_criterion_02_vacuum_exact():
    worst = 0.0
    for omega, scheme, chi in itertools.product((0.0, 1.0), SCHEMES,
                                                (1, 8, 64)):
        g = build_gate(1.0, omega)
        s = vacuum_state()
        for _ in range(50):
            s, diag = apply_step(s, g, scheme, CompressionPolicy(chi=chi))
            worst = max(worst, abs(diag.occupation))
    ok = worst <= 1e-14
    record(2, ok, f"max |N(t)| over t <= 50 = {worst:.1e} (tol 1e-14)")
    assert ok


# 3. gate algebra


def test_criterion_03_gate_algebra():
    worst = {"unitarity": 0.0, "absorbing": 0.0, "mpo": 0.0}
    vac = ket(0, 0, 0)
    for gamma, omega in itertools.product(np.linspace(0.0, 1.6, 5),
                                          np.linspace(0.0, 1.5, 5)):
        g = build_gate(gamma, omega)
        u = g.unitary
        worst["unitarity"] = max(worst["unitarity"],
                                 np.max(np.abs(u @ u.conj().T - np.eye(8))))
        worst["absorbing"] = max(worst["absorbing"],
                                 np.max(np.abs(u @ vac - vac)))
        worst["mpo"] = max(worst["mpo"], np.max(np.abs(
            mpo_to_dense(gate_to_mpo(g)) - u)))
    ok = max(worst.values()) <= 1e-12
    record(3, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
           + " (tol 1e-12, 5x5 grid)")
    assert ok


# 4. one-step closed form


def test_criterion_04_one_step():
    worst = 0.0
    for gamma in (0.3, 0.9, 1.2):
        g = build_gate(gamma, 0.0)
        exact = 2 * np.sin(gamma) ** 2
        d = dense_step(dense_seed(), g, StepScheme.alternating())
        _, diag = apply_step(seed_state(), g, StepScheme.alternating(),
                             CompressionPolicy(chi=None))
        worst = max(worst, abs(dense_total_occupation(d) - exact),
                    abs(diag.occupation - exact))
    ok = worst <= 1e-10
    record(4, ok, f"max |N(1) - 2 sin^2 gamma| = {worst:.1e} (tol 1e-10)")
    assert ok


# 5. classical DP exponent


def test_criterion_05_dk_exponent():
    t0 = time.perf_counter()
    res = dk_run(DkConfig.site(SITE_DP_PC, 200, runs=10_000, rng_seed=0))
    theta = res.theta((100, 200))
    ok = abs(theta - 0.314) <= 0.03
    record(5, ok, f"theta = {theta:.4f} at p = {SITE_DP_PC} "
                  f"(target 0.314 +/- 0.03, {time.perf_counter() - t0:.1f} s)")
    assert ok


# 6. quantum-classical cross-check


def test_criterion_06_quantum_classical():
    gamma = 0.9
    q = run_trajectory(RunConfig(omega=0.0, gamma=[gamma], chi=[64],
                                 t_max=30), write=False)
    c = dk_run(DkConfig.site(np.sin(gamma) ** 2, 30, runs=100_000,
                             rng_seed=0))
    z = np.abs(q.N - c.mean[1:]) / c.stderr[1:]
    ok = bool(np.all(z <= 3.0))
    record(6, ok, f"max |N_q - N_c| / stderr = {z.max():.2f} over t = 1..30 "
                  f"(tol 3, p = sin^2 0.9)")
    assert ok


# 7. desk-scale criticality

DESK_GRID = (0.98, 0.995, 0.997, 0.999, 1.01)
DESK_CHI = (32, 64)


@pytest.fixture(scope="session")
def desk_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk")
    cfg = RunConfig(omega=0.0, gamma=list(DESK_GRID), chi=list(DESK_CHI),
                    t_max=50, window=[25, 50], output_dir=str(out),
                    record_timing=False)
    grid = {}
    for g in DESK_GRID:
        grid[g] = {c: run_trajectory(cfg, g, c) for c in DESK_CHI}
    return grid


@pytest.mark.slow
def test_criterion_07_desk_criticality(desk_sweep):
    est = estimate_critical(desk_sweep, (25, 50))
    ok = (abs(est.gamma_c - 0.997) <= 0.015 and not est.on_boundary
          and abs(est.theta - 0.31) <= 0.05)
    chi_err = "n/a" if est.chi_error is None else f"{est.chi_error:.1e}"
    record(7, ok, f"gamma_c = {est.gamma_c:g} +/- {est.gamma_error:g}, "
                  f"theta = {est.theta:.4f} +/- {est.theta_error:.4f} "
                  f"(chi error {chi_err}; target 0.997 +/- 0.015, "
                  f"0.31 +/- 0.05)")
    assert ok


# 8. full reproduction (optional)

LONG = os.environ.get("SEEDQCA_LONG") == "1"
FULL_RUNS = {
    0.0: dict(grid=(0.98, 0.995, 0.996, 0.997, 0.998, 0.999, 1.01),
              chi=(64, 128), gamma_c=(0.997, 0.01), theta=(0.307, 0.017)),
    1.0: dict(grid=(1.015, 1.03, 1.032, 1.034, 1.035, 1.04, 1.05),
              chi=(128, 256), gamma_c=(1.034, 0.02), theta=(0.32, 0.03)),
}


@pytest.mark.slow
@pytest.mark.skipif(not LONG, reason="set SEEDQCA_LONG=1 (hours)")
@pytest.mark.parametrize("omega", [0.0, 1.0])
def test_criterion_08_full_reproduction(omega):
    run = FULL_RUNS[omega]
    out = Path(os.environ.get("SEEDQCA_LONG_DIR", "long_run"))
    cfg = RunConfig(omega=omega, gamma=list(run["grid"]),
                    chi=list(run["chi"]), t_max=100, window=[50, 100],
                    output_dir=str(out / f"omega{omega:g}"),
                    record_timing=False, trace_threshold=1e-2)
    grid = {g: {c: run_trajectory(cfg, g, c) for c in run["chi"]}
            for g in run["grid"]}
    est = estimate_critical(grid, (50, 100))
    (gc, dg), (th, dth) = run["gamma_c"], run["theta"]
    ok = abs(est.gamma_c - gc) <= dg and abs(est.theta - th) <= dth
    record(8, ok, f"omega = {omega:g}: gamma_c = {est.gamma_c:g}, theta = "
                  f"{est.theta:.4f} (target {gc} +/- {dg}, {th} +/- {dth})")
    assert ok


# 9. compression quality


def test_criterion_09_compression():
    # at omega = 1 the exact bond exceeds 16 from t = 3 (odd-even) or 5
    # (alternating) on; the line reports both omegas separately
    policy = CompressionPolicy(chi=16)
    gaps = {0.0: 0.0, 1.0: 0.0}
    worst_rise = 0.0
    for omega, gamma, scheme in itertools.product(
            (0.0, 1.0), (0.997, 1.034), SCHEMES):
        g = build_gate(gamma, omega)
        s = seed_state()
        for _ in range(6):
            exact = exact_step_network(extend_with_vacuum(s, scheme), g,
                                       scheme)
            exact = canonicalize(exact, len(exact) - 1)
            scale = mps_norm(exact) ** 2
            _, rep = compress(exact, policy)
            obj = np.array(rep.objective_trace)
            if len(obj) > 1:
                worst_rise = max(worst_rise, float(np.max(np.diff(obj)))
                                 / scale)
            gaps[omega] = max(gaps[omega], rep.observable_gap)
            s, _ = apply_step(s, g, scheme, policy)
    ok = worst_rise <= 1e-12 and max(gaps.values()) <= 1e-6
    record(9, ok, f"max objective rise {worst_rise:.1e} (relative, tol "
                  f"1e-12); max observable gap {gaps[0.0]:.1e} at omega = 0, "
                  f"{gaps[1.0]:.1e} at omega = 1 (tol 1e-6)")
    assert ok


# 10. trace and Hermiticity bookkeeping


@pytest.mark.slow
def test_criterion_10_trace_bookkeeping(desk_sweep, tmp_path):
    runs = [desk_sweep[g][64] for g in DESK_GRID]
    drift = max(float(np.max(s.column("trace_drift"))) for s in runs)
    reported = all("cumulative_trace_correction" in s.notes for s in runs)
    total = max(s.notes.get("cumulative_trace_correction", np.nan)
                for s in runs)
    # a threshold below the observed drift must stop the run
    loud = False
    try:
        run_trajectory(RunConfig(omega=0.0, gamma=[0.997], chi=[64],
                                 t_max=50, trace_threshold=drift / 10),
                       write=False)
    except TraceDriftError:
        loud = True
    ok = drift <= 1e-4 and reported and loud
    record(10, ok, f"max per-step drift {drift:.1e} (tol 1e-4), cumulative "
                   f"correction {total:.1e} reported, "
                   f"{'raises' if loud else 'does not raise'} above "
                   f"threshold")
    assert ok
