import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seedqca.analysis import (CSV_FIELDS, TimeSeries, density_profile,
                              effective_exponent, estimate_critical,
                              plot_series, read_series_csv, total_occupation,
                              window_flatness, window_theta, write_series_csv,
                              write_summary)
from seedqca.evolution import (RowState, StepScheme, apply_step, seed_state,
                               vacuum_state)
from seedqca.gates import build_gate
from seedqca.mps import CompressionPolicy, Mpo, mpo_to_dense


def make_series(occ, gamma=1.0, chi=64):
    s = TimeSeries(0.0, gamma, chi, "alternating")
    for t in sorted(occ):
        s.append(t=t, L=t + 1, N=occ[t], trace_drift=0.0, max_bond=1,
                 fit_residual=0.0, sweeps=1, converged=True, wall_ms=0.0)
    return s


def power_law(theta, c=1.3, t_max=100, curve=0.0):
    return {t: c * t ** theta * math.exp(curve * t) for t in range(1, t_max + 1)}


# row observables


def test_total_occupation_trivial():
    assert total_occupation(seed_state()) == 1
    assert total_occupation(vacuum_state(4)) == 0


def test_total_occupation_dense(rng):
    # random Hermitian, unit-trace 4-site MPO
    sites = []
    dims = [1, 2, 2, 2, 1]
    for k in range(4):
        a = rng.normal(size=(dims[k], 2, 2, dims[k + 1])) \
            + 1j * rng.normal(size=(dims[k], 2, 2, dims[k + 1]))
        sites.append(a + a.conj().transpose(0, 2, 1, 3))
    m = Mpo(sites)
    d = mpo_to_dense(m)
    tr = np.trace(d)
    m = Mpo([sites[0] / tr] + sites[1:])
    d = d / tr
    n = np.diag([0, 1])
    ref = sum(np.trace(d @ np.kron(np.kron(np.eye(2 ** k), n),
                                   np.eye(2 ** (3 - k)))).real
              for k in range(4))
    assert abs(total_occupation(RowState(m)) - ref) < 1e-10


def test_density_profile():
    assert density_profile(seed_state()) == [(0, 1.0)]
    assert all(o == 0 for _, o in density_profile(vacuum_state(3)))
    s, _ = apply_step(seed_state(), build_gate(0.9, 0.0),
                      StepScheme.alternating(), CompressionPolicy(chi=None))
    prof = density_profile(s)
    assert [x for x, _ in prof] == [0, 1]
    np.testing.assert_allclose([o for _, o in prof],
                               [np.sin(0.9) ** 2] * 2, atol=1e-14)


# effective exponent


def test_theta_exact_power_law():
    pts = effective_exponent(power_law(0.314))
    assert [t for t, _ in pts] == list(range(2, 101, 2))
    assert max(abs(th - 0.314) for _, th in pts) < 1e-12


def test_theta_small_case():
    assert effective_exponent({1: 0.5, 2: 1.0, 3: 1.5, 4: 2.0}) == [
        (2, 1.0), (4, 1.0)]


def test_theta_missing_when_dead():
    pts = dict(effective_exponent({1: 1.0, 2: 0.0, 3: 0.0, 4: 0.0}))
    assert pts[2] is None and pts[4] is None


@settings(max_examples=30, deadline=None)
@given(c=st.floats(1e-3, 1e3), theta=st.floats(-1, 1))
def test_theta_scale_invariant(c, theta):
    occ = {t: (1 + 0.1 * math.sin(t)) * t ** theta for t in range(1, 41)}
    a = effective_exponent(occ)
    b = effective_exponent({t: c * n for t, n in occ.items()})
    for (_, x), (_, y) in zip(a, b):
        assert abs(x - y) < 1e-9


def test_window_helpers():
    occ = power_law(0.3, curve=0.001)
    assert window_theta(occ, (50, 100)) > 0.3
    assert window_flatness(power_law(0.3), (50, 100)) < 1e-12
    with pytest.raises(ValueError):
        window_flatness(occ, (50, 51))


# critical point


def synthetic_grid(gammas, gamma_c, slope=0.5):
    """Exact power law at gamma_c; curvature grows away from it."""
    return {g: make_series(power_law(0.3 + slope * (g - gamma_c),
                                     curve=2.0 * (g - gamma_c) / 100), g)
            for g in gammas}


def test_selects_exact_power_law():
    grid = [0.98, 0.995, 0.997, 0.999, 1.01]
    est = estimate_critical(synthetic_grid(grid, 0.997), (50, 100))
    assert est.gamma_c == 0.997
    assert abs(est.theta - 0.3) < 1e-12
    assert est.gamma_error == pytest.approx(0.002)
    ref = max(abs(est.thetas[0.997] - est.thetas[g]) for g in (0.995, 0.999))
    assert est.theta_error == pytest.approx(ref)
    assert not est.on_boundary and est.chi_error is None


def test_uneven_grid_error_rule():
    # the selected point's error is the larger spacing to its neighbours
    grid = [1.015, 1.03, 1.032, 1.034, 1.035, 1.04, 1.05]
    est = estimate_critical(synthetic_grid(grid, 1.034), (50, 100))
    assert est.gamma_c == 1.034
    assert est.gamma_error == pytest.approx(0.002)


def test_selection_independent_of_order():
    grid = [0.98, 0.995, 0.997, 0.999, 1.01]
    data = synthetic_grid(grid, 0.999)
    rev = dict(reversed(list(data.items())))
    assert estimate_critical(data, (50, 100)).gamma_c == \
        estimate_critical(rev, (50, 100)).gamma_c == 0.999


def test_theta_error_shrinks_with_refinement():
    errs = []
    for h in (0.02, 0.01, 0.005, 0.0025):
        grid = [1.0 - h, 1.0, 1.0 + h]
        errs.append(estimate_critical(synthetic_grid(grid, 1.0),
                                      (50, 100)).theta_error)
    assert all(e >= 0 for e in errs)
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_boundary_flagged():
    est = estimate_critical(synthetic_grid([1.0, 1.01, 1.02], 1.0),
                            (50, 100))
    assert est.on_boundary and est.one_sided


def test_grid_too_small():
    with pytest.raises(ValueError, match="grid too small"):
        estimate_critical(synthetic_grid([1.0, 1.01], 1.0), (50, 100))


def test_chi_error():
    grid = [0.99, 1.0, 1.01]
    data = {}
    for g, s in synthetic_grid(grid, 1.0).items():
        low = make_series({t: n * (1 + 1e-3 * t / 100)
                           for t, n in s.occupation_map().items()}, g, 32)
        data[g] = {64: s, 32: low}
    est = estimate_critical(data, (50, 100))
    assert est.chi == 64 and est.chi_low == 32
    assert 0 < est.chi_error < 1e-3
    assert set(est.chi_gap) == set(grid)


# files


def test_csv_roundtrip(tmp_path):
    s = make_series(power_law(0.3, t_max=5))
    p = tmp_path / "run.csv"
    write_series_csv(s, p)
    assert p.read_text().splitlines()[0] == ",".join(CSV_FIELDS)
    back = read_series_csv(p)
    assert back.meta() == s.meta()
    np.testing.assert_array_equal(back.N, s.N)
    assert back.rows[0]["converged"] is True


def test_summary_and_plot(tmp_path):
    grid = [0.99, 1.0, 1.01]
    data = synthetic_grid(grid, 1.0)
    est = estimate_critical(data, (50, 100))
    write_summary(est, tmp_path / "s.json", omega=0.0)
    assert '"gamma_c": 1.0' in (tmp_path / "s.json").read_text()
    plot_series(data, tmp_path / "p.svg", (50, 100))
    assert (tmp_path / "p.svg").read_text().lstrip().startswith("<?xml")
