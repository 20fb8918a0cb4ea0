import numpy as np
import pytest

from seedqca.compression import (compress, init_ansatz, variational_fit)
from seedqca.gates import PAULI
from seedqca.mps import (CompressionPolicy, Mps, canonicalize,
                         doubled_site_expectations, mps_norm, mps_overlap,
                         mps_to_dense, product_mps, random_mps)


def occupation(s):
    return doubled_site_expectations(s, PAULI.number_op).sum().real


def test_representable_target(rng):
    target = random_mps(6, 4, 3, rng)
    fit, rep = variational_fit(target, CompressionPolicy(chi=9),
                               accurate_distance=True)
    assert rep.final_distance <= 1e-10 * mps_norm(target)
    assert rep.sweeps_used == 1 and rep.converged


def test_product_target_chi_one():
    target = product_mps([np.array([1, 0, 0, 1]) / np.sqrt(2)] * 4)
    fit, rep = variational_fit(target, CompressionPolicy(chi=1),
                               accurate_distance=True)
    assert rep.final_distance < 1e-12 and fit.max_bond == 1


def test_fit_beats_svd_oracle(rng):
    target = random_mps(6, 4, 8, rng)
    psi = mps_to_dense(target).reshape(-1)
    fit, rep = variational_fit(target, CompressionPolicy(
        chi=4, max_sweeps=20, fit_tolerance=1e-14))
    phi = mps_to_dense(fit).reshape(-1)
    fid = abs(np.vdot(phi, psi)) ** 2 / (np.vdot(phi, phi).real
                                         * np.vdot(psi, psi).real)
    init, _ = init_ansatz(canonicalize(target, 5), CompressionPolicy(chi=4))
    chi = mps_to_dense(init).reshape(-1)
    fid_svd = abs(np.vdot(chi, psi)) ** 2 / (np.vdot(chi, chi).real
                                             * np.vdot(psi, psi).real)
    assert fid >= fid_svd - 1e-6
    assert rep.final_distance <= rep.initial_distance + 1e-12


def test_vacuum_target():
    vac = np.array([1.0, 0, 0, 0])
    target = product_mps([vac] * 5)
    a, _ = init_ansatz(target, CompressionPolicy(chi=2))
    np.testing.assert_allclose(mps_to_dense(a), mps_to_dense(target))


def test_init_exact_when_chi_large(rng):
    target = random_mps(5, 4, 2, rng)
    a, w = init_ansatz(target, CompressionPolicy(chi=16))
    assert w < 1e-20
    assert abs(mps_overlap(a, target) - mps_overlap(target, target)) \
        < 1e-10 * mps_norm(target) ** 2


@pytest.mark.parametrize("seed", range(4))
def test_objective_monotone(seed):
    rng = np.random.default_rng(seed)
    target = random_mps(7, 4, 6, rng)
    _, rep = variational_fit(target, CompressionPolicy(
        chi=3, max_sweeps=6, fit_tolerance=1e-14))
    obj = np.array(rep.objective_trace)
    scale = mps_norm(target) ** 2
    assert np.all(np.diff(obj) <= 1e-12 * scale)


def test_norm_never_exceeds_target(rng):
    target = random_mps(6, 4, 5, rng)
    fit, _ = variational_fit(target, CompressionPolicy(chi=2, max_sweeps=4))
    assert mps_norm(fit) <= mps_norm(target) * (1 + 1e-10)


def test_unbounded_reproduces_occupation(rng):
    target = random_mps(6, 4, 4, rng)
    fit, rep = variational_fit(target, CompressionPolicy(chi=None))
    assert rep.observable_gap <= 1e-10 * mps_norm(target) ** 2
    assert abs(occupation(fit) - occupation(target)) \
        <= 1e-10 * mps_norm(target) ** 2


def test_converged_implies_gap(rng):
    target = random_mps(6, 4, 6, rng)
    pol = CompressionPolicy(chi=3, max_sweeps=3, fit_tolerance=1e-3)
    _, rep = variational_fit(target, pol)
    if rep.converged:
        assert rep.observable_gap <= pol.fit_tolerance
    else:
        assert rep.stalled or rep.sweeps_used == pol.max_sweeps


def test_compress_svd_path(rng):
    target = random_mps(5, 4, 6, rng)
    approx, rep = compress(target, CompressionPolicy(chi=3, variational=False))
    assert approx.max_bond <= 3 and rep.sweeps_used == 0
    assert rep.final_distance > 0
