"""The three-site controlled gate of the absorbing-state QCA.

A gate acts on two control sites of row ``t-1`` (left, right) and one
target site of row ``t``. Its 8x8 matrix uses the axis order
``(control-left, control-right, target)``: basis index ``4*cl + 2*cr + t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mps import Mpo
from .tensor_core import hermitian_exp, svd_split, truncation_rank

__all__ = [
    "PauliSet", "PAULI", "GateSpec", "build_projector", "build_entangler",
    "build_gate", "gate_to_mpo", "gate_superop_chain",
]


@dataclass(frozen=True)
class PauliSet:
    """Single-site operators; index 0 is empty, index 1 occupied."""

    sigma_plus: np.ndarray
    sigma_minus: np.ndarray
    sigma_y: np.ndarray
    sigma_z: np.ndarray
    number_op: np.ndarray
    identity: np.ndarray
    vacuum: np.ndarray


def _make_paulis() -> PauliSet:
    sp = np.array([[0, 0], [1, 0]], dtype=np.complex128)   # |1><0|
    # sigma_y = -i|1><0| + i|0><1|, sigma_z = |1><1| - |0><0|
    sy = np.array([[0, 1j], [-1j, 0]], dtype=np.complex128)
    sz = np.array([[-1, 0], [0, 1]], dtype=np.complex128)
    n = np.array([[0, 0], [0, 1]], dtype=np.complex128)
    vac = np.array([[1, 0], [0, 0]], dtype=np.complex128)
    return PauliSet(sp, sp.conj().T.copy(), sy, sz, n,
                    np.eye(2, dtype=np.complex128), vac)


PAULI = _make_paulis()


def build_projector() -> np.ndarray:
    """``1 - |00><00|`` on the two control sites."""
    p = np.eye(4, dtype=np.complex128)
    p[0, 0] = 0.0
    return p


def build_entangler(omega: float) -> np.ndarray:
    """``exp(-i omega (sz x sy + sy x sz))`` on the control pair."""
    h = np.kron(PAULI.sigma_z, PAULI.sigma_y) + np.kron(PAULI.sigma_y,
                                                         PAULI.sigma_z)
    return hermitian_exp(h, -1j * omega)


@dataclass(frozen=True)
class GateSpec:
    gamma: float
    omega: float
    order: str
    unitary: np.ndarray
    mpo_form: Mpo

    @property
    def mpo_bonds(self) -> list[int]:
        return self.mpo_form.bond_dims


def _generator(omega: float, order: str) -> np.ndarray:
    u = build_entangler(omega)
    p = build_projector()
    if order == "UP":
        up = u @ p
    elif order == "PU":
        up = p @ u
    else:
        raise ValueError(f"order must be 'UP' or 'PU', got {order!r}")
    a = np.kron(up, PAULI.sigma_plus)
    return a + a.conj().T


def build_gate(gamma: float, omega: float, order: str = "UP") -> GateSpec:
    """Gate ``exp(-i gamma (U P sigma+ + h.c.))``.

    ``order`` selects the operator product on the controls: ``"UP"`` applies
    the projector first (the default), ``"PU"`` the entangler first.
    Results are cached per ``(gamma, omega, order)``.
    """
    return _build_gate_cached(float(gamma), float(omega), order)


@lru_cache(maxsize=128)
def _build_gate_cached(gamma: float, omega: float, order: str) -> GateSpec:
    g = hermitian_exp(_generator(omega, order), -1j * gamma)
    g.setflags(write=False)
    mpo = Mpo(_split_three(g.reshape(2, 2, 2, 2, 2, 2), _SPLIT_CUTOFF))
    return GateSpec(gamma, omega, order, g, mpo)


# relative squared weight; only removes round-off singular values
_SPLIT_CUTOFF = 1e-28


def _split_three(g6: np.ndarray, cutoff: float) -> list[np.ndarray]:
    """Split a 3-site operator ``(o0, o1, o2, i0, i1, i2)`` into MPO site
    tensors ``(l, o, i, r)``."""
    t = g6.transpose(0, 3, 1, 4, 2, 5)            # (o0,i0, o1,i1, o2,i2)
    first = svd_split(t, [0, 1], cutoff=cutoff)
    a = first.left[None]
    rest = first.singular_values[:, None, None, None, None] * first.right
    second = svd_split(rest, [0, 1, 2], cutoff=cutoff)
    b = second.left
    c = (second.singular_values[:, None, None] * second.right)[..., None]
    return [a, b, c]


def _masked_factor(m: np.ndarray, rows, cols, cutoff: float):
    """``m[rows][:, cols] = left @ right`` by SVD, embedded so that ``left``
    is exactly zero outside ``rows`` and ``right`` outside ``cols``."""
    rows, cols = np.asarray(rows), np.asarray(cols)
    left = np.zeros((m.shape[0], 0), dtype=np.complex128)
    right = np.zeros((0, m.shape[1]), dtype=np.complex128)
    if rows.size == 0 or cols.size == 0:
        return left, right
    u, s, vh = np.linalg.svd(m[np.ix_(rows, cols)], full_matrices=False)
    if s[0] == 0:
        return left, right
    r, _ = truncation_rank(s, None, cutoff)
    left = np.zeros((m.shape[0], r), dtype=np.complex128)
    right = np.zeros((r, m.shape[1]), dtype=np.complex128)
    left[rows] = u[:, :r]
    right[:, cols] = s[:r, None] * vh[:r]
    return left, right


def _split_absorbing(s6: np.ndarray, cutoff: float) -> list[np.ndarray]:
    """Split a 3-site superoperator ``(o0, o1, o2, i0, i1, i2)`` (doubled
    indices, 0 = vacuum) that maps the all-vacuum input to itself.

    The vacuum-to-vacuum part gets its own bond channel and every other
    channel vanishes exactly on an all-vacuum input, so empty regions stay
    exactly empty under the chain.
    """
    t = np.array(s6.transpose(0, 3, 1, 4, 2, 5), dtype=np.complex128)
    d = t.shape[0]
    t[0, 0, 0, 0, 0, 0] = 0.0              # the vacuum channel, added back
    t[:, 0, :, 0, :, 0] = 0.0              # vacuum in -> vacuum out only
    t[0, :, 0, :, 0, :] = 0.0              # and nothing else -> vacuum
    ins = np.arange(d * d) % d                # input of a flat (o, i) pair
    # cut 1: site 0 | sites 1, 2
    m1 = t.reshape(d * d, -1)
    _, in1, _, in2 = np.unravel_index(np.arange(m1.shape[1]), (d,) * 4)
    la, ra = _masked_factor(m1, np.flatnonzero(ins != 0),
                            np.arange(m1.shape[1]), cutoff)
    lb, rb = _masked_factor(m1, np.flatnonzero(ins == 0),
                            np.flatnonzero((in1 != 0) | (in2 != 0)), cutoff)
    vac = np.zeros(d * d)
    vac[0] = 1.0
    a = np.hstack([la, lb, vac[:, None]])
    k1 = a.shape[1]
    # cut 2: (bond, site 1) | site 2; the last bond is the vacuum channel
    rest = np.vstack([ra, rb, np.zeros((1, m1.shape[1]))])
    m2 = rest.reshape(k1 * d * d, d * d)
    bond, _, inp = np.unravel_index(np.arange(m2.shape[0]), (k1, d, d))
    body = bond < k1 - 1
    # rows fed by a vacuum input on sites 0 and 1 must stay off the
    # vacuum input of site 2
    quiet = body & ~((bond >= la.shape[1]) & (inp == 0))
    l1, c1 = _masked_factor(m2, np.flatnonzero(body),
                            np.flatnonzero(ins != 0), cutoff)
    l2, c2 = _masked_factor(m2, np.flatnonzero(quiet),
                            np.flatnonzero(ins == 0), cutoff)
    vrow = np.zeros((m2.shape[0], 1))
    vrow[(k1 - 1) * d * d] = 1.0
    b = np.hstack([l1, l2, vrow])
    c = np.vstack([c1, c2, vac[None]])
    return [a.reshape(1, d, d, k1), b.reshape(k1, d, d, -1),
            c.reshape(-1, d, d, 1)]


def gate_to_mpo(g: GateSpec) -> Mpo:
    """Three-site MPO of the gate with sites ordered
    ``(control-left, control-right, target)``."""
    return g.mpo_form


def gate_superop_chain(g: GateSpec, cutoff: float = _SPLIT_CUTOFF):
    """Superoperator ``G . G^dagger`` split over the row geometry.

    Site order is ``(control-left, target, control-right)``, which is the
    order the sites appear in an interleaved two-row chain. Tensors act on
    vectorised operators (doubled index ``2*ket + bra``).

    Returns
    -------
    (ndarray, ndarray, ndarray)
        ``left (4o, 4i, k1)``, ``mid (k1, 4o, 4i, k2)``,
        ``right (k2, 4o, 4i)``.
    """
    g6 = g.unitary.reshape(2, 2, 2, 2, 2, 2).transpose(0, 2, 1, 3, 5, 4)
    # (cl', t', cr', cl, t, cr) ; superop pairs ket and bra per site
    s = np.einsum("abcdef,ghijkl->agbhcidjekfl", g6, g6.conj())
    s = s.reshape(4, 4, 4, 4, 4, 4)
    a, b, c = _split_absorbing(s, cutoff)
    return a[0], b, c[..., 0]
