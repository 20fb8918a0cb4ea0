"""Dense, exact reduced dynamics for small rows.

The row density matrix is kept as a ``(2,)*L + (2,)*L`` array. Each gate is
applied as a small channel: inputs that are still vacuum (new targets,
padding controls) are fed in as ``|0>`` and outputs that no later gate needs
are traced immediately. This keeps the number of live qubits close to the
row length, which is what lets ``t = 6`` of the odd-even scheme (13 sites)
run densely.

Gates are applied in an order that respects every pairwise constraint of
the scheme's gate order (gates that share no site commute), so the result
equals the literal ordered product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evolution import StepScheme
from .gates import PAULI, GateSpec
from .mps import Mpo

__all__ = [
    "DenseLimitError", "DenseRowState", "DENSE_LIMIT", "dense_seed",
    "dense_vacuum", "dense_step", "dense_run", "dense_total_occupation",
    "dense_profile", "dense_peak_qubits", "mpo_max_abs_difference",
]

# live qubits allowed during a step; 13 qubits is a 1 GiB density matrix
DENSE_LIMIT = 13


class DenseLimitError(ValueError):
    """The step would need more live qubits than the configured limit."""


@dataclass(frozen=True)
class DenseRowState:
    matrix: np.ndarray
    time: int = 0
    left_offset: int = 0

    @property
    def length(self) -> int:
        return int(round(np.log2(self.matrix.shape[0])))

    @property
    def coordinates(self) -> np.ndarray:
        return np.arange(self.left_offset, self.left_offset + self.length)


def dense_seed() -> DenseRowState:
    return DenseRowState(PAULI.number_op.copy(), 0, 0)


def dense_vacuum(length: int = 1) -> DenseRowState:
    m = np.zeros((2 ** length, 2 ** length), dtype=np.complex128)
    m[0, 0] = 1.0
    return DenseRowState(m, 0, 0)


def _schedule(scheme: StepScheme, n: int) -> list[int]:
    """Gate order with the same pairwise precedences as the scheme, picking
    the leftmost available gate first."""
    first = scheme.control_first(n)
    preds = [set() for _ in range(n)]
    for k in range(1, n):
        if first[k]:
            preds[k].add(k - 1)
        else:
            preds[k - 1].add(k)
    done, order = set(), []
    while len(order) < n:
        j = min(g for g in range(n) if g not in done and preds[g] <= done)
        order.append(j)
        done.add(j)
    return order


def _plan(length: int, scheme: StepScheme):
    """Split the step into blocks of consecutive gates.

    Each block is applied as one channel and ends as soon as it can trace a
    control that was live when the block started, so the number of live
    qubits never exceeds the larger of the input and output row (plus one).

    Returns ``(blocks, peak, n_targets)``; a block is
    ``(gates, sites, fresh, traced)``. Labels: ``("c", k)`` for control
    ``k`` of the padded row, ``("t", j)`` for target ``j``.
    """
    pl, _ = scheme.padding
    n = scheme.n_targets(length)
    order = _schedule(scheme, n)
    pos = {j: i for i, j in enumerate(order)}
    live = {("c", pl + i) for i in range(length)}
    peak = len(live)
    blocks = []
    i = 0
    while i < n:
        gates, sites, fresh, traced = [], [], [], []
        start_live = set(live)
        while i < n:
            j = order[i]
            i += 1
            gates.append(j)
            for x in (("c", j), ("c", j + 1), ("t", j)):
                if x not in sites:
                    sites.append(x)
                    if x not in live:
                        fresh.append(x)
            for k in (j, j + 1):
                users = [g for g in (k - 1, k) if 0 <= g < n]
                if all(pos[g] <= pos[j] for g in users):
                    traced.append(("c", k))
            if any(x in start_live for x in traced):
                break
        after = (live | set(fresh)) - set(traced)
        peak = max(peak, len(after))
        live = after
        blocks.append((gates, sites, fresh, traced))
    return blocks, peak, n


def dense_peak_qubits(length: int, scheme: StepScheme) -> int:
    """Largest number of live qubits :func:`dense_step` needs."""
    return _plan(length, scheme)[1]


def _block_unitary(gate: GateSpec, gates: list[int], sites: list) -> np.ndarray:
    """Ordered product of the block's gates on its sites, as a
    ``(2,)*m + (2,)*m`` tensor."""
    m = len(sites)
    g6 = gate.unitary.reshape((2,) * 6)
    u = np.eye(2 ** m, dtype=np.complex128).reshape((2,) * (2 * m))
    for j in gates:
        ax = [sites.index(x) for x in (("c", j), ("c", j + 1), ("t", j))]
        u = np.tensordot(g6, u, axes=([3, 4, 5], ax))
        # tensordot puts the new outputs first; restore site order
        rest = [a for a in range(m) if a not in ax]
        perm = [0] * m
        for pos_new, a in enumerate(ax + rest):
            perm[a] = pos_new
        u = u.transpose(perm + list(range(m, 2 * m)))
    return u


def _channel(u: np.ndarray, sites: list, fresh: list, traced: list):
    """Superoperator ``S[kept_ket, kept_bra, in_ket, in_bra]`` for a block.

    Fresh inputs are fixed to the vacuum and traced outputs summed over.
    """
    m = len(sites)
    idx = tuple(0 if x in fresh else slice(None) for x in sites)
    v = u[(Ellipsis,) + idx]                       # m outputs, live inputs
    n_in = v.ndim - m
    kept = [a for a, x in enumerate(sites) if x not in traced]
    gone = [a for a, x in enumerate(sites) if x in traced]
    v = v.transpose(kept + gone + list(range(m, m + n_in)))
    nk, ng = len(kept), len(gone)
    v = v.reshape((2 ** nk, 2 ** ng, 2 ** n_in))
    s = np.einsum("kmi,lmj->klij", v, v.conj())
    return s.reshape((2,) * (2 * nk + 2 * n_in)), nk, n_in


def dense_step(s: DenseRowState, gate: GateSpec, scheme: StepScheme,
               max_qubits: int = DENSE_LIMIT) -> DenseRowState:
    """One exact step of the reduced dynamics.

    Raises
    ------
    DenseLimitError
        If the step would exceed ``max_qubits`` live qubits.
    """
    length = s.length
    blocks, peak, n = _plan(length, scheme)
    if peak > max_qubits:
        raise DenseLimitError(
            f"step from L={length} ({scheme.label()}) needs {peak} live "
            f"qubits, limit is {max_qubits}")
    pl, _ = scheme.padding
    rho = s.matrix.reshape((2,) * (2 * length))
    tags = [("k", ("c", pl + i)) for i in range(length)]
    tags += [("b", ("c", pl + i)) for i in range(length)]

    for gates, sites, fresh, traced in blocks:
        u = _block_unitary(gate, gates, sites)
        sup, nk, n_in = _channel(u, sites, fresh, traced)
        ins = [x for x in sites if x not in fresh]
        outs = [x for x in sites if x not in traced]
        ax_k = [tags.index(("k", x)) for x in ins]
        ax_b = [tags.index(("b", x)) for x in ins]
        rho = np.tensordot(rho, sup,
                           axes=(ax_k + ax_b,
                                 list(range(2 * nk, 2 * nk + 2 * n_in))))
        drop = set(ax_k + ax_b)
        tags = [t for a, t in enumerate(tags) if a not in drop]
        tags += [("k", x) for x in outs] + [("b", x) for x in outs]

    perm = [tags.index(("k", ("t", j))) for j in range(n)]
    perm += [tags.index(("b", ("t", j))) for j in range(n)]
    mat = np.ascontiguousarray(rho.transpose(perm)).reshape(2 ** n, 2 ** n)
    return DenseRowState(mat, s.time + 1, s.left_offset - (pl - 1))


def dense_run(gate: GateSpec, scheme: StepScheme, t_max: int,
              initial: DenseRowState | None = None,
              max_qubits: int = DENSE_LIMIT) -> list[DenseRowState]:
    """States at ``t = 0 .. t_max`` starting from the seed."""
    s = dense_seed() if initial is None else initial
    out = [s]
    for _ in range(t_max):
        s = dense_step(s, gate, scheme, max_qubits)
        out.append(s)
    return out


def dense_profile(s: DenseRowState) -> np.ndarray:
    """Per-site occupation, in lattice order."""
    p = np.real(np.diagonal(s.matrix)).reshape((2,) * s.length)
    axes = tuple(range(s.length))
    return np.array([p.sum(axis=axes[:k] + axes[k + 1:])[1]
                     for k in range(s.length)])


def dense_total_occupation(s: DenseRowState) -> float:
    return float(dense_profile(s).sum())


def mpo_max_abs_difference(m: Mpo, dense: np.ndarray,
                           block_entries: int = 1 << 22) -> float:
    """``max |m - dense|`` over all matrix elements, without materialising
    the MPO as one dense matrix when it would be large."""
    n = len(m)
    if dense.shape != (2 ** n, 2 ** n):
        raise ValueError("size mismatch")
    # right block: contract the tail until it is about block_entries big
    split = n
    right = np.ones((1, 1, 1), dtype=np.complex128)    # (bond, out, in)
    while split > 0:
        t = m.sites[split - 1]
        size = t.shape[0] * (right.shape[1] * 2) ** 2
        if size > block_entries and split < n:
            break
        right = np.einsum("lacr,rbd->labcd", t, right)
        sh = right.shape
        right = right.reshape(sh[0], sh[1] * sh[2], sh[3] * sh[4])
        split -= 1
    dense_t = dense.reshape((2,) * split + (2 ** (n - split),)
                            + (2,) * split + (2 ** (n - split),))
    worst = 0.0
    # enumerate left-row configurations (out, in) of the first sites
    for idx in np.ndindex(*((2, 2) * split)):
        outs, ins = idx[0::2], idx[1::2]
        vec = np.ones(1, dtype=np.complex128)
        for k in range(split):
            vec = vec @ m.sites[k][:, outs[k], ins[k], :]
        block = np.tensordot(vec, right, axes=(0, 0))
        ref = dense_t[outs + (slice(None),) + ins + (slice(None),)]
        worst = max(worst, float(np.max(np.abs(block - ref))))
    return worst
