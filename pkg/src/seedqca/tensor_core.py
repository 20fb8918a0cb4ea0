"""Dense tensor kernels: pairwise contraction, SVD splitting and the
Hermitian matrix exponential.

Tensors are plain ``numpy.ndarray`` objects in C (row-major) order with
complex128 entries. Every function here is pure; inputs are never modified.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

__all__ = [
    "SvdResult",
    "as_tensor",
    "contract",
    "svd_split",
    "hermitian_exp",
    "truncation_rank",
]

HERMITIAN_TOL = 1e-12


def as_tensor(data, shape: Optional[Sequence[int]] = None) -> np.ndarray:
    """Return ``data`` as a C-contiguous complex128 array of ``shape``.

    Raises
    ------
    ValueError
        If an extent is smaller than one or the data length does not match
        the product of extents.
    """
    arr = np.ascontiguousarray(np.asarray(data, dtype=np.complex128))
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s < 1 for s in shape):
            raise ValueError(f"all extents must be >= 1, got {shape}")
        if arr.size != int(np.prod(shape)):
            raise ValueError(
                f"data of length {arr.size} does not fit shape {shape}"
            )
        arr = arr.reshape(shape)
    elif any(s < 1 for s in arr.shape):
        raise ValueError(f"all extents must be >= 1, got {arr.shape}")
    return arr


def contract(a: np.ndarray, b: np.ndarray, axis_pairs) -> np.ndarray:
    """Contract ``a`` and ``b`` over the paired axes.

    The result carries the unpaired axes of ``a`` (in order) followed by the
    unpaired axes of ``b``. An empty pairing gives the outer product.

    Parameters
    ----------
    a, b : ndarray
    axis_pairs : sequence of (int, int)
        ``(axis of a, axis of b)`` pairs to sum over.

    Raises
    ------
    ValueError
        Paired extents differ, or an axis occurs in more than one pair.
    """
    pairs = [(int(i) % a.ndim if a.ndim else int(i),
              int(j) % b.ndim if b.ndim else int(j)) for i, j in axis_pairs]
    axes_a = [p[0] for p in pairs]
    axes_b = [p[1] for p in pairs]
    if len(set(axes_a)) != len(axes_a) or len(set(axes_b)) != len(axes_b):
        raise ValueError(f"axis paired more than once in {axis_pairs}")
    for i, j in pairs:
        if a.shape[i] != b.shape[j]:
            raise ValueError(
                f"extent mismatch: axis {i} of a has {a.shape[i]}, "
                f"axis {j} of b has {b.shape[j]}"
            )
    return np.tensordot(a, b, axes=(axes_a, axes_b))


@dataclass(frozen=True)
class SvdResult:
    """Factors of ``t = left @ diag(singular_values) @ right``.

    ``left`` has the left axes of the input plus a trailing bond axis,
    ``right`` a leading bond axis plus the remaining input axes.
    ``discarded_weight`` is the dropped fraction of the squared spectrum.
    ``zero`` flags an all-zero input, returned as an explicit rank-1 zero.
    """

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray
    discarded_weight: float
    zero: bool = False

    @property
    def rank(self) -> int:
        return self.singular_values.shape[0]


def truncation_rank(s: np.ndarray, max_rank: Optional[int] = None,
                    cutoff: float = 0.0) -> tuple[int, float]:
    """Number of singular values to keep and the discarded weight.

    Values whose squared weight relative to the full squared spectrum is
    below ``cutoff`` are dropped, then at most ``max_rank`` are kept. At
    least one value always survives. Values below ``len(s) * eps`` times
    the largest are treated as exact zeros (numerical rank).
    """
    s = s.astype(np.float64)
    if len(s) and s[0] > 0:
        # values at the round-off level of the largest one are exact zeros
        s = np.where(s > s[0] * len(s) * np.finfo(float).eps, s, 0.0)
    w = s ** 2
    total = w.sum()
    if total == 0.0:
        return 1, 0.0
    keep = int(np.count_nonzero(w / total >= cutoff)) if cutoff > 0 else len(s)
    # trailing zeros carry no information
    keep = min(keep, int(np.count_nonzero(w)))
    if max_rank is not None:
        keep = min(keep, int(max_rank))
    keep = max(keep, 1)
    discarded = float(w[keep:].sum() / total)
    return keep, min(max(discarded, 0.0), 1.0)


def _svd(mat: np.ndarray):
    try:
        return np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(mat, full_matrices=False,
                                lapack_driver="gesvd")


def svd_split(t: np.ndarray, left_axes: Sequence[int],
              max_rank: Optional[int] = None,
              cutoff: float = 0.0) -> SvdResult:
    """Split ``t`` by a (truncated) SVD across ``left_axes | rest``.

    Parameters
    ----------
    t : ndarray
    left_axes : sequence of int
        Proper, non-empty subset of the axes of ``t``. Their order is kept.
    max_rank : int or None
        Upper bound on the number of kept singular values; None is unbounded.
    cutoff : float
        Relative squared-weight threshold below which values are dropped.

    Returns
    -------
    SvdResult
    """
    left_axes = [int(ax) % t.ndim for ax in left_axes]
    if not left_axes or len(left_axes) >= t.ndim:
        raise ValueError("left_axes must be a proper non-empty subset")
    if len(set(left_axes)) != len(left_axes):
        raise ValueError(f"repeated axis in {left_axes}")
    if max_rank is not None and max_rank < 1:
        raise ValueError("max_rank must be positive")
    if cutoff < 0:
        raise ValueError("cutoff must be non-negative")
    right_axes = [ax for ax in range(t.ndim) if ax not in left_axes]
    lshape = tuple(t.shape[ax] for ax in left_axes)
    rshape = tuple(t.shape[ax] for ax in right_axes)
    mat = np.transpose(t, left_axes + right_axes).reshape(
        int(np.prod(lshape)), int(np.prod(rshape)))

    if not np.any(mat):
        u = np.zeros(lshape + (1,), dtype=np.complex128)
        v = np.zeros((1,) + rshape, dtype=np.complex128)
        return SvdResult(u, np.zeros(1), v, 0.0, zero=True)

    u, s, vh = _svd(mat)
    keep, discarded = truncation_rank(s, max_rank, cutoff)
    return SvdResult(
        left=np.ascontiguousarray(u[:, :keep]).reshape(lshape + (keep,)),
        singular_values=s[:keep],
        right=np.ascontiguousarray(vh[:keep]).reshape((keep,) + rshape),
        discarded_weight=discarded,
    )


def hermitian_exp(h: np.ndarray, scale: complex) -> np.ndarray:
    """``exp(scale * h)`` for a Hermitian matrix ``h`` via ``eigh``.

    Raises
    ------
    ValueError
        If ``h`` is not square or deviates from Hermiticity by more than
        1e-12 (relative to its largest entry when that exceeds one).
    """
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    scale_ref = max(1.0, float(np.max(np.abs(h))) if h.size else 1.0)
    if np.max(np.abs(h - h.conj().T)) > HERMITIAN_TOL * scale_ref:
        raise ValueError("matrix is not Hermitian within 1e-12")
    out = np.eye(h.shape[0], dtype=np.complex128)
    if scale == 0:
        return out
    # coordinates that h never touches stay exactly fixed; this keeps
    # absorbing states free of eigh round-off
    act = np.flatnonzero(np.any(h != 0, axis=0) | np.any(h != 0, axis=1))
    if act.size == 0:
        return out
    sub = h[np.ix_(act, act)]
    w, v = np.linalg.eigh(0.5 * (sub + sub.conj().T))
    out[np.ix_(act, act)] = (v * np.exp(scale * w)) @ v.conj().T
    return out
