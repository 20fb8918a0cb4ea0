"""Matrix product operators and states.

Conventions
-----------
* MPO site tensors have axes ``(left, out, in, right)`` with physical
  extents 2; basis index 0 is the empty site and 1 the occupied site.
* MPS site tensors have axes ``(left, phys, right)``.
* Doubled (vectorised) space fuses an operator's physical pair as
  ``2 * out + in``, which is exactly a C-order reshape of ``(out, in)``.
  So ``|m><n|`` on one site becomes basis vector ``2*m + n`` of dimension 4.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .tensor_core import as_tensor, svd_split

log = logging.getLogger(__name__)

__all__ = [
    "Mpo", "Mps", "CompressionPolicy",
    "TRACE_VECTOR", "mpo_trace", "mpo_local_expectation", "mpo_to_dense",
    "mpo_to_doubled_mps", "mps_to_mpo", "mps_to_dense", "mps_overlap",
    "mps_norm", "canonicalize", "is_canonical", "mps_svd_truncate",
    "mps_add", "mps_scale", "doubled_adjoint", "doubled_trace",
    "doubled_site_expectations", "product_mpo", "product_mps",
    "random_mps", "random_mpo", "save_network", "load_network",
]

# vec(identity) in the doubled basis: picks out |0><0| and |1><1|
TRACE_VECTOR = np.array([1.0, 0.0, 0.0, 1.0], dtype=np.complex128)


def _check_chain(sites: Sequence[np.ndarray], ndim: int) -> None:
    if len(sites) == 0:
        raise ValueError("a chain needs at least one site")
    for k, t in enumerate(sites):
        if t.ndim != ndim:
            raise ValueError(f"site {k} has {t.ndim} axes, expected {ndim}")
    if sites[0].shape[0] != 1 or sites[-1].shape[-1] != 1:
        raise ValueError("boundary bonds must have extent 1")
    for k in range(len(sites) - 1):
        if sites[k].shape[-1] != sites[k + 1].shape[0]:
            raise ValueError(
                f"bond mismatch between sites {k} and {k + 1}: "
                f"{sites[k].shape[-1]} != {sites[k + 1].shape[0]}")


class Mpo:
    """Matrix product operator on qubits, one ``(l, 2, 2, r)`` tensor per
    site."""

    __slots__ = ("sites",)

    def __init__(self, sites):
        sites = tuple(as_tensor(t) for t in sites)
        _check_chain(sites, 4)
        for k, t in enumerate(sites):
            if t.shape[1] != 2 or t.shape[2] != 2:
                raise ValueError(f"site {k} physical extents must be 2")
        self.sites = sites

    def __len__(self):
        return len(self.sites)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[-1] for t in self.sites[:-1]]

    def __repr__(self):
        return f"Mpo(L={len(self)}, bonds={self.bond_dims})"


class Mps:
    """Matrix product state with an optional orthogonality center.

    The center is bookkeeping only; :func:`is_canonical` verifies it.
    """

    __slots__ = ("sites", "center")

    def __init__(self, sites, center: Optional[int] = None):
        sites = tuple(as_tensor(t) for t in sites)
        _check_chain(sites, 3)
        if center is not None and not 0 <= center < len(sites):
            raise ValueError(f"center {center} outside chain")
        self.sites = sites
        self.center = center

    def __len__(self):
        return len(self.sites)

    @property
    def phys_dims(self) -> list[int]:
        return [t.shape[1] for t in self.sites]

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[-1] for t in self.sites[:-1]]

    @property
    def max_bond(self) -> int:
        return max([1] + self.bond_dims)

    def __repr__(self):
        return (f"Mps(L={len(self)}, d={self.phys_dims[0]}, "
                f"bonds={self.bond_dims}, center={self.center})")


@dataclass(frozen=True)
class CompressionPolicy:
    """Truncation settings. ``chi=None`` means unbounded bond dimension."""

    chi: Optional[int] = 64
    svd_cutoff: float = 1e-24
    fit_tolerance: float = 1e-6
    max_sweeps: int = 4
    variational: bool = True

    def __post_init__(self):
        if self.chi is not None and self.chi < 1:
            raise ValueError("chi must be >= 1")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.svd_cutoff < 0 or self.fit_tolerance <= 0:
            raise ValueError("cutoffs must be non-negative, tolerance positive")


# ---------------------------------------------------------------------------
# constructors


def product_mpo(ops: Sequence[np.ndarray]) -> Mpo:
    """MPO of a tensor product of single-site 2x2 operators."""
    return Mpo([as_tensor(op).reshape(1, 2, 2, 1) for op in ops])


def product_mps(vecs: Sequence[np.ndarray]) -> Mps:
    """MPS of a tensor product of single-site vectors."""
    vecs = [as_tensor(v) for v in vecs]
    return Mps([v.reshape(1, v.shape[0], 1) for v in vecs])


def random_mps(n: int, d: int, chi: int, rng=None) -> Mps:
    """Random complex MPS with bonds capped at ``chi`` (not normalised)."""
    rng = np.random.default_rng(rng)
    dims = [1] + [chi] * (n - 1) + [1]
    sites = [rng.normal(size=(dims[k], d, dims[k + 1]))
             + 1j * rng.normal(size=(dims[k], d, dims[k + 1]))
             for k in range(n)]
    return Mps(sites)


def random_mpo(n: int, chi: int, rng=None) -> Mpo:
    """Random complex MPO on ``n`` qubits (neither Hermitian nor unit
    trace)."""
    rng = np.random.default_rng(rng)
    dims = [1] + [chi] * (n - 1) + [1]
    sites = [rng.normal(size=(dims[k], 2, 2, dims[k + 1]))
             + 1j * rng.normal(size=(dims[k], 2, 2, dims[k + 1]))
             for k in range(n)]
    return Mpo(sites)


# ---------------------------------------------------------------------------
# MPO observables


def mpo_trace(m: Mpo) -> complex:
    """Trace of the operator represented by ``m``."""
    env = np.ones(1, dtype=np.complex128)
    for t in m.sites:
        env = env @ np.trace(t, axis1=1, axis2=2)
    return complex(env[0])


def mpo_local_expectation(m: Mpo, site: int, op: np.ndarray) -> complex:
    """``Tr(op_site m)`` with identities on all other sites."""
    if not 0 <= site < len(m):
        raise ValueError(f"site {site} outside 0..{len(m) - 1}")
    op = as_tensor(op, (2, 2))
    env = np.ones(1, dtype=np.complex128)
    for k, t in enumerate(m.sites):
        if k == site:
            local = np.einsum("ab,lbar->lr", op, t)
        else:
            local = np.trace(t, axis1=1, axis2=2)
        env = env @ local
    return complex(env[0])


def mpo_to_dense(m: Mpo) -> np.ndarray:
    """Full ``2^L x 2^L`` matrix; the first site is the most significant
    bit."""
    acc = m.sites[0][0]  # (out, in, r)
    n = 1
    for t in m.sites[1:]:
        acc = np.einsum("abr,rcds->acbds", acc, t)
        n *= 2
        acc = acc.reshape(2 * n, 2 * n, t.shape[-1])
    return acc[:, :, 0]


# ---------------------------------------------------------------------------
# doubled space


def mpo_to_doubled_mps(m: Mpo) -> Mps:
    """Vectorise ``m``: site ``(l, o, i, r)`` becomes ``(l, 2*o+i, r)``."""
    return Mps([t.reshape(t.shape[0], 4, t.shape[3]) for t in m.sites])


def mps_to_mpo(s: Mps) -> Mpo:
    """Inverse of :func:`mpo_to_doubled_mps`."""
    if any(d != 4 for d in s.phys_dims):
        raise ValueError("doubled MPS must have physical dimension 4")
    return Mpo([t.reshape(t.shape[0], 2, 2, t.shape[2]) for t in s.sites])


def doubled_adjoint(s: Mps) -> Mps:
    """Vectorisation of the Hermitian adjoint of the operator in ``s``."""
    out = []
    for t in s.sites:
        l, _, r = t.shape
        out.append(np.conj(t.reshape(l, 2, 2, r).transpose(0, 2, 1, 3))
                   .reshape(l, 4, r))
    return Mps(out, s.center)


def doubled_trace(s: Mps) -> complex:
    """Trace of the operator vectorised in ``s``."""
    env = np.ones(1, dtype=np.complex128)
    for t in s.sites:
        env = env @ (TRACE_VECTOR @ t.transpose(1, 0, 2).reshape(4, -1)
                     ).reshape(t.shape[0], t.shape[2])
    return complex(env[0])


def doubled_site_expectations(s: Mps, op: np.ndarray) -> np.ndarray:
    """``Tr(op_k rho)`` for every site ``k`` of the vectorised ``rho``.

    Uses left/right trace environments, so the cost is linear in length.
    """
    op = as_tensor(op, (2, 2))
    # Tr(op rho) = sum_{o,i} op[i,o] rho[o,i]
    opvec = op.T.reshape(4)
    n = len(s)
    traced = [np.einsum("p,lpr->lr", TRACE_VECTOR, t) for t in s.sites]
    with_op = [np.einsum("p,lpr->lr", opvec, t) for t in s.sites]
    left = [np.ones(1, dtype=np.complex128)]
    for k in range(n - 1):
        left.append(left[-1] @ traced[k])
    right = np.ones(1, dtype=np.complex128)
    out = np.empty(n, dtype=np.complex128)
    for k in range(n - 1, -1, -1):
        out[k] = left[k] @ with_op[k] @ right
        right = traced[k] @ right
    return out


def mps_to_dense(s: Mps) -> np.ndarray:
    """Full state vector; first site most significant."""
    acc = s.sites[0][0]
    for t in s.sites[1:]:
        acc = np.tensordot(acc, t, axes=(-1, 0))
        acc = acc.reshape(-1, t.shape[-1])
    return acc[:, 0]


# ---------------------------------------------------------------------------
# overlaps and canonical forms


def _transfer(env: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # env[x, y] with x on conj(a), y on b
    tmp = np.tensordot(env, b, axes=(1, 0))          # x, p, r_b
    return np.tensordot(a.conj(), tmp, axes=([0, 1], [0, 1]))


def mps_overlap(a: Mps, b: Mps) -> complex:
    """``<a|b>`` by a left-to-right transfer contraction."""
    if len(a) != len(b) or a.phys_dims != b.phys_dims:
        raise ValueError("overlap needs equal lengths and physical dims")
    env = np.ones((1, 1), dtype=np.complex128)
    for ta, tb in zip(a.sites, b.sites):
        env = _transfer(env, ta, tb)
    return complex(env[0, 0])


def mps_norm(s: Mps) -> float:
    if s.center is not None:
        return float(np.linalg.norm(s.sites[s.center]))
    return float(np.sqrt(max(mps_overlap(s, s).real, 0.0)))


def _qr_left(t: np.ndarray):
    l, d, r = t.shape
    q, rr = np.linalg.qr(t.reshape(l * d, r))
    return q.reshape(l, d, q.shape[1]), rr


def _qr_right(t: np.ndarray):
    l, d, r = t.shape
    q, rr = np.linalg.qr(t.reshape(l, d * r).T)
    return q.T.reshape(q.shape[1], d, r), rr.T


def canonicalize(s: Mps, center: int = 0) -> Mps:
    """Mixed canonical form with the orthogonality center at ``center``.

    QR sweeps from both ends; bond dimensions never grow and may shrink
    to the local rank bound.
    """
    n = len(s)
    if not 0 <= center < n:
        raise ValueError(f"center {center} outside chain")
    sites = list(s.sites)
    for k in range(center):
        q, r = _qr_left(sites[k])
        sites[k] = q
        sites[k + 1] = np.tensordot(r, sites[k + 1], axes=(1, 0))
    for k in range(n - 1, center, -1):
        q, r = _qr_right(sites[k])
        sites[k] = q
        sites[k - 1] = np.tensordot(sites[k - 1], r, axes=(2, 0))
    return Mps(sites, center)


def is_canonical(s: Mps, tol: float = 1e-10) -> bool:
    """Check the isometry conditions implied by ``s.center``."""
    if s.center is None:
        return False
    for k, t in enumerate(s.sites):
        l, d, r = t.shape
        if k < s.center:
            m = t.reshape(l * d, r)
            gram = m.conj().T @ m
        elif k > s.center:
            m = t.reshape(l, d * r)
            gram = m @ m.conj().T
        else:
            continue
        if np.max(np.abs(gram - np.eye(gram.shape[0]))) > tol:
            return False
    return True


def mps_svd_truncate(s: Mps, policy: CompressionPolicy) -> tuple[Mps, float]:
    """Compress ``s`` to bond dimension ``policy.chi`` by sequential SVD.

    The state is left-canonicalised first, then truncated right to left so
    each cut sees its true Schmidt spectrum. The result has its
    orthogonality center at site 0.

    Returns
    -------
    (Mps, float)
        The truncated state and the summed relative discarded weight.
    """
    n = len(s)
    if n == 1:
        return Mps(s.sites, 0), 0.0
    if s.center == n - 1:
        sites = list(s.sites)
    else:
        sites = list(canonicalize(s, n - 1).sites)
    total = 0.0
    for k in range(n - 1, 0, -1):
        res = svd_split(sites[k], [0], max_rank=policy.chi,
                        cutoff=policy.svd_cutoff)
        total += res.discarded_weight
        sites[k] = res.right
        us = res.left * res.singular_values
        sites[k - 1] = np.tensordot(sites[k - 1], us, axes=(2, 0))
    return Mps(sites, 0), total


def mps_add(a: Mps, b: Mps) -> Mps:
    """Direct-sum representation of ``|a> + |b>``."""
    if len(a) != len(b) or a.phys_dims != b.phys_dims:
        raise ValueError("shape mismatch")
    n = len(a)
    if n == 1:
        return Mps([a.sites[0] + b.sites[0]])
    out = []
    for k, (ta, tb) in enumerate(zip(a.sites, b.sites)):
        la, d, ra = ta.shape
        lb, _, rb = tb.shape
        if k == 0:
            out.append(np.concatenate([ta, tb], axis=2))
        elif k == n - 1:
            out.append(np.concatenate([ta, tb], axis=0))
        else:
            t = np.zeros((la + lb, d, ra + rb), dtype=np.complex128)
            t[:la, :, :ra] = ta
            t[la:, :, ra:] = tb
            out.append(t)
    return Mps(out)


def mps_scale(s: Mps, factor: complex) -> Mps:
    """Multiply the state by ``factor`` (applied at the center or site 0)."""
    k = 0 if s.center is None else s.center
    sites = list(s.sites)
    sites[k] = sites[k] * factor
    return Mps(sites, s.center)


# ---------------------------------------------------------------------------
# serialization
#
# Container layout (all integers little-endian):
#   magic  b"SQTN" | u32 version | u32 header_len | header (UTF-8 JSON)
#   then per site: u32 ndim | ndim x u32 extents | prod(extents) x <c16
# The JSON header carries {"kind": "mpo"|"mps", "n_sites", "center", "meta"}.

_MAGIC = b"SQTN"
_VERSION = 1


def save_network(path, net, meta: Optional[dict] = None) -> None:
    """Write an :class:`Mpo` or :class:`Mps` to ``path``."""
    kind = "mpo" if isinstance(net, Mpo) else "mps"
    header = {
        "kind": kind,
        "n_sites": len(net),
        "center": getattr(net, "center", None),
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<II", _VERSION, len(blob)) + blob)
        for t in net.sites:
            fh.write(struct.pack("<I", t.ndim))
            fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
            fh.write(np.ascontiguousarray(t, dtype="<c16").tobytes())
    tmp.replace(path)


def load_network(path):
    """Read a container written by :func:`save_network`.

    Returns
    -------
    (Mpo or Mps, dict)
        The network and the ``meta`` dictionary stored with it.
    """
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not a network container")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    pos = 12
    header = json.loads(data[pos:pos + hlen].decode())
    pos += hlen
    sites = []
    for _ in range(header["n_sites"]):
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<c16", count=count, offset=pos)
        pos += 16 * count
        sites.append(arr.astype(np.complex128).reshape(shape))
    if header["kind"] == "mpo":
        return Mpo(sites), header["meta"]
    return Mps(sites, header["center"]), header["meta"]
