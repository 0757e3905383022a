"""Dense multilinear algebra on row-major float64 arrays.

Tensors are plain C-ordered ``numpy.ndarray`` objects. Mode indices are
1-based throughout, so ``k=1`` addresses the leading axis. Every contraction
goes through one matricize-then-multiply path: move the contracted mode to
the front, flatten the rest in row-major order, call ``@``.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import DimensionError

MAGIC = b"WTNSR1"


def as_tensor(T):
    """Return ``T`` as a C-contiguous float64 array with no zero-size modes."""
    T = np.ascontiguousarray(T, dtype=np.float64)
    if T.ndim == 0:
        raise DimensionError("a tensor needs at least one mode")
    if any(s < 1 for s in T.shape):
        raise DimensionError(f"mode sizes must be >= 1, got {T.shape}")
    return T


def _check_mode(T, k):
    if not 1 <= k <= T.ndim:
        raise DimensionError(f"mode {k} out of range for a {T.ndim}-mode tensor")


def _unfold(T, k):
    """Mode-k matricization, shape (I_k, prod of the other sizes)."""
    return np.ascontiguousarray(np.moveaxis(T, k - 1, 0)).reshape(T.shape[k - 1], -1)


def _fold(M, k, shape):
    moved = (shape[k - 1],) + shape[: k - 1] + shape[k:]
    return np.ascontiguousarray(np.moveaxis(M.reshape(moved), 0, k - 1))


def mode_product(T, A, k):
    """Mode-k tensor-matrix product ``T x_k A``.

    ``out[..., j, ...] = sum_i T[..., i, ...] * A[j, i]`` with ``i`` running
    over mode ``k`` of ``T``.

    Parameters
    ----------
    T : ndarray, shape (I_1, ..., I_m)
    A : ndarray, shape (J, I_k)
    k : int
        1-based mode index.

    Returns
    -------
    ndarray, shape (I_1, ..., I_{k-1}, J, I_{k+1}, ..., I_m)
    """
    T = as_tensor(T)
    A = np.ascontiguousarray(A, dtype=np.float64)
    _check_mode(T, k)
    if A.ndim != 2 or A.shape[1] != T.shape[k - 1]:
        raise DimensionError(
            f"mode {k}: matrix of shape {A.shape} cannot act on mode size {T.shape[k - 1]}"
        )
    out = A @ _unfold(T, k)
    shape = T.shape[: k - 1] + (A.shape[0],) + T.shape[k:]
    return _fold(out, k, shape)


def contract_leading(D, G):
    """Contract the leading ``d`` modes of ``D`` against ``G``.

    ``out[j] = sum_{i_1..i_d} D[i_1..i_d, j] G[i_1..i_d]``; a trailing sample
    mode on ``G`` is batched, giving ``out[j, s]``.

    Parameters
    ----------
    D : ndarray, shape (I_1, ..., I_d, r)
    G : ndarray, shape (I_1, ..., I_d) or (I_1, ..., I_d, N)

    Returns
    -------
    ndarray, shape (r,) or (r, N)
    """
    D = as_tensor(D)
    G = as_tensor(G)
    lead = D.shape[:-1]
    if D.ndim < 2:
        raise DimensionError("D needs at least one leading mode and an atom mode")
    if G.shape == lead:
        batched = False
    elif G.shape[:-1] == lead:
        batched = True
    else:
        raise DimensionError(f"leading modes {lead} of D do not match G of shape {G.shape}")
    n = int(np.prod(lead))
    Dm = D.reshape(n, D.shape[-1])
    Gm = G.reshape(n, -1)
    out = Dm.T @ Gm
    return out if batched else out[:, 0].copy()


def contract_except(G, Lbar, k):
    """Contract ``G`` and ``Lbar`` over every mode except ``k``.

    This is the adjoint of ``U -> mode_product(Lbar, U, k)``, i.e.
    ``<mode_product(Lbar, U, k), G> == <U, contract_except(G, Lbar, k)>``.

    Parameters
    ----------
    G : ndarray, shape (I_1, ..., I_d, N)
    Lbar : ndarray, shape (I_1, ..., I_{k-1}, r, I_{k+1}, ..., I_d, N)
    k : int
        1-based mode index, ``1 <= k <= d``.

    Returns
    -------
    ndarray, shape (I_k, r)
    """
    G = as_tensor(G)
    Lbar = as_tensor(Lbar)
    _check_mode(G, k)
    if G.ndim != Lbar.ndim:
        raise DimensionError(f"G has {G.ndim} modes but Lbar has {Lbar.ndim}")
    for m, (a, b) in enumerate(zip(G.shape, Lbar.shape), start=1):
        if m != k and a != b:
            raise DimensionError(f"mode {m}: G has size {a}, Lbar has size {b}")
    return _unfold(G, k) @ _unfold(Lbar, k).T


def cp_outer(factors):
    """Stack the rank-one outer products of matching factor columns.

    ``out[i_1, ..., i_d, j] = prod_k U^(k)[i_k, j]``.

    Parameters
    ----------
    factors : sequence of ndarray
        ``d`` matrices of shape (I_k, r) sharing ``r``.

    Returns
    -------
    ndarray, shape (I_1, ..., I_d, r)
    """
    factors = [np.ascontiguousarray(U, dtype=np.float64) for U in factors]
    if not factors:
        raise DimensionError("cp_outer needs at least one factor")
    r = factors[0].shape[1] if factors[0].ndim == 2 else None
    for k, U in enumerate(factors, start=1):
        if U.ndim != 2 or U.shape[1] != r:
            raise DimensionError(f"factor {k} has shape {U.shape}, expected (I_{k}, {r})")
    out = factors[0].copy()
    for U in factors[1:]:
        # (..., r) x (I, r) -> (..., I, r)
        out = out[..., None, :] * U
    return np.ascontiguousarray(out)


def insert_mode(T, k):
    """Move the last mode of ``T`` to position ``k`` (1-based)."""
    T = as_tensor(T)
    if T.ndim < 2:
        raise DimensionError("insert_mode needs at least two modes")
    _check_mode(T, k)
    return np.ascontiguousarray(np.moveaxis(T, -1, k - 1))


def extract_mode(T, k):
    """Inverse of :func:`insert_mode`: move mode ``k`` to the last position."""
    T = as_tensor(T)
    if T.ndim < 2:
        raise DimensionError("extract_mode needs at least two modes")
    _check_mode(T, k)
    return np.ascontiguousarray(np.moveaxis(T, k - 1, -1))


def vectorize(T):
    """Row-major flat copy of ``T``."""
    return as_tensor(T).reshape(-1).copy()


def inner(A, B):
    """Frobenius inner product of two equally shaped tensors."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise DimensionError(f"shapes {A.shape} and {B.shape} differ")
    return float(np.dot(A.reshape(-1), B.reshape(-1)))


# --- file formats ---------------------------------------------------------


def save_tensor(path, T):
    """Write ``T`` in the binary tensor format.

    Layout: magic ``WTNSR1``, u32 mode count, u32 mode sizes, then the
    little-endian float64 payload in row-major order.
    """
    T = as_tensor(T)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", T.ndim))
        fh.write(struct.pack(f"<{T.ndim}I", *T.shape))
        fh.write(T.astype("<f8").tobytes(order="C"))


def load_tensor(path):
    """Read a tensor written by :func:`save_tensor`."""
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: bad magic bytes")
    pos = len(MAGIC)
    (ndim,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    shape = struct.unpack_from(f"<{ndim}I", raw, pos)
    pos += 4 * ndim
    count = int(np.prod(shape))
    payload = raw[pos:]
    if len(payload) != 8 * count:
        raise ValueError(f"{path}: payload has {len(payload)} bytes, expected {8 * count}")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)


def save_csv(path, T):
    """Write a 1- or 2-mode tensor as CSV, one row per leading index."""
    T = as_tensor(T)
    if T.ndim > 2:
        raise DimensionError("CSV export supports 1- and 2-mode tensors only")
    rows = T.reshape(T.shape[0], -1)
    with open(path, "w") as fh:
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_csv(path):
    """Read a CSV written by :func:`save_csv` (or any numeric CSV)."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: ragged rows")
    out = np.array(rows, dtype=np.float64)
    return out[:, 0].copy() if out.shape[1] == 1 else out
