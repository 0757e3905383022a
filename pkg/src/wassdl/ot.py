"""Entropic optimal transport on regular grids.

Everything that touches the Gibbs kernel ``K = exp(-M / gamma)`` goes through
:func:`log_kernel_apply`, which returns ``log(K @ exp(W))`` column by column.
It first tries a max-shifted matrix product and falls back to an explicit
log-sum-exp for any column whose shifted sums underflow, so small ``gamma``
never produces ``log(0)``.
"""

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import CapacityError, ConvergenceError, DimensionError, NumericError, ParameterError
from .simplex import as_simplex
from .tensor import load_tensor, save_tensor

MAX_GRID_POINTS = 4096
SMOOTH_EPS = 1e-12
# below this a shifted kernel sum has lost too much range to trust
_UNDERFLOW = 1e-250
# K is only materialized when every entry is a normal float
_MIN_LOG_KERNEL = -700.0


@dataclass(frozen=True, eq=False)
class GroundCost:
    """Matricized ground cost on a grid plus its log-domain Gibbs kernel.

    Attributes
    ----------
    grid_shape : tuple of int
    metric : {"euclidean", "torus"}
    gamma : float
        Entropic regularization.
    M : ndarray, shape (n, n)
        ``M[J1, J2] = ||J1 - J2||_2`` over per-axis normalized coordinates,
        with row-major multi-index flattening.
    logK : ndarray, shape (n, n)
        ``-M / gamma``.
    K : ndarray or None
        ``exp(logK)`` when it is representable, else None.
    """

    grid_shape: tuple
    metric: str
    gamma: float
    M: np.ndarray = field(repr=False)
    logK: np.ndarray = field(repr=False)
    K: Optional[np.ndarray] = field(repr=False, default=None)

    @property
    def n(self):
        return self.M.shape[0]

    def with_gamma(self, gamma):
        """Same grid and metric at a different regularization."""
        return _from_matrix(self.grid_shape, self.metric, self.M, gamma)


def grid_coordinates(grid_shape):
    """Row-major list of normalized grid coordinates, shape (n, d)."""
    axes = [np.arange(s) / (s - 1) if s > 1 else np.zeros(1) for s in grid_shape]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def cost_matrix(grid_shape, metric="euclidean"):
    """Pairwise distance matrix over the grid (no kernel)."""
    grid_shape = tuple(int(s) for s in grid_shape)
    X = grid_coordinates(grid_shape)
    diff = np.abs(X[:, None, :] - X[None, :, :])
    if metric == "torus":
        # wrap-around per axis: period of axis with s points is s/(s-1)
        period = np.array([s / (s - 1) if s > 1 else 1.0 for s in grid_shape])
        diff = np.minimum(diff, period - diff)
    elif metric != "euclidean":
        raise ParameterError(f"unknown metric {metric!r}")
    M = np.sqrt(np.sum(diff * diff, axis=-1))
    M = 0.5 * (M + M.T)
    np.fill_diagonal(M, 0.0)
    return M


def _from_matrix(grid_shape, metric, M, gamma):
    if not gamma > 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    logK = -M / gamma
    K = np.exp(logK) if logK.min() > _MIN_LOG_KERNEL else None
    return GroundCost(tuple(grid_shape), metric, float(gamma), M, logK, K)


def cost_cache_path(cache_dir, grid_shape, metric):
    return os.path.join(cache_dir, f"cost_{metric}_{'x'.join(str(s) for s in grid_shape)}.wtn")


def build_ground_cost(grid_shape, metric="euclidean", gamma=0.1, cache_dir=None):
    """Build the ground cost for a grid.

    Coordinates are normalized to [0, 1] per axis before distances are taken.
    With ``cache_dir`` the distance matrix is read from (or written to) a
    tensor file named after the metric and grid shape.

    Raises
    ------
    ParameterError
        ``gamma <= 0`` or unknown metric.
    CapacityError
        More than 4096 grid points.
    """
    if isinstance(grid_shape, int):
        grid_shape = (grid_shape,)
    grid_shape = tuple(int(s) for s in grid_shape)
    if not gamma > 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    if any(s < 1 for s in grid_shape):
        raise DimensionError(f"bad grid shape {grid_shape}")
    if int(np.prod(grid_shape)) > MAX_GRID_POINTS:
        raise CapacityError(f"grid {grid_shape} has more than {MAX_GRID_POINTS} points")
    if cache_dir is None:
        return _from_matrix(grid_shape, metric, cost_matrix(grid_shape, metric), gamma)
    path = cost_cache_path(cache_dir, grid_shape, metric)
    if os.path.exists(path):
        M = load_tensor(path)
        n = int(np.prod(grid_shape))
        if M.shape != (n, n):
            raise DimensionError(f"cached cost {path} has shape {M.shape}, expected {(n, n)}")
    else:
        M = cost_matrix(grid_shape, metric)
        os.makedirs(cache_dir, exist_ok=True)
        save_tensor(path, M)
    return _from_matrix(grid_shape, metric, M, gamma)


# --- kernel primitive -----------------------------------------------------


def _exact_column(logK, w):
    return logsumexp(logK + w[None, :], axis=1)


def log_kernel_apply(cost, W):
    """``out[i, s] = log sum_j K[i, j] exp(W[j, s])``, stable for any gamma.

    ``W`` may contain ``-inf`` (zero weight). ``K`` is symmetric, so this
    also computes the transposed application.
    """
    W = np.asarray(W, dtype=np.float64)
    squeeze = W.ndim == 1
    W2 = W.reshape(W.shape[0], -1)
    out = np.empty_like(W2)
    m = W2.max(axis=0)
    if np.any(np.isnan(W2)) or np.any(m == np.inf):
        raise NumericError("kernel input contains nan or +inf")
    dead = m == -np.inf
    if cost.K is not None:
        shift = np.where(dead, 0.0, m)
        S = cost.K @ np.exp(W2 - shift)
        with np.errstate(divide="ignore"):
            out[:] = shift + np.log(S)
        redo = np.flatnonzero(~dead & (S.min(axis=0) < _UNDERFLOW))
    else:
        redo = np.flatnonzero(~dead)
    for s in redo:
        out[:, s] = _exact_column(cost.logK, W2[:, s])
    out[:, dead] = -np.inf
    return out[:, 0] if squeeze else out


def _xlogx(X):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(X > 0, X * np.log(np.where(X > 0, X, 1.0)), 0.0)


# --- conjugate of y -> W_gamma(X, y) --------------------------------------


def data_terms(Xm):
    """Constant pieces of :func:`hstar_batch` for fixed data: mask, ``log X`` and ``sum x log x``."""
    pos = Xm > 0
    with np.errstate(divide="ignore"):
        logX = np.where(pos, np.log(np.where(pos, Xm, 1.0)), -np.inf)
    return pos, logX, np.sum(_xlogx(Xm), axis=0)


def hstar_batch(Gm, Xm, cost, want_grad=True, terms=None):
    """Column-wise conjugate ``H*_X(g)`` and its gradient.

    ``H*_X(g) = gamma * (<X, log(K alpha)> - <X, log X>)`` with
    ``alpha = exp(g / gamma)`` and ``0 log 0 = 0``; the gradient is
    ``alpha * K (X / K alpha)`` and lies on the simplex.

    Parameters
    ----------
    Gm : ndarray, shape (n, N)
    Xm : ndarray, shape (n, N)
        Columns are distributions.
    cost : GroundCost
    want_grad : bool
    terms : tuple, optional
        Output of :func:`data_terms` for ``Xm``, to skip recomputing it.

    Returns
    -------
    values : ndarray, shape (N,)
    grad : ndarray, shape (n, N), or None
    """
    gamma = cost.gamma
    if not np.all(np.isfinite(Gm)):
        raise NumericError("non-finite dual variable")
    Wg = Gm / gamma
    logKa = log_kernel_apply(cost, Wg)
    if not np.all(np.isfinite(logKa)):
        raise NumericError("log(K alpha) overflowed")
    pos, logX, negent = data_terms(Xm) if terms is None else terms
    values = gamma * (np.sum(np.where(pos, Xm * logKa, 0.0), axis=0) - negent)
    if not want_grad:
        return values, None
    logratio = logX - logKa
    logback = log_kernel_apply(cost, logratio)
    grad = np.exp(Wg + logback)
    return values, grad


def _flat_sample(g, X, cost):
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    X = np.asarray(X, dtype=np.float64).reshape(-1)
    if g.size != cost.n or X.size != cost.n:
        raise DimensionError(f"expected {cost.n} grid values, got g={g.size}, X={X.size}")
    return g[:, None], X[:, None]


def hstar_value(g, X, cost):
    """Closed-form ``H*_X(g) = sup_{y in simplex} <g, y> - W_gamma(X, y)``."""
    G, Xm = _flat_sample(g, X, cost)
    values, _ = hstar_batch(G, Xm, cost, want_grad=False)
    return float(values[0])


def hstar_grad(g, X, cost):
    """Gradient of :func:`hstar_value`, a distribution of length ``n``."""
    G, Xm = _flat_sample(g, X, cost)
    _, grad = hstar_batch(G, Xm, cost)
    return grad[:, 0]


# --- Sinkhorn -------------------------------------------------------------


@dataclass
class SinkhornResult:
    """Output of :func:`sinkhorn`.

    ``values`` are the dual objectives ``<phi, a> + <psi, b>``, a lower
    bound on each ``W_gamma`` that is tight at convergence. ``psi`` is the
    potential on the second marginal, i.e. the gradient of
    ``b -> W_gamma(a, b)`` up to an additive constant.
    """

    values: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    violation: float
    iterations: int
    trace: list


def smooth_marginals(A, eps=SMOOTH_EPS):
    """Replace zeros by ``eps`` and renormalize the affected columns."""
    A = np.array(A, dtype=np.float64)
    if A.ndim == 1:
        return smooth_marginals(A[:, None], eps)[:, 0]
    zero = A <= 0
    if zero.any():
        cols = zero.any(axis=0)
        B = np.where(zero, eps, A)
        A[:, cols] = B[:, cols] / B[:, cols].sum(axis=0)
    return A


def sinkhorn(A, B, cost, tol=1e-7, max_iter=10000, psi0=None, trace=False):
    """Batched log-domain Sinkhorn for ``W_gamma(A[:, s], B[:, s])``.

    Parameters
    ----------
    A, B : ndarray, shape (n,) or (n, N)
        Marginal columns; zeros are smoothed to 1e-12.
    cost : GroundCost
    tol : float
        Stop once every column's L1 row-marginal violation is <= tol
        (column marginals are exact after each sweep).
    max_iter : int
    psi0 : ndarray, optional
        Warm start for the second potential.
    trace : bool
        Record the summed dual objective after every sweep.

    Raises
    ------
    ConvergenceError
        Violation still above ``tol`` after ``max_iter`` sweeps.
    """
    squeeze = np.ndim(A) == 1
    A = smooth_marginals(np.reshape(A, (cost.n, -1)))
    B = smooth_marginals(np.reshape(B, (cost.n, -1)))
    if A.shape != B.shape:
        raise DimensionError(f"marginal blocks {A.shape} and {B.shape} differ")
    gamma = cost.gamma
    logA = np.log(A)
    logB = np.log(B)
    if psi0 is None:
        psi = np.zeros_like(B)
    else:
        psi = np.array(np.reshape(psi0, B.shape), dtype=np.float64)
        psi -= psi.max(axis=0)
    phi = None
    history = []
    L = log_kernel_apply(cost, psi / gamma)
    violation = np.inf
    it = 0
    while True:
        if phi is not None:
            rows = np.exp(phi / gamma + L)
            violation = float(np.max(np.sum(np.abs(rows - A), axis=0)))
            if trace:
                history.append(float(np.sum(phi * A) + np.sum(psi * B)))
            if violation <= tol:
                break
            if it >= max_iter:
                raise ConvergenceError(
                    f"Sinkhorn did not reach tol={tol} in {max_iter} sweeps "
                    f"(violation {violation:.3e})",
                    residual=violation,
                    iterations=it,
                )
        phi = gamma * (logA - L)
        psi = gamma * (logB - log_kernel_apply(cost, phi / gamma))
        L = log_kernel_apply(cost, psi / gamma)
        it += 1
    values = np.sum(phi * A, axis=0) + np.sum(psi * B, axis=0)
    if squeeze:
        return SinkhornResult(values[:1], phi[:, 0], psi[:, 0], violation, it, history)
    return SinkhornResult(values, phi, psi, violation, it, history)


@dataclass
class Coupling:
    """A transport plan with its prescribed marginals."""

    T: np.ndarray
    p1: np.ndarray
    p2: np.ndarray

    def violation(self):
        return float(
            np.abs(self.T.sum(axis=1) - self.p1).sum() + np.abs(self.T.sum(axis=0) - self.p2).sum()
        )


def entropic_wasserstein(a, b, cost, tol=1e-7, max_iter=10000):
    """``W_gamma(a, b) = min_T <M, T> + gamma <T, log T>`` and its optimal coupling.

    Returns
    -------
    value : float
    coupling : Coupling
    """
    a = as_simplex(np.reshape(a, -1))
    b = as_simplex(np.reshape(b, -1))
    if a.size != cost.n or b.size != cost.n:
        raise DimensionError(f"marginals must have {cost.n} entries")
    res = sinkhorn(a, b, cost, tol=tol, max_iter=max_iter)
    T = np.exp((res.phi[:, None] + res.psi[None, :] + cost.logK * cost.gamma) / cost.gamma)
    return float(res.values[0]), Coupling(T, smooth_marginals(a), smooth_marginals(b))


def primal_value(T, cost):
    """``<M, T> + gamma <T, log T>`` for an explicit coupling."""
    return float(np.sum(cost.M * T) + cost.gamma * np.sum(_xlogx(T)))


def reconstruct(D, Lambda):
    """``D x_{d+1} Lambda`` as an (n, N) matrix of reconstructed columns."""
    D = np.asarray(D, dtype=np.float64)
    Dm = D.reshape(-1, D.shape[-1])
    return Dm @ np.asarray(Lambda, dtype=np.float64)


def fW_objective(D, Lambda, X, cost, tol=1e-7, max_iter=10000, psi0=None, full=False):
    """Summed entropic Wasserstein loss ``sum_i W_gamma(X_i, (D x_{d+1} Lambda)[:, i])``.

    Parameters
    ----------
    D : ndarray, shape (I_1, ..., I_d, r)
    Lambda : ndarray, shape (r, N)
    X : ndarray, shape (I_1, ..., I_d, N)
    full : bool
        Return the :class:`SinkhornResult` as well.
    """
    Y = reconstruct(D, Lambda)
    Xm = np.asarray(X, dtype=np.float64).reshape(cost.n, -1)
    if Y.shape != Xm.shape:
        raise DimensionError(f"reconstruction {Y.shape} vs data {Xm.shape}")
    res = sinkhorn(Xm, Y, cost, tol=tol, max_iter=max_iter, psi0=psi0)
    total = float(np.sum(res.values))
    return (total, res) if full else total
