"""Probability-simplex geometry.

Euclidean projection onto the simplex, the proximal penalty
``F(lam) = 0.5 * ||lam - lam0||^2`` restricted to the simplex, and its
convex conjugate ``F*`` with gradient. Batched functions treat axis 0 as the
simplex coordinate and every later axis as an independent fiber.
"""

import numpy as np

from .errors import NumericError, PreconditionError

SIMPLEX_TOL = 1e-9


def _check_finite(v):
    if not np.all(np.isfinite(v)):
        raise NumericError("non-finite entries in simplex input")


def project_columns(V):
    """Project every column of ``V`` onto the probability simplex.

    Sort-and-scan: for each column find the largest ``rho`` with
    ``v_(rho) - (sum_{i<=rho} v_(i) - 1) / rho > 0`` in descending order and
    shift by that threshold. Ties are included in the active set.

    Parameters
    ----------
    V : ndarray, shape (r,) or (r, K)

    Returns
    -------
    P : ndarray, same shape as ``V``
        Projected columns.
    c : ndarray, shape () or (K,)
        Threshold used per column, ``P = (V - c)_+``.
    """
    V = np.asarray(V, dtype=np.float64)
    _check_finite(V)
    squeeze = V.ndim == 1
    W = V.reshape(V.shape[0], -1)
    r = W.shape[0]
    S = -np.sort(-W, axis=0)
    css = np.cumsum(S, axis=0) - 1.0
    idx = np.arange(1, r + 1, dtype=np.float64)[:, None]
    active = S - css / idx > 0
    # active is a prefix in each column; rho = count of leading Trues
    rho = np.maximum(active.sum(axis=0), 1)
    c = css[rho - 1, np.arange(W.shape[1])] / rho
    P = np.maximum(W - c, 0.0)
    if squeeze:
        return P[:, 0], c[0]
    return P.reshape(V.shape), c.reshape(V.shape[1:])


def project_simplex(v):
    """Euclidean projection of a vector onto the probability simplex."""
    P, _ = project_columns(np.asarray(v, dtype=np.float64).reshape(-1))
    return P


def fstar_grad(g, lam0):
    """Gradient of the conjugate ``F*_{lam0}`` and its threshold.

    ``grad = (g + lam0 - c)_+`` with ``c`` chosen so the result is on the
    simplex; equivalently the maximizer of
    ``<g, lam> - 0.5 ||lam - lam0||^2`` over the simplex.

    Works column-wise when ``g`` and ``lam0`` are matrices.

    Returns
    -------
    lam : ndarray
    c : float or ndarray
    """
    g = np.asarray(g, dtype=np.float64)
    lam0 = np.asarray(lam0, dtype=np.float64)
    _check_finite(g)
    return project_columns(g + lam0)


def fstar_value(g, lam0):
    """Conjugate ``F*_{lam0}(g) = max_lam <g, lam> - 0.5 ||lam - lam0||^2``.

    Matrices are handled column-wise and the per-column values summed.
    """
    g = np.asarray(g, dtype=np.float64)
    lam0 = np.asarray(lam0, dtype=np.float64)
    lam, _ = fstar_grad(g, lam0)
    d = lam - lam0
    return float(np.sum(g * lam) - 0.5 * np.sum(d * d))


def fstar_value_closed(g, lam0):
    """Same value as :func:`fstar_value` via ``0.5 (g+lam0-c)_+ . (g+lam0+c) - 0.5||lam0||^2``."""
    g = np.asarray(g, dtype=np.float64)
    lam0 = np.asarray(lam0, dtype=np.float64)
    lam, c = fstar_grad(g, lam0)
    return float(0.5 * np.sum(lam * (g + lam0 + c)) - 0.5 * np.sum(lam0 * lam0))


def as_simplex(values, tol=SIMPLEX_TOL):
    """Validate a vector as a point of the simplex.

    Entries must be nonnegative and sum to one within ``tol``; small sum
    deviations are renormalized away, larger ones raise.
    """
    v = np.array(values, dtype=np.float64).reshape(-1)
    return as_simplex_stack(v[:, None], n_lead=1, tol=tol)[:, 0]


def as_simplex_stack(T, n_lead=1, tol=SIMPLEX_TOL):
    """Validate a tensor whose fibers over the leading ``n_lead`` modes are simplices.

    Parameters
    ----------
    T : array_like, shape (I_1, ..., I_p, ...)
        Leading ``n_lead`` modes index the simplex coordinates; any trailing
        modes index independent fibers.
    n_lead : int
    tol : float
        Allowed deviation of each fiber sum from 1. Deviations within
        ``tol`` are renormalized; anything larger raises.

    Returns
    -------
    ndarray
        Renormalized copy.
    """
    T = np.array(T, dtype=np.float64)
    _check_finite(T)
    lead = T.shape[:n_lead]
    n = int(np.prod(lead))
    M = T.reshape(n, -1)
    if np.any(M < 0):
        raise PreconditionError(f"negative entry {M.min():.3e} in a simplex fiber")
    sums = M.sum(axis=0)
    bad = np.abs(sums - 1.0) > tol
    if np.any(bad):
        j = int(np.argmax(bad))
        raise PreconditionError(f"fiber {j} sums to {sums[j]!r}, not 1 within {tol}")
    return (M / sums).reshape(T.shape)


def is_simplex_stack(T, n_lead=1, tol=SIMPLEX_TOL):
    """True if :func:`as_simplex_stack` would accept ``T``."""
    try:
        as_simplex_stack(T, n_lead=n_lead, tol=tol)
    except (PreconditionError, NumericError):
        return False
    return True


def mix_uniform(T, n_lead=1, eps=1e-12):
    """Blend each simplex fiber with the uniform distribution by weight ``eps``."""
    T = np.asarray(T, dtype=np.float64)
    n = int(np.prod(T.shape[:n_lead]))
    return (1.0 - eps) * T + eps / n


def random_simplex(rng, size, count, alpha=1.0):
    """Draw ``count`` Dirichlet(alpha) points of length ``size`` as columns."""
    return np.ascontiguousarray(rng.dirichlet(np.full(size, alpha), size=count).T)
