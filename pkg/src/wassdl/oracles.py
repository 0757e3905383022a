"""Slow reference computations used to check the fast paths.

None of these go through the conjugate (dual) formulas: projections use
bisection, gradients use finite differences, and block subproblems are
solved in the primal with Sinkhorn potentials as gradients.
"""

import itertools

import numpy as np

from .ot import sinkhorn


def project_bisection(v, iters=200):
    """Simplex projection by bisection on the threshold ``c`` in ``sum (v - c)_+ = 1``."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    lo, hi = v.min() - 1.0, v.max()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.maximum(v - mid, 0.0).sum() > 1.0:
            lo = mid
        else:
            hi = mid
    return np.maximum(v - 0.5 * (lo + hi), 0.0)


def simplex_grid(r, step):
    """All points of the r-simplex with coordinates on a ``step`` lattice."""
    m = int(round(1.0 / step))
    pts = []
    for c in itertools.product(range(m + 1), repeat=r - 1):
        s = sum(c)
        if s <= m:
            pts.append(list(c) + [m - s])
    return np.asarray(pts, dtype=np.float64) / m


def fstar_grid_search(g, lam0, step=0.02, refine=3):
    """Maximize ``<g, lam> - 0.5 ||lam - lam0||^2`` over the simplex by grid search.

    Each refinement searches a finer lattice around the incumbent, clipped to the simplex.
    """
    g = np.asarray(g, dtype=np.float64)
    lam0 = np.asarray(lam0, dtype=np.float64)
    r = g.size

    def score(P):
        D = P - lam0
        return P @ g - 0.5 * np.sum(D * D, axis=1)

    P = simplex_grid(r, step)
    best = P[np.argmax(score(P))]
    width = step
    for _ in range(refine):
        width /= 10.0
        offs = np.asarray(list(itertools.product(range(-10, 11), repeat=r - 1)), dtype=np.float64) * width
        cand = best[None, : r - 1] + offs
        last = 1.0 - cand.sum(axis=1, keepdims=True)
        P = np.hstack([cand, last])
        P = P[np.all(P >= 0, axis=1)]
        best = P[np.argmax(score(P))]
    return best


def central_difference(fun, x, h=1e-6):
    """Central finite-difference gradient of a scalar function."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = fun(x)
        flat[i] = old - h
        fm = fun(x)
        flat[i] = old
        gf[i] = (fp - fm) / (2 * h)
    return g


def _project_cols(B):
    return np.stack([project_bisection(B[:, j]) for j in range(B.shape[1])], axis=1)


def primal_block_pgd(Xm, cost, forward, adjoint, prev, tau, max_iter=20000, tol=1e-11, step=None):
    """Solve ``min_B sum_i W_gamma(X_i, forward(B)_i) + tau/2 ||B - prev||^2`` over column simplices.

    Projected gradient descent with Sinkhorn potentials supplying the gradient
    of each ``W_gamma(X_i, .)``; the step is ``1 / (tau + ||A||^2 / gamma)``.

    Returns
    -------
    B : ndarray
    value : float
        Primal objective at ``B``.
    """
    prev = np.asarray(prev, dtype=np.float64)
    if step is None:
        # ||A||^2 by power iteration on A^T A
        v = np.ones_like(prev)
        for _ in range(50):
            v = adjoint(forward(v))
            v /= np.linalg.norm(v)
        nrm2 = np.linalg.norm(adjoint(forward(v)))
        step = 1.0 / (tau + nrm2 / cost.gamma)
    B = prev.copy()
    psi = None
    for _ in range(max_iter):
        res = sinkhorn(Xm, forward(B), cost, tol=1e-13, max_iter=100000, psi0=psi)
        psi = res.psi
        grad = adjoint(psi) + tau * (B - prev)
        Bn = _project_cols(B - step * grad)
        if np.max(np.abs(Bn - B)) < tol:
            B = Bn
            break
        B = Bn
    res = sinkhorn(Xm, forward(B), cost, tol=1e-13, max_iter=100000, psi0=psi)
    d = B - prev
    return B, float(np.sum(res.values)) + 0.5 * tau * float(np.sum(d * d))


def sinkhorn_barycenter(Xm, cost, max_iter=100000, tol=1e-13):
    """Equal-weight entropic barycenter by iterative Bregman projections (kernel scaling).

    Uses the explicit kernel ``K``, so it is only meant for small grids and
    moderate ``gamma``.
    """
    K = cost.K
    n, N = Xm.shape
    V = np.ones((n, N))
    b = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        U = Xm / (K @ V)
        KtU = K.T @ U
        b_new = np.exp(np.mean(np.log(KtU), axis=1))
        V = b_new[:, None] / KtU
        if np.max(np.abs(b_new - b)) < tol:
            b = b_new
            break
        b = b_new
    return b / b.sum()
