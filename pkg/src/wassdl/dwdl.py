"""Wasserstein dictionary learning through proximal dual subproblems.

Every block update here has the same structure. A block ``B`` (code matrix,
dictionary, or CP loading matrix) enters the loss only through a linear map
``A`` producing the N reconstructed distributions, so the proximal
subproblem

    min_B  sum_i W_gamma(X_i, A(B)[:, i]) + tau/2 ||B - B_prev||^2,  B in simplices

has the smooth unconstrained dual

    min_G  sum_i H*_{X_i}(-G[:, i]) + tau F*_{B_prev}(A^T(G) / tau)

whose gradient is ``-grad H*(-G) + A(grad F*(A^T(G) / tau))``. The primal
block is read back as ``grad F*_{B_prev}(A^T(G) / tau)``, a column-wise
shifted simplex projection. Nothing ever runs Sinkhorn inside the optimizer.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import bcdpr
from .errors import ConvergenceError, DimensionError, ParameterError, PreconditionError
from .ot import GroundCost, data_terms, hstar_batch, reconstruct, sinkhorn
from .simplex import as_simplex_stack, mix_uniform, project_columns, random_simplex
from .tensor import contract_leading

MIX_EPS = 1e-12


@dataclass
class DualSolveReport:
    """Result of one dual subproblem solve.

    Attributes
    ----------
    G : ndarray, shape (n, N)
        Final dual iterate (grid flattened row-major).
    grad_norm : float
    iterations : int
    delta_hat : float
        Suboptimality surrogate for the recovered primal block,
        ``grad_norm * sqrt(2) * sqrt(fibers)``.
    value : float
        Dual objective at ``G``.
    block : ndarray
        Primal block recovered from ``G``.
    """

    G: np.ndarray
    grad_norm: float
    iterations: int
    delta_hat: float
    value: float
    block: Optional[np.ndarray] = None


@dataclass
class DwdlProblem:
    """Data and solver settings for dictionary learning.

    Attributes
    ----------
    X : ndarray, shape (I_1, ..., I_d, N)
        Each sample ``X[..., i]`` is a distribution on the grid.
    r : int
        Number of atoms.
    cost : GroundCost
    tau : float or callable
        Proximal weight, constant or a function of the outer iteration.
        Defaults to ``max(1, 1.1 / gamma)``.
    tol0 : float
        Dual gradient tolerance at iteration n is ``tol0 / n**2``.
    max_inner : int
        Gradient steps allowed per dual solve.
    armijo_shrink, armijo_c : float
        Backtracking factor and sufficient-decrease constant.
    sinkhorn_tol : float
        Marginal tolerance for monitoring ``f_W`` (not used by the optimizer).
    unsafe_tau : bool
        Allow ``tau <= 1/gamma``.
    """

    X: np.ndarray
    r: int
    cost: GroundCost
    tau: object = None
    tol0: float = 1e-4
    max_inner: int = 20000
    armijo_shrink: float = 0.5
    armijo_c: float = 1e-4
    sinkhorn_tol: float = 1e-9
    unsafe_tau: bool = False

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim < 2:
            raise DimensionError("X needs grid modes plus a trailing sample mode")
        if tuple(X.shape[:-1]) != tuple(self.cost.grid_shape):
            raise DimensionError(f"data grid {X.shape[:-1]} vs cost grid {self.cost.grid_shape}")
        self.X = as_simplex_stack(X, n_lead=X.ndim - 1)
        if self.r < 1:
            raise ParameterError("r must be >= 1")
        if self.tau is None:
            self.tau = max(1.0, 1.1 / self.cost.gamma)
        if not callable(self.tau) and not self.tau > 0:
            # the dual divides by tau, so even unsafe runs need it positive
            raise ParameterError(f"tau={self.tau} must be positive")
        if not self.unsafe_tau and not callable(self.tau) and not self.tau > 1.0 / self.cost.gamma:
            raise ParameterError(
                f"tau={self.tau} must exceed 1/gamma={1.0 / self.cost.gamma:.6g} (pass unsafe_tau to override)"
            )

    @property
    def grid_shape(self):
        return tuple(self.X.shape[:-1])

    @property
    def N(self):
        return self.X.shape[-1]

    @property
    def Xm(self):
        return self.X.reshape(-1, self.N)

    def tol_at(self, n):
        return self.tol0 / float(max(n, 1)) ** 2


# --- generic linear-map block subproblem ----------------------------------


class LinearBlock:
    """Linear map from a block (columns are simplex fibers) to reconstructions.

    Parameters
    ----------
    forward : callable
        ``(p, F) block -> (n, N)`` reconstructions.
    adjoint : callable
        ``(n, N) -> (p, F)``; the adjoint of ``forward``.
    prev : ndarray, shape (p, F)
        Prox center.
    """

    def __init__(self, forward, adjoint, prev):
        self.forward = forward
        self.adjoint = adjoint
        self.prev = np.ascontiguousarray(prev, dtype=np.float64)

    @property
    def fibers(self):
        return self.prev.shape[1]

    def recover(self, Gm, tau):
        """Primal block ``grad F*_{prev}(A^T(G) / tau)``."""
        lam, _ = project_columns(self.prev + self.adjoint(Gm) / tau)
        return lam


def block_dual(Gm, Xm, cost, lb, tau, want_grad=True, terms=None):
    """Dual objective (and gradient) of a proximal block subproblem.

    Returns ``(value, grad, block)`` with ``block`` the primal recovery at ``G``.
    The value includes the ``-0.5 ||prev||^2`` constants of ``F*``.
    """
    hv, hg = hstar_batch(-Gm, Xm, cost, want_grad=want_grad, terms=terms)
    Z = lb.adjoint(Gm) / tau
    lam, _ = project_columns(lb.prev + Z)
    d = lam - lb.prev
    fval = float(np.sum(Z * lam) - 0.5 * np.sum(d * d))
    value = float(np.sum(hv)) + tau * fval
    if not want_grad:
        return value, None, lam
    grad = -hg + lb.forward(lam)
    return value, grad, lam


def solve_dual(objective, G0, tol, max_iter=20000, step0=1.0, shrink=0.5, c=1e-4, fibers=1,
               raise_on_fail=True, grow=2.0, trial="bb"):
    """Gradient descent with Armijo backtracking on a smooth convex dual.

    The first line search starts from ``step0``; later ones start from
    ``grow`` times the last accepted step. Each shrinks by ``shrink`` until
    ``f(G - t g) <= f(G) - c t ||g||^2``. ``grow = 1`` restarts from
    ``step0`` every time. When that decrease is below the round-off of
    ``f`` the step is accepted instead if ``<g(G - t g), g> >= -(1 - 2c)||g||^2``
    and ``f`` did not rise by more than round-off.

    Parameters
    ----------
    objective : callable
        ``G -> (value, grad)`` or ``G -> (value, grad, extra)``.
    G0 : ndarray
    tol : float
        Stop once ``||grad|| <= tol``.
    fibers : int
        Number of simplex fibers in the primal block (for ``delta_hat``).

    Raises
    ------
    ConvergenceError
        Budget exhausted with ``||grad|| > 10 * tol``.
    """
    G = np.array(G0, dtype=np.float64)
    out = objective(G)
    val, grad = out[0], out[1]
    extra = out[2] if len(out) > 2 else None
    gnorm = float(np.linalg.norm(grad))
    it = 0
    t_last = step0 / grow
    t_bb = None
    while gnorm > tol and it < max_iter:
        g2 = gnorm * gnorm
        eps_f = 1e-12 * (1.0 + abs(val))
        if trial == "bb" and t_bb is not None:
            t = t_bb
        else:
            t = t_last * grow if grow > 1.0 else step0
        while True:
            Gt = G - t * grad
            out_t = objective(Gt)
            if out_t[0] <= val - c * t * g2:
                break
            # once the predicted decrease is below the value's round-off,
            # judge the step by the gradient (approximate Armijo)
            if (c * t * g2 <= eps_f and out_t[0] <= val + eps_f
                    and float(np.sum(out_t[1] * grad)) >= -(1.0 - 2.0 * c) * g2):
                break
            t *= shrink
            if t < 1e-30:
                # no decrease representable: gradient is at round-off level
                out_t = None
                break
        it += 1
        if out_t is None:
            break
        t_last = t
        if trial == "bb":
            sv = Gt - G
            yv = out_t[1] - grad
            sy = float(np.sum(sv * yv))
            t_bb = float(np.sum(sv * sv)) / sy if sy > 0 else None
            if t_bb is not None and (not math.isfinite(t_bb)):
                t_bb = None
        G = Gt
        val, grad = out_t[0], out_t[1]
        extra = out_t[2] if len(out_t) > 2 else None
        gnorm = float(np.linalg.norm(grad))
    if gnorm > 10 * tol and raise_on_fail:
        raise ConvergenceError(
            f"dual solve stopped at |grad|={gnorm:.3e} > 10*tol={10 * tol:.3e} after {it} steps",
            residual=gnorm,
            iterations=it,
        )
    return DualSolveReport(G, gnorm, it, gnorm * math.sqrt(2.0) * math.sqrt(fibers), float(val), extra)


def solve_block(Xm, cost, lb, tau, G0, tol, max_iter=20000, shrink=0.5, c=1e-4):
    """Solve one proximal block subproblem through its dual."""
    terms = data_terms(Xm)
    report = solve_dual(
        lambda G: block_dual(G, Xm, cost, lb, tau, terms=terms),
        G0,
        tol,
        max_iter=max_iter,
        step0=cost.gamma,
        shrink=shrink,
        c=c,
        fibers=lb.fibers,
    )
    report.block = lb.recover(report.G, tau)
    return report


def primal_block_objective(B, Xm, cost, lb, tau, tol=1e-11):
    """``sum_i W_gamma(X_i, A(B)_i) + tau/2 ||B - prev||^2`` by Sinkhorn (oracle side)."""
    res = sinkhorn(Xm, lb.forward(B), cost, tol=tol, max_iter=200000)
    d = B - lb.prev
    return float(np.sum(res.values)) + 0.5 * tau * float(np.sum(d * d)), res


# --- the two dWDL blocks --------------------------------------------------


def _Dmat(D):
    D = np.asarray(D, dtype=np.float64)
    return np.ascontiguousarray(D.reshape(-1, D.shape[-1]))


def _nonzero_rows(A):
    return bool(np.all(np.any(A != 0, axis=1)))


def lambda_block(D_prev, Lambda_prev):
    """Linear map for the code update: ``Lambda -> D Lambda``."""
    Dm = _Dmat(D_prev)
    return LinearBlock(lambda L: Dm @ L, lambda Gm: Dm.T @ Gm, Lambda_prev)


def dict_block(Lambda_n, D_prev):
    """Linear map for the dictionary update: ``D -> D Lambda`` acting on vec(D)."""
    L = np.ascontiguousarray(Lambda_n, dtype=np.float64)
    return LinearBlock(lambda Dm: Dm @ L, lambda Gm: Gm @ L.T, _Dmat(D_prev))


def _as_G(G, problem):
    G = np.asarray(G, dtype=np.float64)
    if G.size != problem.Xm.size:
        raise DimensionError(f"dual variable has {G.size} entries, expected {problem.Xm.size}")
    return G.reshape(problem.Xm.shape)


def dual_objective_lambda(G, D_prev, Lambda_prev, tau, problem):
    """Dual of the code subproblem and its gradient in ``G``.

    ``sum_i H*_{X_i}(-G_i) + tau F*_{Lambda_prev[:, i]}(D_prev x_{<=d} G_i / tau)``.

    Raises
    ------
    PreconditionError
        Some grid point carries zero mass in every atom of ``D_prev``; mix
        the dictionary with a tiny uniform component first.
    """
    if not _nonzero_rows(_Dmat(D_prev)):
        raise PreconditionError("a fiber of D_prev along the atom mode is identically zero; eps-mix it")
    Gm = _as_G(G, problem)
    val, grad, _ = block_dual(Gm, problem.Xm, problem.cost, lambda_block(D_prev, Lambda_prev), tau)
    return val, grad.reshape(np.shape(G))


def dual_objective_D(G, Lambda_n, D_prev, tau, problem):
    """Dual of the dictionary subproblem and its gradient in ``G``.

    ``sum_i H*_{X_i}(-G_i) + tau F*_{D_prev}(G x_{d+1} Lambda_n^T / tau)`` with
    ``F*`` applied atom by atom.

    Raises
    ------
    PreconditionError
        Some atom has zero weight in every sample.
    """
    if not _nonzero_rows(np.asarray(Lambda_n)):
        raise PreconditionError("a fiber of Lambda_n along the sample mode is identically zero; eps-mix it")
    Gm = _as_G(G, problem)
    val, grad, _ = block_dual(Gm, problem.Xm, problem.cost, dict_block(Lambda_n, D_prev), tau)
    return val, grad.reshape(np.shape(G))


def recover_lambda(G, D_prev, Lambda_prev, tau):
    """Code matrix from a dual solution: column-wise ``grad F*``.

    ``Lambda_n[:, i] = (Lambda_prev[:, i] + (D_prev x_{<=d} G)[:, i] / tau - c_i)_+``.
    """
    D_prev = np.asarray(D_prev, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64).reshape(D_prev.shape[:-1] + (-1,))
    lam, _ = project_columns(np.asarray(Lambda_prev, dtype=np.float64) + contract_leading(D_prev, G) / tau)
    return lam


def recover_D(G, Lambda_n, D_prev, tau):
    """Dictionary from a dual solution, atom by atom on the grid simplex."""
    D_prev = np.asarray(D_prev, dtype=np.float64)
    lb = dict_block(Lambda_n, D_prev)
    Gm = np.asarray(G, dtype=np.float64).reshape(lb.prev.shape[0], -1)
    return lb.recover(Gm, tau).reshape(D_prev.shape)


# --- driver ---------------------------------------------------------------


def random_init(grid_shape, r, N, seed=0):
    """Dirichlet(1) atoms and code columns from one seeded generator."""
    rng = np.random.default_rng(seed)
    n = int(np.prod(grid_shape))
    D0 = random_simplex(rng, n, r).reshape(tuple(grid_shape) + (r,))
    L0 = random_simplex(rng, r, N)
    return D0, L0


class _Monitor:
    """Evaluates ``f_W`` by warm-started Sinkhorn and caches the potentials."""

    def __init__(self, problem):
        self.problem = problem
        self.psi = None

    def __call__(self, Y):
        res = sinkhorn(self.problem.Xm, Y, self.problem.cost, tol=self.problem.sinkhorn_tol,
                       max_iter=100000, psi0=self.psi)
        self.psi = res.psi
        return float(np.sum(res.values)), res.psi


def ensure_nonzero_rows(A):
    """Mix a simplex-columned matrix with uniform if any row is all zeros."""
    A = np.asarray(A, dtype=np.float64)
    if _nonzero_rows(A.reshape(-1, A.shape[-1])):
        return A
    return mix_uniform(A, n_lead=A.ndim - 1, eps=MIX_EPS)


def make_block_solver(problem, build, fiber_shape=None):
    """Wrap a ``blocks -> LinearBlock`` builder as a bcdpr block solver.

    The dual variable is warm-started from the previous call.
    """
    warm = {"G": None, "reports": []}

    def solve(blocks, tau, n):
        lb = build(blocks)
        G0 = warm["G"] if warm["G"] is not None else np.zeros_like(problem.Xm)
        rep = solve_block(problem.Xm, problem.cost, lb, tau, G0, problem.tol_at(n),
                          max_iter=problem.max_inner, shrink=problem.armijo_shrink, c=problem.armijo_c)
        warm["G"] = rep.G
        warm["reports"].append(rep)
        block = rep.block if fiber_shape is None else rep.block.reshape(fiber_shape)
        return block, rep.delta_hat

    solve.warm = warm
    return solve


def _tau_schedule(problem):
    return problem.tau


def dwdl_block_problem(problem):
    """BCD-PR problem with blocks ``[Lambda, D]`` (code first, as in the sweep order)."""
    monitor = _Monitor(problem)
    shape = problem.grid_shape + (problem.r,)

    def build_lambda(blocks):
        Lam, D = blocks
        return lambda_block(ensure_nonzero_rows(_Dmat(D)), Lam)

    def build_D(blocks):
        Lam, D = blocks
        return dict_block(ensure_nonzero_rows(Lam), D)

    def evaluate(blocks):
        Lam, D = blocks
        Dm = _Dmat(D)
        f, psi = monitor(Dm @ Lam)
        return f, [Dm.T @ psi, (psi @ Lam.T).reshape(shape)]

    L = 1.0 / problem.cost.gamma
    return bcdpr.BlockProblem(
        solvers=[make_block_solver(problem, build_lambda), make_block_solver(problem, build_D, shape)],
        evaluate=evaluate,
        smoothness=[L, L],
        check_tau=not problem.unsafe_tau,
        names=["Lambda", "D"],
    )


@dataclass
class DwdlResult:
    D: np.ndarray
    Lambda: np.ndarray
    history: list
    state: object = field(repr=False, default=None)
    bproblem: object = field(repr=False, default=None)


def dwdl_run(problem, init=None, max_iter=100, station_tol=0.0, seed=0, callback=None):
    """Alternate code and dictionary proximal updates.

    Parameters
    ----------
    problem : DwdlProblem
    init : (D0, Lambda0), optional
        Defaults to :func:`random_init` with ``seed``.
    max_iter : int
    station_tol : float
        Stop when the stationarity surrogate squared is at most this.

    Returns
    -------
    DwdlResult
    """
    if init is None:
        init = random_init(problem.grid_shape, problem.r, problem.N, seed)
    D0, L0 = init
    D0 = as_simplex_stack(D0, n_lead=len(problem.grid_shape))
    L0 = as_simplex_stack(L0, n_lead=1)
    if D0.shape != problem.grid_shape + (problem.r,) or L0.shape != (problem.r, problem.N):
        raise DimensionError(f"init shapes {D0.shape}, {L0.shape} do not match the problem")
    bp = dwdl_block_problem(problem)
    state, history = bcdpr.run(bp, [L0, D0], _tau_schedule(problem), max_iter=max_iter,
                               station_tol=station_tol, callback=callback)
    Lam, D = state.blocks
    return DwdlResult(D, Lam, history, state, bp)
