"""Dictionary learning with rank-one (product-distribution) atoms.

Each atom is the outer product of one column from each loading matrix
``U^(k)``. The code update reuses the dictionary-learning code block on
``D = cp_outer(U)``. A loading matrix enters the reconstructions linearly
through ``Lbar x_k U``, where ``Lbar`` contracts the other factors with the
codes, so each factor update is the same proximal dual block as the
dictionary update with a different linear map.
"""

from dataclasses import dataclass, field
from typing import List

import numpy as np

from . import bcdpr
from .dwdl import (
    MIX_EPS,
    DwdlProblem,
    LinearBlock,
    _Monitor,
    _nonzero_rows,
    lambda_block,
    make_block_solver,
    solve_block,
)
from .errors import DimensionError, ParameterError
from .simplex import as_simplex_stack, mix_uniform, random_simplex
from .tensor import contract_except, cp_outer, insert_mode, mode_product


@dataclass
class CpModel:
    """Loading matrices and codes.

    Attributes
    ----------
    U_list : list of ndarray
        ``U_list[k]`` has shape (I_{k+1}, r); every column is a distribution.
    Lambda : ndarray, shape (r, N)
    """

    U_list: List[np.ndarray]
    Lambda: np.ndarray

    def __post_init__(self):
        self.U_list = [as_simplex_stack(U, n_lead=1) for U in self.U_list]
        self.Lambda = as_simplex_stack(self.Lambda, n_lead=1)
        r = self.Lambda.shape[0]
        for k, U in enumerate(self.U_list, start=1):
            if U.ndim != 2 or U.shape[1] != r:
                raise DimensionError(f"factor {k} has shape {U.shape}; expected (I_{k}, {r})")

    @property
    def grid_shape(self):
        return tuple(U.shape[0] for U in self.U_list)

    @property
    def r(self):
        return self.Lambda.shape[0]

    def atoms(self):
        """Atoms as a (I_1, ..., I_d, r) tensor."""
        return cp_outer(self.U_list)

    def reconstruct(self):
        """Reconstructions as a (I_1, ..., I_d, N) tensor."""
        D = self.atoms()
        Dm = D.reshape(-1, self.r)
        return (Dm @ self.Lambda).reshape(self.grid_shape + (self.Lambda.shape[1],))


def build_lambda_bar(U_list, Lambda, k):
    """Contract every factor except ``U^(k)`` with the codes.

    Forms ``cp_outer(U^(1..k-1), U^(k+1..d), Lambda^T)`` and moves its last
    (atom) mode to position ``k``, so that ``mode_product(Lbar, U^(k), k)``
    equals the reconstructions.

    Parameters
    ----------
    U_list : list of ndarray
        All ``d`` factors; entry ``k - 1`` is ignored.
    Lambda : ndarray, shape (r, N)
    k : int
        1-based factor index.

    Returns
    -------
    ndarray, shape (I_1, ..., I_{k-1}, r, I_{k+1}, ..., I_d, N)
    """
    d = len(U_list)
    if not 1 <= k <= d:
        raise DimensionError(f"factor index {k} outside 1..{d}")
    others = [U for j, U in enumerate(U_list, start=1) if j != k]
    return insert_mode(cp_outer(others + [np.asarray(Lambda).T]), k)


def _unfold_rows_nonzero(Lbar, k):
    return _nonzero_rows(np.moveaxis(Lbar, k - 1, 0).reshape(Lbar.shape[k - 1], -1))


def factor_block(Lbar, U_prev, k):
    """Linear map ``U -> Lbar x_k U`` (flattened to (n, N)) with its adjoint."""
    Lbar = np.ascontiguousarray(Lbar)
    out_shape = Lbar.shape[: k - 1] + (U_prev.shape[0],) + Lbar.shape[k:]

    def forward(U):
        return mode_product(Lbar, U, k).reshape(-1, Lbar.shape[-1])

    def adjoint(Gm):
        return contract_except(Gm.reshape(out_shape), Lbar, k)

    return LinearBlock(forward, adjoint, U_prev)


def _lambda_bar_mixed(U_list, Lambda, k):
    Lbar = build_lambda_bar(U_list, Lambda, k)
    if _unfold_rows_nonzero(Lbar, k):
        return Lbar
    U_list = [mix_uniform(U, 1, MIX_EPS) for U in U_list]
    return build_lambda_bar(U_list, mix_uniform(Lambda, 1, MIX_EPS), k)


def update_factor(U_prev, Lambda_bar, problem, tau, k, G0=None, tol=None):
    """Proximal update of loading matrix ``k`` through its dual.

    Returns
    -------
    U_new : ndarray, shape (I_k, r)
    report : DualSolveReport
    """
    if not _unfold_rows_nonzero(Lambda_bar, k):
        raise ParameterError("Lambda_bar has an all-zero mode-k fiber; eps-mix the factors")
    lb = factor_block(Lambda_bar, U_prev, k)
    G0 = np.zeros_like(problem.Xm) if G0 is None else G0
    tol = problem.tol0 if tol is None else tol
    rep = solve_block(problem.Xm, problem.cost, lb, tau, G0, tol, max_iter=problem.max_inner,
                      shrink=problem.armijo_shrink, c=problem.armijo_c)
    return rep.block, rep


def random_cp_init(grid_shape, r, N, seed=0):
    """Dirichlet(1) factor columns (mode by mode) then code columns, one generator."""
    rng = np.random.default_rng(seed)
    U_list = [random_simplex(rng, I, r) for I in grid_shape]
    L0 = random_simplex(rng, r, N)
    return CpModel(U_list, L0)


def wcpdl_block_problem(problem):
    """BCD-PR problem with blocks ``[Lambda, U^(1), ..., U^(d)]``."""
    d = len(problem.grid_shape)
    monitor = _Monitor(problem)

    def build_lambda(blocks):
        Lam, Us = blocks[0], blocks[1:]
        Dm = np.ascontiguousarray(cp_outer(Us).reshape(-1, problem.r))
        if not _nonzero_rows(Dm):
            Dm = mix_uniform(Dm, 1, MIX_EPS)
        return lambda_block(Dm, Lam)

    def builder(k):
        def build(blocks):
            Lbar = _lambda_bar_mixed(list(blocks[1:]), blocks[0], k)
            return factor_block(Lbar, blocks[k], k)
        return build

    def evaluate(blocks):
        Lam, Us = blocks[0], list(blocks[1:])
        Dm = np.ascontiguousarray(cp_outer(Us).reshape(-1, problem.r))
        f, psi = monitor(Dm @ Lam)
        grads = [Dm.T @ psi]
        P = psi.reshape(problem.grid_shape + (problem.N,))
        for k in range(1, d + 1):
            grads.append(contract_except(P, build_lambda_bar(Us, Lam, k), k))
        return f, grads

    L = 1.0 / problem.cost.gamma
    return bcdpr.BlockProblem(
        solvers=[make_block_solver(problem, build_lambda)]
        + [make_block_solver(problem, builder(k)) for k in range(1, d + 1)],
        evaluate=evaluate,
        smoothness=[L] * (d + 1),
        check_tau=not problem.unsafe_tau,
        names=["Lambda"] + [f"U{k}" for k in range(1, d + 1)],
    )


@dataclass
class WcpdlResult:
    model: CpModel
    history: list
    state: object = field(repr=False, default=None)
    bproblem: object = field(repr=False, default=None)


def wcpdl_run(problem, init=None, max_iter=100, station_tol=0.0, seed=0, callback=None):
    """Alternate the code update and the factor updates ``k = 1..d``.

    Parameters
    ----------
    problem : DwdlProblem
    init : CpModel, optional
        Defaults to :func:`random_cp_init` with ``seed``.

    Returns
    -------
    WcpdlResult
    """
    if init is None:
        init = random_cp_init(problem.grid_shape, problem.r, problem.N, seed)
    if init.grid_shape != problem.grid_shape or init.Lambda.shape != (problem.r, problem.N):
        raise DimensionError("initial model does not match the problem shape")
    bp = wcpdl_block_problem(problem)
    state, history = bcdpr.run(bp, [init.Lambda] + list(init.U_list), problem.tau, max_iter=max_iter,
                               station_tol=station_tol, callback=callback)
    model = CpModel(list(state.blocks[1:]), state.blocks[0])
    return WcpdlResult(model, history, state, bp)


# --- barycenter ------------------------------------------------------------


def barycenter_block_problem(problem):
    """Single-block problem over the atom with the codes frozen at all ones."""
    N = problem.N
    ones = np.ones((1, N))
    monitor = _Monitor(problem)

    def build(blocks):
        return LinearBlock(lambda Dm: Dm @ ones, lambda Gm: Gm @ ones.T, blocks[0])

    def evaluate(blocks):
        f, psi = monitor(blocks[0] @ ones)
        return f, [psi @ ones.T]

    # one convex block: the proximal point iteration converges for any tau > 0
    return bcdpr.BlockProblem(
        solvers=[make_block_solver(problem, build)],
        evaluate=evaluate,
        smoothness=[0.0],
        check_tau=True,
        names=["atom"],
    )


@dataclass
class BarycenterResult:
    atom: np.ndarray
    history: list
    state: object = field(repr=False, default=None)


def barycenter(X, cost, tau=0.1, max_iter=500, station_tol=1e-10, tol0=1e-4, init=None,
               sinkhorn_tol=1e-9):
    """Equal-weight entropic Wasserstein barycenter ``argmin_D sum_i W_gamma(X_i, D)``.

    Parameters
    ----------
    X : ndarray, shape (I_1, ..., I_d, N)
    cost : GroundCost
    tau : float
        Proximal weight. Any positive value converges since the problem is convex.
    init : ndarray, shape (I_1, ..., I_d), optional
        Defaults to the entrywise mean of the inputs.

    Returns
    -------
    BarycenterResult
    """
    problem = DwdlProblem(X=X, r=1, cost=cost, tau=tau, tol0=tol0, unsafe_tau=True,
                          sinkhorn_tol=sinkhorn_tol)
    if init is None:
        init = problem.Xm.mean(axis=1)
    D0 = as_simplex_stack(np.asarray(init, dtype=np.float64).reshape(-1, 1), n_lead=1)
    bp = barycenter_block_problem(problem)
    state, history = bcdpr.run(bp, [D0], tau, max_iter=max_iter, station_tol=station_tol)
    return BarycenterResult(state.blocks[0][:, 0].reshape(problem.grid_shape), history, state)


# --- synthetic data ------------------------------------------------------------


def planted_cp(grid_shape, r, N, seed=0, noise=10.0, signal_mean=5.0):
    """Planted CP data plus uniform noise, columns renormalized to distributions.

    Factor and code columns are Dirichlet(1). The noiseless tensor is scaled
    so its mean entry equals ``signal_mean`` before adding i.i.d.
    ``Uniform(0, noise)`` entries; ``noise = 0`` gives exactly representable data.

    Returns
    -------
    X : ndarray, shape grid_shape + (N,)
    truth : CpModel
    """
    rng = np.random.default_rng(seed)
    U_list = [random_simplex(rng, I, r) for I in grid_shape]
    Lam = random_simplex(rng, r, N)
    truth = CpModel(U_list, Lam)
    Y = truth.reconstruct()
    n = int(np.prod(grid_shape))
    if noise > 0:
        Y = Y * (signal_mean * n) + rng.uniform(0.0, noise, size=Y.shape)
    X = Y / Y.reshape(n, N).sum(axis=0)
    return X, truth
