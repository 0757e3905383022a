"""Self-check suite bundling the oracle comparisons.

Each check returns ``(passed, slack)`` where ``slack`` is the measured error
divided by its tolerance (below 1 passes). The report is a plain text table
with no timings, so repeated runs at the same seed are byte-identical.
"""

from dataclasses import dataclass

import numpy as np

from . import bcdpr, oracles
from .dwdl import (
    DwdlProblem,
    dict_block,
    dual_objective_D,
    dual_objective_lambda,
    dwdl_run,
    lambda_block,
    solve_block,
)
from .errors import ParameterError, WassdlError
from .ot import build_ground_cost, hstar_batch
from .simplex import fstar_value, fstar_value_closed, project_columns, random_simplex
from .wcpdl import build_lambda_bar, factor_block, planted_cp


@dataclass
class VerifyConfig:
    seed: int = 0
    gamma: float = 0.1
    tau: float = None


@dataclass
class CheckResult:
    name: str
    group: str
    passed: bool
    slack: float
    detail: str = ""


def _rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def check_hstar_gradient(cfg, rng):
    cost = build_ground_cost((8,), "euclidean", cfg.gamma)
    X = random_simplex(rng, 8, 1)
    g = rng.normal(size=(8, 1))
    _, grad = hstar_batch(g, X, cost)
    fd = oracles.central_difference(lambda v: hstar_batch(v, X, cost, want_grad=False)[0][0], g)
    return _rel_err(grad, fd) / 1e-4


def _small_problem(rng, gamma, grid=(5,), r=3, N=2):
    n = int(np.prod(grid))
    X = random_simplex(rng, n, N).reshape(tuple(grid) + (N,))
    return DwdlProblem(X=X, r=r, cost=build_ground_cost(grid, "euclidean", gamma), unsafe_tau=True)


def check_dual_lambda_gradient(cfg, rng):
    p = _small_problem(rng, cfg.gamma)
    D = random_simplex(rng, 5, 3)
    L = random_simplex(rng, 3, 2)
    G = rng.normal(size=(5, 2))
    _, grad = dual_objective_lambda(G, D, L, 3.0, p)
    fd = oracles.central_difference(lambda v: dual_objective_lambda(v, D, L, 3.0, p)[0], G)
    return _rel_err(grad, fd) / 1e-4


def check_dual_D_gradient(cfg, rng):
    p = _small_problem(rng, cfg.gamma)
    D = random_simplex(rng, 5, 3)
    L = random_simplex(rng, 3, 2)
    G = rng.normal(size=(5, 2))
    _, grad = dual_objective_D(G, L, D, 3.0, p)
    fd = oracles.central_difference(lambda v: dual_objective_D(v, L, D, 3.0, p)[0], G)
    return _rel_err(grad, fd) / 1e-4


def check_projection(cfg, rng):
    worst = 0.0
    for _ in range(200):
        v = rng.normal(size=int(rng.integers(1, 30))) * 3
        worst = max(worst, float(np.max(np.abs(project_columns(v)[0] - oracles.project_bisection(v)))))
    return worst / 1e-12


def check_fstar_forms(cfg, rng):
    worst = 0.0
    for _ in range(100):
        g = rng.normal(size=6)
        lam0 = random_simplex(rng, 6, 1)[:, 0]
        worst = max(worst, abs(fstar_value(g, lam0) - fstar_value_closed(g, lam0)))
    return worst / 1e-12


def _tiny_lambda_case(rng, gamma):
    p = _small_problem(rng, gamma, grid=(4,), r=2, N=3)
    lb = lambda_block(random_simplex(rng, 4, 2), random_simplex(rng, 2, 3))
    return p, lb


def check_lambda_primal(cfg, rng):
    p, lb = _tiny_lambda_case(rng, cfg.gamma)
    tau = 3.0
    rep = solve_block(p.Xm, p.cost, lb, tau, np.zeros_like(p.Xm), 1e-10)
    B, _ = oracles.primal_block_pgd(p.Xm, p.cost, lb.forward, lb.adjoint, lb.prev, tau)
    return float(np.max(np.abs(rep.block - B))) / 1e-4


def check_D_primal(cfg, rng):
    p, _ = _tiny_lambda_case(rng, cfg.gamma)
    lb = dict_block(random_simplex(rng, 2, 3), random_simplex(rng, 4, 2))
    tau = 3.0
    rep = solve_block(p.Xm, p.cost, lb, tau, np.zeros_like(p.Xm), 1e-10)
    B, _ = oracles.primal_block_pgd(p.Xm, p.cost, lb.forward, lb.adjoint, lb.prev, tau)
    return float(np.max(np.abs(rep.block - B))) / 1e-4


def check_duality_gap(cfg, rng):
    p, lb = _tiny_lambda_case(rng, cfg.gamma)
    tau = 3.0
    rep = solve_block(p.Xm, p.cost, lb, tau, np.zeros_like(p.Xm), 1e-10)
    _, primal = oracles.primal_block_pgd(p.Xm, p.cost, lb.forward, lb.adjoint, lb.prev, tau)
    return abs(-rep.value - primal) / 1e-3


def check_factor_primal(cfg, rng):
    grid = (3, 3)
    X, _ = planted_cp(grid, 2, 2, seed=int(rng.integers(1 << 30)), noise=10.0)
    p = DwdlProblem(X=X, r=2, cost=build_ground_cost(grid, "euclidean", cfg.gamma), unsafe_tau=True)
    U = [random_simplex(rng, 3, 2), random_simplex(rng, 3, 2)]
    L = random_simplex(rng, 2, 2)
    lb = factor_block(build_lambda_bar(U, L, 2), U[1], 2)
    tau = 3.0
    rep = solve_block(p.Xm, p.cost, lb, tau, np.zeros_like(p.Xm), 1e-10)
    B, _ = oracles.primal_block_pgd(p.Xm, p.cost, lb.forward, lb.adjoint, lb.prev, tau)
    return float(np.max(np.abs(rep.block - B))) / 1e-4


def check_monotonicity(cfg, rng):
    X, _ = planted_cp((5, 5), 2, 4, seed=int(rng.integers(1 << 30)), noise=10.0)
    p = DwdlProblem(X=X, r=2, cost=build_ground_cost((5, 5), "euclidean", cfg.gamma), tol0=1e-6)
    res = dwdl_run(p, max_iter=15, seed=int(rng.integers(1 << 30)))
    margins = bcdpr.monotonicity_margins(res.history, 2)
    return max(0.0, -min(margins)) / 1e-6


def check_tau(cfg, rng):
    """Fails when the configured tau does not exceed the block smoothness 1/gamma."""
    tau = cfg.tau if cfg.tau is not None else 1.1 / cfg.gamma
    X = random_simplex(rng, 4, 2)
    try:
        DwdlProblem(X=X, r=1, cost=build_ground_cost((4,), "euclidean", cfg.gamma), tau=tau)
    except ParameterError:
        return np.inf
    return (1.0 / cfg.gamma) / tau


CHECKS = [
    ("hstar_gradient", "gradient", check_hstar_gradient),
    ("dual_lambda_gradient", "gradient", check_dual_lambda_gradient),
    ("dual_D_gradient", "gradient", check_dual_D_gradient),
    ("projection_bisection", "simplex", check_projection),
    ("fstar_closed_form", "simplex", check_fstar_forms),
    ("lambda_vs_primal", "oracle", check_lambda_primal),
    ("D_vs_primal", "oracle", check_D_primal),
    ("factor_vs_primal", "oracle", check_factor_primal),
    ("duality_gap", "oracle", check_duality_gap),
    ("monotonicity_audit", "monotonicity", check_monotonicity),
    ("tau_validation", "tau", check_tau),
]

GROUPS = sorted({g for _, g, _ in CHECKS})


def run_checks(cfg=None, only=None):
    """Run the suite (optionally restricted to groups or check names in ``only``)."""
    cfg = cfg or VerifyConfig()
    results = []
    for i, (name, group, fun) in enumerate(CHECKS):
        if only and group not in only and name not in only:
            continue
        # each check gets its own stream so filtering does not shift the others
        rng = np.random.default_rng([cfg.seed, i])
        try:
            slack = float(fun(cfg, rng))
            detail = ""
        except WassdlError as err:
            slack, detail = np.inf, f"{type(err).__name__}: {err}"
        results.append(CheckResult(name, group, bool(slack < 1.0), slack, detail))
    return results


def format_report(results):
    lines = []
    for r in results:
        line = f"{'PASS' if r.passed else 'FAIL'}  {r.group:<12} {r.name:<22} slack={r.slack:.3e}"
        if r.detail:
            line += f"  {r.detail}"
        lines.append(line)
    n_fail = sum(not r.passed for r in results)
    lines.append(f"{len(results) - n_fail}/{len(results)} checks passed")
    return "\n".join(lines) + "\n"
