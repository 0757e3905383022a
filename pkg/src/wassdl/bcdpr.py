"""Gauss-Seidel block coordinate descent with proximal regularization.

Each block is an array whose slices ``block[..., j]`` are points of a
probability simplex (the feasible set of every block here is a product of
simplices). The driver only sees callbacks: one subproblem solver per block
and an evaluator returning the objective and its block gradients.
"""

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .errors import ParameterError, StepError, WassdlError

HISTORY_COLUMNS = ("n", "f", "disp_sq", "delta_hat", "stationarity", "tau", "seconds")


@dataclass
class BlockProblem:
    """A block-structured minimization over products of simplices.

    Attributes
    ----------
    solvers : list of callables
        ``solvers[i](blocks, tau, n) -> (new_block, delta_hat)`` minimizes
        ``f`` in block ``i`` plus ``tau/2 ||theta - blocks[i]||^2``, with every
        other block held at its current value. ``delta_hat`` bounds the
        suboptimality of the returned block.
    evaluate : callable
        ``evaluate(blocks) -> (f, grads)`` with one gradient per block.
    smoothness : list of float
        Per-block smoothness constants ``L^(i)``.
    check_tau : bool
        Require ``tau^(i) > L^(i)``. Switching this off voids the
        convergence theory and exists only for experiments.
    names : list of str, optional
    """

    solvers: List[Callable]
    evaluate: Callable
    smoothness: List[float]
    check_tau: bool = True
    names: Optional[List[str]] = None

    @property
    def m(self):
        return len(self.solvers)


@dataclass
class HistoryRow:
    n: int
    f: float
    disp_sq: float
    delta_hat: float
    stationarity: float
    tau: float
    seconds: float


@dataclass
class BcdState:
    """Current iterate plus the per-iteration log."""

    blocks: list
    n: int = 0
    taus: list = field(default_factory=list)
    history: List[HistoryRow] = field(default_factory=list)
    grads: Optional[list] = None
    t0: float = 0.0


def _tau_list(tau, m):
    if np.isscalar(tau):
        return [float(tau)] * m
    tau = [float(t) for t in tau]
    if len(tau) != m:
        raise ParameterError(f"expected {m} proximal weights, got {len(tau)}")
    return tau


def tau_at(schedule, n, m):
    """Resolve a tau schedule (constant, per-block list, or callable of n)."""
    value = schedule(n) if callable(schedule) else schedule
    return _tau_list(value, m)


def check_taus(problem, taus):
    if not problem.check_tau:
        return
    for i, (t, L) in enumerate(zip(taus, problem.smoothness)):
        if not t > L:
            raise ParameterError(f"block {i}: tau={t} must exceed the smoothness constant L={L}")


def _fibers(block):
    b = np.asarray(block, dtype=np.float64)
    return b.reshape(-1, b.shape[-1])


def stationarity_surrogate(blocks, grads):
    """Normalized Frank-Wolfe gap over the product of simplices.

    Returns ``max(0, <-grad f, s - theta> / ||s - theta||)`` where ``s`` puts
    each simplex fiber on the vertex with the smallest gradient entry (lowest
    index on ties); 0 when ``s == theta``. This never exceeds the
    worst-direction quantity ``-inf_theta' <grad f, (theta' - theta)/||.||>``.
    """
    num = 0.0
    den = 0.0
    for block, grad in zip(blocks, grads):
        B = _fibers(block)
        Gr = _fibers(grad)
        S = np.zeros_like(B)
        S[np.argmin(Gr, axis=0), np.arange(B.shape[1])] = 1.0
        D = S - B
        num += float(np.sum(-Gr * D))
        den += float(np.sum(D * D))
    if den == 0.0:
        return 0.0
    return max(0.0, num / math.sqrt(den))


def _disp_sq(a, b):
    return float(sum(np.sum((np.asarray(x) - np.asarray(y)) ** 2) for x, y in zip(a, b)))


def initial_state(problem, theta0, clock=time.perf_counter):
    """Evaluate ``theta0`` and open the history with row ``n = 0``."""
    blocks = [np.array(b, dtype=np.float64) for b in theta0]
    f, grads = problem.evaluate(blocks)
    st = stationarity_surrogate(blocks, grads)
    state = BcdState(blocks=blocks, n=0, taus=[], grads=grads)
    state.history.append(HistoryRow(0, float(f), 0.0, 0.0, st, 0.0, 0.0))
    state.t0 = clock()
    return state


def bcd_step(problem, state, taus, clock=time.perf_counter):
    """One Gauss-Seidel sweep ``i = 1..m`` of proximal block updates.

    Each block solve sees the freshest values of the blocks before it.
    Records ``delta_hat`` as the largest solver-reported surrogate.

    Raises
    ------
    StepError
        A block solver failed; ``err.block`` holds its index.
    """
    taus = _tau_list(taus, problem.m)
    check_taus(problem, taus)
    n = state.n + 1
    previous = [b.copy() for b in state.blocks]
    blocks = list(state.blocks)
    delta = 0.0
    for i, solve in enumerate(problem.solvers):
        try:
            new_block, dh = solve(blocks, taus[i], n)
        except WassdlError as err:
            name = problem.names[i] if problem.names else str(i)
            raise StepError(f"block {name} failed at iteration {n}: {err}", block=i) from err
        blocks[i] = np.asarray(new_block, dtype=np.float64)
        delta = max(delta, float(dh))
    f, grads = problem.evaluate(blocks)
    st = stationarity_surrogate(blocks, grads)
    row = HistoryRow(n, float(f), _disp_sq(blocks, previous), delta, st, min(taus), clock() - state.t0)
    state.blocks = blocks
    state.n = n
    state.taus = taus
    state.grads = grads
    state.history.append(row)
    return state


def run(problem, theta0, tau_schedule, max_iter=100, station_tol=0.0, callback=None,
        clock=time.perf_counter):
    """Iterate :func:`bcd_step` until the stationarity surrogate squared drops
    to ``station_tol`` or ``max_iter`` sweeps are done.

    Returns
    -------
    state : BcdState
    history : list of HistoryRow
        Row 0 describes ``theta0``; at most ``max_iter + 1`` rows.
    """
    state = initial_state(problem, theta0, clock=clock)
    for n in range(1, max_iter + 1):
        bcd_step(problem, state, tau_at(tau_schedule, n, problem.m), clock=clock)
        if callback is not None:
            callback(state)
        if state.history[-1].stationarity ** 2 <= station_tol:
            break
    return state, state.history


def audit_forward_monotonicity(history, m, slack=1e-6):
    """Rows violating ``f_{n-1} - f_n >= tau_n/2 * disp_n - m * delta_n``.

    Returns
    -------
    list of int
        Iteration numbers whose margin falls below ``-slack``.
    """
    bad = []
    for prev, row in zip(history, history[1:]):
        margin = prev.f - row.f - 0.5 * row.tau * row.disp_sq + m * row.delta_hat
        if margin < -slack:
            bad.append(row.n)
    return bad


def monotonicity_margins(history, m):
    """Per-row margins of the forward-monotonicity inequality."""
    return [
        prev.f - row.f - 0.5 * row.tau * row.disp_sq + m * row.delta_hat
        for prev, row in zip(history, history[1:])
    ]


def summed_displacement_gap(history, m):
    """``f(theta_0) + m sum delta_hat - sum tau ||theta_n - theta_{n-1}||^2``."""
    lhs = sum(row.tau * row.disp_sq for row in history[1:])
    rhs = history[0].f + m * sum(row.delta_hat for row in history[1:])
    return rhs - lhs


def rate_trend(history):
    """Running minimum of stationarity squared times ``n / log(n+1)^2``, per row ``n >= 1``."""
    out = []
    best = math.inf
    for row in history[1:]:
        best = min(best, row.stationarity ** 2)
        out.append(best * row.n / math.log(row.n + 1) ** 2)
    return out


def write_history(path, history, freeze_clock=False, extra=None):
    """Write the history as CSV with columns ``n,f,disp_sq,delta_hat,stationarity,tau,seconds``.

    ``freeze_clock`` writes 0 in the seconds column so repeated runs are
    byte-identical. ``extra`` maps additional column names to per-row values.
    """
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS + tuple(extra))
        for i, row in enumerate(history):
            w.writerow([
                row.n,
                repr(row.f),
                repr(row.disp_sq),
                repr(row.delta_hat),
                repr(row.stationarity),
                repr(row.tau),
                repr(0.0 if freeze_clock else row.seconds),
            ] + [repr(float(v[i])) for v in extra.values()])


def read_history(path):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(HistoryRow(int(rec["n"]), *(float(rec[c]) for c in HISTORY_COLUMNS[1:])))
    return rows
