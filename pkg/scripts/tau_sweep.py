"""Effect of the proximal weight on a small planted CP problem.

Runs the CP-dictionary learner for each tau (the small ones bypass the
``tau > 1/gamma`` check) and reports the final objective, the number of
monotonicity-audit violations and the total displacement.
"""

import argparse
from dataclasses import dataclass

from wassdl import bcdpr
from wassdl.dwdl import DwdlProblem
from wassdl.errors import WassdlError
from wassdl.ot import build_ground_cost
from wassdl.wcpdl import planted_cp, wcpdl_run


@dataclass
class Config:
    taus: tuple = (0.0, 0.01, 0.1, 1.0, 22.0)
    grid: int = 8
    r: int = 3
    n_samples: int = 10
    gamma: float = 0.05
    max_iter: int = 30
    seed: int = 0


def run_one(cfg, tau):
    X, _ = planted_cp((cfg.grid, cfg.grid), cfg.r, cfg.n_samples, seed=cfg.seed)
    p = DwdlProblem(X=X, r=cfg.r, cost=build_ground_cost((cfg.grid, cfg.grid), "euclidean", cfg.gamma),
                    tau=tau, unsafe_tau=True)
    res = wcpdl_run(p, max_iter=cfg.max_iter, seed=cfg.seed + 1)
    h = res.history
    return h[-1].f, len(bcdpr.audit_forward_monotonicity(h, res.bproblem.m)), sum(r.disp_sq for r in h[1:])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-iter", type=int, default=Config.max_iter)
    ap.add_argument("--taus", default=",".join(str(t) for t in Config.taus))
    args = ap.parse_args(argv)
    cfg = Config(max_iter=args.max_iter, taus=tuple(float(t) for t in args.taus.split(",")))
    print(f"1/gamma = {1 / cfg.gamma:g}")
    print("tau       final f      violations  sum disp^2")
    for tau in cfg.taus:
        try:
            f, bad, disp = run_one(cfg, tau)
            print(f"{tau:<9g} {f:<12.6f} {bad:<11d} {disp:.4e}")
        except (WassdlError, FloatingPointError, ZeroDivisionError) as err:
            print(f"{tau:<9g} failed: {type(err).__name__}: {err}")


if __name__ == "__main__":
    main()
