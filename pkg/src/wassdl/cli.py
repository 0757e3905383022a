"""Command-line experiment runner.

Exit codes: 0 success, 1 solver non-convergence, 2 invalid configuration,
3 I/O error, 4 verification failure.
"""

import argparse
import os
import sys
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import bcdpr, data, verify
from .dwdl import DwdlProblem, dwdl_run
from .errors import (
    CapacityError,
    ConvergenceError,
    DimensionError,
    ParameterError,
    PreconditionError,
    StepError,
)
from .io import read_config, write_pgm
from .ot import build_ground_cost
from .tensor import load_csv, load_tensor, save_csv
from .wcpdl import barycenter, wcpdl_run

EXIT_OK, EXIT_NONCONVERGED, EXIT_CONFIG, EXIT_IO, EXIT_VERIFY = 0, 1, 2, 3, 4

EXPERIMENTS = ("barycenter", "dwdl", "wcpdl", "gradient-check", "oracle-check", "verify")


@dataclass
class ExperimentConfig:
    experiment: str = "verify"
    grid: Optional[tuple] = None
    metric: str = "euclidean"
    gamma: float = 0.1
    r: int = 2
    n_samples: Optional[int] = None
    tau: Optional[float] = None
    unsafe_tau: bool = False
    seed: int = 0
    max_iter: int = 100
    tol0: Optional[float] = None
    input: Optional[str] = None
    preset: Optional[str] = None
    out_dir: str = "out"
    threads: int = 1
    only: Optional[list] = None
    gamma_sweep: Optional[list] = None
    freeze_clock: bool = False

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ParameterError(f"unknown experiment {self.experiment!r}")
        if self.metric not in ("euclidean", "torus"):
            raise ParameterError(f"unknown metric {self.metric!r}")
        pure_check = self.experiment in ("gradient-check", "oracle-check", "verify")
        if not pure_check and not self.gamma > 0:
            raise ParameterError("gamma must be positive")
        if self.experiment in ("dwdl", "wcpdl") and self.tau is not None and not self.unsafe_tau:
            if not self.tau > 1.0 / self.gamma:
                raise ParameterError(f"tau={self.tau} must exceed 1/gamma={1.0 / self.gamma:.6g}; pass --unsafe-tau")
        if self.r < 1 or self.max_iter < 0 or self.threads < 1:
            raise ParameterError("r and threads must be >= 1, max-iter >= 0")


def _grid(text):
    if isinstance(text, tuple):
        return text
    return tuple(int(s) for s in str(text).lower().replace(",", "x").split("x") if s)


def _floats(text):
    if isinstance(text, list):
        return text
    return [float(s) for s in str(text).split(",") if s]


def _words(text):
    if isinstance(text, list):
        return text
    return [s for s in str(text).split(",") if s]


def _bool(text):
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ("1", "true", "yes", "on")


_CONVERT = {
    "grid": _grid,
    "gamma": float,
    "r": int,
    "n_samples": int,
    "tau": float,
    "unsafe_tau": _bool,
    "seed": int,
    "max_iter": int,
    "tol0": float,
    "threads": int,
    "only": _words,
    "gamma_sweep": _floats,
    "freeze_clock": _bool,
}


def build_parser():
    p = argparse.ArgumentParser(prog="wassdl", description=__doc__.splitlines()[0])
    p.add_argument("--experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="key=value file; command-line flags override it")
    p.add_argument("--grid", help="grid shape such as 16x16")
    p.add_argument("--metric", choices=("euclidean", "torus"))
    p.add_argument("--gamma", type=float)
    p.add_argument("--r", type=int)
    p.add_argument("--n-samples", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--unsafe-tau", action="store_true", default=None)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tol0", type=float)
    p.add_argument("--in", dest="input", help="input tensor (.wtn binary or .csv)")
    p.add_argument("--preset", choices=sorted(data.PRESETS))
    p.add_argument("--out-dir")
    p.add_argument("--threads", type=int)
    p.add_argument("--only", help="comma-separated check groups or names")
    p.add_argument("--gamma-sweep", help="comma-separated gammas for the barycenter sweep table")
    p.add_argument("--freeze-clock", action="store_true", default=None,
                   help="write 0 in the seconds column so outputs are byte-identical")
    return p


def make_config(argv=None):
    args = build_parser().parse_args(argv)
    values = {}
    if args.config:
        for key, val in read_config(args.config).items():
            if key == "in":
                key = "input"
            if key not in {f.name for f in fields(ExperimentConfig)}:
                raise ParameterError(f"unknown config key {key!r}")
            values[key] = val
    for key, val in vars(args).items():
        if key != "config" and val is not None:
            values[key] = val
    conv = {}
    for key, val in values.items():
        try:
            conv[key] = _CONVERT[key](val) if key in _CONVERT and val is not None else val
        except ValueError as err:
            raise ParameterError(f"bad value for {key}: {val!r}") from err
    cfg = ExperimentConfig(**conv)
    cfg.validate()
    return cfg


# --- data -----------------------------------------------------------------


def load_input(path):
    if path.endswith(".csv"):
        X = load_csv(path)
        return X[:, None] if X.ndim == 1 else X
    return load_tensor(path)


def _dataset(cfg, default_preset):
    """Input tensor (grid + sample mode) from ``--in`` or a preset."""
    if cfg.input:
        return load_input(cfg.input)
    preset = cfg.preset or default_preset
    if preset == "gaussian":
        return data.gaussians(**({"n_bins": cfg.grid[0]} if cfg.grid else {}))
    if preset == "u-shape":
        return data.u_shapes(**({"n_bins": cfg.grid[0]} if cfg.grid else {}))
    if preset == "patterns":
        return data.translated_patterns(grid=cfg.grid or (16, 16), N=cfg.n_samples or 40, seed=cfg.seed)
    if preset == "digits":
        return data.digits(N=cfg.n_samples or 30, seed=cfg.seed)[0]
    if preset == "planted":
        X, _ = data.planted_cp(cfg.grid or (8, 8), cfg.r, cfg.n_samples or 20, seed=cfg.seed)
        return X
    raise ParameterError(f"unknown preset {preset!r}")


def _image(v, grid):
    v = np.asarray(v).reshape(grid)
    return v[None, :] if v.ndim == 1 else v.reshape(grid[0], -1)


def _history(path, history, cfg):
    f0 = history[0].f
    rel = [row.f / f0 if f0 != 0 else np.nan for row in history]
    bcdpr.write_history(path, history, freeze_clock=cfg.freeze_clock, extra={"rel_error": rel})


# --- commands -------------------------------------------------------------


def local_maxima(v, frac=0.1):
    """Strict local maxima (plateaus count once) above ``frac`` of the peak."""
    v = np.asarray(v, dtype=np.float64)
    thr = frac * v.max()
    count = 0
    i = 0
    n = v.size
    while i < n:
        j = i
        while j + 1 < n and v[j + 1] == v[i]:
            j += 1
        left = v[i - 1] if i > 0 else -np.inf
        right = v[j + 1] if j + 1 < n else -np.inf
        if v[i] > left and v[i] > right and v[i] > thr:
            count += 1
        i = j + 1
    return count


def entropy(p):
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def _bary_args(cfg):
    args = {"max_iter": cfg.max_iter}
    if cfg.tau is not None:
        args["tau"] = cfg.tau
    if cfg.tol0 is not None:
        args["tol0"] = cfg.tol0
    return args


def cmd_barycenter(cfg):
    X = _dataset(cfg, "gaussian")
    grid = X.shape[:-1]
    out = cfg.out_dir
    cost = build_ground_cost(grid, cfg.metric, cfg.gamma)
    res = barycenter(X, cost, **_bary_args(cfg))
    frob = X.reshape(-1, X.shape[-1]).mean(axis=1).reshape(grid)
    save_csv(os.path.join(out, "barycenter.csv"), res.atom.reshape(-1))
    save_csv(os.path.join(out, "frobenius.csv"), frob.reshape(-1))
    write_pgm(os.path.join(out, "barycenter.pgm"), _image(res.atom, grid))
    write_pgm(os.path.join(out, "frobenius.pgm"), _image(frob, grid))
    _history(os.path.join(out, "history.csv"), res.history, cfg)
    if cfg.gamma_sweep:
        with open(os.path.join(out, "gamma_sweep.csv"), "w") as fh:
            fh.write("gamma,entropy,local_maxima\n")
            for g in cfg.gamma_sweep:
                b = barycenter(X, build_ground_cost(grid, cfg.metric, g), **_bary_args(cfg)).atom
                save_csv(os.path.join(out, f"barycenter_gamma{g:g}.csv"), b.reshape(-1))
                fh.write(f"{g!r},{entropy(b)!r},{local_maxima(b.reshape(-1))}\n")
    return EXIT_OK


def _learning_problem(cfg, default_preset):
    X = _dataset(cfg, default_preset)
    grid = X.shape[:-1]
    cost = build_ground_cost(grid, cfg.metric, cfg.gamma)
    return DwdlProblem(X=X, r=cfg.r, cost=cost, tau=cfg.tau, tol0=1e-4 if cfg.tol0 is None else cfg.tol0,
                       unsafe_tau=cfg.unsafe_tau)


def _write_atoms(out, atoms, grid):
    r = atoms.shape[-1]
    save_csv(os.path.join(out, "atoms.csv"), atoms.reshape(-1, r))
    if len(grid) == 2:
        for j in range(r):
            write_pgm(os.path.join(out, f"atom_{j:02d}.pgm"), atoms[..., j])


def cmd_dwdl(cfg):
    p = _learning_problem(cfg, "patterns")
    res = dwdl_run(p, max_iter=cfg.max_iter, seed=cfg.seed)
    _write_atoms(cfg.out_dir, res.D, p.grid_shape)
    save_csv(os.path.join(cfg.out_dir, "lambda.csv"), res.Lambda)
    _history(os.path.join(cfg.out_dir, "history.csv"), res.history, cfg)
    return EXIT_OK


def cmd_wcpdl(cfg):
    p = _learning_problem(cfg, "planted")
    res = wcpdl_run(p, max_iter=cfg.max_iter, seed=cfg.seed)
    _write_atoms(cfg.out_dir, res.model.atoms(), p.grid_shape)
    save_csv(os.path.join(cfg.out_dir, "lambda.csv"), res.model.Lambda)
    for k, U in enumerate(res.model.U_list, start=1):
        save_csv(os.path.join(cfg.out_dir, f"factor_{k}.csv"), U)
    _history(os.path.join(cfg.out_dir, "history.csv"), res.history, cfg)
    return EXIT_OK


def cmd_verify(cfg, only=None):
    vcfg = verify.VerifyConfig(seed=cfg.seed, gamma=cfg.gamma, tau=cfg.tau)
    results = verify.run_checks(vcfg, only=only if only is not None else cfg.only)
    report = verify.format_report(results)
    with open(os.path.join(cfg.out_dir, "verify_report.txt"), "w") as fh:
        fh.write(report)
    sys.stdout.write(report)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


COMMANDS = {
    "barycenter": cmd_barycenter,
    "dwdl": cmd_dwdl,
    "wcpdl": cmd_wcpdl,
    "gradient-check": lambda cfg: cmd_verify(cfg, only=["gradient"]),
    "oracle-check": lambda cfg: cmd_verify(cfg, only=["oracle"]),
    "verify": cmd_verify,
}


def _exit_code(err):
    while isinstance(err, StepError) and err.__cause__ is not None:
        err = err.__cause__
    if isinstance(err, ConvergenceError):
        return EXIT_NONCONVERGED
    if isinstance(err, (ParameterError, DimensionError, PreconditionError, CapacityError)):
        return EXIT_CONFIG
    return EXIT_NONCONVERGED


def main(argv=None):
    try:
        cfg = make_config(argv)
    except (ParameterError, DimensionError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
        with threadpool_limits(cfg.threads):
            return COMMANDS[cfg.experiment](cfg)
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except (ParameterError, DimensionError, PreconditionError, CapacityError, ConvergenceError, StepError) as err:
        print(f"error: {err}", file=sys.stderr)
        return _exit_code(err)


if __name__ == "__main__":
    sys.exit(main())
