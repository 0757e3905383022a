"""Wasserstein dictionary learning with dual proximal block updates."""

from .errors import (
    CapacityError,
    ConvergenceError,
    DimensionError,
    NumericError,
    ParameterError,
    PreconditionError,
    StepError,
    WassdlError,
)
from .ot import GroundCost, build_ground_cost, entropic_wasserstein, fW_objective, sinkhorn
from .dwdl import DwdlProblem, dwdl_run
from .wcpdl import CpModel, barycenter, planted_cp, wcpdl_run

__version__ = "0.1.0"
