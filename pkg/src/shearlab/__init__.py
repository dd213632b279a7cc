"""Numerical laboratory for enhanced dissipation and Taylor dispersion of a
passive scalar advected by time-dependent shear flows."""

__version__ = "0.1.0"

from .errors import (ConfigurationError, ConstantsTooLargeError, DataError,  # noqa: E402
                     DegenerateFlowError, InsufficientDecayError, NumericalError,
                     ShearLabError, StructuralError, TruncationError)
from .grid import (DomainKind, Grid, build_grid, derivative, h1_seminorm,  # noqa: E402
                   inner_product, l2_norm)
from .shear import ShearFlow, builtin_flow, critical_points  # noqa: E402
from .solver import ModeState, SimConfig, TrajectoryRecord, simulate, step  # noqa: E402

__all__ = [
    "ConfigurationError", "ConstantsTooLargeError", "DataError", "DegenerateFlowError",
    "InsufficientDecayError", "NumericalError", "ShearLabError", "StructuralError",
    "TruncationError", "DomainKind", "Grid", "build_grid", "derivative", "h1_seminorm",
    "inner_product", "l2_norm", "ShearFlow", "builtin_flow", "critical_points", "ModeState",
    "SimConfig", "TrajectoryRecord", "simulate", "step",
]
