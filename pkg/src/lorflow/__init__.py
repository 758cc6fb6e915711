"""Space-like graphs solving H2 = f in conformally split Lorentzian spacetimes.

The solver evolves a space-like graph over a flat torus by an elliptically
regularized curvature flow and drives the regularization to zero.
"""

__version__ = "0.1.0"

from .ambient import ConvexCandidate, SpacetimeSpec, check_convex, slice_curvature
from .continuation import BarrierPair, ContinuationSchedule, solve, validate_barriers
from .errors import (BarrierInvalid, ConfigError, EvalError, LorflowError, NotAdmissible,
                     NotSpacelike, OutOfDomain, ParseError, RangeError, SchemaError, StepCollapse)
from .expr import Expression, parse_expression
from .flow import CutoffSpec, FlowConfig, PrescribedF, run_flow
from .graphgeo import GraphState, TorusGrid, build_cache
from .scenario import load_scenario

__all__ = [
    "BarrierInvalid", "BarrierPair", "ConfigError", "ContinuationSchedule", "ConvexCandidate",
    "CutoffSpec", "EvalError", "Expression", "FlowConfig", "GraphState", "LorflowError",
    "NotAdmissible", "NotSpacelike", "OutOfDomain", "ParseError", "PrescribedF", "RangeError",
    "SchemaError", "SpacetimeSpec", "StepCollapse", "TorusGrid", "build_cache", "check_convex",
    "load_scenario", "parse_expression", "run_flow", "slice_curvature", "solve",
    "validate_barriers",
]
