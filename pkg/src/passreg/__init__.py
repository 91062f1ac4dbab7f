"""Passive robust output regulation for discretized impedance-passive plants.

The package builds internal-model controllers for passive state-space plants,
couples them through the power-preserving interconnection, simulates tracking
and disturbance rejection, and checks the frequency-domain stability
conditions numerically.
"""

from passreg.numerics import (
    NoConvergence,
    NumericsError,
    RankZero,
    SingularMatrix,
    min_singular_value,
    pseudoinverse_norm,
    solve_linear,
    spectrum,
)
from passreg.lti import StateSpaceSystem, check_passive, output_feedback, transfer
from passreg.controllers import (
    ControllerRealization,
    SignalSpec,
    build_diagonal,
    build_fin_dim,
    build_fin_dim_real,
    build_transport,
)
from passreg.closed_loop import ClosedLoopSystem, assemble, check_contraction
from passreg.regulation import simulate, sliding_error_integral

__all__ = [
    "ClosedLoopSystem",
    "ControllerRealization",
    "NoConvergence",
    "NumericsError",
    "RankZero",
    "SignalSpec",
    "SingularMatrix",
    "StateSpaceSystem",
    "assemble",
    "build_diagonal",
    "build_fin_dim",
    "build_fin_dim_real",
    "build_transport",
    "check_contraction",
    "check_passive",
    "min_singular_value",
    "output_feedback",
    "pseudoinverse_norm",
    "simulate",
    "sliding_error_integral",
    "solve_linear",
    "spectrum",
    "transfer",
]

__version__ = "0.1.0"
