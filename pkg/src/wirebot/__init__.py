"""Simulator and controllers for a wire-suspended wheeled-legged robot."""

from .errors import (
    AlreadyAttached,
    BindError,
    ConfigError,
    DegenerateWire,
    GuardFailed,
    MissingColumn,
    NegativeFriction,
    NumericalDivergence,
    ScenarioAssertionFailed,
    SolverNotConverged,
    StaleJacobian,
    Unreachable,
    WirebotError,
)
from .geometry import (
    BodyState,
    WireGeometry,
    WireJacobian,
    build_jacobian,
    wire_lengths,
    wire_rates,
    wire_vectors,
)
from .tension import (
    TensionLimits,
    TensionSolution,
    gravity_wrench,
    kkt_satisfied,
    solve_tension_qp,
    wrench_feasible,
)

__version__ = "0.1.0"
