"""Exception types shared across the package."""


class WirebotError(Exception):
    """Base class for all package errors."""


class DegenerateWire(WirebotError):
    """Wire origin and anchor coincide (length below 1e-6 m)."""


class SolverNotConverged(WirebotError):
    """Tension QP hit its iteration cap.

    Raised only by strict callers; the default path returns the last
    iterate with ``converged=False`` instead.
    """

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class StaleJacobian(WirebotError):
    """QP solution was computed for a different body pose."""


class NegativeFriction(WirebotError):
    """Winch identification produced a negative friction coefficient."""


class Unreachable(WirebotError):
    """Manipulation target outside the leg's reachable annulus."""

    def __init__(self, message, leg=None):
        super().__init__(message)
        self.leg = leg


class GuardFailed(WirebotError):
    """Mode transition rejected by a guard."""

    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


class AlreadyAttached(WirebotError):
    """attach_wire called on a wire that is already anchored."""


class NumericalDivergence(WirebotError):
    """Simulation state left the trusted envelope (bad gains or dt)."""


class ConfigError(WirebotError):
    """Scenario or config file violates the published schema."""


class ScenarioAssertionFailed(WirebotError):
    """A named scenario assertion did not hold on the run log."""

    def __init__(self, name, message):
        super().__init__(f"{name}: {message}")
        self.name = name


class MissingColumn(WirebotError):
    """Run log lacks a column required by a plot series."""


class BindError(WirebotError):
    """Teleop service could not bind its port."""
