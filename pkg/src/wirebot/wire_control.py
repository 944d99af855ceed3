"""Wire-drive control modes and the tension -> current map.

Three modes: free (zero current), wire velocity control (equal-share
gravity compensation plus a P term on wire rate error), and CoG velocity
control (QP gravity term plus a P term driving wire rates toward the
rates implied by the target body twist). Computed tensions are converted
to motor currents with Coulomb and load-proportional friction
compensation; the friction parameters come from a static identification
procedure on rise/descend threshold currents.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import NegativeFriction, StaleJacobian
from .geometry import BodyState, WireJacobian
from .tension import TensionLimits, TensionSolution

DEFAULT_KP = 200.0  # N per (m/s); no gain values exist upstream, tuned in-sim


class WireMode(str, enum.Enum):
    FREE = "free"
    WIRE_VELOCITY = "wire_velocity"
    COG_VELOCITY = "cog_velocity"


@dataclass
class WinchModel:
    """Winch drive parameters for the anchoring wires.

    radius in meters; torque_constants (N*m/A), coulomb_current (A) and
    load_friction_coeff (A) are per-wire vectors.
    """

    radius: float
    torque_constants: np.ndarray
    coulomb_current: np.ndarray
    load_friction_coeff: np.ndarray

    def __post_init__(self):
        self.torque_constants = np.atleast_1d(
            np.asarray(self.torque_constants, dtype=float)
        )
        self.coulomb_current = np.atleast_1d(
            np.asarray(self.coulomb_current, dtype=float)
        )
        self.load_friction_coeff = np.atleast_1d(
            np.asarray(self.load_friction_coeff, dtype=float)
        )
        if self.radius <= 0:
            raise ValueError("winch radius must be positive")
        if np.any(self.torque_constants <= 0):
            raise ValueError("torque constants must be positive")
        if np.any(self.coulomb_current < 0) or np.any(self.load_friction_coeff < 0):
            raise ValueError("friction currents must be non-negative")

    @property
    def wire_count(self) -> int:
        return int(self.torque_constants.shape[0])

    def subset(self, idx) -> "WinchModel":
        idx = list(idx)
        return WinchModel(
            self.radius,
            self.torque_constants[idx],
            self.coulomb_current[idx],
            self.load_friction_coeff[idx],
        )

    @classmethod
    def uniform(cls, m: int, radius: float = 0.0075, kt: float = 0.18,
                i0: float = 0.2, i_load: float = 0.3) -> "WinchModel":
        # 15 mm winch diameter; Kt/i0/iL are config defaults, identified
        # per robot in practice
        return cls(radius, np.full(m, kt), np.full(m, i0), np.full(m, i_load))


@dataclass
class ControllerGains:
    kp_wire: float = DEFAULT_KP
    kp_cog: float = DEFAULT_KP

    def __post_init__(self):
        if self.kp_wire <= 0 or self.kp_cog <= 0:
            raise ValueError("gains must be positive")


@dataclass
class WireCommand:
    """Mode-tagged wire-drive setpoint.

    wire_rate_ref is an m-vector (m/s) for WIRE_VELOCITY; twist_ref is a
    6-vector for COG_VELOCITY; FREE takes no target.
    """

    mode: WireMode = WireMode.FREE
    wire_rate_ref: np.ndarray | None = None
    twist_ref: np.ndarray | None = None

    def __post_init__(self):
        if self.wire_rate_ref is not None:
            self.wire_rate_ref = np.atleast_1d(
                np.asarray(self.wire_rate_ref, dtype=float)
            )
        if self.twist_ref is not None:
            self.twist_ref = np.asarray(self.twist_ref, dtype=float).reshape(6)
        if self.mode is WireMode.WIRE_VELOCITY and self.wire_rate_ref is None:
            raise ValueError("wire velocity mode needs wire_rate_ref")
        if self.mode is WireMode.COG_VELOCITY and self.twist_ref is None:
            raise ValueError("CoG velocity mode needs twist_ref")


def free_mode(m: int) -> np.ndarray:
    """Free mode: every winding motor is commanded 0 A."""
    return np.zeros(int(m))


def wire_velocity_tensions(
    rates,
    rates_ref,
    mass: float,
    g_norm: float,
    gains: ControllerGains,
    limits: TensionLimits,
) -> np.ndarray:
    """Equal-share gravity compensation with P control on wire rates.

    f_i = M|g|/m + Kp (ldot_i - ldot_i_ref), clamped to the tension box.
    Useful only when the wires are nearly vertical; no posture input.
    """
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    rates_ref = np.atleast_1d(np.asarray(rates_ref, dtype=float))
    if rates.shape != rates_ref.shape:
        raise ValueError("rate vectors must have equal length")
    m = rates.shape[0]
    if m < 1:
        raise ValueError("need at least one wire")
    share = mass * g_norm / m
    f = share + gains.kp_wire * (rates - rates_ref)
    return limits.clamp(f)


def cog_velocity_tensions(
    body: BodyState,
    jac: WireJacobian,
    rates,
    twist_ref,
    qp: TensionSolution,
    gains: ControllerGains,
    limits: TensionLimits,
) -> np.ndarray:
    """Gravity QP term plus P tracking of the target CoG twist.

    f = f_g + Kp (ldot + W^T qdot_ref), clamped to the tension box.
    Raises StaleJacobian when the QP was solved at a different pose.
    """
    if not jac.matches_pose(body):
        raise StaleJacobian("jacobian built for a different body pose")
    if qp.body_position is None or (
        float(np.linalg.norm(qp.body_position - body.position)) > 1e-6
    ):
        raise StaleJacobian("gravity QP solved for a different body position")
    if qp.body_orientation is not None:
        from .geometry import quat_angle_between

        if quat_angle_between(qp.body_orientation, body.orientation) > 1e-6:
            raise StaleJacobian("gravity QP solved for a different orientation")
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    twist_ref = np.asarray(twist_ref, dtype=float).reshape(6)
    f = qp.tensions + gains.kp_cog * (rates + jac.matrix.T @ twist_ref)
    return limits.clamp(f)


def tension_to_current(f_ref, winch: WinchModel, mass: float,
                       g_norm: float) -> np.ndarray:
    """Friction-compensated current command.

    i = r Kt^-1 f + i0 + iL ||f|| / (M |g|); the load term uses the norm
    of the whole tension vector, normalized by the robot weight.
    """
    f = np.atleast_1d(np.asarray(f_ref, dtype=float))
    if np.any(f < 0):
        raise ValueError("tension commands must be non-negative")
    load = float(np.linalg.norm(f)) / (mass * g_norm)
    return (
        winch.radius * f / winch.torque_constants
        + winch.coulomb_current
        + winch.load_friction_coeff * load
    )


def identify_winch(i_up, i_down, i0, mass: float, g_norm: float,
                   radius: float) -> WinchModel:
    """Recover (Kt, i0, iL) from static threshold currents.

    Friction is symmetric about the gravity-balance current, so
    i_mg = (i_up + i_down)/2, iL = (i_up - i_down)/2 - i0 and
    Kt = r M |g| / i_mg per wire. i_up is the rise threshold and i_down
    the descend threshold, each measured suspended on a single wire; i0
    is the no-load winding threshold.
    """
    i_up = np.atleast_1d(np.asarray(i_up, dtype=float))
    i_down = np.atleast_1d(np.asarray(i_down, dtype=float))
    i0 = np.atleast_1d(np.asarray(i0, dtype=float))
    if not (i_up.shape == i_down.shape == i0.shape):
        raise ValueError("measurement vectors must have equal length")
    i_mg = 0.5 * (i_up + i_down)
    i_load = 0.5 * (i_up - i_down) - i0
    # rounding in the half-spread may leave a few ulps of negative residue
    rounding = 1e-12 * np.maximum(1.0, np.abs(i_up))
    if np.any(i_load < -rounding):
        raise NegativeFriction(
            "rise/descend spread smaller than twice the no-load current"
        )
    i_load = np.maximum(i_load, 0.0)
    if np.any(i_mg <= 0):
        raise ValueError("gravity-balance current must be positive")
    kt = radius * mass * g_norm / i_mg
    return WinchModel(radius, kt, i0.copy(), i_load)


def synthesize_identification_currents(winch: WinchModel, mass: float,
                                       g_norm: float):
    """(i_up, i_down) this winch model predicts for the suspended test."""
    i_mg = winch.radius * mass * g_norm / winch.torque_constants
    spread = winch.coulomb_current + winch.load_friction_coeff
    return i_mg + spread, i_mg - spread
