"""Wheeled-leg control: differential drive, manipulation IK, tool playback.

Leg chains are Roll-Pitch-Pitch. Body frame: x forward, y left, z up;
hips sit at (0, +/-hip_offset, 0). The in-plane leg direction for pitch
angle t is dir(t) = (sin t, 0, -cos t): zero pitch points straight down,
positive pitch swings the link forward. In the pitched-over suspension
posture the roll joint acts as an arm yaw and is solved per target.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Unreachable

LEFT, RIGHT = 0, 1
SIDE_SIGN = (1.0, -1.0)  # +y is the left side
SIDE_NAME = ("left", "right")


@dataclass
class LegParams:
    """Geometry of one wheeled-leg pair; lengths in meters.

    Thigh and calf default to 0.23 m. Wheel radius, hip offset and the
    knee support-wheel radius are config values with no upstream source.
    """

    l_thigh: float = 0.23
    l_calf: float = 0.23
    wheel_radius: float = 0.05
    hip_offset: float = 0.115
    knee_wheel_radius: float = 0.03
    hip_roll_limits: tuple = (-np.pi, np.pi)
    hip_pitch_limits: tuple = (-2.9, 2.9)
    knee_pitch_limits: tuple = (-0.05, np.pi)

    def __post_init__(self):
        for name in ("l_thigh", "l_calf", "wheel_radius", "hip_offset",
                     "knee_wheel_radius"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def reach_min(self) -> float:
        return abs(self.l_thigh - self.l_calf)

    @property
    def reach_max(self) -> float:
        return self.l_thigh + self.l_calf

    def joints_within_limits(self, joints) -> bool:
        joints = np.asarray(joints, dtype=float).reshape(-1, 3)
        lims = (self.hip_roll_limits, self.hip_pitch_limits,
                self.knee_pitch_limits)
        for row in joints:
            for val, (lo, hi) in zip(row, lims):
                if not (lo - 1e-12 <= val <= hi + 1e-12):
                    return False
        return True


@dataclass
class LegJointState:
    """Joint angles (rad) and wheel speeds (rad/s) for both legs.

    joints is a (2, 3) array [[hip_roll, hip_pitch, knee_pitch] x 2],
    row 0 left, row 1 right; wheel_speeds is length 2.
    """

    joints: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))
    wheel_speeds: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=float).reshape(2, 3).copy()
        self.wheel_speeds = np.asarray(
            self.wheel_speeds, dtype=float
        ).reshape(2).copy()

    def copy(self) -> "LegJointState":
        return LegJointState(self.joints.copy(), self.wheel_speeds.copy())


def _pitch_dir(theta: float) -> np.ndarray:
    return np.array([math.sin(theta), 0.0, -math.cos(theta)])


def _roll_matrix(gamma: float) -> np.ndarray:
    c, s = math.cos(gamma), math.sin(gamma)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def leg_chain_points(joints_one_leg, side: int, params: LegParams):
    """Body-frame (hip, knee, wheel-center) positions for one leg."""
    roll, hip_pitch, knee_pitch = [float(v) for v in joints_one_leg]
    hip = np.array([0.0, SIDE_SIGN[side] * params.hip_offset, 0.0])
    R = _roll_matrix(roll)
    knee = hip + R @ (params.l_thigh * _pitch_dir(hip_pitch))
    wheel = knee + R @ (params.l_calf * _pitch_dir(hip_pitch + knee_pitch))
    return hip, knee, wheel


def track_width(legs: LegJointState, params: LegParams):
    """Planar distances (h_L, h_R) from the body center to each wheel."""
    h = []
    for side in (LEFT, RIGHT):
        _, _, wheel = leg_chain_points(legs.joints[side], side, params)
        h.append(abs(float(wheel[1])))
    return h[0], h[1]


def drive_wheel_speeds(vx_ref: float, yaw_rate_ref: float, params: LegParams,
                       legs: LegJointState):
    """Differential-drive wheel speed targets (omega_L, omega_R), rad/s.

    omega_L = (vx - yaw*h_L)/R, omega_R = (vx + yaw*h_R)/R with the track
    half-widths taken from the current posture.
    """
    h_l, h_r = track_width(legs, params)
    r = params.wheel_radius
    return (
        (vx_ref - yaw_rate_ref * h_l) / r,
        (vx_ref + yaw_rate_ref * h_r) / r,
    )


# ---------------------------------------------------------------------------
# manipulation
# ---------------------------------------------------------------------------

def two_link_ik(p_arm, l1: float, l2: float, leg: str | None = None):
    """Analytic planar 2-link IK, elbow-down branch.

    knee = arccos((|p|^2 - l1^2 - l2^2) / (2 l1 l2)) in [0, pi];
    hip = atan2(py, px) - atan2(l2 sin knee, l1 + l2 cos knee).
    Raises Unreachable when |p| is outside the open annulus.
    """
    p = np.asarray(p_arm, dtype=float).reshape(2)
    d = float(np.linalg.norm(p))
    # full extension (d == l1+l2) is a valid zero-knee pose; the inner
    # bound gets a 1e-9 floor because equal links make d=0 singular
    if not (abs(l1 - l2) + 1e-9 < d <= l1 + l2):
        raise Unreachable(
            f"target distance {d:.6f} outside ({abs(l1 - l2):.3f}, {l1 + l2:.3f}]",
            leg=leg,
        )
    cos_knee = (d * d - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    knee = math.acos(max(-1.0, min(1.0, cos_knee)))
    hip = math.atan2(p[1], p[0]) - math.atan2(
        l2 * math.sin(knee), l1 + l2 * math.cos(knee)
    )
    return hip, knee


def planar_fk(theta_hip: float, theta_knee: float, l1: float, l2: float):
    return np.array(
        [
            l1 * math.cos(theta_hip) + l2 * math.cos(theta_hip + theta_knee),
            l1 * math.sin(theta_hip) + l2 * math.sin(theta_hip + theta_knee),
        ]
    )


@dataclass
class ManipTarget:
    """Grasp setpoint: rim midpoint (body frame, m), width, wheel spin.

    p_target is the point midway between the two wheel rims; d the rim
    separation; wheel_spin the grasp spin speed (positive = inward).
    """

    p_target: np.ndarray
    width: float = 0.1
    wheel_spin: float = 2.0

    def __post_init__(self):
        self.p_target = np.asarray(self.p_target, dtype=float).reshape(3)
        if self.width < 0:
            raise ValueError("width must be non-negative")


@dataclass
class LegIkSolution:
    hip_roll: float
    hip_pitch: float
    knee_pitch: float

    def as_array(self) -> np.ndarray:
        return np.array([self.hip_roll, self.hip_pitch, self.knee_pitch])


def _arm_plane_target(target: ManipTarget, params: LegParams, side: int):
    """Roll angle and planar wheel-center target for one leg.

    The rim target is p_target +/- (d/2) y; the roll joint is solved so
    that point lies in the leg's sagittal plane, then the planar target
    is shrunk radially by the wheel radius so the rim, not the center,
    lands on it.
    """
    sign = SIDE_SIGN[side]
    hip = np.array([0.0, sign * params.hip_offset, 0.0])
    rim = target.p_target + np.array([0.0, sign * target.width / 2.0, 0.0])
    rel = rim - hip
    rho = math.hypot(rel[1], rel[2])
    gamma = math.atan2(rel[1], -rel[2]) if rho > 1e-12 else 0.0
    planar = np.array([rho, rel[0]])
    dist = float(np.linalg.norm(planar))
    if dist <= params.wheel_radius:
        raise Unreachable(
            f"rim target {dist:.4f} m from hip, inside the wheel radius",
            leg=SIDE_NAME[side],
        )
    p_arm = planar * (1.0 - params.wheel_radius / dist)
    return gamma, p_arm


def manip_ik(target: ManipTarget, params: LegParams):
    """Per-leg joint targets (hip_roll, hip_pitch, knee_pitch) for a grasp.

    Raises Unreachable naming the failing leg when the shrunk planar
    target leaves the reachable annulus.
    """
    solutions = []
    for side in (LEFT, RIGHT):
        gamma, p_arm = _arm_plane_target(target, params, side)
        hip, knee = two_link_ik(p_arm, params.l_thigh, params.l_calf,
                                leg=SIDE_NAME[side])
        solutions.append(LegIkSolution(gamma, hip, knee))
    return solutions[LEFT], solutions[RIGHT]


# ---------------------------------------------------------------------------
# tool utilization
# ---------------------------------------------------------------------------

class ToolPhase(str, enum.Enum):
    OPEN = "open"
    CLOSED = "closed"


@dataclass
class ToolPosePair:
    """Recorded whole-leg joint poses for a tool's open/closed states."""

    open_pose: np.ndarray
    closed_pose: np.ndarray
    transition_time: float = 1.0

    def __post_init__(self):
        self.open_pose = np.asarray(self.open_pose, dtype=float).reshape(2, 3)
        self.closed_pose = np.asarray(self.closed_pose, dtype=float).reshape(2, 3)
        if self.transition_time <= 0:
            raise ValueError("transition_time must be positive")

    def pose_for(self, phase: ToolPhase) -> np.ndarray:
        return self.open_pose if phase is ToolPhase.OPEN else self.closed_pose


def tool_phase_targets(pair: ToolPosePair, phase: ToolPhase,
                       t: float) -> np.ndarray:
    """Joint targets t seconds into a phase switch.

    Linear interpolation from the opposite recorded pose to the phase's
    pose over transition_time, clamped at the endpoints.
    """
    end = pair.pose_for(phase)
    start = pair.pose_for(
        ToolPhase.CLOSED if phase is ToolPhase.OPEN else ToolPhase.OPEN
    )
    frac = min(max(float(t) / pair.transition_time, 0.0), 1.0)
    return start + (end - start) * frac
