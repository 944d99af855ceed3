"""Supervisory mode management.

The system mode is the product of the wire-drive mode and the leg mode.
Transition guards enforce the suspension prerequisites observed in the
task sequences: CoG velocity control needs at least two anchored wires
and a feasible gravity QP; manipulation and tool use need the wheels off
the ground and run only under CoG velocity suspension. Posture changes
between leg modes are expressed as finite scripts of timed setpoints.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GuardFailed
from .geometry import BodyState, build_jacobian
from .leg_control import ToolPhase, ToolPosePair
from .tension import TensionLimits, gravity_wrench, wrench_feasible
from .wire_control import WireMode

GROUND_CONTACT_THRESHOLD = 0.5  # N, any wheel above this counts as grounded


class LegMode(str, enum.Enum):
    WHEEL_DRIVING = "wheel_driving"
    MANIPULATION = "manipulation"
    TOOL_UTILIZATION = "tool_utilization"


# legs act as arms only while suspended; CoG velocity + wheel driving is
# allowed but experimental (the cliff climb pairs wire velocity + wheels)
_SUSPENDED_LEG_MODES = (LegMode.MANIPULATION, LegMode.TOOL_UTILIZATION)


@dataclass(frozen=True)
class SystemMode:
    wire_mode: WireMode = WireMode.FREE
    leg_mode: LegMode = LegMode.WHEEL_DRIVING

    def is_valid(self) -> bool:
        if self.leg_mode in _SUSPENDED_LEG_MODES:
            return self.wire_mode is WireMode.COG_VELOCITY
        return True

    def label(self) -> str:
        return f"{self.wire_mode.value}+{self.leg_mode.value}"


@dataclass
class TransitionRequest:
    requested: SystemMode
    source: str = "operator"  # or "scenario"


def request_transition(
    current: SystemMode,
    request: TransitionRequest,
    *,
    body: BodyState,
    wires,
    limits: TensionLimits | None,
    mass: float,
    gravity,
    wheel_contact_forces,
    feasibility_tol: float | None = None,
) -> SystemMode:
    """Validate a mode change; returns the accepted mode.

    wires is the list of attached WireGeometry. Raises GuardFailed with
    the failing guard's reason; the caller's mode is untouched either
    way (pure decision).
    """
    target = request.requested
    if target == current:
        return current  # identity transitions are free no-ops

    if not target.is_valid():
        raise GuardFailed(
            f"{target.leg_mode.value} requires CoG velocity suspension"
        )

    wires = list(wires)
    if target.wire_mode is not current.wire_mode:
        if target.wire_mode is WireMode.WIRE_VELOCITY and len(wires) < 1:
            raise GuardFailed("wire velocity control needs an attached wire")
        if target.wire_mode is WireMode.COG_VELOCITY:
            if len(wires) < 2:
                raise GuardFailed(
                    f"CoG velocity control needs >= 2 wires, have {len(wires)}"
                )
            jac = build_jacobian(body, wires)
            box = limits if limits is not None else TensionLimits.uniform(len(wires))
            g = np.asarray(gravity, dtype=float).reshape(3)
            tol = (
                feasibility_tol
                if feasibility_tol is not None
                else 0.02 * mass * float(np.linalg.norm(g))
            )
            ok, residual = wrench_feasible(jac, gravity_wrench(mass, g), box, tol)
            if not ok:
                raise GuardFailed(
                    f"gravity wrench infeasible at this pose (residual {residual:.2f} N)"
                )

    if (
        target.leg_mode in _SUSPENDED_LEG_MODES
        and current.leg_mode not in _SUSPENDED_LEG_MODES
    ):
        forces = np.asarray(wheel_contact_forces, dtype=float).reshape(-1)
        if np.any(forces > GROUND_CONTACT_THRESHOLD):
            raise GuardFailed(
                "wheels still grounded; suspension required before manipulation"
            )

    return target


# ---------------------------------------------------------------------------
# posture scripts
# ---------------------------------------------------------------------------

@dataclass
class PostureStep:
    """One timed setpoint segment of a posture script."""

    duration: float
    label: str
    joints: np.ndarray | None = None  # (2,3) targets, None = hold
    body_pitch: float | None = None  # commanded reorientation, rad
    wheel_speeds: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        if self.joints is not None:
            self.joints = np.asarray(self.joints, dtype=float).reshape(2, 3)
        self.wheel_speeds = np.asarray(self.wheel_speeds, dtype=float).reshape(2)
        if self.duration < 0:
            raise ValueError("duration must be non-negative")


@dataclass
class PostureConfig:
    """Canonical joint poses; config values, mirrored left/right."""

    vehicle_joints: np.ndarray = field(
        default_factory=lambda: np.array(
            [[0.0, -0.6, 2.2579], [0.0, -0.6, 2.2579]]
        )
    )
    tucked_joints: np.ndarray = field(
        default_factory=lambda: np.array([[0.0, -1.2, 2.4], [0.0, -1.2, 2.4]])
    )
    arm_ready_joints: np.ndarray = field(
        default_factory=lambda: np.array(
            [[-1.5708, -2.4, 2.2], [1.5708, -2.4, 2.2]]
        )
    )
    tool_pair: ToolPosePair = field(
        default_factory=lambda: ToolPosePair(
            open_pose=[[-1.2708, -2.2, 2.0], [1.2708, -2.2, 2.0]],
            closed_pose=[[-1.5708, -2.2, 2.0], [1.5708, -2.2, 2.0]],
            transition_time=0.8,
        )
    )
    reorient_duration: float = 2.0
    settle_duration: float = 1.5


DEFAULT_POSTURES = PostureConfig()


def posture_sequence(
    frm: SystemMode,
    to: SystemMode,
    postures: PostureConfig = DEFAULT_POSTURES,
) -> list:
    """Timed setpoint script realizing an accepted transition.

    Empty for identity and wire-only changes; otherwise ends at the
    target leg mode's canonical posture.
    """
    if frm.leg_mode == to.leg_mode:
        return []

    steps = []
    if to.leg_mode is LegMode.MANIPULATION:
        if frm.leg_mode is LegMode.WHEEL_DRIVING:
            # suspension flips the body nose-up; legs tuck for the swing
            steps.append(
                PostureStep(
                    postures.reorient_duration,
                    "pitch_reorientation",
                    joints=postures.tucked_joints,
                    body_pitch=-math.pi / 2,
                )
            )
        steps.append(
            PostureStep(postures.settle_duration, "arm_ready",
                        joints=postures.arm_ready_joints)
        )
    elif to.leg_mode is LegMode.TOOL_UTILIZATION:
        if frm.leg_mode is LegMode.WHEEL_DRIVING:
            steps.append(
                PostureStep(
                    postures.reorient_duration,
                    "pitch_reorientation",
                    joints=postures.tucked_joints,
                    body_pitch=-math.pi / 2,
                )
            )
        steps.append(
            PostureStep(
                postures.settle_duration,
                "tool_ready",
                joints=postures.tool_pair.pose_for(ToolPhase.OPEN),
            )
        )
    elif to.leg_mode is LegMode.WHEEL_DRIVING:
        steps.append(
            PostureStep(postures.settle_duration, "vehicle_posture",
                        joints=postures.vehicle_joints)
        )
    return steps


def script_duration(steps) -> float:
    return float(sum(s.duration for s in steps))
