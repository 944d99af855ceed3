"""Fixed-rate control loop over the simulated plant.

Physics steps at physics_dt; the controllers tick every
round(1/(control_rate*physics_dt)) physics steps (200 Hz over a 1 kHz
plant by default). Commands and transition requests are applied between
ticks in arrival order. The loop owns the state single-threaded;
observers get snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GuardFailed
from .geometry import BodyState, build_jacobian
from .leg_control import (
    LegParams,
    ManipTarget,
    ToolPhase,
    drive_wheel_speeds,
    manip_ik,
)
from .modes import (
    DEFAULT_POSTURES,
    LegMode,
    PostureConfig,
    SystemMode,
    TransitionRequest,
    posture_sequence,
    request_transition,
)
from .sim import (
    ActuatorTargets,
    RobotParams,
    SimState,
    WorldModel,
    attach_wire,
    contact_flags,
    detach_wire,
    step,
    wire_geometries,
)
from .tension import TensionLimits, gravity_wrench, solve_tension_qp
from .wire_control import (
    ControllerGains,
    WireCommand,
    WireMode,
    cog_velocity_tensions,
    free_mode,
    tension_to_current,
    wire_velocity_tensions,
)


@dataclass
class RunConfig:
    """Loop rates, gains and tension limits for one run."""

    physics_dt: float = 1e-3
    control_rate: float = 200.0
    log_rate: float = 50.0
    kp_wire: float = 200.0
    kp_cog: float = 200.0
    f_min: float = 2.0
    f_max: float = 120.0
    qp_regularization: float = 1e-3

    def __post_init__(self):
        if not (0 < self.physics_dt <= 0.01):
            raise ValueError("physics_dt must be in (0, 0.01]")
        if self.control_rate <= 0 or self.log_rate <= 0:
            raise ValueError("rates must be positive")

    @property
    def gains(self) -> ControllerGains:
        return ControllerGains(kp_wire=self.kp_wire, kp_cog=self.kp_cog)

    @property
    def control_every(self) -> int:
        return max(1, int(round(1.0 / (self.control_rate * self.physics_dt))))

    @property
    def log_every(self) -> int:
        return max(1, int(round(1.0 / (self.log_rate * self.physics_dt))))

    def limits(self, m: int) -> TensionLimits:
        return TensionLimits.uniform(m, self.f_min, self.f_max)


@dataclass
class DriveCommand:
    vx: float = 0.0
    yaw_rate: float = 0.0
    hip_pitch: float | None = None  # offset on the vehicle hip pitch


class ControlLoop:
    """Owns SimState and runs controllers at the configured rate."""

    def __init__(
        self,
        params: RobotParams,
        world: WorldModel,
        state: SimState,
        config: RunConfig | None = None,
        postures: PostureConfig | None = None,
    ):
        self.params = params
        self.world = world
        self.state = state
        self.config = config or RunConfig()
        self.postures = postures or DEFAULT_POSTURES
        self.mode = SystemMode()
        self.wire_command = WireCommand(WireMode.FREE)
        self.drive = DriveCommand()
        self.manip_target: ManipTarget | None = None
        self.tool_phase = ToolPhase.OPEN
        self._tool_phase_started = state.time
        self._wire_rate_refs = np.zeros(params.wire_count)  # per slot
        self._currents = np.zeros(params.wire_count)
        self._targets = ActuatorTargets(
            joints=state.legs.joints.copy(),
            wheel_speeds=state.legs.wheel_speeds.copy(),
        )
        self._script: list = []
        self._script_started = 0.0
        self._steps = 0
        self._qp_converged = True

    # -- commands -----------------------------------------------------------

    def set_wire_command(self, command: WireCommand):
        if command.mode is not self.mode.wire_mode:
            raise GuardFailed(
                f"command mode {command.mode.value} does not match "
                f"active mode {self.mode.wire_mode.value}"
            )
        self.wire_command = command
        if command.mode is WireMode.WIRE_VELOCITY:
            # per-slot reference vector, subset at use
            refs = np.zeros(self.params.wire_count)
            attached = self.state.attached_indices()
            vals = command.wire_rate_ref
            if vals.shape[0] == len(attached):
                for v, i in zip(vals, attached):
                    refs[i] = v
            elif vals.shape[0] == self.params.wire_count:
                refs = vals.copy()
            else:
                raise ValueError(
                    f"wire rate vector length {vals.shape[0]} matches neither "
                    f"attached count {len(attached)} nor slot count"
                )
            self._wire_rate_refs = refs

    def set_velocity(self, twist):
        self.set_wire_command(
            WireCommand(WireMode.COG_VELOCITY, twist_ref=np.asarray(twist))
        )

    def set_wire_rates(self, rates):
        self.set_wire_command(
            WireCommand(WireMode.WIRE_VELOCITY, wire_rate_ref=np.asarray(rates))
        )

    def set_drive(self, vx: float, yaw_rate: float, hip_pitch=None):
        self.drive = DriveCommand(vx, yaw_rate, hip_pitch)

    def set_manip_target(self, target: ManipTarget):
        self.manip_target = target

    def set_tool_phase(self, phase: ToolPhase):
        if phase is not self.tool_phase:
            self.tool_phase = phase
            self._tool_phase_started = self.state.time

    def attach(self, index: int, anchor):
        self.state = attach_wire(self.state, index, anchor, self.params)

    def detach(self, index: int):
        self.state = detach_wire(self.state, index)

    def request_mode(self, requested: SystemMode, source: str = "operator"
                     ) -> SystemMode:
        """Guarded transition; raises GuardFailed, else switches mode."""
        accepted = request_transition(
            self.mode,
            TransitionRequest(requested, source),
            body=self.state.body,
            wires=wire_geometries(self.state, self.params),
            limits=self.config.limits(len(self.state.attached_indices()))
            if self.state.attached_indices()
            else None,
            mass=self.control_mass,
            gravity=self.world.gravity,
            wheel_contact_forces=contact_flags(self.state, self.world, self.params),
        )
        if accepted != self.mode:
            script = posture_sequence(self.mode, accepted, self.postures)
            self.mode = accepted
            if accepted.wire_mode is not self.wire_command.mode:
                self.wire_command = self._default_command(accepted.wire_mode)
            if script:
                self._script = script
                self._script_started = self.state.time
            if accepted.leg_mode is LegMode.TOOL_UTILIZATION:
                self.tool_phase = ToolPhase.OPEN
                self._tool_phase_started = self.state.time
        return accepted

    def _default_command(self, mode: WireMode) -> WireCommand:
        if mode is WireMode.WIRE_VELOCITY:
            m = len(self.state.attached_indices())
            return WireCommand(mode, wire_rate_ref=np.zeros(m))
        if mode is WireMode.COG_VELOCITY:
            return WireCommand(mode, twist_ref=np.zeros(6))
        return WireCommand(WireMode.FREE)

    # -- control ------------------------------------------------------------

    @property
    def control_mass(self) -> float:
        return self.params.control_mass + self.state.tool_mass

    def measured_wire_rates(self, attached) -> np.ndarray:
        """Encoder-side wire rates (winch payout), m/s."""
        r = self.params.winch.radius
        return np.array([self.state.wires[i].payout_rate(r) for i in attached])

    def _wire_tick(self):
        attached = self.state.attached_indices()
        m = len(attached)
        currents = np.zeros(self.params.wire_count)
        mode = self.mode.wire_mode
        if m == 0 or mode is WireMode.FREE:
            currents[attached] = free_mode(m)
            self._currents = currents
            return
        limits = self.config.limits(m)
        winch = self.params.winch.subset(attached)
        rates = self.measured_wire_rates(attached)
        g_norm = self.world.g_norm
        if mode is WireMode.WIRE_VELOCITY:
            refs = self._wire_rate_refs[attached]
            f_ref = wire_velocity_tensions(
                rates, refs, self.control_mass, g_norm, self.config.gains, limits
            )
        else:  # CoG velocity
            geoms = wire_geometries(self.state, self.params)
            jac = build_jacobian(self.state.body, geoms)
            qp = solve_tension_qp(
                jac,
                gravity_wrench(self.control_mass, self.world.gravity),
                limits,
                regularization=self.config.qp_regularization,
            )
            self._qp_converged = qp.converged
            twist_ref = (
                self.wire_command.twist_ref
                if self.wire_command.twist_ref is not None
                else np.zeros(6)
            )
            f_ref = cog_velocity_tensions(
                self.state.body, jac, rates, twist_ref, qp,
                self.config.gains, limits,
            )
        currents[attached] = tension_to_current(
            f_ref, winch, self.control_mass, g_norm
        )
        self._currents = currents

    def _leg_tick(self):
        if self._script:
            elapsed = self.state.time - self._script_started
            acc = 0.0
            active = None
            for s in self._script:
                acc += s.duration
                if elapsed < acc:
                    active = s
                    break
            if active is None:
                self._script = []
            else:
                self._targets = ActuatorTargets(
                    joints=active.joints
                    if active.joints is not None
                    else self._targets.joints,
                    wheel_speeds=active.wheel_speeds,
                )
                return

        leg_mode = self.mode.leg_mode
        if leg_mode is LegMode.WHEEL_DRIVING:
            joints = self.postures.vehicle_joints.copy()
            if self.drive.hip_pitch is not None:
                joints[:, 1] += self.drive.hip_pitch
            wl, wr = drive_wheel_speeds(
                self.drive.vx, self.drive.yaw_rate, self.params.leg,
                self.state.legs,
            )
            self._targets = ActuatorTargets(joints=joints, wheel_speeds=[wl, wr])
        elif leg_mode is LegMode.MANIPULATION:
            if self.manip_target is None:
                self._targets = ActuatorTargets(
                    joints=self._targets.joints, wheel_speeds=[0.0, 0.0]
                )
            else:
                left, right = manip_ik(self.manip_target, self.params.leg)
                spin = self.manip_target.wheel_spin
                self._targets = ActuatorTargets(
                    joints=np.array([left.as_array(), right.as_array()]),
                    wheel_speeds=[spin, -spin],
                    grasp_spin=spin,
                )
        else:  # tool utilization
            pose = self.postures.tool_pair
            from .leg_control import tool_phase_targets

            joints = tool_phase_targets(
                pose, self.tool_phase, self.state.time - self._tool_phase_started
            )
            self._targets = ActuatorTargets(joints=joints, wheel_speeds=[0.0, 0.0])

    def control_tick(self):
        self._wire_tick()
        self._leg_tick()

    def step_physics(self):
        """One physics step; runs the controllers on tick boundaries."""
        if self._steps % self.config.control_every == 0:
            self.control_tick()
        self.state = step(
            self.state, self._currents, self._targets, self.world,
            self.params, self.config.physics_dt,
        )
        self._steps += 1

    def advance(self, seconds: float):
        for _ in range(int(round(seconds / self.config.physics_dt))):
            self.step_physics()

    # -- observation --------------------------------------------------------

    @property
    def currents(self) -> np.ndarray:
        return self._currents.copy()

    @property
    def wire_rate_refs(self) -> np.ndarray:
        """Active per-slot wire rate reference (for logging)."""
        refs = np.zeros(self.params.wire_count)
        attached = self.state.attached_indices()
        if not attached:
            return refs
        if self.mode.wire_mode is WireMode.WIRE_VELOCITY:
            refs[attached] = self._wire_rate_refs[attached]
        elif self.mode.wire_mode is WireMode.COG_VELOCITY:
            twist_ref = (
                self.wire_command.twist_ref
                if self.wire_command.twist_ref is not None
                else np.zeros(6)
            )
            geoms = wire_geometries(self.state, self.params)
            jac = build_jacobian(self.state.body, geoms)
            refs[attached] = -(jac.matrix.T @ twist_ref)
        return refs

    @property
    def command_twist(self) -> np.ndarray:
        if (
            self.mode.wire_mode is WireMode.COG_VELOCITY
            and self.wire_command.twist_ref is not None
        ):
            return self.wire_command.twist_ref.copy()
        return np.zeros(6)
