"""Deterministic fixed-step plant model.

Semi-implicit (symplectic) Euler over a 6-DOF rigid body: unilateral
cable spring-dampers driven by winch motors with Coulomb and
load-proportional friction, sphere-on-patch wheel contacts with
regularized Coulomb friction, and graspable point-mass payloads. Legs
are massless for the body dynamics apart from a lumped mass per leg;
joint servos are ideal rate-limited followers.

Forces are assembled from the pre-step state; velocities integrate
first, then positions (symplectic order). All state flows through
immutable-style copies so a step never mutates its input.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AlreadyAttached, NumericalDivergence
from .geometry import (
    BodyState,
    WireGeometry,
    cross3,
    norm3,
    quat_integrate,
    quat_rotate,
    wire_vectors,
    wire_vectors_matrix,
)
from .leg_control import LEFT, RIGHT, LegJointState, LegParams, leg_chain_points
from .wire_control import WinchModel

GRAVITY_DEFAULT = (0.0, 0.0, -9.81)


# ---------------------------------------------------------------------------
# world
# ---------------------------------------------------------------------------

@dataclass
class TerrainPatch:
    """Finite rectangular plane: origin + u,v in-plane axes, half extents."""

    origin: np.ndarray
    axis_u: np.ndarray
    axis_v: np.ndarray
    half_u: float
    half_v: float
    friction: float = 0.8

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        u = np.asarray(self.axis_u, dtype=float).reshape(3)
        v = np.asarray(self.axis_v, dtype=float).reshape(3)
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu < 1e-9 or nv < 1e-9 or self.half_u <= 0 or self.half_v <= 0:
            raise ValueError("degenerate terrain patch")
        if self.friction < 0:
            raise ValueError("friction must be non-negative")
        self.axis_u = u / nu
        self.axis_v = v / nv

    @property
    def normal(self) -> np.ndarray:
        return np.cross(self.axis_u, self.axis_v)

    def closest_point(self, point) -> np.ndarray:
        rel = np.asarray(point, dtype=float) - self.origin
        cu = np.clip(float(rel @ self.axis_u), -self.half_u, self.half_u)
        cv = np.clip(float(rel @ self.axis_v), -self.half_v, self.half_v)
        return self.origin + cu * self.axis_u + cv * self.axis_v

    @classmethod
    def ground(cls, size: float = 50.0, friction: float = 1.0,
               z: float = 0.0) -> "TerrainPatch":
        return cls([0, 0, z], [1, 0, 0], [0, 1, 0], size, size, friction)


@dataclass
class PayloadSpec:
    mass: float
    radius: float
    position: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        if self.mass <= 0 or self.radius <= 0:
            raise ValueError("payload mass and radius must be positive")


@dataclass
class WorldModel:
    gravity: np.ndarray = field(default_factory=lambda: np.array(GRAVITY_DEFAULT))
    anchors: list = field(default_factory=list)
    terrain: list = field(default_factory=list)
    payloads: list = field(default_factory=list)

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=float).reshape(3)
        self.anchors = [np.asarray(a, dtype=float).reshape(3) for a in self.anchors]

    @property
    def g_norm(self) -> float:
        return float(np.linalg.norm(self.gravity))


# ---------------------------------------------------------------------------
# robot parameters
# ---------------------------------------------------------------------------

def _front_vertices(h: float) -> np.ndarray:
    # four anchoring wires from the front vertices, tool wire rear center
    return np.array(
        [
            [h, h, h],
            [h, -h, h],
            [h, h, -h],
            [h, -h, -h],
            [-h, 0.0, 0.0],
        ]
    )


@dataclass
class RobotParams:
    """Robot constants plus the contact/cable penalty coefficients.

    mass is the body alone (no value exists upstream; 12 kg default);
    each leg adds leg_mass. body_half_extent is 0.09 m (180 mm cube).
    """

    mass: float = 12.0
    inertia: np.ndarray = field(default_factory=lambda: np.diag([0.065, 0.065, 0.065]))
    body_half_extent: float = 0.09
    wire_attachments: np.ndarray | None = None
    leg: LegParams = field(default_factory=LegParams)
    leg_mass: float = 0.75
    winch: WinchModel | None = None
    winch_inertia: float = 8e-5  # reflected at the winch shaft, kg m^2
    cable_stiffness: float = 1e5
    cable_damping: float = 1e3
    contact_stiffness: float = 3e4
    contact_damping: float = 600.0
    # regularized Coulomb: tangential force = min(mu N, c_t |slip|);
    # c_t h / m_modal must stay well under 2 for the explicit update
    tangential_stiffness: float = 500.0
    knee_friction_scale: float = 0.02  # omni support wheels slide freely
    payload_stiffness: float = 5e3
    payload_damping: float = 50.0
    joint_rate_limit: float = 4.0  # rad/s, ideal position followers
    wheel_accel_limit: float = 400.0  # rad/s^2
    divergence_speed: float = 100.0

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        self.inertia = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        if np.any(np.linalg.eigvalsh(self.inertia) <= 0):
            raise ValueError("inertia must be SPD")
        if self.wire_attachments is None:
            self.wire_attachments = _front_vertices(self.body_half_extent)
        else:
            self.wire_attachments = np.asarray(
                self.wire_attachments, dtype=float
            ).reshape(-1, 3)
        if self.winch is None:
            self.winch = WinchModel.uniform(self.wire_attachments.shape[0])

    @property
    def control_mass(self) -> float:
        """Mass the controllers compensate: body plus both legs."""
        return self.mass + 2.0 * self.leg_mass

    @property
    def wire_count(self) -> int:
        return int(self.wire_attachments.shape[0])


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------

@dataclass
class WireSlot:
    attached: bool = False
    anchor: np.ndarray | None = None
    paid_out: float = 0.0
    winch_speed: float = 0.0  # rad/s, positive = winding in
    tension: float = 0.0
    length: float = 0.0
    rate: float = 0.0  # geometric ldot, m/s

    def copy(self) -> "WireSlot":
        return WireSlot(
            self.attached,
            None if self.anchor is None else self.anchor.copy(),
            self.paid_out,
            self.winch_speed,
            self.tension,
            self.length,
            self.rate,
        )

    def payout_rate(self, winch_radius: float) -> float:
        """Encoder-side wire rate: paid-out length change, m/s."""
        return -winch_radius * self.winch_speed


@dataclass
class PayloadState:
    mass: float
    radius: float
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    latched: bool = False
    attach_offset: np.ndarray | None = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3)

    def copy(self) -> "PayloadState":
        return PayloadState(
            self.mass,
            self.radius,
            self.position.copy(),
            self.velocity.copy(),
            self.latched,
            None if self.attach_offset is None else self.attach_offset.copy(),
        )


@dataclass
class SimState:
    body: BodyState
    legs: LegJointState
    wires: list
    payloads: list = field(default_factory=list)
    tool_mass: float = 0.0
    tool_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    time: float = 0.0

    def copy(self) -> "SimState":
        return SimState(
            self.body.copy(),
            self.legs.copy(),
            [w.copy() for w in self.wires],
            [p.copy() for p in self.payloads],
            self.tool_mass,
            np.asarray(self.tool_offset, dtype=float).copy(),
            self.time,
        )

    def attached_indices(self) -> list:
        return [i for i, w in enumerate(self.wires) if w.attached]


def initial_state(params: RobotParams, world: WorldModel,
                  position=(0, 0, 0.5), orientation=(1, 0, 0, 0),
                  joints=None) -> SimState:
    legs = LegJointState() if joints is None else LegJointState(joints=joints)
    payloads = [
        PayloadState(spec.mass, spec.radius, spec.position.copy())
        for spec in world.payloads
    ]
    return SimState(
        body=BodyState(position=position, orientation=orientation),
        legs=legs,
        wires=[WireSlot() for _ in range(params.wire_count)],
        payloads=payloads,
    )


@dataclass
class ActuatorTargets:
    """Per-tick servo setpoints produced by the controllers."""

    joints: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))
    wheel_speeds: np.ndarray = field(default_factory=lambda: np.zeros(2))
    grasp_spin: float = 0.0  # commanded inward grasp spin, > 0 engages latch

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=float).reshape(2, 3)
        self.wheel_speeds = np.asarray(self.wheel_speeds, dtype=float).reshape(2)


# ---------------------------------------------------------------------------
# wire attach / detach
# ---------------------------------------------------------------------------

def attach_wire(state: SimState, index: int, anchor,
                params: RobotParams) -> SimState:
    """Anchor a wire instantaneously; length = current distance, tension 0."""
    if state.wires[index].attached:
        raise AlreadyAttached(f"wire {index} is already attached")
    new = state.copy()
    slot = new.wires[index]
    slot.attached = True
    slot.anchor = np.asarray(anchor, dtype=float).reshape(3).copy()
    geom = WireGeometry(params.wire_attachments[index], slot.anchor)
    _, _, length = wire_vectors(new.body, geom)
    # paid-out length equals the geometric distance: taut but unloaded
    slot.paid_out = slot.length = length
    slot.winch_speed = 0.0
    slot.tension = 0.0
    slot.rate = 0.0
    return new


def detach_wire(state: SimState, index: int) -> SimState:
    new = state.copy()
    new.wires[index] = WireSlot()
    return new


def pretension_wires(state: SimState, params: RobotParams, tensions) -> SimState:
    """Shorten paid-out lengths so attached wires start at given tensions.

    Lets a scenario begin at static equilibrium instead of sagging into
    it: paid_out_i = length_i - f_i / cable_stiffness.
    """
    tensions = np.asarray(tensions, dtype=float).reshape(-1)
    new = state.copy()
    for f, i in zip(tensions, new.attached_indices()):
        slot = new.wires[i]
        slot.paid_out = slot.length - float(f) / params.cable_stiffness
        slot.tension = float(f)
    return new


def wire_geometries(state: SimState, params: RobotParams):
    """WireGeometry list for the attached wires, in slot order."""
    return [
        WireGeometry(params.wire_attachments[i], state.wires[i].anchor)
        for i in state.attached_indices()
    ]


# ---------------------------------------------------------------------------
# contacts
# ---------------------------------------------------------------------------

def _contact_spheres(state: SimState, params: RobotParams):
    """World-frame contact spheres: two wheels then two knee omniwheels.

    Returns a list of (center, radius, axle_or_None, spin, friction_scale).
    """
    R = state.body.rotation()
    p = state.body.position
    wheels, knees = [], []
    for side in (LEFT, RIGHT):
        _, knee_b, wheel_b = leg_chain_points(
            state.legs.joints[side], side, params.leg
        )
        roll = float(state.legs.joints[side][0])
        axle_b = np.array([0.0, np.cos(roll), np.sin(roll)])
        wheels.append(
            (
                p + R @ wheel_b,
                params.leg.wheel_radius,
                R @ axle_b,
                float(state.legs.wheel_speeds[side]),
                1.0,
            )
        )
        knees.append(
            (p + R @ knee_b, params.leg.knee_wheel_radius, None, 0.0,
             params.knee_friction_scale)
        )
    return wheels + knees


def _sphere_patch_force(center, radius, vel_center, omega_total, patch,
                        params: RobotParams, friction_scale: float):
    """(force, contact_point, normal_force) or None when separated."""
    closest = patch.closest_point(center)
    d_vec = center - closest
    dist = norm3(d_vec)
    if dist >= radius or dist < 1e-12:
        return None
    n = d_vec / dist
    depth = radius - dist
    approach = float(n @ vel_center)
    normal_force = params.contact_stiffness * depth - params.contact_damping * approach
    if normal_force <= 0.0:
        return None
    contact = center - radius * n
    v_surface = vel_center + cross3(omega_total, contact - center)
    slip = v_surface - (v_surface @ n) * n
    slip_norm = norm3(slip)
    force = normal_force * n
    if slip_norm > 1e-9:
        cap = friction_scale * patch.friction * normal_force
        mag = min(cap, params.tangential_stiffness * slip_norm)
        force = force - mag * slip / slip_norm
    return force, contact, normal_force


def contact_flags(state: SimState, world: WorldModel,
                  params: RobotParams) -> np.ndarray:
    """Penalty normal force per contact sphere (N), zero when separated.

    Order: wheel_left, wheel_right, knee_left, knee_right.
    """
    v = state.body.linear_velocity
    w = state.body.angular_velocity
    p = state.body.position
    flags = np.zeros(4)
    for k, (center, radius, axle, spin, fscale) in enumerate(
        _contact_spheres(state, params)
    ):
        vel_center = v + cross3(w, center - p)
        best = 0.0
        for patch in world.terrain:
            hit = _sphere_patch_force(
                center, radius, vel_center, w, patch, params, fscale
            )
            if hit is not None:
                best = max(best, hit[2])
        flags[k] = best
    return flags


# ---------------------------------------------------------------------------
# step
# ---------------------------------------------------------------------------

def _winch_friction_torque(params: RobotParams, idx: int,
                           tension_norm_ratio: float) -> float:
    w = params.winch
    return float(
        w.torque_constants[idx]
        * (w.coulomb_current[idx] + w.load_friction_coeff[idx] * tension_norm_ratio)
    )


def step(state: SimState, currents, targets: ActuatorTargets,
         world: WorldModel, params: RobotParams, dt: float) -> SimState:
    """Advance the plant by dt (seconds, dt in (0, 0.01]).

    currents is indexed by wire slot; entries for detached slots are
    ignored. Raises NumericalDivergence when the twist norm leaves the
    trusted envelope.
    """
    if not (0.0 < dt <= 0.01):
        raise ValueError("dt must be in (0, 0.01]")
    currents = np.asarray(currents, dtype=float).reshape(-1)
    if currents.shape[0] < params.wire_count:
        full = np.zeros(params.wire_count)
        full[: currents.shape[0]] = currents
        currents = full

    body = state.body
    R = body.rotation()
    v, omega = body.linear_velocity, body.angular_velocity
    p = body.position
    winch = params.winch
    r_winch = winch.radius

    # --- cable tensions from spring-damper between paid-out and geometric
    attached = state.attached_indices()
    tensions = np.zeros(params.wire_count)
    directions = {}
    arms = {}
    lengths = {}
    rates = {}
    for i in attached:
        slot = state.wires[i]
        r_vec, s_vec, length = wire_vectors_matrix(
            R, p, params.wire_attachments[i], slot.anchor
        )
        ldot = -(float(s_vec @ v) + float(cross3(r_vec, s_vec) @ omega))
        stretch = length - slot.paid_out
        stretch_rate = ldot - slot.payout_rate(r_winch)
        f = params.cable_stiffness * stretch + params.cable_damping * stretch_rate
        tensions[i] = max(0.0, f)
        directions[i], arms[i], lengths[i], rates[i] = s_vec, r_vec, length, ldot

    # --- winch dynamics with stiction-capable Coulomb + load friction
    g_norm = world.g_norm if world.g_norm > 0 else 9.81
    tension_ratio = float(np.linalg.norm(tensions[attached])) / (
        params.control_mass * g_norm
    ) if attached else 0.0
    new_wires = [w.copy() for w in state.wires]
    for i in attached:
        slot = new_wires[i]
        drive = winch.torque_constants[i] * currents[i] - r_winch * tensions[i]
        tau_fric = _winch_friction_torque(params, i, tension_ratio)
        momentum = params.winch_inertia * slot.winch_speed + dt * drive
        if abs(momentum) <= dt * tau_fric:
            slot.winch_speed = 0.0
        else:
            slot.winch_speed = (
                momentum - dt * tau_fric * np.sign(momentum)
            ) / params.winch_inertia
        slot.paid_out = max(0.0, slot.paid_out - dt * r_winch * slot.winch_speed)
        slot.tension = tensions[i]

    # --- force and torque assembly (pre-step state)
    mass_eff = params.control_mass + state.tool_mass
    force = np.zeros(3)
    torque = np.zeros(3)
    for i in attached:
        f_vec = tensions[i] * directions[i]
        force += f_vec
        torque += cross3(arms[i], f_vec)
    if state.tool_mass > 0.0:
        tool_arm = R @ np.asarray(state.tool_offset, dtype=float)
        torque += cross3(tool_arm, state.tool_mass * world.gravity)

    spheres = _contact_spheres(state, params)
    for center, radius, axle, spin, fscale in spheres:
        vel_center = v + cross3(omega, center - p)
        omega_total = omega if axle is None else omega + spin * axle
        for patch in world.terrain:
            hit = _sphere_patch_force(
                center, radius, vel_center, omega_total, patch, params, fscale
            )
            if hit is None:
                continue
            f_c, contact, _ = hit
            force += f_c
            torque += cross3(contact - p, f_c)

    # --- payload coupling
    new_payloads = [pl.copy() for pl in state.payloads]
    wheel_spheres = spheres[:2]
    for pl in new_payloads:
        if pl.latched:
            continue
        pl_force = pl.mass * world.gravity
        wheel_hits = 0
        for center, radius, _, _, _ in wheel_spheres:
            delta = pl.position - center
            dist = norm3(delta)
            gap = (radius + pl.radius) - dist
            if gap <= 0.0 or dist < 1e-9:
                continue
            n = delta / dist
            rel_v = float(n @ (pl.velocity - (v + cross3(omega, center - p))))
            fn = max(
                0.0, params.payload_stiffness * gap - params.payload_damping * rel_v
            )
            if fn > 1.0:
                wheel_hits += 1
            pl_force += fn * n
            force -= fn * n
            torque += cross3(center - p, -fn * n)
        for patch in world.terrain:
            closest = patch.closest_point(pl.position)
            d_vec = pl.position - closest
            dist = norm3(d_vec)
            if dist >= pl.radius or dist < 1e-12:
                continue
            n = d_vec / dist
            depth = pl.radius - dist
            approach = float(n @ pl.velocity)
            fn = max(
                0.0,
                params.contact_stiffness * depth - params.contact_damping * approach,
            )
            pl_force += fn * n
            tang = pl.velocity - (pl.velocity @ n) * n
            tn = norm3(tang)
            if tn > 1e-9:
                mag = min(patch.friction * fn, params.tangential_stiffness * tn)
                pl_force -= mag * tang / tn
        # grasp latch: both wheels pressing and inward spin commanded
        if wheel_hits >= 2 and targets.grasp_spin > 0.0:
            pl.latched = True
            pl.attach_offset = R.T @ (pl.position - p)
        else:
            pl.velocity = pl.velocity + dt * pl_force / pl.mass
            pl.position = pl.position + dt * pl.velocity

    latched_mass = sum(pl.mass for pl in new_payloads if pl.latched)
    mass_eff += latched_mass
    force += (params.control_mass + state.tool_mass) * world.gravity
    for pl in new_payloads:
        if pl.latched:
            arm = R @ pl.attach_offset
            force += pl.mass * world.gravity
            torque += cross3(arm, pl.mass * world.gravity)

    # --- integrate body: velocities first, then a midpoint drift, which
    # is exact for constant acceleration (ballistic order check) and
    # stays stable on the stiff cable/contact springs because those all
    # carry physical damping
    inertia_w = R @ params.inertia @ R.T
    v_new = v + dt * force / mass_eff
    omega_new = omega + dt * np.linalg.solve(
        inertia_w, torque - cross3(omega, inertia_w @ omega)
    )
    twist_norm = float(np.linalg.norm(np.concatenate([v_new, omega_new])))
    if twist_norm > params.divergence_speed:
        raise NumericalDivergence(
            f"twist norm {twist_norm:.1f} exceeded {params.divergence_speed}"
        )
    p_new = p + dt * 0.5 * (v + v_new)
    q_new = quat_integrate(body.orientation, 0.5 * (omega + omega_new), dt)
    body_new = BodyState(p_new, q_new, v_new, omega_new)

    # --- latched payloads ride the body
    for pl in new_payloads:
        if pl.latched:
            arm = quat_rotate(q_new, pl.attach_offset)
            pl.position = p_new + arm
            pl.velocity = v_new + cross3(omega_new, arm)

    # --- leg servos: rate-limited ideal followers
    legs_new = state.legs.copy()
    jt = np.clip(
        targets.joints,
        [params.leg.hip_roll_limits[0], params.leg.hip_pitch_limits[0],
         params.leg.knee_pitch_limits[0]],
        [params.leg.hip_roll_limits[1], params.leg.hip_pitch_limits[1],
         params.leg.knee_pitch_limits[1]],
    )
    delta = np.clip(
        jt - legs_new.joints,
        -params.joint_rate_limit * dt,
        params.joint_rate_limit * dt,
    )
    legs_new.joints = legs_new.joints + delta
    dw = np.clip(
        targets.wheel_speeds - legs_new.wheel_speeds,
        -params.wheel_accel_limit * dt,
        params.wheel_accel_limit * dt,
    )
    legs_new.wheel_speeds = legs_new.wheel_speeds + dw

    # --- refresh wire geometric length/rate at the new pose
    R_new = body_new.rotation()
    for i in attached:
        slot = new_wires[i]
        r_vec, s_vec, length = wire_vectors_matrix(
            R_new, p_new, params.wire_attachments[i], slot.anchor
        )
        slot.length = length
        slot.rate = -(
            float(s_vec @ v_new) + float(cross3(r_vec, s_vec) @ omega_new)
        )

    return SimState(
        body=body_new,
        legs=legs_new,
        wires=new_wires,
        payloads=new_payloads,
        tool_mass=state.tool_mass,
        tool_offset=np.asarray(state.tool_offset, dtype=float).copy(),
        time=state.time + dt,
    )


def mechanical_energy(state: SimState, world: WorldModel,
                      params: RobotParams) -> float:
    """Kinetic plus gravitational potential energy of the body (J)."""
    m = params.control_mass + state.tool_mass
    v = state.body.linear_velocity
    w = state.body.angular_velocity
    R = state.body.rotation()
    inertia_w = R @ params.inertia @ R.T
    kinetic = 0.5 * m * float(v @ v) + 0.5 * float(w @ inertia_w @ w)
    potential = -m * float(world.gravity @ state.body.position)
    return kinetic + potential
