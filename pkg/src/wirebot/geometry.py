"""Body pose, wire geometry and the wire Jacobian.

Conventions (fixed for the whole package):
  - world frame: x forward, y left, z up; gravity along -z.
  - quaternions are wxyz, body -> world (v_world = R(q) v_body).
  - the body CoG coincides with the body-frame origin (cube center).
  - s_i points from the wire origin on the body toward the anchor, so a
    positive tension pulls the body toward the anchor and wire length
    rates obey ldot = -W^T qdot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateWire

MIN_WIRE_LENGTH = 1e-6


def _vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(3)
    return v.copy()


def cross3(a, b) -> np.ndarray:
    """3-vector cross product without numpy's generic-axis overhead."""
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def norm3(a) -> float:
    return float(np.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]))


# ---------------------------------------------------------------------------
# quaternion helpers (wxyz)
# ---------------------------------------------------------------------------

def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(4)
    n = float(np.linalg.norm(q))
    if n <= 1e-12:
        raise ValueError("cannot normalize a zero quaternion")
    return q / n


def quat_mul(a, b) -> np.ndarray:
    w1, x1, y1, z1 = np.asarray(a, dtype=float).reshape(4)
    w2, x2, y2, z2 = np.asarray(b, dtype=float).reshape(4)
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_conj(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float).reshape(4)
    return np.array([w, -x, -y, -z])


def quat_rotate(q, v) -> np.ndarray:
    """Rotate vector v by quaternion q (body -> world)."""
    q = np.asarray(q, dtype=float).reshape(4)
    p = np.array([0.0, *np.asarray(v, dtype=float).reshape(3)])
    return quat_mul(quat_mul(q, p), quat_conj(q))[1:]


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_rotvec(rv) -> np.ndarray:
    rv = np.asarray(rv, dtype=float).reshape(3)
    angle = float(np.linalg.norm(rv))
    if angle < 1e-12:
        return np.array([1.0, 0.0, 0.0, 0.0])
    axis = rv / angle
    half = 0.5 * angle
    return np.array([np.cos(half), *(np.sin(half) * axis)])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = _vec3(axis)
    n = float(np.linalg.norm(axis))
    if n <= 1e-12:
        raise ValueError("zero rotation axis")
    return quat_from_rotvec(axis * (float(angle) / n))


def quat_integrate(q, omega_world, dt: float) -> np.ndarray:
    """Advance q by a world-frame angular velocity over dt; renormalized."""
    dq = quat_from_rotvec(np.asarray(omega_world, dtype=float) * float(dt))
    return quat_normalize(quat_mul(dq, q))


def quat_angle_between(a, b) -> float:
    """Rotation angle (rad) between two unit quaternions, sign-insensitive."""
    d = abs(float(np.dot(quat_normalize(a), quat_normalize(b))))
    return 2.0 * float(np.arccos(min(1.0, d)))


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass
class BodyState:
    """6-DOF pose and twist of the main body (world frame, CoG).

    The twist is assembled as [linear; angular], length 6.
    """

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))
    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.position = _vec3(self.position)
        self.linear_velocity = _vec3(self.linear_velocity)
        self.angular_velocity = _vec3(self.angular_velocity)
        q = np.asarray(self.orientation, dtype=float).reshape(4)
        n = float(np.linalg.norm(q))
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"orientation norm {n} too far from 1")
        self.orientation = q / n

    @property
    def twist(self) -> np.ndarray:
        return np.concatenate([self.linear_velocity, self.angular_velocity])

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def copy(self) -> "BodyState":
        return BodyState(
            self.position.copy(),
            self.orientation.copy(),
            self.linear_velocity.copy(),
            self.angular_velocity.copy(),
        )


@dataclass
class WireGeometry:
    """One wire: body-frame origin vertex and world-frame anchor."""

    body_attach: np.ndarray
    anchor: np.ndarray

    def __post_init__(self):
        self.body_attach = _vec3(self.body_attach)
        self.anchor = _vec3(self.anchor)


@dataclass
class WireJacobian:
    """6 x m wire Jacobian; column i is [s_i; r_i x s_i].

    Carries the body pose it was built from so downstream consumers can
    detect stale solutions.
    """

    matrix: np.ndarray
    body_position: np.ndarray
    body_orientation: np.ndarray

    @property
    def wire_count(self) -> int:
        return int(self.matrix.shape[1])

    def matches_pose(self, body: BodyState, tol: float = 1e-6) -> bool:
        if float(np.linalg.norm(self.body_position - body.position)) > tol:
            return False
        return quat_angle_between(self.body_orientation, body.orientation) <= tol


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def wire_vectors_matrix(rotation: np.ndarray, position: np.ndarray,
                        body_attach, anchor):
    """wire_vectors with a precomputed body rotation matrix (hot path)."""
    r = rotation @ body_attach
    diff = anchor - position - r
    length = norm3(diff)
    if length <= MIN_WIRE_LENGTH:
        raise DegenerateWire(
            f"wire origin {position + r} coincides with anchor {anchor}"
        )
    return r, diff / length, length


def wire_vectors(body: BodyState, geom: WireGeometry):
    """World-frame wire quantities for one wire.

    Returns (r, s, length): r is the CoG -> wire-origin vector, s the unit
    direction origin -> anchor, length the origin-anchor distance (m).

    Raises DegenerateWire when origin and anchor coincide within 1e-6 m.
    """
    return wire_vectors_matrix(
        quat_to_matrix(body.orientation), body.position,
        geom.body_attach, geom.anchor,
    )


def build_jacobian(body: BodyState, wires) -> WireJacobian:
    """Assemble the 6 x m wire Jacobian for the given wires (m >= 1)."""
    wires = list(wires)
    if not wires:
        raise ValueError("need at least one wire")
    R = quat_to_matrix(body.orientation)
    cols = np.zeros((6, len(wires)))
    for i, geom in enumerate(wires):
        r, s, _ = wire_vectors_matrix(R, body.position, geom.body_attach,
                                      geom.anchor)
        cols[:3, i] = s
        cols[3:, i] = cross3(r, s)
    return WireJacobian(cols, body.position.copy(), body.orientation.copy())


def wire_lengths(body: BodyState, wires) -> np.ndarray:
    """Geometric origin-anchor distances for each wire (m-vector, meters)."""
    return np.array([wire_vectors(body, g)[2] for g in wires])


def wire_rates(body: BodyState, jac: WireJacobian) -> np.ndarray:
    """Wire length rates ldot = -W^T qdot (m/s).

    Negative rate means the wire is shortening (body moving toward its
    anchor).
    """
    return -jac.matrix.T @ body.twist
