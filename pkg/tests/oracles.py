"""Independent oracles used by the test suite.

Everything here is deliberately written from first principles and shares
no code with the package under test: brute-force projected gradient for
the tension QP, finite differences for wire kinematics, homogeneous
transforms for leg FK, and direct enumeration for feasibility.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is preinstalled
    HAVE_NUMBA = False

    def njit(*a, **k):
        def wrap(fn):
            return fn

        return wrap if not (len(a) == 1 and callable(a[0])) else a[0]


# ---------------------------------------------------------------------------
# rotations, written independently (axis-angle matrix, Rodrigues form)
# ---------------------------------------------------------------------------

def rotation_matrix_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    c, s = math.cos(angle), math.sin(angle)
    C = 1.0 - c
    return np.array(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
    )


def quat_wxyz_to_matrix_oracle(q):
    """Rotation matrix via axis-angle extraction, not the package formula."""
    w, x, y, z = np.asarray(q, dtype=float)
    n = math.sqrt(x * x + y * y + z * z)
    if n < 1e-15:
        return np.eye(3)
    angle = 2.0 * math.atan2(n, w)
    return rotation_matrix_axis_angle(np.array([x, y, z]) / n, angle)


# ---------------------------------------------------------------------------
# wire length rates by central differences
# ---------------------------------------------------------------------------

def wire_lengths_at(position, quat_matrix, attaches, anchors):
    """Plain geometric lengths: |anchor - (p + R a)| per wire."""
    out = []
    for a, anc in zip(attaches, anchors):
        origin = np.asarray(position) + quat_matrix @ np.asarray(a)
        out.append(np.linalg.norm(np.asarray(anc) - origin))
    return np.array(out)


def length_rates_central_difference(position, quat, twist, attaches, anchors,
                                    eps=1e-6):
    """d(lengths)/dt by displacing the pose along the twist for +/- eps."""
    v, omega = np.asarray(twist[:3]), np.asarray(twist[3:])
    R0 = quat_wxyz_to_matrix_oracle(quat)

    def lengths(sign):
        p = np.asarray(position) + sign * eps * v
        th = np.linalg.norm(omega) * eps
        if th > 0:
            dR = rotation_matrix_axis_angle(omega, sign * th)
        else:
            dR = np.eye(3)
        return wire_lengths_at(p, dR @ R0, attaches, anchors)

    return (lengths(+1.0) - lengths(-1.0)) / (2.0 * eps)


# ---------------------------------------------------------------------------
# projected-gradient oracle for the box QP
# ---------------------------------------------------------------------------

@njit(cache=True)
def _pg_loop(H, c, lo, hi, f, step, tol, max_iter):  # pragma: no cover - jit
    m = f.shape[0]
    g = np.empty(m)
    for it in range(max_iter):
        for i in range(m):
            acc = c[i]
            for j in range(m):
                acc += H[i, j] * f[j]
            g[i] = acc
        pg2 = 0.0
        for i in range(m):
            gi = g[i]
            if f[i] <= lo[i] and gi > 0.0:
                gi = 0.0
            elif f[i] >= hi[i] and gi < 0.0:
                gi = 0.0
            pg2 += gi * gi
        if pg2 < tol * tol:
            return it
        for i in range(m):
            fi = f[i] - step * g[i]
            if fi < lo[i]:
                fi = lo[i]
            elif fi > hi[i]:
                fi = hi[i]
            f[i] = fi
    return max_iter


def projected_gradient_qp(W, wrench, lo, hi, lam, tol=1e-10, max_iter=1_000_000):
    """min ||W f - w||^2 + lam ||f||^2 on the box, by projected gradient.

    Fixed step 1/L with L the largest Hessian eigenvalue; returns
    (f, objective, iterations).
    """
    W = np.asarray(W, dtype=float)
    w = np.asarray(wrench, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    m = W.shape[1]
    H = 2.0 * (W.T @ W + lam * np.eye(m))
    c = -2.0 * (W.T @ w)
    L = float(np.linalg.eigvalsh(H)[-1])
    step = 1.0 / L
    f = 0.5 * (lo + hi)
    iters = _pg_loop(H, c, lo, hi, f, step, tol, max_iter)
    r = W @ f - w
    return f, float(r @ r + lam * f @ f), int(iters)


def grid_min_residual(W, wrench, lo, hi, n=200):
    """Minimum force-residual norm over an n x n grid (2-wire layouts)."""
    assert W.shape[1] == 2
    f0 = np.linspace(lo[0], hi[0], n)
    f1 = np.linspace(lo[1], hi[1], n)
    best = math.inf
    for a in f0:
        # vectorized over the second wire
        res = (W[:3, [0]] * a + W[:3, [1]] * f1[None, :]
               - np.asarray(wrench)[:3, None])
        best = min(best, float(np.min(np.linalg.norm(res, axis=0))))
    return best


# ---------------------------------------------------------------------------
# leg kinematics oracles
# ---------------------------------------------------------------------------

def planar_fk(theta_hip, theta_knee, l1, l2):
    """Classic 2-link forward kinematics in the arm plane."""
    return np.array(
        [
            l1 * math.cos(theta_hip) + l2 * math.cos(theta_hip + theta_knee),
            l1 * math.sin(theta_hip) + l2 * math.sin(theta_hip + theta_knee),
        ]
    )


def _hom(R, t):
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = t
    return T


def leg_fk_homogeneous(side_sign, hip_offset, roll, hip_pitch, knee_pitch,
                       l_thigh, l_calf):
    """Wheel and knee centers via explicit homogeneous-transform chains.

    Joint axes per the package convention: roll about +x, pitches about
    -y (positive pitch swings the link forward).
    """
    Rx = rotation_matrix_axis_angle([1, 0, 0], roll)
    Ry1 = rotation_matrix_axis_angle([0, -1, 0], hip_pitch)
    Ry2 = rotation_matrix_axis_angle([0, -1, 0], knee_pitch)
    base = _hom(np.eye(3), [0.0, side_sign * hip_offset, 0.0])
    T1 = base @ _hom(Rx, [0, 0, 0]) @ _hom(Ry1, [0, 0, 0])
    knee = T1 @ _hom(np.eye(3), [0.0, 0.0, -l_thigh])
    wheel = knee @ _hom(Ry2, [0, 0, 0]) @ _hom(np.eye(3), [0.0, 0.0, -l_calf])
    return knee[:3, 3], wheel[:3, 3]


def diff_drive_inverse(omega_l, omega_r, h_l, h_r, wheel_radius):
    """Recover (vx, yaw_rate) from wheel speeds (forward kinematics)."""
    vl = omega_l * wheel_radius
    vr = omega_r * wheel_radius
    yaw = (vr - vl) / (h_l + h_r)
    vx = (vl * h_r + vr * h_l) / (h_l + h_r)
    return vx, yaw


# ---------------------------------------------------------------------------
# winch identification synthesis
# ---------------------------------------------------------------------------

def synthesize_static_currents(i0, i_load, kt, radius, mass, g_norm):
    """(i_up, i_down) a physical winch with these parameters would show."""
    i0 = np.asarray(i0, dtype=float)
    i_load = np.asarray(i_load, dtype=float)
    kt = np.asarray(kt, dtype=float)
    i_mg = radius * mass * g_norm / kt
    return i_mg + i0 + i_load, i_mg - i0 - i_load
