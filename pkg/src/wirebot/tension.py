"""Gravity-compensation tension distribution.

Solves the box-constrained least-squares problem

    min_f ||W f - w||^2 + lam ||f||^2   s.t.  f_min <= f <= f_max

with a projected active-set Newton method. The regularization lam keeps
the minimizer unique for redundant wire layouts; lam=0 is allowed and
falls back to least-squares Newton steps on the free set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SolverNotConverged
from .geometry import WireJacobian

DEFAULT_REGULARIZATION = 1e-3
MAX_ITERATIONS = 10_000
GRAD_TOL = 1e-10

# f_min defaults to 2 N, not 0: slack wires violate the straight-line
# cable model, so wires are kept taut.
DEFAULT_F_MIN = 2.0
DEFAULT_F_MAX = 120.0


@dataclass
class TensionLimits:
    """Elementwise tension box, newtons; requires 0 <= f_min < f_max."""

    f_min: np.ndarray
    f_max: np.ndarray

    def __post_init__(self):
        self.f_min = np.atleast_1d(np.asarray(self.f_min, dtype=float))
        self.f_max = np.atleast_1d(np.asarray(self.f_max, dtype=float))
        if self.f_min.shape != self.f_max.shape:
            raise ValueError("f_min and f_max must have equal length")
        if np.any(self.f_min < 0.0) or np.any(self.f_min >= self.f_max):
            raise ValueError("limits must satisfy 0 <= f_min < f_max elementwise")

    @classmethod
    def uniform(cls, m: int, f_min: float = DEFAULT_F_MIN,
                f_max: float = DEFAULT_F_MAX) -> "TensionLimits":
        return cls(np.full(m, float(f_min)), np.full(m, float(f_max)))

    def clamp(self, f: np.ndarray) -> np.ndarray:
        return np.clip(f, self.f_min, self.f_max)

    def subset(self, idx) -> "TensionLimits":
        return TensionLimits(self.f_min[list(idx)], self.f_max[list(idx)])


@dataclass
class TensionSolution:
    tensions: np.ndarray
    residual_wrench: np.ndarray
    objective: float
    converged: bool
    iterations: int = 0
    # pose the Jacobian was built at, for staleness checks downstream
    body_position: np.ndarray | None = None
    body_orientation: np.ndarray | None = None


def gravity_wrench(mass: float, gravity=(0.0, 0.0, -9.81)) -> np.ndarray:
    """Wrench the wires must exert to cancel gravity: [-M g; 0,0,0]."""
    if mass < 0:
        raise ValueError("mass must be non-negative")
    g = np.asarray(gravity, dtype=float).reshape(3)
    return np.concatenate([-mass * g, np.zeros(3)])


def _objective(W, w, lam, f) -> float:
    r = W @ f - w
    return float(r @ r + lam * (f @ f))


def _projected_gradient(grad, f, lo, hi) -> np.ndarray:
    pg = grad.copy()
    pg[(f <= lo) & (grad > 0)] = 0.0
    pg[(f >= hi) & (grad < 0)] = 0.0
    return pg


def _solve_free(Hff, rhs) -> np.ndarray:
    """Solve Hff x = rhs with one step of iterative refinement."""
    try:
        x = np.linalg.solve(Hff, rhs)
        x += np.linalg.solve(Hff, rhs - Hff @ x)
    except np.linalg.LinAlgError:
        # lam=0 with redundant wires: minimum-norm solve
        x = np.linalg.lstsq(Hff, rhs, rcond=None)[0]
        x += np.linalg.lstsq(Hff, rhs - Hff @ x, rcond=None)[0]
    return x


def solve_tension_qp(
    jac: WireJacobian,
    target_wrench,
    limits: TensionLimits,
    regularization: float = DEFAULT_REGULARIZATION,
    max_iterations: int = MAX_ITERATIONS,
    raise_on_failure: bool = False,
) -> TensionSolution:
    """Minimize ||W f - w||^2 + lam ||f||^2 over the tension box.

    The returned tensions always lie inside the box, converged or not.
    Converged solutions satisfy the KKT conditions at GRAD_TOL: the
    gradient is >= 0 on active lower bounds, <= 0 on active upper bounds
    and 0 in the interior.
    """
    W = np.asarray(jac.matrix, dtype=float)
    w = np.asarray(target_wrench, dtype=float).reshape(6)
    lam = float(regularization)
    if lam < 0:
        raise ValueError("regularization must be >= 0")
    m = W.shape[1]
    lo, hi = limits.f_min, limits.f_max
    if lo.shape[0] != m:
        raise ValueError(f"limits have length {lo.shape[0]}, expected {m}")

    H = 2.0 * (W.T @ W + lam * np.eye(m))
    c = -2.0 * (W.T @ w)  # gradient = H f + c

    # primal active set: exact minimization over the free variables, walk
    # to the first blocking bound, release bounds with bad multipliers
    f = limits.clamp(0.5 * (lo + hi))
    at_lo = np.zeros(m, dtype=bool)
    at_hi = np.zeros(m, dtype=bool)
    iterations = 0
    done = False

    for iterations in range(1, max_iterations + 1):
        free = ~(at_lo | at_hi)
        target = f.copy()
        if np.any(free):
            rhs = -(c[free] + H[np.ix_(free, ~free)] @ f[~free])
            target[free] = _solve_free(H[np.ix_(free, free)], rhs)

        d = target - f
        # longest feasible fraction of the step and the blocking bound
        t, block, block_hi = 1.0, -1, False
        for i in np.flatnonzero(free):
            if d[i] > 0 and f[i] + d[i] > hi[i]:
                ti = (hi[i] - f[i]) / d[i]
                if ti < t:
                    t, block, block_hi = ti, i, True
            elif d[i] < 0 and f[i] + d[i] < lo[i]:
                ti = (lo[i] - f[i]) / d[i]
                if ti < t:
                    t, block, block_hi = ti, i, False
        f = np.clip(f + t * d, lo, hi)

        if block >= 0:
            if block_hi:
                at_hi[block] = True
                f[block] = hi[block]
            else:
                at_lo[block] = True
                f[block] = lo[block]
            continue

        # free subspace minimized; check multipliers of the active bounds
        grad = H @ f + c
        tol = 1e-12 * max(1.0, float(np.max(np.abs(grad))) if m else 1.0)
        release = -1
        worst = -tol
        for i in np.flatnonzero(at_lo):
            if grad[i] < worst:
                worst, release = grad[i], i
        for i in np.flatnonzero(at_hi):
            if -grad[i] < worst:
                worst, release = -grad[i], i
        if release < 0:
            done = True
            break
        at_lo[release] = False
        at_hi[release] = False

    grad = H @ f + c
    pg_norm = float(np.linalg.norm(_projected_gradient(grad, f, lo, hi)))
    converged = done and pg_norm < GRAD_TOL
    residual = W @ f - w
    solution = TensionSolution(
        tensions=f,
        residual_wrench=residual,
        objective=_objective(W, w, lam, f),
        converged=converged,
        iterations=iterations,
        body_position=jac.body_position.copy(),
        body_orientation=jac.body_orientation.copy(),
    )
    if not converged and raise_on_failure:
        raise SolverNotConverged(
            f"tension QP hit the {max_iterations}-iteration cap", solution
        )
    return solution


def kkt_satisfied(
    jac: WireJacobian,
    target_wrench,
    limits: TensionLimits,
    solution: TensionSolution,
    regularization: float = DEFAULT_REGULARIZATION,
    tol: float = 1e-8,
) -> bool:
    """Stationarity/complementarity check for a box-QP solution."""
    W = np.asarray(jac.matrix, dtype=float)
    w = np.asarray(target_wrench, dtype=float).reshape(6)
    f = solution.tensions
    grad = 2.0 * (W.T @ (W @ f - w) + float(regularization) * f)
    lo, hi = limits.f_min, limits.f_max
    scale = max(1.0, float(np.max(np.abs(grad))))
    for i in range(f.shape[0]):
        if f[i] <= lo[i] + tol:
            ok = grad[i] >= -tol * scale
        elif f[i] >= hi[i] - tol:
            ok = grad[i] <= tol * scale
        else:
            ok = abs(grad[i]) <= tol * scale
        if not ok:
            return False
    return True


def wrench_feasible(jac: WireJacobian, target_wrench, limits: TensionLimits,
                    tol: float = 1e-6):
    """Whether the tension box can realize the target wrench.

    Solves the unregularized QP and reports (feasible, residual_norm);
    feasible iff the residual FORCE norm is below tol. Moment residual is
    deliberately excluded: a suspended body reorients freely, so only the
    force balance decides whether the wires can carry the target.
    """
    W = np.asarray(jac.matrix, dtype=float)
    w = np.asarray(target_wrench, dtype=float).reshape(6)
    reduced = WireJacobian(
        np.vstack([W[:3], np.zeros_like(W[3:])]),
        jac.body_position,
        jac.body_orientation,
    )
    target = np.concatenate([w[:3], np.zeros(3)])
    sol = solve_tension_qp(jac=reduced, target_wrench=target, limits=limits,
                           regularization=0.0)
    residual = float(np.linalg.norm(sol.residual_wrench[:3]))
    return residual < float(tol), residual
