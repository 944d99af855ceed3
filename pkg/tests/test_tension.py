import numpy as np
import pytest

from wirebot.geometry import BodyState, WireGeometry, build_jacobian
from wirebot.tension import (
    TensionLimits,
    gravity_wrench,
    kkt_satisfied,
    solve_tension_qp,
    wrench_feasible,
)

from .oracles import grid_min_residual, projected_gradient_qp

G = 9.81


def vertical_wire_jac(attach=(0, 0, 0), anchor=(0, 0, 2)):
    return build_jacobian(BodyState(), [WireGeometry(attach, anchor)])


def random_layout(rng, m):
    body = BodyState()
    wires = []
    for _ in range(m):
        attach = rng.uniform(-0.09, 0.09, 3)
        anchor = np.array(
            [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(1.0, 3.0)]
        )
        wires.append(WireGeometry(attach, anchor))
    return build_jacobian(body, wires)


class TestGravityWrench:
    def test_definition(self):
        assert np.allclose(gravity_wrench(10.0), [0, 0, 98.1, 0, 0, 0])

    def test_massless(self):
        assert np.allclose(gravity_wrench(0.0), np.zeros(6))

    def test_scaling(self):
        assert np.allclose(gravity_wrench(12.0), [0, 0, 117.72, 0, 0, 0])


class TestSolveTensionQP:
    def test_two_symmetric_vertical_wires_split_equally(self):
        body = BodyState()
        jac = build_jacobian(
            body,
            [
                WireGeometry([0, 0.09, 0], [0, 0.09, 2]),
                WireGeometry([0, -0.09, 0], [0, -0.09, 2]),
            ],
        )
        w = gravity_wrench(10.0)
        sol = solve_tension_qp(jac, w, TensionLimits.uniform(2), regularization=0.0)
        assert sol.converged
        assert np.allclose(sol.tensions, [49.05, 49.05], atol=1e-8)

    def test_single_vertical_wire_exactly_determined(self):
        sol = solve_tension_qp(
            vertical_wire_jac(), gravity_wrench(10.0), TensionLimits.uniform(1),
            regularization=0.0,
        )
        assert sol.converged
        assert sol.tensions[0] == pytest.approx(98.1, abs=1e-8)
        assert np.linalg.norm(sol.residual_wrench) < 1e-8

    @pytest.mark.parametrize("seed", range(12))
    def test_random_layouts_match_projected_gradient_oracle(self, seed):
        rng = np.random.default_rng(100 + seed)
        m = int(rng.integers(1, 5))
        jac = random_layout(rng, m)
        w = gravity_wrench(12.0)
        limits = TensionLimits.uniform(m, 5.0, 120.0)
        lam = 1e-3
        sol = solve_tension_qp(jac, w, limits, regularization=lam)
        _, obj_oracle, _ = projected_gradient_qp(
            jac.matrix, w, limits.f_min, limits.f_max, lam
        )
        assert sol.objective == pytest.approx(obj_oracle, abs=1e-6)
        assert kkt_satisfied(jac, w, limits, sol, regularization=lam)

    def test_tensions_stay_in_box(self):
        rng = np.random.default_rng(42)
        for _ in range(30):
            m = int(rng.integers(1, 5))
            jac = random_layout(rng, m)
            limits = TensionLimits.uniform(m, 5.0, 120.0)
            sol = solve_tension_qp(jac, gravity_wrench(40.0), limits)
            assert np.all(sol.tensions >= limits.f_min - 1e-12)
            assert np.all(sol.tensions <= limits.f_max + 1e-12)

    def test_objective_never_exceeds_box_midpoint(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            m = int(rng.integers(1, 5))
            jac = random_layout(rng, m)
            limits = TensionLimits.uniform(m, 5.0, 120.0)
            w = gravity_wrench(12.0)
            lam = 1e-3
            sol = solve_tension_qp(jac, w, limits, regularization=lam)
            mid = 0.5 * (limits.f_min + limits.f_max)
            r = jac.matrix @ mid - w
            mid_obj = float(r @ r + lam * mid @ mid)
            assert sol.objective <= mid_obj + 1e-9

    def test_residual_reported_exactly(self):
        jac = vertical_wire_jac()
        w = gravity_wrench(10.0)
        sol = solve_tension_qp(jac, w, TensionLimits.uniform(1))
        assert np.allclose(sol.residual_wrench, jac.matrix @ sol.tensions - w)

    def test_records_source_pose(self):
        jac = vertical_wire_jac()
        sol = solve_tension_qp(jac, gravity_wrench(10.0), TensionLimits.uniform(1))
        assert np.allclose(sol.body_position, [0, 0, 0])
        assert np.allclose(sol.body_orientation, [1, 0, 0, 0])


class TestWrenchFeasible:
    def test_vertical_target_feasible(self):
        ok, res = wrench_feasible(
            vertical_wire_jac(), [0, 0, 50, 0, 0, 0], TensionLimits.uniform(1), 1e-6
        )
        assert ok
        assert res < 1e-8

    def test_lateral_target_infeasible_with_residual(self):
        ok, res = wrench_feasible(
            vertical_wire_jac(), [3, 0, 50, 0, 0, 0], TensionLimits.uniform(1), 1e-6
        )
        assert not ok
        assert res == pytest.approx(3.0, abs=1e-8)

    def test_two_wire_cliff_geometry_matches_grid_oracle(self):
        # two wires from the upper front vertices up to a branch past the wall
        body = BodyState()
        wires = [
            WireGeometry([0.09, 0.09, 0.09], [0.6, 0.1, 2.0]),
            WireGeometry([0.09, -0.09, 0.09], [0.6, -0.1, 2.0]),
        ]
        jac = build_jacobian(body, wires)
        limits = TensionLimits.uniform(2, 5.0, 120.0)
        for target in (
            gravity_wrench(12.0),
            np.array([40.0, 0.0, 100.0, 0.0, 0.0, 0.0]),
            np.array([0.0, 30.0, 60.0, 0.0, 0.0, 0.0]),
        ):
            ok, res = wrench_feasible(jac, target, limits, tol=0.5)
            oracle = grid_min_residual(jac.matrix, target, limits.f_min, limits.f_max)
            # the grid is coarse; decisions must agree away from the knife edge
            assert abs(res - oracle) < 0.3
            assert ok == (oracle < 0.5) or abs(oracle - 0.5) < 0.3


def test_limits_validation():
    with pytest.raises(ValueError):
        TensionLimits([5.0], [5.0])
    with pytest.raises(ValueError):
        TensionLimits([-1.0], [10.0])
