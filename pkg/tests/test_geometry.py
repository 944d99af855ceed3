import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wirebot.errors import DegenerateWire
from wirebot.geometry import (
    BodyState,
    WireGeometry,
    build_jacobian,
    quat_from_axis_angle,
    quat_rotate,
    quat_to_matrix,
    wire_lengths,
    wire_rates,
    wire_vectors,
)

from .oracles import (
    length_rates_central_difference,
    quat_wxyz_to_matrix_oracle,
)


def random_body(rng):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return BodyState(
        position=rng.uniform(-1, 1, 3),
        orientation=quat_from_axis_angle(axis, rng.uniform(-np.pi, np.pi)),
        linear_velocity=rng.uniform(-1, 1, 3),
        angular_velocity=rng.uniform(-2, 2, 3),
    )


def random_wires(rng, m, body=None):
    wires = []
    for _ in range(m):
        attach = rng.uniform(-0.09, 0.09, 3)
        anchor = rng.uniform(-1.5, 1.5, 3)
        anchor[2] = rng.uniform(1.0, 3.0)
        wires.append(WireGeometry(attach, anchor))
    return wires


class TestWireVectors:
    def test_axis_aligned(self):
        body = BodyState()
        r, s, length = wire_vectors(body, WireGeometry([0, 0, 0], [0, 0, 2]))
        assert np.allclose(r, 0)
        assert np.allclose(s, [0, 0, 1])
        assert length == pytest.approx(2.0)

    def test_translation_invariance_of_direction(self):
        body = BodyState(position=[1, 0, 0])
        r, s, length = wire_vectors(body, WireGeometry([0, 0, 0], [1, 0, 3]))
        assert np.allclose(r, 0)
        assert np.allclose(s, [0, 0, 1])
        assert length == pytest.approx(3.0)

    def test_rotated_attach_matches_rotation_oracle(self):
        # body vertex of the 180 mm cube, rotated 90 deg about z
        q = quat_from_axis_angle([0, 0, 1], np.pi / 2)
        body = BodyState(orientation=q)
        attach = np.array([0.09, 0.09, 0.09])
        anchor = np.array([0.0, 0.0, 2.0])
        r, s, length = wire_vectors(body, WireGeometry(attach, anchor))
        r_expected = quat_wxyz_to_matrix_oracle(q) @ attach
        assert np.allclose(r, r_expected, atol=1e-12)
        d = anchor - r_expected
        assert np.allclose(s, d / np.linalg.norm(d), atol=1e-12)

    def test_degenerate_wire_raises(self):
        body = BodyState()
        with pytest.raises(DegenerateWire):
            wire_vectors(body, WireGeometry([0.05, 0, 0], [0.05, 0, 0]))

    def test_common_translation_leaves_r_s_length_unchanged(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            body = random_body(rng)
            geom = random_wires(rng, 1)[0]
            shift = rng.uniform(-3, 3, 3)
            shifted = BodyState(
                body.position + shift,
                body.orientation,
                body.linear_velocity,
                body.angular_velocity,
            )
            geom2 = WireGeometry(geom.body_attach, geom.anchor + shift)
            a = wire_vectors(body, geom)
            b = wire_vectors(shifted, geom2)
            for x, y in zip(a, b):
                assert np.allclose(x, y, atol=1e-12)


class TestJacobian:
    def test_single_wire_straight_up(self):
        body = BodyState()
        jac = build_jacobian(body, [WireGeometry([0, 0, 0], [0, 0, 2])])
        assert np.allclose(jac.matrix[:, 0], [0, 0, 1, 0, 0, 0])

    def test_moment_arm_cross_product(self):
        body = BodyState()
        jac = build_jacobian(body, [WireGeometry([0, 0, 0.09], [5, 0, 0.09])])
        assert np.allclose(jac.matrix[:, 0], [1, 0, 0, 0, 0.09, 0], atol=1e-12)

    def test_unit_translational_columns(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            body = random_body(rng)
            jac = build_jacobian(body, random_wires(rng, 4))
            norms = np.linalg.norm(jac.matrix[:3], axis=0)
            assert np.allclose(norms, 1.0, atol=1e-9)

    def test_four_wire_layout_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        body = random_body(rng)
        wires = random_wires(rng, 4)
        jac = build_jacobian(body, wires)
        rates = wire_rates(body, jac)
        fd = length_rates_central_difference(
            body.position,
            body.orientation,
            body.twist,
            [w.body_attach for w in wires],
            [w.anchor for w in wires],
        )
        assert np.allclose(rates, fd, atol=1e-6)


class TestWireRates:
    def test_stationary_body(self):
        body = BodyState()
        jac = build_jacobian(body, [WireGeometry([0, 0, 0], [0, 0, 2])])
        assert np.allclose(wire_rates(body, jac), 0)

    def test_rising_body_shortens_vertical_wire(self):
        body = BodyState(linear_velocity=[0, 0, 0.1])
        jac = build_jacobian(body, [WireGeometry([0, 0, 0], [0, 0, 2])])
        assert wire_rates(body, jac)[0] == pytest.approx(-0.1)

    @pytest.mark.parametrize("seed", range(10))
    def test_random_pose_matches_central_difference(self, seed):
        rng = np.random.default_rng(seed)
        body = random_body(rng)
        wires = random_wires(rng, 4)
        jac = build_jacobian(body, wires)
        fd = length_rates_central_difference(
            body.position,
            body.orientation,
            body.twist,
            [w.body_attach for w in wires],
            [w.anchor for w in wires],
        )
        assert np.allclose(wire_rates(body, jac), fd, atol=1e-6)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_property_jacobian_unit_columns_and_fd_consistency(seed):
    rng = np.random.default_rng(seed)
    body = random_body(rng)
    m = int(rng.integers(1, 5))
    wires = random_wires(rng, m)
    jac = build_jacobian(body, wires)
    assert np.allclose(np.linalg.norm(jac.matrix[:3], axis=0), 1.0, atol=1e-9)
    fd = length_rates_central_difference(
        body.position,
        body.orientation,
        body.twist,
        [w.body_attach for w in wires],
        [w.anchor for w in wires],
    )
    assert np.allclose(wire_rates(body, jac), fd, atol=1e-6)


def test_twist_assembly_order():
    body = BodyState(linear_velocity=[1, 2, 3], angular_velocity=[4, 5, 6])
    assert np.allclose(body.twist, [1, 2, 3, 4, 5, 6])


def test_quat_rotate_matches_matrix():
    rng = np.random.default_rng(5)
    for _ in range(20):
        axis = rng.normal(size=3)
        q = quat_from_axis_angle(axis, rng.uniform(-np.pi, np.pi))
        v = rng.normal(size=3)
        assert np.allclose(quat_rotate(q, v), quat_to_matrix(q) @ v, atol=1e-12)
        assert np.allclose(quat_to_matrix(q), quat_wxyz_to_matrix_oracle(q), atol=1e-12)


def test_wire_lengths_helper():
    body = BodyState(position=[0, 0, 1])
    geoms = [WireGeometry([0, 0, 0], [0, 0, 3]), WireGeometry([0, 0, 0], [0, 4, 1])]
    assert np.allclose(wire_lengths(body, geoms), [2.0, 4.0])
