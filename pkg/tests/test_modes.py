import itertools

import numpy as np
import pytest

from wirebot.errors import GuardFailed
from wirebot.geometry import BodyState, WireGeometry
from wirebot.leg_control import ToolPhase
from wirebot.modes import (
    DEFAULT_POSTURES,
    LegMode,
    PostureStep,
    SystemMode,
    TransitionRequest,
    posture_sequence,
    request_transition,
    script_duration,
)
from wirebot.tension import TensionLimits
from wirebot.wire_control import WireMode

GRAVITY = np.array([0.0, 0.0, -9.81])
NO_CONTACT = np.zeros(4)
GROUNDED = np.array([30.0, 30.0, 25.0, 25.0])


def suspended_body():
    # pitched nose-up, hanging pose
    return BodyState(position=[0, 0, 1.0], orientation=[0.7071068, 0, -0.7071068, 0])


def ceiling_wires(n):
    attaches = [[0.09, 0.09, 0.09], [0.09, -0.09, 0.09],
                [0.09, 0.09, -0.09], [0.09, -0.09, -0.09]]
    anchors = [[0.5, 0.5, 3.0], [0.5, -0.5, 3.0], [-0.5, 0.5, 3.0],
               [-0.5, -0.5, 3.0]]
    return [WireGeometry(a, b) for a, b in zip(attaches[:n], anchors[:n])]


def attempt(current, requested, wires, contacts, body=None):
    return request_transition(
        current,
        TransitionRequest(requested),
        body=body if body is not None else suspended_body(),
        wires=wires,
        limits=TensionLimits.uniform(len(wires)) if wires else None,
        mass=13.5,
        gravity=GRAVITY,
        wheel_contact_forces=contacts,
    )


class TestGuards:
    def test_cliff_combination_accepted(self):
        # grounded robot with two wires may enter wire velocity + wheels
        got = attempt(
            SystemMode(WireMode.FREE, LegMode.WHEEL_DRIVING),
            SystemMode(WireMode.WIRE_VELOCITY, LegMode.WHEEL_DRIVING),
            ceiling_wires(2),
            GROUNDED,
            body=BodyState(position=[0, 0, 0.3]),
        )
        assert got == SystemMode(WireMode.WIRE_VELOCITY, LegMode.WHEEL_DRIVING)

    def test_manipulation_without_wires_rejected(self):
        with pytest.raises(GuardFailed) as e:
            attempt(
                SystemMode(),
                SystemMode(WireMode.COG_VELOCITY, LegMode.MANIPULATION),
                [],
                NO_CONTACT,
            )
        assert "2 wires" in str(e.value)

    def test_identity_transition_is_noop(self):
        mode = SystemMode(WireMode.FREE, LegMode.WHEEL_DRIVING)
        assert attempt(mode, mode, [], GROUNDED) == mode

    def test_manipulation_requires_cog_velocity(self):
        with pytest.raises(GuardFailed):
            attempt(
                SystemMode(),
                SystemMode(WireMode.FREE, LegMode.MANIPULATION),
                ceiling_wires(4),
                NO_CONTACT,
            )

    def test_manipulation_blocked_while_grounded(self):
        with pytest.raises(GuardFailed) as e:
            attempt(
                SystemMode(WireMode.COG_VELOCITY, LegMode.WHEEL_DRIVING),
                SystemMode(WireMode.COG_VELOCITY, LegMode.MANIPULATION),
                ceiling_wires(4),
                GROUNDED,
            )
        assert "grounded" in str(e.value)

    def test_wire_velocity_needs_a_wire(self):
        with pytest.raises(GuardFailed):
            attempt(
                SystemMode(),
                SystemMode(WireMode.WIRE_VELOCITY, LegMode.WHEEL_DRIVING),
                [],
                GROUNDED,
            )

    def test_infeasible_wrench_rejected(self):
        # two wires anchored *below* the hanging body cannot cancel gravity
        wires = [
            WireGeometry([0.09, 0.09, 0.09], [0.5, 0.5, -3.0]),
            WireGeometry([0.09, -0.09, 0.09], [0.5, -0.5, -3.0]),
        ]
        with pytest.raises(GuardFailed) as e:
            attempt(
                SystemMode(),
                SystemMode(WireMode.COG_VELOCITY, LegMode.WHEEL_DRIVING),
                wires,
                NO_CONTACT,
            )
        assert "infeasible" in str(e.value)

    def test_experimental_cog_plus_wheels_allowed(self):
        got = attempt(
            SystemMode(),
            SystemMode(WireMode.COG_VELOCITY, LegMode.WHEEL_DRIVING),
            ceiling_wires(4),
            GROUNDED,
            body=BodyState(position=[0, 0, 0.3]),
        )
        assert got.wire_mode is WireMode.COG_VELOCITY


class TestModeGraphModelCheck:
    def test_no_reachable_state_violates_invariants(self):
        # exhaustive product: every mode pair under every guard context
        all_modes = [
            SystemMode(w, l) for w in WireMode for l in LegMode
        ]
        contexts = [
            ([], GROUNDED),
            (ceiling_wires(1), GROUNDED),
            (ceiling_wires(2), NO_CONTACT),
            (ceiling_wires(4), NO_CONTACT),
            (ceiling_wires(4), GROUNDED),
        ]
        for current, requested in itertools.product(all_modes, all_modes):
            if not current.is_valid():
                continue
            for wires, contacts in contexts:
                try:
                    accepted = attempt(current, requested, wires, contacts)
                except GuardFailed:
                    continue
                assert accepted.is_valid(), (current, requested, len(wires))

    def test_rejection_is_pure(self):
        current = SystemMode()
        with pytest.raises(GuardFailed):
            attempt(current, SystemMode(WireMode.COG_VELOCITY,
                                        LegMode.MANIPULATION), [], NO_CONTACT)
        assert current == SystemMode()  # frozen dataclass, nothing mutated


class TestPostureSequence:
    def test_identity_is_empty(self):
        mode = SystemMode(WireMode.COG_VELOCITY, LegMode.MANIPULATION)
        assert posture_sequence(mode, mode) == []

    def test_wheel_driving_to_manipulation_contains_reorientation(self):
        steps = posture_sequence(
            SystemMode(WireMode.FREE, LegMode.WHEEL_DRIVING),
            SystemMode(WireMode.COG_VELOCITY, LegMode.MANIPULATION),
        )
        labels = [s.label for s in steps]
        assert labels[0] == "pitch_reorientation"
        assert steps[0].body_pitch == pytest.approx(-np.pi / 2)
        assert labels[-1] == "arm_ready"
        assert np.allclose(steps[-1].joints, DEFAULT_POSTURES.arm_ready_joints)

    def test_manipulation_to_tool_ends_at_open_pose(self):
        steps = posture_sequence(
            SystemMode(WireMode.COG_VELOCITY, LegMode.MANIPULATION),
            SystemMode(WireMode.COG_VELOCITY, LegMode.TOOL_UTILIZATION),
        )
        assert np.allclose(
            steps[-1].joints, DEFAULT_POSTURES.tool_pair.pose_for(ToolPhase.OPEN)
        )

    def test_every_script_has_bounded_duration(self):
        all_modes = [SystemMode(w, l) for w in WireMode for l in LegMode]
        for a, b in itertools.product(all_modes, all_modes):
            steps = posture_sequence(a, b)
            assert script_duration(steps) < 30.0
            for s in steps:
                assert s.duration >= 0.0

    def test_step_validation(self):
        with pytest.raises(ValueError):
            PostureStep(-1.0, "bad")
