import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rcms.world import (AgentObservation, ControlInput, FieldOfView, RoadModel, VehicleState,
                        in_bounds, to_road_frame, visible_agents, wrap_angle)

coord = st.floats(-500, 500, allow_nan=False)
angle = st.floats(-10, 10, allow_nan=False)


def agent(i, x, y):
    return AgentObservation(i, x, y, 0.0, 10.0)


def test_visible_agents_inside_outside_and_empty():
    ego = VehicleState(0.0, 0.0, 0.0, 10.0)
    fov = FieldOfView(100.0)
    seen = visible_agents(ego, [agent(2, 150.0, 0.0), agent(1, 10.0, 0.0)], fov)
    assert [a.id for a in seen] == [1]
    assert visible_agents(ego, [], fov) == []


def test_visible_agents_sorted_by_id():
    ego = VehicleState(0.0, 0.0, 0.0, 10.0)
    seen = visible_agents(ego, [agent(3, 1, 0), agent(1, 2, 0), agent(2, 3, 0)], FieldOfView(50))
    assert [a.id for a in seen] == [1, 2, 3]


@given(st.lists(st.tuples(coord, coord), max_size=8), st.floats(1, 300))
def test_visible_agents_subset_and_idempotent(points, rng):
    ego = VehicleState(0.0, 0.0, 0.0, 0.0)
    agents = [agent(i, x, y) for i, (x, y) in enumerate(points)]
    fov = FieldOfView(rng)
    once = visible_agents(ego, agents, fov)
    assert all(a in agents for a in once)
    assert visible_agents(ego, once, fov) == once


def test_to_road_frame_examples():
    assert to_road_frame((5.0, 2.0), RoadModel()) == pytest.approx((5.0, 2.0))
    s, d = to_road_frame((0.0, 5.0), RoadModel(road_heading=math.pi / 2))
    assert s == pytest.approx(5.0) and d == pytest.approx(0.0, abs=1e-12)


@given(coord, coord, angle, coord, coord)
def test_road_frame_round_trip(x, y, heading, ox, oy):
    road = RoadModel(road_heading=heading, origin=(ox, oy))
    s, d = to_road_frame((x, y), road)
    xb, yb = road.from_road_frame(s, d)
    assert xb == pytest.approx(x, abs=1e-9) and yb == pytest.approx(y, abs=1e-9)


@given(coord, coord, coord, coord, angle)
def test_road_frame_preserves_distances(x1, y1, x2, y2, heading):
    road = RoadModel(road_heading=heading, origin=(3.0, -7.0))
    a = np.array(to_road_frame((x1, y1), road))
    b = np.array(to_road_frame((x2, y2), road))
    assert np.linalg.norm(a - b) == pytest.approx(math.hypot(x1 - x2, y1 - y2), abs=1e-9)


def test_in_bounds_examples():
    road = RoadModel(lane_count=3, lane_width=3.5, shoulder_width_left=1.0, shoulder_width_right=0.5)
    assert in_bounds((0.0, road.lane_center(0)), road)
    assert not in_bounds((0.0, road.lateral_max + 0.01), road)
    assert not in_bounds((0.0, road.lateral_min - 0.01), road)
    # closed set: the edge itself is on the road
    assert in_bounds((0.0, road.lateral_max), road)
    assert in_bounds((0.0, road.lateral_min), road)


@given(st.floats(-3, 14), coord)
def test_in_bounds_ignores_longitudinal_shift(d, shift):
    road = RoadModel(shoulder_width_right=1.0, shoulder_width_left=2.0, road_heading=0.3)
    p = road.from_road_frame(0.0, d)
    q = road.from_road_frame(shift, d)
    assert in_bounds(p, road) == in_bounds(q, road)


def test_lane_numbering_left_to_right():
    road = RoadModel(lane_count=4, lane_width=3.5)
    centres = [road.lane_center(i) for i in range(4)]
    assert centres == [12.25, 8.75, 5.25, 1.75]
    assert [road.nearest_lane(c) for c in centres] == [0, 1, 2, 3]


def test_lateral_projector_annihilates_tangent():
    road = RoadModel(road_heading=0.7)
    gamma = road.lateral_projector()
    assert np.allclose(gamma @ road.tangent, 0.0, atol=1e-15)
    assert np.allclose(gamma @ gamma, gamma)


@pytest.mark.parametrize("kwargs", [
    dict(lane_count=0), dict(lane_width=0.0), dict(speed_limit=-1.0), dict(shoulder_width_left=-0.1),
])
def test_road_rejects_bad_geometry(kwargs):
    with pytest.raises(ValueError):
        RoadModel(**kwargs)


def test_state_and_observation_validation():
    with pytest.raises(ValueError):
        VehicleState(0, 0, 0, -1.0)
    with pytest.raises(ValueError):
        AgentObservation(1, 0, 0, 0, 1.0, length=0.0)
    with pytest.raises(ValueError):
        FieldOfView(0.0)


@given(angle)
def test_wrap_angle_range(theta):
    w = wrap_angle(theta)
    assert 0.0 <= w < 2 * math.pi
    assert math.isclose(math.cos(w), math.cos(theta), abs_tol=1e-9)


def test_control_clamp():
    u = ControlInput(9.0, -2.0).clamped(ControlInput(-5, -0.5), ControlInput(3.5, 0.5))
    assert (u.accel, u.steer) == (3.5, -0.5)
