"""Road geometry, vehicle/agent records and the field-of-view filter.

Conventions
-----------
The road is straight. Its frame has the longitudinal axis ``s`` along
``road_heading`` and the lateral axis ``d`` pointing to the left of the
direction of travel. The right corridor boundary (outer edge of the
right-most lane) sits at ``d = 0``. Lanes are indexed 0..n-1 from the left,
so lane 0 is the fast (left-most) lane.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to [0, 2*pi)."""
    w = math.fmod(theta, TWO_PI)
    if w < 0.0:
        w += TWO_PI
    # fmod of a tiny negative number can round back up to 2*pi
    if w >= TWO_PI:
        w = 0.0
    return w


def wrap_pi(theta: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return (theta + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class RoadModel:
    lane_count: int = 3
    lane_width: float = 3.5
    shoulder_width_left: float = 0.0
    shoulder_width_right: float = 0.0
    speed_limit: float = 30.0
    road_heading: float = 0.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if int(self.lane_count) != self.lane_count or self.lane_count < 1:
            raise ValueError(f"lane_count must be a positive integer, got {self.lane_count}")
        if not self.lane_width > 0:
            raise ValueError(f"lane_width must be > 0, got {self.lane_width}")
        if not self.speed_limit > 0:
            raise ValueError(f"speed_limit must be > 0, got {self.speed_limit}")
        if self.shoulder_width_left < 0 or self.shoulder_width_right < 0:
            raise ValueError("shoulder widths must be >= 0")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def tangent(self) -> np.ndarray:
        return np.array([math.cos(self.road_heading), math.sin(self.road_heading)])

    @property
    def normal(self) -> np.ndarray:
        """Unit lateral axis (left of travel)."""
        return np.array([-math.sin(self.road_heading), math.cos(self.road_heading)])

    @property
    def lateral_min(self) -> float:
        return -self.shoulder_width_right

    @property
    def lateral_max(self) -> float:
        return self.lane_count * self.lane_width + self.shoulder_width_left

    @property
    def boundaries(self) -> tuple[float, float]:
        """Lateral coordinates of the (right, left) corridor edges."""
        return self.lateral_min, self.lateral_max

    def lane_center(self, lane: int) -> float:
        """Lateral coordinate of the center of ``lane`` (0 = left-most)."""
        if not 0 <= lane < self.lane_count:
            raise ValueError(f"lane {lane} outside 0..{self.lane_count - 1}")
        return (self.lane_count - lane - 0.5) * self.lane_width

    def nearest_lane(self, lateral: float) -> int:
        lane = self.lane_count - 1 - math.floor(lateral / self.lane_width)
        return min(max(int(lane), 0), self.lane_count - 1)

    def lateral_projector(self) -> np.ndarray:
        """Rank-1 projector onto the road normal (annihilates the tangent)."""
        n = self.normal
        return np.outer(n, n)

    def from_road_frame(self, s: float, d: float) -> tuple[float, float]:
        c, sn = math.cos(self.road_heading), math.sin(self.road_heading)
        return (self.origin[0] + c * s - sn * d, self.origin[1] + sn * s + c * d)


@dataclass(frozen=True)
class FieldOfView:
    """Circular sensing region centred on the ego."""

    range: float = 100.0

    def __post_init__(self):
        if not self.range > 0:
            raise ValueError(f"field of view range must be > 0, got {self.range}")


@dataclass(frozen=True)
class AgentObservation:
    id: int
    x: float
    y: float
    heading: float
    speed: float
    accel: float = 0.0
    length: float = 4.5
    width: float = 2.0
    class_scale: float = 1.0

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise ValueError(f"agent {self.id}: length and width must be > 0")
        if self.speed < 0:
            raise ValueError(f"agent {self.id}: speed must be >= 0, got {self.speed}")
        if not self.class_scale > 0:
            raise ValueError(f"agent {self.id}: class_scale must be > 0")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def velocity(self) -> np.ndarray:
        return self.speed * np.array([math.cos(self.heading), math.sin(self.heading)])


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    heading: float
    speed: float

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError(f"speed must be >= 0, got {self.speed}")
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def velocity(self) -> np.ndarray:
        return self.speed * np.array([math.cos(self.heading), math.sin(self.heading)])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.heading, self.speed])


@dataclass(frozen=True)
class Footprint:
    length: float = 4.5
    width: float = 2.0


@dataclass(frozen=True)
class ControlInput:
    accel: float = 0.0
    steer: float = 0.0

    def clamped(self, u_min: "ControlInput", u_max: "ControlInput") -> "ControlInput":
        return replace(
            self,
            accel=min(max(self.accel, u_min.accel), u_max.accel),
            steer=min(max(self.steer, u_min.steer), u_max.steer),
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.accel, self.steer])


# Actuation limits from the evaluation setup: [accel, steer].
U_MIN = ControlInput(-5.0, -0.5)
U_MAX = ControlInput(3.5, 0.5)


def visible_agents(
    ego: VehicleState, agents: Iterable[AgentObservation], fov: FieldOfView
) -> list[AgentObservation]:
    """Agents whose centre lies inside the ego's field of view, sorted by id."""
    seen = [a for a in agents if math.hypot(a.x - ego.x, a.y - ego.y) <= fov.range]
    return sorted(seen, key=lambda a: a.id)


def to_road_frame(p: Sequence[float], road: RoadModel) -> tuple[float, float]:
    dx = p[0] - road.origin[0]
    dy = p[1] - road.origin[1]
    c, sn = math.cos(road.road_heading), math.sin(road.road_heading)
    return (c * dx + sn * dy, -sn * dx + c * dy)


def in_bounds(p: Sequence[float], road: RoadModel) -> bool:
    """Closed-set membership in the drivable corridor (shoulders included)."""
    _, d = to_road_frame(p, road)
    return road.lateral_min <= d <= road.lateral_max
