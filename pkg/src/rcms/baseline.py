"""Minimal nominal motion planner: lane keeping, cruise control and a
time-to-collision brake for a leader in the same lane. It has no evasive
steering on purpose."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .dynamics import BicycleParams, euler_step, rollout
from .planner import PlannedTrajectory
from .world import AgentObservation, ControlInput, RoadModel, VehicleState, to_road_frame, wrap_pi


@dataclass(frozen=True)
class BaselineConfig:
    target_lane: Optional[int] = None  # None keeps the lane the ego is in
    cruise_speed: float = 25.0
    k_lateral: float = 0.08   # rad/m
    k_heading: float = 1.0    # rad/rad; k_heading^2 >= 4*k_lateral*wheelbase keeps it overdamped
    k_speed: float = 0.5      # 1/s
    brake_decel: float = 3.0
    ttc_brake: float = 1.5    # s
    horizon: int = 30

    def __post_init__(self):
        if not self.cruise_speed > 0:
            raise ValueError("cruise_speed must be > 0")
        if not (self.k_lateral > 0 and self.k_heading > 0 and self.k_speed > 0):
            raise ValueError("baseline gains must be > 0")
        if self.brake_decel < 0 or self.ttc_brake < 0:
            raise ValueError("brake_decel and ttc_brake must be >= 0")


def _leader_ttc(ego: VehicleState, s_ego: float, d_ego: float, observations, road: RoadModel,
                ego_length: float) -> float:
    """TTC to the closest slower vehicle overlapping the ego's lane ahead."""
    best = math.inf
    v_long = ego.speed * math.cos(ego.heading - road.road_heading)
    for a in observations:
        s, d = to_road_frame((a.x, a.y), road)
        if s <= s_ego or abs(d - d_ego) > 0.5 * road.lane_width + 0.5 * a.width:
            continue
        gap = s - s_ego - 0.5 * (a.length + ego_length)
        closing = v_long - a.speed * math.cos(a.heading - road.road_heading)
        if closing <= 0:
            continue
        best = min(best, max(gap, 0.0) / closing)
    return best


def mp_control(ego: VehicleState, observations: Sequence[AgentObservation], road: RoadModel,
               cfg: BaselineConfig, bike: BicycleParams, ego_length: float = 4.5) -> ControlInput:
    s, d = to_road_frame((ego.x, ego.y), road)
    lane = road.nearest_lane(d) if cfg.target_lane is None else cfg.target_lane
    err = d - road.lane_center(lane)
    head_err = wrap_pi(ego.heading - road.road_heading)
    steer = -(cfg.k_lateral * err + cfg.k_heading * head_err)
    accel = cfg.k_speed * (cfg.cruise_speed - ego.speed)
    if _leader_ttc(ego, s, d, observations, road, ego_length) < cfg.ttc_brake:
        accel = min(accel, -cfg.brake_decel)
    return ControlInput(accel, steer).clamped(bike.u_min, bike.u_max)


def mp_plan(ego: VehicleState, observations: Sequence[AgentObservation], road: RoadModel,
            cfg: BaselineConfig, bike: BicycleParams, ego_length: float = 4.5) -> PlannedTrajectory:
    """Roll the feedback law forward over the horizon (agents held fixed)."""
    controls = []
    state = ego
    for _ in range(cfg.horizon):
        u = mp_control(state, observations, road, cfg, bike, ego_length)
        controls.append(u)
        x, y, th, v, _ = euler_step(state.x, state.y, state.heading, state.speed, u.accel, u.steer,
                                    bike.sample_time, bike.wheelbase, bike.speed_cap)
        state = VehicleState(x, y, th, v)
    return PlannedTrajectory(rollout(ego, controls, bike), controls, status="baseline")


def mp_emergency_brake(ego: VehicleState, observations: Sequence[AgentObservation],
                       cfg: BaselineConfig, bike: BicycleParams) -> PlannedTrajectory:
    """Full braking with the wheel straight."""
    controls = [ControlInput(bike.u_min.accel, 0.0)] * cfg.horizon
    return PlannedTrajectory(rollout(ego, controls, bike), controls, status="brake")
