"""Random scene generators shared by the property and acceptance tests."""
import math

import numpy as np

from rcms.activation import HysteresisConfig
from rcms.planner import PlannerConfig, control_penalty
from rcms.risk_field import FieldAgent, FieldParams
from rcms.risk_metrics import RiskAssessment
from rcms.world import AgentObservation, RoadModel, VehicleState

PLANNER = PlannerConfig(time_budget=None)
HYS = HysteresisConfig(kappa_a=0.6, kappa_d=0.2, tau_a=0.5, tau_d=0.3)


def random_scene(rng, params):
    road = RoadModel(lane_count=int(rng.integers(2, 5)), lane_width=3.5,
                     shoulder_width_left=rng.uniform(0, 2), shoulder_width_right=rng.uniform(0, 2),
                     road_heading=rng.uniform(0, 2 * math.pi), origin=tuple(rng.uniform(-20, 20, 2)))
    p0 = np.array(road.from_road_frame(rng.uniform(-10, 10), rng.uniform(road.lateral_min, road.lateral_max)))
    agents = [FieldAgent.build(p0 + rng.uniform(-15, 15, 2), rng.uniform(0, 2 * math.pi), rng.uniform(0, 30),
                               rng.uniform(2, 6), rng.uniform(1, 2.5), params, rng.uniform(0.5, 2))
              for _ in range(int(rng.integers(0, 5)))]
    return p0, agents, road


def random_case(rng, clamp=False, cfg=PLANNER):
    road = RoadModel(lane_count=int(rng.integers(2, 5)), lane_width=3.5,
                     shoulder_width_left=rng.uniform(0, 2), shoulder_width_right=rng.uniform(0, 2),
                     road_heading=rng.uniform(0, 2 * math.pi), origin=tuple(rng.uniform(-50, 50, 2)))
    s0, d0 = rng.uniform(-5, 5), rng.uniform(road.lateral_min, road.lateral_max)
    x0, y0 = road.from_road_frame(s0, d0)
    heading = (road.road_heading + rng.uniform(-0.3, 0.3)) % (2 * math.pi)
    initial = VehicleState(x0, y0, heading, rng.uniform(3, 6) if clamp else rng.uniform(10, 28))
    obs = []
    for i in range(int(rng.integers(0, 5))):
        x, y = road.from_road_frame(s0 + rng.uniform(-30, 60), rng.uniform(road.lateral_min, road.lateral_max))
        obs.append(AgentObservation(i, x, y, (road.road_heading + rng.uniform(-0.5, 0.5)) % (2 * math.pi),
                                    rng.uniform(0, 30), rng.uniform(-6, 2), rng.uniform(3, 6),
                                    rng.uniform(1.5, 2.5), rng.uniform(0.5, 2)))
    field = FieldParams(alpha_g=rng.uniform(0.1, 2), alpha_s=rng.uniform(-0.2, 0.2),
                        beta_l=rng.uniform(0.5, 3), beta_w=rng.uniform(0.5, 3))
    scale = 1.0 if clamp else 0.3
    u = np.column_stack([rng.uniform(-5, 3.5, cfg.horizon) * scale, rng.uniform(-0.5, 0.5, cfg.horizon) * scale])
    if clamp:
        u[:, 0] = -5.0 + rng.uniform(0, 0.5, cfg.horizon)
    r = control_penalty(RiskAssessment(rng.uniform(0, 1), rng.uniform(0, 2)), cfg, HYS)
    return initial, obs, road, field, r, u
