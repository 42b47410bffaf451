"""Ego kinematic bicycle model and constant-acceleration agent prediction."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .world import U_MAX, U_MIN, AgentObservation, ControlInput, VehicleState, wrap_angle


@dataclass(frozen=True)
class BicycleParams:
    wheelbase: float = 2.7
    sample_time: float = 0.1
    speed_cap: float = 60.0
    u_min: ControlInput = field(default_factory=lambda: U_MIN)
    u_max: ControlInput = field(default_factory=lambda: U_MAX)

    def __post_init__(self):
        if not self.wheelbase > 0:
            raise ValueError("wheelbase must be > 0")
        if not self.sample_time > 0:
            raise ValueError("sample_time must be > 0")
        if not self.speed_cap > 0:
            raise ValueError("speed_cap must be > 0")
        if self.u_min.accel > self.u_max.accel or self.u_min.steer > self.u_max.steer:
            raise ValueError("u_min must not exceed u_max")

    @classmethod
    def for_speed_limit(cls, speed_limit: float, **kw) -> "BicycleParams":
        """Parameters whose speed cap is twice the posted limit."""
        return cls(speed_cap=2.0 * speed_limit, **kw)

    @property
    def lower(self) -> np.ndarray:
        return self.u_min.as_array()

    @property
    def upper(self) -> np.ndarray:
        return self.u_max.as_array()


def euler_step(x, y, theta, v, accel, steer, ts, wheelbase, speed_cap):
    """One explicit Euler step on raw floats.

    Returns ``(x, y, theta, v, v_unclamped)``; ``theta`` is wrapped and ``v``
    clamped to [0, speed_cap]. Shared by :func:`step_bicycle` and the planner
    so both produce bit-identical rollouts.
    """
    x_n = x + ts * (v * math.cos(theta))
    y_n = y + ts * (v * math.sin(theta))
    th_n = wrap_angle(theta + ts * v / wheelbase * math.tan(steer))
    v_raw = v + ts * accel
    v_n = min(max(v_raw, 0.0), speed_cap)
    return x_n, y_n, th_n, v_n, v_raw


def step_bicycle(state: VehicleState, u: ControlInput, params: BicycleParams) -> VehicleState:
    vals = (state.x, state.y, state.heading, state.speed, u.accel, u.steer)
    if not all(math.isfinite(v) for v in vals):
        raise ValueError(f"non-finite state or control: {vals}")
    if not (
        params.u_min.accel <= u.accel <= params.u_max.accel
        and params.u_min.steer <= u.steer <= params.u_max.steer
    ):
        raise ValueError(f"control {u} outside actuation limits")
    x, y, th, v, _ = euler_step(
        state.x, state.y, state.heading, state.speed, u.accel, u.steer,
        params.sample_time, params.wheelbase, params.speed_cap,
    )
    return VehicleState(x, y, th, v)


def rollout(
    initial: VehicleState, controls: Sequence[ControlInput], params: BicycleParams
) -> list[VehicleState]:
    states = [initial]
    for u in controls:
        states.append(step_bicycle(states[-1], u, params))
    return states


@dataclass(frozen=True)
class PredictedTrack:
    """Predicted agent positions ``(H+1, 2)`` and speeds ``(H+1,)``."""

    agent_id: int
    positions: np.ndarray
    speeds: np.ndarray
    heading: float
    length: float
    width: float
    class_scale: float = 1.0

    @property
    def horizon(self) -> int:
        return len(self.speeds) - 1

    def velocities(self) -> np.ndarray:
        """Heading-aligned velocity vectors at each step, ``(H+1, 2)``."""
        direction = np.array([math.cos(self.heading), math.sin(self.heading)])
        return self.speeds[:, None] * direction[None, :]


def predict_agent(obs: AgentObservation, horizon: int, ts: float) -> PredictedTrack:
    """Constant heading / constant acceleration forecast.

    Positions integrate the current-step speed. Speed never goes below zero:
    a braking agent comes to rest and stays there.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    c, s = math.cos(obs.heading), math.sin(obs.heading)
    pos = np.empty((horizon + 1, 2))
    spd = np.empty(horizon + 1)
    x, y, v = obs.x, obs.y, obs.speed
    pos[0] = x, y
    spd[0] = v
    for j in range(horizon):
        x = x + ts * v * c
        y = y + ts * v * s
        v = max(v + ts * obs.accel, 0.0)
        pos[j + 1] = x, y
        spd[j + 1] = v
    return PredictedTrack(obs.id, pos, spd, obs.heading, obs.length, obs.width, obs.class_scale)
