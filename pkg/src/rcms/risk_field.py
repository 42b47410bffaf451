"""Smooth situational risk field and its analytic gradient.

Each agent contributes a reciprocal-quadratic bump skewed by a sigmoid of
its velocity; the two corridor edges contribute lateral Gaussian walls.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .dynamics import PredictedTrack
from .risk_metrics import footprint_covariance
from .world import RoadModel


@dataclass(frozen=True)
class FieldParams:
    alpha_g: float = 1.0
    alpha_s: float = -0.02  # s/m^2; negative puts the heavy side ahead of a moving agent
    eta_tilde: float = 1.0
    beta_l: float = 1.5
    beta_w: float = 1.0
    gamma_r: float = 1.0
    alpha_r: float = 0.5

    def __post_init__(self):
        if not self.alpha_g > 0:
            raise ValueError("alpha_g must be > 0")
        if self.gamma_r < 0:
            raise ValueError("gamma_r must be >= 0")
        if not self.alpha_r > 0:
            raise ValueError("alpha_r must be > 0")
        if not (self.beta_l > 0 and self.beta_w > 0):
            raise ValueError("field covariance scales must be > 0")


@dataclass(frozen=True)
class FieldAgent:
    """One agent as seen by the field: position, velocity and shaped covariance."""

    position: np.ndarray
    velocity: np.ndarray
    cov: np.ndarray
    scale: float = 1.0

    @classmethod
    def build(cls, position, heading: float, speed: float, length: float, width: float,
              params: FieldParams, scale: float = 1.0) -> "FieldAgent":
        vel = speed * np.array([math.cos(heading), math.sin(heading)])
        cov = footprint_covariance(heading, length, width, params.beta_l, params.beta_w)
        return cls(np.asarray(position, dtype=float), vel, cov, scale)


def _sigmoid(z):
    return 0.5 + 0.5 * np.tanh(0.5 * z)


def agent_risk(rel: Sequence[float], velocity: Sequence[float], cov: np.ndarray,
               params: FieldParams, scale: float = 1.0) -> float:
    """Risk of one agent at relative displacement ``rel = p_agent - p_ego``."""
    dp = np.asarray(rel, dtype=float)
    q = float(dp @ np.linalg.solve(cov, dp))
    psi = params.eta_tilde * scale / (params.alpha_g + q)
    return float(psi * _sigmoid(params.alpha_s * float(dp @ np.asarray(velocity, dtype=float))))


def agent_terms(p0: np.ndarray, pos: np.ndarray, vel: np.ndarray, cov_inv: np.ndarray,
                eta: np.ndarray, params: FieldParams) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised agent risk over a horizon.

    p0: (H, 2) ego positions; pos, vel: (N, H, 2); cov_inv: (N, 2, 2);
    eta: (N,). Returns per-step risk (H,) and its gradient w.r.t. the ego
    position (H, 2).
    """
    n_steps = p0.shape[0]
    if pos.shape[0] == 0:
        return np.zeros(n_steps), np.zeros((n_steps, 2))
    dx = pos[:, :, 0] - p0[None, :, 0]
    dy = pos[:, :, 1] - p0[None, :, 1]
    m00 = cov_inv[:, 0, 0][:, None]
    m01 = cov_inv[:, 0, 1][:, None]
    m11 = cov_inv[:, 1, 1][:, None]
    mx = m00 * dx + m01 * dy
    my = m01 * dx + m11 * dy
    denom = params.alpha_g + dx * mx + dy * my
    psi = (params.eta_tilde * eta)[:, None] / denom
    vx, vy = vel[:, :, 0], vel[:, :, 1]
    sig = _sigmoid(params.alpha_s * (dx * vx + dy * vy))
    rho = psi * sig
    # derivative w.r.t. the displacement; the ego gradient is its negative
    c_m = 2.0 * rho / denom
    c_v = params.alpha_s * rho * (1.0 - sig)
    grad = np.empty((n_steps, 2))
    grad[:, 0] = (c_m * mx - c_v * vx).sum(axis=0)
    grad[:, 1] = (c_m * my - c_v * vy).sum(axis=0)
    return rho.sum(axis=0), grad


def road_terms(p0: np.ndarray, road: RoadModel, params: FieldParams) -> tuple[np.ndarray, np.ndarray]:
    """Lateral Gaussian walls at both corridor edges for ego positions (H, 2)."""
    n = road.normal
    d = (p0 - np.asarray(road.origin)[None, :]) @ n
    rho = np.zeros(p0.shape[0])
    coef = np.zeros(p0.shape[0])
    for b in road.boundaries:
        off = b - d
        e = params.gamma_r * np.exp(-params.alpha_r * off * off)
        rho += e
        coef += 2.0 * params.alpha_r * e * off
    return rho, coef[:, None] * n[None, :]


def road_risk(p0: Sequence[float], road: RoadModel, params: FieldParams) -> float:
    rho, _ = road_terms(np.asarray(p0, dtype=float).reshape(1, 2), road, params)
    return float(rho[0])


def _stack(agents: Sequence[FieldAgent]):
    if not agents:
        return np.zeros((0, 1, 2)), np.zeros((0, 1, 2)), np.zeros((0, 2, 2)), np.zeros(0)
    pos = np.array([a.position for a in agents], dtype=float)[:, None, :]
    vel = np.array([a.velocity for a in agents], dtype=float)[:, None, :]
    cov_inv = np.linalg.inv(np.array([a.cov for a in agents], dtype=float))
    eta = np.array([a.scale for a in agents], dtype=float)
    return pos, vel, cov_inv, eta


def total_risk(p0: Sequence[float], agents: Sequence[FieldAgent], road: RoadModel,
               params: FieldParams) -> float:
    p = np.asarray(p0, dtype=float).reshape(1, 2)
    rho_a, _ = agent_terms(p, *_stack(agents), params)
    rho_r, _ = road_terms(p, road, params)
    return float(rho_a[0] + rho_r[0])


def total_risk_gradient(p0: Sequence[float], agents: Sequence[FieldAgent], road: RoadModel,
                        params: FieldParams) -> np.ndarray:
    p = np.asarray(p0, dtype=float).reshape(1, 2)
    _, g_a = agent_terms(p, *_stack(agents), params)
    _, g_r = road_terms(p, road, params)
    return g_a[0] + g_r[0]


def agents_at_step(tracks: Iterable[PredictedTrack], j: int, params: FieldParams) -> list[FieldAgent]:
    """Field agents built from predicted tracks at horizon step ``j``."""
    out = []
    for tr in tracks:
        out.append(FieldAgent.build(tr.positions[j], tr.heading, float(tr.speeds[j]),
                                    tr.length, tr.width, params, tr.class_scale))
    return out


def sample_grid(xs: np.ndarray, ys: np.ndarray, agents: Sequence[FieldAgent], road: RoadModel,
                params: FieldParams) -> np.ndarray:
    """Evaluate the field on the grid ``xs`` x ``ys``; returns (len(ys), len(xs))."""
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    rho_a, _ = agent_terms(pts, *_broadcast(_stack(agents), len(pts)), params)
    rho_r, _ = road_terms(pts, road, params)
    return (rho_a + rho_r).reshape(gx.shape)


def _broadcast(stacked, n_pts):
    pos, vel, cov_inv, eta = stacked
    return (np.repeat(pos, n_pts, axis=1), np.repeat(vel, n_pts, axis=1), cov_inv, eta)


def write_field_csv(fh: IO[str], xs, ys, agents, road, params) -> int:
    """Write ``x,y,rho`` rows for contour plotting; returns the row count."""
    grid = sample_grid(np.asarray(xs), np.asarray(ys), agents, road, params)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["x", "y", "rho"])
    rows = 0
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            w.writerow([f"{x:.6g}", f"{y:.6g}", f"{grid[iy, ix]:.9g}"])
            rows += 1
    return rows
