"""Instantaneous (Gaussian overlap) and predictive (time-to-closest-encounter) risk."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .world import AgentObservation, Footprint, VehicleState


@dataclass(frozen=True)
class RiskParams:
    beta_l: float = 1.0
    beta_w: float = 0.5
    epsilon_prox: float = 0.5

    def __post_init__(self):
        if not (self.beta_l > 0 and self.beta_w > 0):
            raise ValueError("beta_l and beta_w must be > 0")
        if self.epsilon_prox < 0:
            raise ValueError("epsilon_prox must be >= 0")


@dataclass(frozen=True)
class AgentRisk:
    id: int
    kappa: float
    ttce: float  # seconds, math.inf when the gate fails


@dataclass(frozen=True)
class RiskAssessment:
    kappa: float = 0.0
    tau_risk: float = 0.0  # max reciprocal TTCE, 1/s
    per_agent: tuple[AgentRisk, ...] = field(default_factory=tuple)


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def footprint_covariance(theta: float, length: float, width: float,
                         beta_l: float, beta_w: float) -> np.ndarray:
    """Heading-rotated diagonal covariance ``R diag(beta_l*L, beta_w*W) R^T``."""
    if not (length > 0 and width > 0):
        raise ValueError("length and width must be > 0")
    rot = rotation(theta)
    cov = rot @ np.diag([beta_l * length, beta_w * width]) @ rot.T
    return 0.5 * (cov + cov.T)


def _check_pd(cov: np.ndarray, name: str) -> None:
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (2, 2) or not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
        raise ValueError(f"{name} must be a symmetric 2x2 matrix")
    if cov[0, 0] <= 0 or np.linalg.det(cov) <= 0:
        raise ValueError(f"{name} is not positive definite")


def pairwise_overlap_risk(p0, cov0, pi, covi, scale: float = 1.0) -> float:
    """Normalised product-sum of two footprint Gaussians.

    The integral of N(p0, cov0) * N(pi, covi) over the plane, divided by its
    value when the means coincide, reduces to
    ``exp(-0.5 * dp^T (cov0 + covi)^-1 dp)``; ``scale`` is the per-class
    multiplier so the result lies in (0, scale].
    """
    _check_pd(cov0, "cov0")
    _check_pd(covi, "covi")
    dp = np.asarray(pi, dtype=float) - np.asarray(p0, dtype=float)
    m = np.linalg.solve(np.asarray(cov0) + np.asarray(covi), dp)
    return float(scale * math.exp(-0.5 * float(dp @ m)))


def instantaneous_risk(
    ego: VehicleState, ego_fp: Footprint, agents: Sequence[AgentObservation], params: RiskParams
) -> tuple[float, list[tuple[int, float]]]:
    cov0 = footprint_covariance(ego.heading, ego_fp.length, ego_fp.width, params.beta_l, params.beta_w)
    p0 = ego.position
    out = []
    for a in agents:
        covi = footprint_covariance(a.heading, a.length, a.width, params.beta_l, params.beta_w)
        out.append((a.id, pairwise_overlap_risk(p0, cov0, a.position, covi, a.class_scale)))
    kappa = max((k for _, k in out), default=0.0)
    return kappa, out


def _relative(ego: VehicleState, agent: AgentObservation) -> tuple[float, float, float, float]:
    px, py = agent.x - ego.x, agent.y - ego.y
    vx = agent.speed * math.cos(agent.heading) - ego.speed * math.cos(ego.heading)
    vy = agent.speed * math.sin(agent.heading) - ego.speed * math.sin(ego.heading)
    return px, py, vx, vy


def ttce_gate(ego: VehicleState, ego_fp: Footprint, agent: AgentObservation, epsilon: float) -> bool:
    """True when the pair is closing and passes within ``L0 + Li + epsilon``."""
    px, py, vx, vy = _relative(ego, agent)
    speed = math.hypot(vx, vy)
    if speed == 0.0:
        return False
    if px * vx + py * vy >= 0.0:
        return False
    miss = abs(px * vy - py * vx) / speed
    return miss < ego_fp.length + agent.length + epsilon


def ttce(ego: VehicleState, ego_fp: Footprint, agent: AgentObservation, epsilon: float) -> float:
    """Time until the relative distance is minimal; ``inf`` if the gate fails.

    Sign is chosen so an approaching pair gives a positive time.
    """
    if not ttce_gate(ego, ego_fp, agent, epsilon):
        return math.inf
    px, py, vx, vy = _relative(ego, agent)
    return -(px * vx + py * vy) / (vx * vx + vy * vy)


def predictive_risk(
    ego: VehicleState, ego_fp: Footprint, agents: Sequence[AgentObservation], params: RiskParams
) -> tuple[float, list[tuple[int, float]]]:
    out = [(a.id, ttce(ego, ego_fp, a, params.epsilon_prox)) for a in agents]
    tau_risk = max((1.0 / t for _, t in out), default=0.0)
    return tau_risk, out


def assess(
    ego: VehicleState, ego_fp: Footprint, agents: Sequence[AgentObservation], params: RiskParams
) -> RiskAssessment:
    """Both metrics plus the per-agent breakdown for one tick."""
    kappa, per_k = instantaneous_risk(ego, ego_fp, agents, params)
    tau_risk, per_t = predictive_risk(ego, ego_fp, agents, params)
    per_agent = tuple(AgentRisk(i, k, t) for (i, k), (_, t) in zip(per_k, per_t))
    return RiskAssessment(kappa=kappa, tau_risk=tau_risk, per_agent=per_agent)
