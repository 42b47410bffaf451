"""Receding-horizon crash mitigation planner.

Single shooting: the decision variables are the H control vectors; states
come from rolling the bicycle model forward, so every candidate is
dynamics-consistent. The objective sums the situational risk field along
the predicted horizon, a risk-scaled quadratic control penalty, and soft
hinges for leaving the corridor or exceeding the speed cap. A projected
limited-memory quasi-Newton method keeps every iterate inside the
actuation box.
"""
from __future__ import annotations

import logging
import math
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .activation import HysteresisConfig
from .dynamics import BicycleParams, PredictedTrack, predict_agent, rollout
from .risk_field import FieldParams, agent_terms
from .risk_metrics import RiskAssessment, footprint_covariance
from .world import AgentObservation, ControlInput, RoadModel, VehicleState

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int = 30
    sample_time: float = 0.1
    r_base: tuple[tuple[float, float], tuple[float, float]] = ((1e-3, 0.0), (0.0, 1e-2))
    max_iter: int = 60
    grad_tol: float = 1e-6
    time_budget: Optional[float] = 0.08  # seconds; None disables the wall-clock stop
    memory: int = 8
    corridor_weight: float = 100.0
    corridor_margin: float = 1.0  # keeps the body, not just the centre, on the road
    speed_weight: float = 1.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.sample_time > 0:
            raise ValueError("sample_time must be > 0")
        r = np.asarray(self.r_base, dtype=float)
        if r.shape != (2, 2) or not np.allclose(r, r.T) or np.any(np.linalg.eigvalsh(r) <= 0):
            raise ValueError("r_base must be a symmetric positive definite 2x2 matrix")
        if self.time_budget is not None and not self.time_budget > 0:
            raise ValueError("time_budget must be > 0")
        object.__setattr__(self, "r_base", tuple(tuple(float(v) for v in row) for row in r))

    @property
    def r_matrix(self) -> np.ndarray:
        return np.array(self.r_base)


@dataclass
class PlannedTrajectory:
    states: list[VehicleState]
    controls: list[ControlInput]
    objective: float = 0.0
    iterations: int = 0
    solve_time: float = 0.0
    status: str = "ok"

    @property
    def horizon(self) -> int:
        return len(self.controls)

    @property
    def budget_exhausted(self) -> bool:
        return self.status == "budget"

    def controls_array(self) -> np.ndarray:
        return np.array([[u.accel, u.steer] for u in self.controls]).reshape(-1, 2)

    def saturation(self, bike: BicycleParams) -> dict:
        u = self.controls_array()
        return {
            "accel_max": bool(np.any(u[:, 0] == bike.u_max.accel)),
            "accel_min": bool(np.any(u[:, 0] == bike.u_min.accel)),
            "steer": bool(np.any(np.abs(u[:, 1]) == bike.u_max.steer)),
        }


def control_penalty(assessment: RiskAssessment, cfg: PlannerConfig, hys: HysteresisConfig) -> np.ndarray:
    """``R_base / max(1, q)`` with q the threshold-normalised risk sum."""
    q = (2.0 * assessment.kappa / (hys.kappa_a + hys.kappa_d)
         + 2.0 * assessment.tau_risk / (hys.tau_a + hys.tau_d))
    return cfg.r_matrix / max(1.0, q)


def shift_warm_start(prev: PlannedTrajectory) -> list[ControlInput]:
    """Drop the executed control and repeat the last one."""
    if not prev.controls:
        return []
    return list(prev.controls[1:]) + [prev.controls[-1]]


class RiskObjective:
    """J(U) and dJ/dU for one planning instant.

    Controls are passed as an ``(H, 2)`` array of ``[accel, steer]``.
    """

    def __init__(self, initial: VehicleState, tracks: Sequence[PredictedTrack], road: RoadModel,
                 field_params: FieldParams, r: np.ndarray, bike: BicycleParams,
                 cfg: PlannerConfig):
        self.initial = initial
        self.road = road
        self.field = field_params
        self.r = np.asarray(r, dtype=float)
        self.bike = bike
        self.cfg = cfg
        h = cfg.horizon
        self.horizon = h
        for tr in tracks:
            if tr.horizon < h:
                raise ValueError(f"track {tr.agent_id} shorter than the horizon")
        # agent data at steps 1..H
        self.pos = np.array([tr.positions[1:h + 1] for tr in tracks], dtype=float).reshape(-1, h, 2)
        self.vel = np.array([tr.velocities()[1:h + 1] for tr in tracks], dtype=float).reshape(-1, h, 2)
        covs = [footprint_covariance(tr.heading, tr.length, tr.width, field_params.beta_l,
                                     field_params.beta_w) for tr in tracks]
        self.cov_inv = np.linalg.inv(np.array(covs).reshape(-1, 2, 2))
        self.eta = np.array([tr.class_scale for tr in tracks], dtype=float)
        self.d_lo = road.lateral_min + cfg.corridor_margin
        self.d_hi = road.lateral_max - cfg.corridor_margin
        self._normal = road.normal
        self._origin = np.asarray(road.origin, dtype=float)
        self._edges = np.asarray(road.boundaries, dtype=float)
        self.n_evals = 0

    def _speeds(self, accel: np.ndarray):
        """Clamped speed profile (H+1,), unclamped next speeds (H,), and the
        mask of steps where the clamp was inactive."""
        ts, cap = self.bike.sample_time, self.bike.speed_cap
        v0 = self.initial.speed
        v_raw = v0 + ts * np.cumsum(accel)
        if v_raw.min() >= 0.0 and v_raw.max() <= cap:
            return np.concatenate(([v0], v_raw)), v_raw, None
        v = np.empty(self.horizon + 1)
        v[0] = v0
        v_raw = np.empty(self.horizon)
        for j in range(self.horizon):
            vr = v[j] + ts * accel[j]
            v_raw[j] = vr
            v[j + 1] = min(max(vr, 0.0), cap)
        return v, v_raw, (v_raw >= 0.0) & (v_raw <= cap)

    def _rollout(self, u: np.ndarray):
        """States (H+1, 4) via cumulative sums (headings left unwrapped)."""
        b = self.bike
        ts = b.sample_time
        v, v_raw, free = self._speeds(u[:, 0])
        tan_d = np.tan(u[:, 1])
        theta = self.initial.heading + np.concatenate(([0.0], np.cumsum(ts * v[:-1] / b.wheelbase * tan_d)))
        c, s = np.cos(theta[:-1]), np.sin(theta[:-1])
        traj = np.empty((self.horizon + 1, 4))
        traj[:, 0] = self.initial.x + np.concatenate(([0.0], np.cumsum(ts * v[:-1] * c)))
        traj[:, 1] = self.initial.y + np.concatenate(([0.0], np.cumsum(ts * v[:-1] * s)))
        traj[:, 2] = theta
        traj[:, 3] = v
        self._cache = (c, s, tan_d, free)
        return traj, v_raw

    def _stage(self, traj: np.ndarray, v_raw: np.ndarray):
        p = traj[1:, :2]
        f = self.field
        rho_a, g_pos = agent_terms(p, self.pos, self.vel, self.cov_inv, self.eta, f)
        n = self._normal
        d = (p[:, 0] - self._origin[0]) * n[0] + (p[:, 1] - self._origin[1]) * n[1]
        # road walls, evaluated for both edges at once
        off = self._edges[:, None] - d[None, :]
        wall = f.gamma_r * np.exp(-f.alpha_r * off * off)
        dcoef = 2.0 * f.alpha_r * np.sum(wall * off, axis=0)
        over = np.maximum(d - self.d_hi, 0.0)
        under = np.maximum(self.d_lo - d, 0.0)
        wc = self.cfg.corridor_weight
        dcoef += 2.0 * wc * (over - under)
        excess = np.maximum(v_raw - self.bike.speed_cap, 0.0)
        cost = float(rho_a.sum() + wall.sum() + wc * (over @ over + under @ under)
                     + self.cfg.speed_weight * (excess @ excess))
        g_pos[:, 0] += dcoef * n[0]
        g_pos[:, 1] += dcoef * n[1]
        return cost, g_pos, 2.0 * self.cfg.speed_weight * excess

    def value(self, u: np.ndarray) -> float:
        u = np.asarray(u, dtype=float).reshape(self.horizon, 2)
        traj, v_raw = self._rollout(u)
        cost, _, _ = self._stage(traj, v_raw)
        self.n_evals += 1
        return cost + float(np.sum(u * (u @ self.r.T)))

    def value_and_grad(self, u: np.ndarray) -> tuple[float, np.ndarray]:
        """Objective and its exact gradient by a reverse (adjoint) sweep."""
        u = np.asarray(u, dtype=float).reshape(self.horizon, 2)
        traj, v_raw = self._rollout(u)
        c, s, tan_d, free = self._cache
        cost, g_pos, g_vraw = self._stage(traj, v_raw)
        r_sym = 0.5 * (self.r + self.r.T)
        ru = u @ r_sym
        total = cost + float(np.sum(u * ru))
        self.n_evals += 1

        b = self.bike
        ts, wb = b.sample_time, b.wheelbase
        v = traj[:-1, 3]
        # adjoints of x, y, theta at step j+1, for j = 0..H-1
        lx = np.cumsum(g_pos[::-1, 0])[::-1]
        ly = np.cumsum(g_pos[::-1, 1])[::-1]
        w = ts * v * (ly * c - lx * s)
        lth = np.cumsum(w[::-1])[::-1] - w
        coef_v = ts * (lx * c + ly * s) + lth * ts * tan_d / wb
        # dJ/d(unclamped speed at j+1)
        if free is None:
            gv = np.cumsum(coef_v[::-1])[::-1] - coef_v + np.cumsum(g_vraw[::-1])[::-1]
        else:
            gv = np.empty(self.horizon)
            acc = 0.0
            for j in range(self.horizon - 1, -1, -1):
                acc = (acc if free[j] else 0.0) + g_vraw[j]
                gv[j] = acc
                acc += coef_v[j]
        grad = 2.0 * ru
        grad[:, 0] += ts * gv
        grad[:, 1] += lth * ts * v / wb * (1.0 + tan_d * tan_d)
        return total, grad


def projected_lbfgs(fun: Callable[[np.ndarray], tuple[float, np.ndarray]], x0: np.ndarray,
                    lower: np.ndarray, upper: np.ndarray, max_iter: int = 60, tol: float = 1e-6,
                    memory: int = 8, deadline: Optional[float] = None,
                    c1: float = 1e-4, max_backtracks: int = 30):
    """Minimise ``fun`` over the box ``[lower, upper]``.

    Directions come from the two-loop recursion on the free variables;
    variables pinned at a bound with the gradient pushing outward are held.
    Steps are projected back onto the box and accepted by an Armijo rule
    that also demands no increase, so accepted objective values are
    non-increasing. Returns ``(x, f, iterations, status, history)``.
    """
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    f, g = fun(x)
    history = [f]
    pairs: deque = deque(maxlen=memory)
    status = "max_iter"
    it = 0
    while it < max_iter:
        if np.max(np.abs(np.clip(x - g, lower, upper) - x), initial=0.0) < tol:
            status = "converged"
            break
        if deadline is not None and time.perf_counter() >= deadline:
            status = "budget"
            break
        held = ((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0))
        gf = np.where(held, 0.0, g)
        d = _two_loop(gf, pairs)
        d[held] = 0.0
        slope = float(gf @ d)
        if not pairs or slope >= -1e-12 * float(gf @ gf):
            pairs.clear()
            d = -gf / max(1.0, float(np.max(np.abs(gf))))
        step = 1.0
        accepted = False
        for _ in range(max_backtracks):
            xn = np.clip(x + step * d, lower, upper)
            fn, gn = fun(xn)
            dec = float(g @ (xn - x))
            if fn <= f + c1 * min(dec, 0.0) and fn <= f:
                accepted = True
                break
            step *= 0.5
        it += 1
        if not accepted:
            status = "line_search"
            break
        s, yv = xn - x, gn - g
        sy = float(s @ yv)
        if sy > 1e-10 * float(np.sqrt((s @ s) * (yv @ yv))):
            pairs.append((s, yv, 1.0 / sy))
        x, f, g = xn, fn, gn
        history.append(f)
    return x, f, it, status, history


def _two_loop(g: np.ndarray, pairs) -> np.ndarray:
    if not pairs:
        return -g.copy()
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    s, y, _ = pairs[-1]
    q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def build_tracks(observations: Sequence[AgentObservation], cfg: PlannerConfig) -> list[PredictedTrack]:
    return [predict_agent(o, cfg.horizon, cfg.sample_time) for o in observations]


def solve(initial: VehicleState, observations: Sequence[AgentObservation], road: RoadModel,
          bike: BicycleParams, field_params: FieldParams, cfg: PlannerConfig,
          r: Optional[np.ndarray] = None,
          warm_start: Optional[Sequence[ControlInput]] = None) -> PlannedTrajectory:
    """Plan over the horizon from ``initial``.

    The search starts from whichever of the warm start and the zero sequence
    scores lower, so the result never scores worse than either. A plan is
    always returned; ``status == "budget"`` flags a wall-clock stop.
    """
    t0 = time.perf_counter()
    if not all(math.isfinite(v) for v in (initial.x, initial.y, initial.heading, initial.speed)):
        raise ValueError("initial state must be finite")
    if abs(bike.sample_time - cfg.sample_time) > 1e-12:
        raise ValueError("planner and dynamics sample times differ")
    h = cfg.horizon
    tracks = build_tracks(observations, cfg)
    prob = RiskObjective(initial, tracks, road, field_params,
                         cfg.r_matrix if r is None else r, bike, cfg)
    lower = np.tile(bike.lower, h)
    upper = np.tile(bike.upper, h)
    scale = np.maximum(upper - lower, 1e-12) * 0.5

    start = np.zeros(2 * h)
    f_start = prob.value(np.clip(start, lower, upper))
    if warm_start is not None:
        ws = np.array([[u.accel, u.steer] for u in warm_start], dtype=float).ravel()
        if ws.shape != start.shape:
            raise ValueError(f"warm start must have {h} controls")
        ws = np.clip(ws, lower, upper)
        f_ws = prob.value(ws)
        if f_ws <= f_start:
            start, f_start = ws, f_ws
    start = np.clip(start, lower, upper)

    def scaled(z):
        f, g = prob.value_and_grad(z * scale)
        return f, (g.ravel() * scale)

    deadline = None if cfg.time_budget is None else t0 + cfg.time_budget
    z, f, iters, status, _ = projected_lbfgs(
        scaled, start / scale, lower / scale, upper / scale,
        max_iter=cfg.max_iter, tol=cfg.grad_tol, memory=cfg.memory, deadline=deadline,
    )
    u = np.clip(z * scale, lower, upper).reshape(h, 2)
    # snap values within rounding of a bound onto it so saturation is exact
    lo2, hi2 = lower.reshape(h, 2), upper.reshape(h, 2)
    u = np.where(np.abs(u - lo2) <= 1e-12, lo2, u)
    u = np.where(np.abs(u - hi2) <= 1e-12, hi2, u)
    controls = [ControlInput(float(a), float(d)) for a, d in u]
    states = rollout(initial, controls, bike)
    objective = prob.value(u)
    if status == "budget":
        log.warning("planner hit its %.3fs budget after %d iterations", cfg.time_budget, iters)
    return PlannedTrajectory(states, controls, objective, iters, time.perf_counter() - t0, status)


class RcmsPlanner:
    """Owns the warm start between consecutive ticks."""

    def __init__(self, road: RoadModel, bike: BicycleParams, field_params: FieldParams,
                 cfg: PlannerConfig, hys: HysteresisConfig):
        self.road = road
        self.bike = bike
        self.field = field_params
        self.cfg = cfg
        self.hys = hys
        self.previous: Optional[PlannedTrajectory] = None

    def reset(self) -> None:
        self.previous = None

    def plan(self, ego: VehicleState, observations: Sequence[AgentObservation],
             assessment: RiskAssessment) -> PlannedTrajectory:
        r = control_penalty(assessment, self.cfg, self.hys)
        warm = shift_warm_start(self.previous) if self.previous is not None else None
        traj = solve(ego, observations, self.road, self.bike, self.field, self.cfg, r, warm)
        self.previous = traj
        return traj
