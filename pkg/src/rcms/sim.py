"""Deterministic closed-loop simulator.

Each tick: advance scripted agents to the tick time, observe, assess risk,
update the activation machine, plan with the selected planner, apply the
first control and integrate the ego.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace
from typing import IO, Callable, Optional, Sequence

import numpy as np

from .activation import ActivationMachine, Mode
from .baseline import mp_emergency_brake, mp_plan
from .dynamics import step_bicycle
from .planner import RcmsPlanner
from .risk_metrics import assess
from .scenario import AgentSpec, ScenarioSpec
from .world import AgentObservation, Footprint, VehicleState, visible_agents


class PlannerSelection(str, enum.Enum):
    SWITCHED = "switched"
    BASELINE_ONLY = "baseline_only"
    BRAKE_ONLY = "brake_only"
    RCMS_ONLY = "rcms_only"


EGO_ID = 0


# -- collision geometry ------------------------------------------------------

def rectangle_corners(x: float, y: float, heading: float, length: float, width: float) -> np.ndarray:
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([x, y])


def _axes(corners: np.ndarray) -> list[np.ndarray]:
    out = []
    for k in range(2):
        e = corners[k + 1] - corners[k]
        out.append(np.array([-e[1], e[0]]))
    return out


def rectangles_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two rectangles given as (4, 2) corner arrays.

    Rectangles are closed: touching edges count as overlap.
    """
    for axis in _axes(a) + _axes(b):
        pa, pb = a @ axis, b @ axis
        if pa.max() < pb.min() or pb.max() < pa.min():
            return False
    return True


def _point_segment(p, a, b) -> float:
    ab = b - a
    t = float(np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0))
    return float(np.hypot(*(a + t * ab - p)))


def rectangle_clearance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean gap between two rectangles, 0 when they overlap."""
    if rectangles_overlap(a, b):
        return 0.0
    best = math.inf
    for p_set, q_set in ((a, b), (b, a)):
        for p in p_set:
            for k in range(4):
                best = min(best, _point_segment(p, q_set[k], q_set[(k + 1) % 4]))
    return best


@dataclass(frozen=True)
class Body:
    id: int
    x: float
    y: float
    heading: float
    length: float
    width: float

    def corners(self) -> np.ndarray:
        return rectangle_corners(self.x, self.y, self.heading, self.length, self.width)


def detect_collision(bodies: Sequence[Body]) -> Optional[tuple[int, int]]:
    """First overlapping pair in input order, or None."""
    corners = [b.corners() for b in bodies]
    for i in range(len(bodies)):
        for j in range(i + 1, len(bodies)):
            # cheap reject on bounding circles
            ri = 0.5 * math.hypot(bodies[i].length, bodies[i].width)
            rj = 0.5 * math.hypot(bodies[j].length, bodies[j].width)
            if math.hypot(bodies[i].x - bodies[j].x, bodies[i].y - bodies[j].y) > ri + rj:
                continue
            if rectangles_overlap(corners[i], corners[j]):
                return bodies[i].id, bodies[j].id
    return None


# -- scripted agents ---------------------------------------------------------

class ScriptedAgent:
    """Road-frame kinematics driven by timed directives; ignores the ego."""

    def __init__(self, spec: AgentSpec, scenario: ScenarioSpec):
        self.spec = spec
        self.road = scenario.road
        self.s, self.d = spec.s, spec.d
        self.vs, self.vd = spec.speed, spec.lateral_speed
        self.long_target: Optional[float] = None
        self.long_rate = 0.0
        self.lat_target: Optional[float] = None
        self.lat_rate = 0.0
        self._next = 0

    def apply_directives(self, t: float) -> None:
        script = self.spec.script
        while self._next < len(script) and script[self._next].at <= t + 1e-9:
            dv = script[self._next]
            if dv.kind == "hold":
                self.vs = dv.speed
                self.long_target = None
            elif dv.kind == "brake_to":
                self.long_target = dv.speed
                self.long_rate = dv.decel
            elif dv.kind == "swerve_to":
                self.lat_target = dv.lateral
                self.lat_rate = dv.rate
            elif dv.kind == "lateral_crossing":
                self.lat_target = None
                self.vd = dv.velocity
            self._next += 1
        if self.lat_target is not None:
            gap = self.lat_target - self.d
            self.vd = 0.0 if abs(gap) < 1e-12 else math.copysign(self.lat_rate, gap)

    @property
    def long_accel(self) -> float:
        if self.long_target is None or abs(self.long_target - self.vs) < 1e-12:
            return 0.0
        return math.copysign(self.long_rate, self.long_target - self.vs)

    def advance(self, dt: float) -> None:
        vs0 = self.vs
        if self.long_target is not None:
            a = self.long_accel
            vs1 = vs0 + a * dt
            if (a < 0 and vs1 < self.long_target) or (a > 0 and vs1 > self.long_target):
                vs1 = self.long_target
            self.vs = max(vs1, 0.0)
        self.s += 0.5 * (vs0 + self.vs) * dt
        if self.lat_target is not None:
            step = self.lat_rate * dt
            gap = self.lat_target - self.d
            self.d = self.lat_target if abs(gap) <= step else self.d + math.copysign(step, gap)
        else:
            self.d += self.vd * dt

    def observation(self) -> AgentObservation:
        x, y = self.road.from_road_frame(self.s, self.d)
        speed = math.hypot(self.vs, self.vd)
        heading = self.road.road_heading + (math.atan2(self.vd, self.vs) if speed > 0 else 0.0)
        accel = self.long_accel * self.vs / speed if speed > 0 else 0.0
        return AgentObservation(self.spec.id, x, y, heading, speed, accel,
                                self.spec.length, self.spec.width, self.spec.class_scale)


# -- run records -------------------------------------------------------------

@dataclass
class TickRecord:
    t: float
    ego: VehicleState
    mode: Mode
    kappa: float
    tau_risk: float
    accel: float
    steer: float
    solve_ms: Optional[float]
    agents: list[AgentObservation]
    planner: str
    iterations: int = 0
    objective: Optional[float] = None
    status: str = ""
    saturated: dict = field(default_factory=dict)


@dataclass
class RunRecord:
    scenario: str
    selection: PlannerSelection
    sample_time: float
    rows: list[TickRecord]
    summary: dict


@dataclass(frozen=True)
class RunOptions:
    """``deterministic`` drops the planner's wall-clock stop so runs replay
    exactly; ``record_timing`` writes solve times into the trace."""

    deterministic: bool = True
    record_timing: bool = False
    # called as hook(t, ego, observations, assessment, planner) before each RCMS solve
    rcms_hook: Optional[Callable] = None


def _clean_time(t: float) -> float:
    return round(t, 9) + 0.0


def run(spec: ScenarioSpec, selection: PlannerSelection | str = PlannerSelection.SWITCHED,
        options: RunOptions = RunOptions()) -> RunRecord:
    selection = PlannerSelection(selection)
    dt = spec.sample_time
    n_ticks = int(round(spec.duration / dt))
    bike = spec.bicycle()
    planner_cfg = spec.planner
    if options.deterministic:
        planner_cfg = replace(planner_cfg, time_budget=None)
    rcms = RcmsPlanner(spec.road, bike, spec.field, planner_cfg, spec.hysteresis)
    machine = ActivationMachine(spec.hysteresis)
    ego_fp = Footprint(spec.ego.length, spec.ego.width)
    agents = [ScriptedAgent(a, spec) for a in spec.agents]
    ego = spec.ego_state()

    rows: list[TickRecord] = []
    collision = None
    min_clear = (math.inf, None, None)
    solve_times: list[float] = []
    prev_mode = machine.mode

    for k in range(n_ticks + 1):
        t = _clean_time(spec.t_start + k * dt)
        for ag in agents:
            ag.apply_directives(t)
        all_obs = [ag.observation() for ag in agents]

        bodies = [Body(EGO_ID, ego.x, ego.y, ego.heading, ego_fp.length, ego_fp.width)]
        bodies += [Body(o.id, o.x, o.y, o.heading, o.length, o.width) for o in all_obs]
        hit = detect_collision(bodies)
        if hit is not None and collision is None:
            collision = (hit, t)
        ego_corners = bodies[0].corners()
        for b in bodies[1:]:
            gap = rectangle_clearance(ego_corners, b.corners())
            if gap < min_clear[0]:
                min_clear = (gap, b.id, t)

        seen = visible_agents(ego, all_obs, spec.fov)
        risk = assess(ego, ego_fp, seen, spec.risk)
        mode = machine.update(risk, k)

        use_rcms = selection is PlannerSelection.RCMS_ONLY or (
            selection is PlannerSelection.SWITCHED and mode is Mode.RCMS)
        if use_rcms:
            if selection is PlannerSelection.SWITCHED and prev_mode is not Mode.RCMS:
                rcms.reset()
            if options.rcms_hook is not None:
                options.rcms_hook(t, ego, seen, risk, rcms)
            plan = rcms.plan(ego, seen, risk)
            solve_times.append(plan.solve_time)
            planner_name = "rcms"
        elif selection is PlannerSelection.BRAKE_ONLY and mode is Mode.RCMS:
            plan = mp_emergency_brake(ego, seen, spec.baseline, bike)
            planner_name = "brake"
        else:
            plan = mp_plan(ego, seen, spec.road, spec.baseline, bike, ego_fp.length)
            planner_name = "mp"
        prev_mode = mode
        u = plan.controls[0]
        rows.append(TickRecord(
            t=t, ego=ego, mode=mode, kappa=risk.kappa, tau_risk=risk.tau_risk,
            accel=u.accel, steer=u.steer,
            solve_ms=plan.solve_time * 1e3 if (use_rcms and options.record_timing) else None,
            agents=all_obs, planner=planner_name, iterations=plan.iterations,
            objective=plan.objective if use_rcms else None, status=plan.status,
            saturated=plan.saturation(bike) if use_rcms else {},
        ))
        if k == n_ticks:
            break
        ego = step_bicycle(ego, u, bike)
        for ag in agents:
            ag.advance(dt)

    transitions = [(_clean_time(spec.t_start + k * dt), m.value) for k, m in machine.transitions]
    summary = {
        "scenario": spec.name,
        "planner": selection.value,
        "collision": collision is not None,
        "collision_pair": list(collision[0]) if collision else None,
        "collision_time": collision[1] if collision else None,
        "min_clearance": None if math.isinf(min_clear[0]) else min_clear[0],
        "min_clearance_agent": min_clear[1],
        "min_clearance_time": min_clear[2],
        "activations": [t for t, m in transitions if m == Mode.RCMS.value],
        "deactivations": [t for t, m in transitions if m == Mode.MP.value],
        "rcms_ticks": sum(1 for r in rows if r.planner == "rcms"),
        "ticks": len(rows),
        "sample_time": dt,
    }
    if options.record_timing:
        # wall-clock figures stay out of the default summary so it is reproducible
        summary["solve_ms_mean"] = float(np.mean(solve_times) * 1e3) if solve_times else None
        summary["solve_ms_max"] = float(np.max(solve_times) * 1e3) if solve_times else None
    return RunRecord(spec.name, selection, dt, rows, summary)


# -- trace output ------------------------------------------------------------

BASE_COLUMNS = ["t", "x", "y", "theta", "v", "mode", "kappa", "tau_risk",
                "a_cmd", "delta_cmd", "solve_ms"]


def _f(v: float) -> str:
    return repr(float(v))


def trace_header(agent_ids: Sequence[int]) -> list[str]:
    cols = list(BASE_COLUMNS)
    for n in range(len(agent_ids)):
        cols += [f"agent{n}_id", f"agent{n}_x", f"agent{n}_y", f"agent{n}_theta", f"agent{n}_v"]
    return cols


def write_trace(record: RunRecord, fh: IO[str]) -> None:
    ids = [a.id for a in record.rows[0].agents] if record.rows else []
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(trace_header(ids))
    for r in record.rows:
        e = r.ego
        row = [_f(r.t), _f(e.x), _f(e.y), _f(e.heading), _f(e.speed), r.mode.value,
               _f(r.kappa), _f(r.tau_risk), _f(r.accel), _f(r.steer),
               "" if r.solve_ms is None else f"{r.solve_ms:.3f}"]
        for a in r.agents:
            row += [a.id, _f(a.x), _f(a.y), _f(a.heading), _f(a.speed)]
        w.writerow(row)


def trace_text(record: RunRecord) -> str:
    buf = io.StringIO()
    write_trace(record, buf)
    return buf.getvalue()
