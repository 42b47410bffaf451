"""Scenario files: schema, validation, overrides and provenance of settings.

A scenario is a JSON object. Vehicles are placed in road coordinates
(``s`` along the road, ``d`` lateral from the right edge). Every section
other than ``road``, ``ego`` and ``agents`` is optional and falls back to
the module defaults.
"""
from __future__ import annotations

import copy
import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .activation import HysteresisConfig
from .baseline import BaselineConfig
from .dynamics import BicycleParams
from .planner import PlannerConfig
from .risk_field import FieldParams
from .risk_metrics import RiskParams
from .world import ControlInput, FieldOfView, RoadModel, VehicleState

DIRECTIVE_KINDS = ("hold", "brake_to", "swerve_to", "lateral_crossing")

# Keys tagged "paper" in the provenance map; every other default is tagged "default".
PAPER_KEYS = {
    "planner.horizon",
    "planner.sample_time",
    "dynamics.u_min",
    "dynamics.u_max",
    "dynamics.speed_cap_factor",
}


class ScenarioError(ValueError):
    """Raised with every problem found in a scenario, one per line."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class Directive:
    kind: str
    at: float = 0.0
    speed: Optional[float] = None
    decel: Optional[float] = None
    lateral: Optional[float] = None
    rate: Optional[float] = None
    velocity: Optional[float] = None


@dataclass(frozen=True)
class AgentSpec:
    id: int
    s: float
    d: float
    speed: float
    lateral_speed: float = 0.0
    length: float = 4.5
    width: float = 2.0
    class_scale: float = 1.0
    script: tuple[Directive, ...] = ()


@dataclass(frozen=True)
class EgoSpec:
    s: float = 0.0
    d: float = 0.0
    speed: float = 20.0
    heading: float = 0.0  # relative to the road
    length: float = 4.5
    width: float = 2.0


@dataclass(frozen=True)
class DynamicsSpec:
    wheelbase: float = 2.7
    speed_cap_factor: float = 2.0
    u_min: tuple[float, float] = (-5.0, -0.5)
    u_max: tuple[float, float] = (3.5, 0.5)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    road: RoadModel
    ego: EgoSpec
    agents: tuple[AgentSpec, ...]
    duration: float
    t_start: float = 0.0
    description: str = ""
    fov: FieldOfView = dataclasses.field(default_factory=FieldOfView)
    risk: RiskParams = dataclasses.field(default_factory=RiskParams)
    field: FieldParams = dataclasses.field(default_factory=FieldParams)
    hysteresis: HysteresisConfig = dataclasses.field(default_factory=HysteresisConfig)
    planner: PlannerConfig = dataclasses.field(default_factory=PlannerConfig)
    baseline: BaselineConfig = dataclasses.field(default_factory=BaselineConfig)
    dynamics: DynamicsSpec = dataclasses.field(default_factory=DynamicsSpec)

    @property
    def sample_time(self) -> float:
        return self.planner.sample_time

    def bicycle(self) -> BicycleParams:
        return BicycleParams(
            wheelbase=self.dynamics.wheelbase,
            sample_time=self.planner.sample_time,
            speed_cap=self.dynamics.speed_cap_factor * self.road.speed_limit,
            u_min=ControlInput(*self.dynamics.u_min),
            u_max=ControlInput(*self.dynamics.u_max),
        )

    def ego_state(self) -> VehicleState:
        x, y = self.road.from_road_frame(self.ego.s, self.ego.d)
        return VehicleState(x, y, self.road.road_heading + self.ego.heading, self.ego.speed)


_SECTIONS = {
    "road": RoadModel,
    "fov": FieldOfView,
    "risk": RiskParams,
    "field": FieldParams,
    "hysteresis": HysteresisConfig,
    "planner": PlannerConfig,
    "baseline": BaselineConfig,
    "dynamics": DynamicsSpec,
    "ego": EgoSpec,
}


def _build(cls, data: Any, where: str, problems: list[str]):
    if not isinstance(data, dict):
        problems.append(f"{where}: expected an object")
        return None
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    for k in unknown:
        problems.append(f"{where}.{k}: unknown field")
    kwargs = {k: v for k, v in data.items() if k in names}
    for k in ("origin", "u_min", "u_max"):
        if k in kwargs and isinstance(kwargs[k], list):
            kwargs[k] = tuple(kwargs[k])
    if "r_base" in kwargs:
        kwargs["r_base"] = tuple(tuple(r) for r in kwargs["r_base"])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        problems.append(f"{where}: {exc}")
        return None


def _directive(data: Any, where: str, problems: list[str]) -> Optional[Directive]:
    d = _build(Directive, data, where, problems)
    if d is None:
        return None
    if d.kind not in DIRECTIVE_KINDS:
        problems.append(f"{where}.kind: unknown directive {d.kind!r}")
        return None
    need = {"hold": ("speed",), "brake_to": ("speed", "decel"),
            "swerve_to": ("lateral", "rate"), "lateral_crossing": ("velocity",)}[d.kind]
    for k in need:
        if getattr(d, k) is None:
            problems.append(f"{where}.{k}: required for {d.kind}")
    if d.kind == "brake_to" and d.decel is not None and d.decel <= 0:
        problems.append(f"{where}.decel: must be > 0")
    if d.kind == "swerve_to" and d.rate is not None and d.rate <= 0:
        problems.append(f"{where}.rate: must be > 0")
    if d.speed is not None and d.speed < 0:
        problems.append(f"{where}.speed: must be >= 0")
    return d


def _in_corridor(d: float, road: RoadModel) -> bool:
    return road.lateral_min <= d <= road.lateral_max


def parse_scenario(data: dict) -> ScenarioSpec:
    """Build and validate a :class:`ScenarioSpec`; raises ScenarioError."""
    if "scenario" in data and "sources" in data:  # a resolved-config file
        data = data["scenario"]
    problems: list[str] = []
    known = set(_SECTIONS) | {"name", "description", "agents", "duration", "t_start"}
    for k in sorted(set(data) - known):
        problems.append(f"{k}: unknown field")
    for req in ("road", "ego", "agents", "duration"):
        if req not in data:
            problems.append(f"{req}: missing")
    built = {}
    for key, cls in _SECTIONS.items():
        if key in data:
            built[key] = _build(cls, data[key], key, problems)
        elif key not in ("road", "ego"):
            built[key] = cls()
    duration = data.get("duration")
    if duration is not None and not (isinstance(duration, (int, float)) and duration > 0):
        problems.append("duration: must be > 0")

    agents = []
    seen_ids = set()
    for n, raw in enumerate(data.get("agents", []) or []):
        where = f"agents[{n}]"
        if not isinstance(raw, dict):
            problems.append(f"{where}: expected an object")
            continue
        raw = dict(raw)
        script_raw = raw.pop("script", [])
        script = []
        for m, dr in enumerate(script_raw):
            dv = _directive(dr, f"{where}.script[{m}]", problems)
            if dv is not None:
                script.append(dv)
        times = [d.at for d in script]
        if any(b < a for a, b in zip(times, times[1:])):
            problems.append(f"{where}.script: directive times must be non-decreasing")
        raw["script"] = tuple(script)
        a = _build(AgentSpec, raw, where, problems)
        if a is None:
            continue
        label = f"{where} (id {a.id})"
        if not isinstance(a.id, int) or a.id < 1:
            problems.append(f"{label}.id: must be a positive integer")
        elif a.id in seen_ids:
            problems.append(f"{label}.id: duplicate id")
        seen_ids.add(a.id)
        if a.length <= 0 or a.width <= 0:
            problems.append(f"{label}: length and width must be > 0")
        if a.class_scale <= 0:
            problems.append(f"{label}.class_scale: must be > 0")
        if a.speed < 0:
            problems.append(f"{label}.speed: must be >= 0")
        road = built.get("road")
        if road is not None and not _in_corridor(a.d, road):
            problems.append(f"{label}.d: agent {a.id} starts off the road "
                            f"(d={a.d}, corridor [{road.lateral_min}, {road.lateral_max}])")
        agents.append(a)

    road, ego = built.get("road"), built.get("ego")
    if road is not None and ego is not None and not _in_corridor(ego.d, road):
        problems.append(f"ego.d: ego starts off the road (d={ego.d})")
    if ego is not None and ego.speed < 0:
        problems.append("ego.speed: must be >= 0")
    baseline = built.get("baseline")
    if road is not None and baseline is not None:
        if baseline.cruise_speed > road.speed_limit:
            problems.append("baseline.cruise_speed: must not exceed road.speed_limit")
        if baseline.target_lane is not None and not 0 <= baseline.target_lane < road.lane_count:
            problems.append("baseline.target_lane: outside the road's lanes")
    planner = built.get("planner")
    if planner is not None and baseline is not None and baseline.horizon != planner.horizon:
        problems.append("baseline.horizon: must equal planner.horizon")
    if problems:
        raise ScenarioError(problems)
    return ScenarioSpec(
        name=str(data.get("name", "scenario")),
        description=str(data.get("description", "")),
        road=road, ego=ego, agents=tuple(agents), duration=float(duration),
        t_start=float(data.get("t_start", 0.0)),
        fov=built["fov"], risk=built["risk"], field=built["field"],
        hysteresis=built["hysteresis"], planner=built["planner"],
        baseline=built["baseline"], dynamics=built["dynamics"],
    )


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` overrides (list indices allowed) to a copy."""
    out = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ScenarioError([f"override {item!r}: expected KEY=VALUE"])
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            if isinstance(node, list):
                node = node[int(p)]
            else:
                node = node.setdefault(p, {})
        last = parts[-1]
        if isinstance(node, list):
            node[int(last)] = _parse_value(raw)
        else:
            node[last] = _parse_value(raw)
    return out


def load_scenario_dict(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if "scenario" in data and "sources" in data:
        data = data["scenario"]
    return data


def load_scenario(path: str | Path, overrides: Optional[list[str]] = None) -> ScenarioSpec:
    data = load_scenario_dict(path)
    if overrides:
        data = apply_overrides(data, overrides)
    return parse_scenario(data)


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def spec_to_dict(spec: ScenarioSpec) -> dict:
    """Fully expanded scenario, every default written out."""
    d = _plain(spec)
    for a in d["agents"]:
        a["script"] = [{k: v for k, v in dr.items() if v is not None} for dr in a["script"]]
    return d


def resolved_config(spec: ScenarioSpec, raw: dict, overrides: Optional[list[str]] = None) -> dict:
    """Expanded scenario plus a provenance tag for every configuration leaf.

    Tags: ``paper`` (published value), ``scenario`` (set in the file),
    ``override`` (set on the command line) or ``default``.
    """
    full = spec_to_dict(spec)
    override_keys = {o.split("=", 1)[0].strip() for o in overrides or []}
    sources = {}
    for section in _SECTIONS:
        if section in ("road", "ego"):
            continue
        for key in full[section]:
            dotted = f"{section}.{key}"
            if dotted in override_keys:
                sources[dotted] = "override"
            elif key in (raw.get(section) or {}):
                sources[dotted] = "scenario"
            elif dotted in PAPER_KEYS:
                sources[dotted] = "paper"
            else:
                sources[dotted] = "default"
    for key in full["ego"]:
        dotted = f"ego.{key}"
        if dotted in override_keys:
            sources[dotted] = "override"
        elif key in (raw.get("ego") or {}):
            sources[dotted] = "scenario"
        else:
            sources[dotted] = "default"
    return {"scenario": full, "sources": sources}


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package (``scenario1`` etc.)."""
    here = Path(__file__).parent / "scenarios"
    p = here / (name if name.endswith(".json") else f"{name}.json")
    if not p.exists():
        raise FileNotFoundError(p)
    return p
