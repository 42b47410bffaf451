import json

import pytest

from rcms.scenario import (PAPER_KEYS, ScenarioError, apply_overrides, bundled_scenario_path,
                           load_scenario_dict, parse_scenario, resolved_config)


def base():
    return {
        "name": "t", "duration": 2.0,
        "road": {"lane_count": 2, "lane_width": 3.5},
        "ego": {"d": 1.75, "speed": 15.0},
        "agents": [{"id": 1, "s": 20.0, "d": 1.75, "speed": 10.0,
                    "script": [{"kind": "brake_to", "at": 0.5, "speed": 0.0, "decel": 4.0}]}],
        "baseline": {"cruise_speed": 15.0},
    }


@pytest.mark.parametrize("name", ["scenario1", "scenario2", "scenario3"])
def test_bundled_scenarios_parse(name):
    spec = parse_scenario(load_scenario_dict(bundled_scenario_path(name)))
    assert spec.name == name and spec.planner.horizon == 30 and spec.sample_time == 0.1


def test_overrides_set_nested_values_without_mutating_input():
    data = base()
    out = apply_overrides(data, ["planner.max_iter=80", "agents.0.speed=12.5", "name=renamed"])
    spec = parse_scenario(out)
    assert spec.planner.max_iter == 80 and spec.agents[0].speed == 12.5 and spec.name == "renamed"
    assert "planner" not in data and data["agents"][0]["speed"] == 10.0


def test_override_needs_equals_sign():
    with pytest.raises(ScenarioError):
        apply_overrides(base(), ["planner.max_iter"])


def test_off_road_agent_is_named():
    data = base()
    data["agents"][0]["d"] = 40.0
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(data)
    assert any("agent 1" in p and "off the road" in p for p in exc.value.problems)


@pytest.mark.parametrize("mutate, fragment", [
    (lambda d: d.pop("duration"), "duration"),
    (lambda d: d.update(duration=-1), "duration"),
    (lambda d: d["road"].update(lanes=3), "road.lanes"),
    (lambda d: d["agents"][0]["script"].append({"kind": "hold", "at": 0.1, "speed": 3}), "non-decreasing"),
    (lambda d: d["agents"][0]["script"].append({"kind": "teleport", "at": 1.0}), "teleport"),
    (lambda d: d["agents"].append(dict(d["agents"][0])), "duplicate"),
    (lambda d: d.update(planner={"horizon": 20}), "horizon"),
])
def test_validation_problems(mutate, fragment):
    data = base()
    mutate(data)
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(data)
    assert any(fragment in p for p in exc.value.problems)


def test_all_problems_reported_together():
    data = base()
    data["agents"][0]["d"] = -5.0
    data["ego"]["speed"] = -1.0
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(data)
    assert len(exc.value.problems) >= 2


def test_resolved_config_sources():
    data = apply_overrides(base(), ["hysteresis.tau_a=0.9"])
    cfg = resolved_config(parse_scenario(data), data, ["hysteresis.tau_a=0.9"])
    src = cfg["sources"]
    assert all(src[k] == "paper" for k in PAPER_KEYS)
    assert src["baseline.cruise_speed"] == "scenario"
    assert src["hysteresis.tau_a"] == "override"
    assert src["field.alpha_g"] == "default"
    assert set(src.values()) <= {"paper", "scenario", "override", "default"}
    # the expanded scenario round-trips to the same spec
    assert parse_scenario(json.loads(json.dumps(cfg))) == parse_scenario(data)
