import math

import numpy as np
import pytest

import rcms.sim as sim
from rcms.activation import Mode, PlannerMode, activation_step
from rcms.risk_metrics import RiskAssessment
from rcms.scenario import load_scenario, bundled_scenario_path, parse_scenario
from rcms.sim import (BASE_COLUMNS, Body, PlannerSelection, detect_collision, rectangle_clearance,
                      rectangle_corners, rectangles_overlap, run, trace_header, trace_text)


def empty_road(duration=3.0):
    return parse_scenario({
        "name": "empty", "duration": duration,
        "road": {"lane_count": 3, "lane_width": 3.5},
        "ego": {"d": 5.25, "speed": 20.0}, "agents": [],
        "baseline": {"cruise_speed": 20.0},
    })


def bundled(name):
    return load_scenario(bundled_scenario_path(name))


def test_empty_road_never_activates():
    rec = run(empty_road(), PlannerSelection.SWITCHED)
    assert rec.summary["activations"] == [] and not rec.summary["collision"]
    assert all(r.mode is Mode.MP for r in rec.rows)


def test_row_count_and_timestamps():
    spec = bundled("scenario2")
    rec = run(spec, "baseline_only")
    assert len(rec.rows) == round(spec.duration / spec.sample_time) + 1
    t = np.array([r.t for r in rec.rows])
    assert t[0] == spec.t_start
    assert np.allclose(np.diff(t), spec.sample_time, atol=1e-9)


@pytest.mark.parametrize("selection", list(PlannerSelection))
def test_runs_are_byte_identical(selection):
    spec = bundled("scenario1")
    assert trace_text(run(spec, selection)) == trace_text(run(spec, selection))


@pytest.mark.parametrize("name", ["scenario1", "scenario2", "scenario3"])
def test_logged_modes_replay_through_activation_step(name):
    spec = bundled(name)
    rec = run(spec, "switched")
    state = PlannerMode()
    for k, r in enumerate(rec.rows):
        state = activation_step(state, RiskAssessment(r.kappa, r.tau_risk), spec.hysteresis, k)
        assert state.mode is r.mode


def test_applied_control_is_first_of_plan(monkeypatch):
    first = []
    orig_plan, orig_mp = sim.RcmsPlanner.plan, sim.mp_plan

    def plan(self, *a, **kw):
        out = orig_plan(self, *a, **kw)
        first.append(out.controls[0])
        return out

    def mp_plan(*a, **kw):
        out = orig_mp(*a, **kw)
        first.append(out.controls[0])
        return out

    monkeypatch.setattr(sim.RcmsPlanner, "plan", plan)
    monkeypatch.setattr(sim, "mp_plan", mp_plan)
    rec = run(bundled("scenario2"), "switched")
    assert [(u.accel, u.steer) for u in first] == [(r.accel, r.steer) for r in rec.rows]
    assert {r.planner for r in rec.rows} == {"mp", "rcms"}


@pytest.mark.parametrize("name", ["scenario1", "scenario2", "scenario3"])
def test_agents_do_not_teleport(name):
    spec = bundled(name)
    rec = run(spec, "baseline_only")
    dt = spec.sample_time
    max_decel = max([d.decel for a in spec.agents for d in a.script if d.decel] + [0.0])
    for r0, r1 in zip(rec.rows, rec.rows[1:]):
        for a0, a1 in zip(r0.agents, r1.agents):
            step = math.hypot(a1.x - a0.x, a1.y - a0.y)
            assert step <= dt * (max(a0.speed, a1.speed) + dt * max_decel) + 1e-9


def test_identical_poses_collide():
    assert detect_collision([Body(0, 1, 2, 0.3, 4.5, 2), Body(1, 1, 2, 0.3, 4.5, 2)]) == (0, 1)


def test_far_apart_do_not_collide():
    half_diag = 0.5 * math.hypot(4.5, 2.0)
    bodies = [Body(0, 0, 0, 0.0, 4.5, 2), Body(1, 0.0, 2 * half_diag + 1e-6, 1.0, 4.5, 2)]
    assert detect_collision(bodies) is None


def test_touching_edges_collide():
    # side-by-side boxes sharing the line y = 1 exactly
    a = rectangle_corners(0.0, 0.0, 0.0, 4.0, 2.0)
    b = rectangle_corners(1.0, 2.0, 0.0, 4.0, 2.0)
    assert rectangles_overlap(a, b)
    assert detect_collision([Body(0, 0, 0, 0, 4, 2), Body(1, 1, 2, 0, 4, 2)]) == (0, 1)
    c = rectangle_corners(1.0, 2.0 + 1e-9, 0.0, 4.0, 2.0)
    assert not rectangles_overlap(a, c)


def test_rotated_separation_matches_hand_geometry():
    # a square turned 45 degrees with its corner 0.1 m from a box edge
    a = rectangle_corners(0.0, 0.0, 0.0, 2.0, 2.0)
    b = rectangle_corners(1.0 + 0.1 + math.sqrt(2), 0.0, math.pi / 4, 2.0, 2.0)
    assert not rectangles_overlap(a, b)
    assert rectangle_clearance(a, b) == pytest.approx(0.1, abs=1e-12)


def test_scenario3_backup_strategies():
    spec = bundled("scenario3")
    brake = run(spec, "brake_only").summary
    base = run(spec, "baseline_only").summary
    switched = run(spec, "switched").summary
    assert brake["collision"] and brake["collision_pair"] == [0, 1]   # tailgater
    assert base["collision"] and base["collision_pair"] == [0, 2]     # swerving car
    assert not switched["collision"]


def test_trace_columns():
    assert trace_header([7, 9]) == BASE_COLUMNS + [
        "agent0_id", "agent0_x", "agent0_y", "agent0_theta", "agent0_v",
        "agent1_id", "agent1_x", "agent1_y", "agent1_theta", "agent1_v"]
    assert BASE_COLUMNS == ["t", "x", "y", "theta", "v", "mode", "kappa", "tau_risk",
                            "a_cmd", "delta_cmd", "solve_ms"]
    lines = trace_text(run(bundled("scenario3"), "switched")).splitlines()
    assert lines[0] == ",".join(trace_header([1, 2, 3]))
    assert all(len(l.split(",")) == len(BASE_COLUMNS) + 15 for l in lines)


def test_timing_stays_out_of_default_summary():
    spec = empty_road(1.0)
    assert "solve_ms_mean" not in run(spec).summary
    assert "solve_ms_mean" in run(spec, options=sim.RunOptions(record_timing=True)).summary
