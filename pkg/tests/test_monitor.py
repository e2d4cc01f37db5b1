import dataclasses
from types import SimpleNamespace

import pytest

from safedrive.autopilot import Command, PolicyState, VistaType
from safedrive.dynamics import braking_distance
from safedrive.environment import AdsState, Obstacle, build_vista, step
from safedrive.monitor import (
    StateReport,
    StepRecord,
    lead_obstacle,
    lemma_disjoint,
    limit_position,
    no_gaps,
    non_intrusive,
    state_safe,
    step_checks,
    vista_safe,
)

from .builders import CROSS_EDGES, CROSS_SHARED, MERGE_EDGES, MERGE_YIELD, cross_guards, scenario

ROAD = [("e", "a", "b", 2000.0, 100.0)]
ROAD_PS = PolicyState()


def vistas_and_policies(sc, state, policies=None):
    vistas = {v.id: build_vista(sc.world, state, v.id) for v in state.vehicles}
    policies = policies or {}
    return vistas, {vid: policies.get(vid, PolicyState(vs.vtype, False, vs.h.id if vs.h else None)) for vid, vs in vistas.items()}


# ------------------------------------------------------------------- lead obstacle
def test_road_lead_is_closest_front_vehicle():
    sc = scenario(ROAD, [("c", ["e"], 0.0, 0.0), ("f", ["e"], 40.0, 0.0)], fd=120.0)
    vs = build_vista(sc.world, sc.initial_state(), "c")
    assert lead_obstacle(vs, ROAD_PS).id == "f"
    assert lead_obstacle(vs, ROAD_PS).s == pytest.approx(40.0)


def merge_vista():
    sc = scenario(
        MERGE_EDGES, [("ego", ["r0", "r1", "m2"], 140.0, 0.0), ("f", ["m2"], 30.0, 0.0)],
        placements=[MERGE_YIELD], fd=120.0,
    )
    return sc, build_vista(sc.world, sc.initial_state(), "ego")


def test_merge_caution_lead_is_the_yield_sign():
    _, vs = merge_vista()
    assert lead_obstacle(vs, PolicyState(VistaType.MERGE_YIELD, False, "yield_r")).id == "yield_r"


def test_merge_progress_lead_is_front_vehicle_past_the_section():
    _, vs = merge_vista()
    fo = lead_obstacle(vs, PolicyState(VistaType.MERGE_YIELD, True, "yield_r"))
    assert fo.id == "f"
    assert fo.s > vs.s_h + vs.cd


# ------------------------------------------------------------------- limit position
def test_limit_dominated_by_front_obstacle():
    sc = scenario(ROAD, [("c", ["e"], 0.0, 0.0), ("f", ["e"], 30.0, 0.0)])
    vs = build_vista(sc.world, sc.initial_state(), "c")
    assert limit_position(sc.params, vs, ROAD_PS) == pytest.approx(30.0)


def test_limit_dominated_by_speed_sign():
    sc = scenario(
        [("e", "a", "b", 2000.0, 100.044)], [("c", ["e"], 0.0, 0.0), ("f", ["e"], 200.0, 0.0)],
        placements=[{"id": "s", "kind": "speed_limit", "edge": "e", "offset": 40.0, "limit_kmh": 50.004}],
        fd=250.0,
    )
    vs = build_vista(sc.world, sc.initial_state(), "c")
    assert vs.ego.V == pytest.approx(27.79)
    assert limit_position(sc.params, vs, ROAD_PS) == pytest.approx(68.505)


def test_limit_empty_when_front_obstacle_is_at_ego():
    sc = scenario(ROAD, [("c", ["e"], 0.0, 0.0)])
    vs = build_vista(sc.world, sc.initial_state(), "c")
    at_ego = Obstacle("vehicle", "x", vs.s_e, 0.0)
    vs = dataclasses.replace(vs, f=at_ego, front=(at_ego,))
    assert limit_position(sc.params, vs, ROAD_PS) == pytest.approx(vs.s_e)


# ---------------------------------------------------------------------- vista safety
def test_road_vista_within_envelope_is_safe():
    sc = scenario(ROAD, [("c", ["e"], 0.0, 36.0), ("f", ["e"], 100.0, 0.0)])
    vs = build_vista(sc.world, sc.initial_state(), "c")
    assert vista_safe(sc.params, vs, ROAD_PS).safe


def test_caution_past_the_signal_is_unsafe():
    _, vs = merge_vista()
    sc, _ = merge_vista()
    moved = dataclasses.replace(vs, ego=dataclasses.replace(vs.ego, s=vs.s_h + 5.0))
    rep = vista_safe(sc.params, moved, PolicyState(VistaType.MERGE_YIELD, False, "yield_r"))
    assert not rep.i2


def test_light_progress_with_moving_vehicle_in_junction_is_unsafe():
    sc = scenario(
        CROSS_EDGES, [("ego", ["x0", "x1", "x2"], 190.0, 0.0), ("o", ["y0", "y1", "y2"], 190.0, 36.0)],
        shared=CROSS_SHARED, placements=cross_guards("traffic_light"),
        cycles=[{"entries": [["gx"], ["gy"]], "green_s": 10, "yellow_s": 3, "all_red_s": 2}],
    )
    # drive the crossing vehicle 5 m into its junction edge
    state = step(sc.world, sc.initial_state(), {"ego": Command(0.0, 0.0), "o": Command(0.0, 15.0)}).state
    vs = build_vista(sc.world, state, "ego")
    assert vs.vtype == VistaType.CROSS_TRAFFIC_LIGHT
    rep = vista_safe(sc.params, vs, PolicyState(VistaType.CROSS_TRAFFIC_LIGHT, True, "gx"))
    assert not rep.i2
    assert any("inside the junction" in r for r in rep.reasons)


# ---------------------------------------------------------------------- state safety
def test_empty_state_is_safe():
    sc = scenario(ROAD)
    state = AdsState(0, 0.0, (), {})
    assert state_safe(sc.world, state, {}, {}).safe


def test_i1_violation_is_reported():
    sc = scenario(ROAD, [("c", ["e"], 0.0, 90.0), ("f", ["e"], 30.0, 0.0)])
    state = sc.initial_state()
    vistas, pols = vistas_and_policies(sc, state)
    rep = state_safe(sc.world, state, vistas, pols)
    assert not rep.safe
    assert not rep.vehicles["c"].i1 and rep.vehicles["f"].safe
    assert any(v.startswith("c: I1") for v in rep.violations())


def test_follower_with_large_gap_is_disjoint():
    sc = scenario(ROAD, [("c", ["e"], 0.0, 36.0), ("f", ["e"], 100.0, 36.0)])
    state = sc.initial_state()
    rep = state_safe(sc.world, state, *vistas_and_policies(sc, state))
    assert rep.safe and rep.overlaps == []


def test_single_vehicle_is_disjoint():
    sc = scenario(ROAD, [("c", ["e"], 0.0, 36.0)])
    state = sc.initial_state()
    assert state_safe(sc.world, state, *vistas_and_policies(sc, state)).overlaps == []


def test_two_progressing_vehicles_in_one_junction_overlap():
    sc = scenario(
        CROSS_EDGES, [("a", ["x0", "x1", "x2"], 190.0, 20.0), ("b", ["y0", "y1", "y2"], 190.0, 20.0)],
        shared=CROSS_SHARED, placements=cross_guards("yield"), fd=200.0,
    )
    state = sc.initial_state()
    pols = {"a": PolicyState(VistaType.CROSS_YIELD, True, "gx"), "b": PolicyState(VistaType.CROSS_YIELD, True, "gy")}
    vistas, pols = vistas_and_policies(sc, state, pols)
    rep = state_safe(sc.world, state, vistas, pols)
    assert ("a", "b") in rep.overlaps


def test_collision_on_equal_positions():
    sc = scenario(ROAD, [("c", ["e"], 50.0, 0.0), ("d", ["e"], 50.0, 0.0)])
    state = sc.initial_state()
    rep = state_safe(sc.world, state, *vistas_and_policies(sc, state))
    assert ("c", "d") in rep.collisions


# --------------------------------------------------------------------- step checks
def report(s, limit, fo_s, V=10.0, safe=True):
    return SimpleNamespace(s=s, limit=limit, fo=SimpleNamespace(s=fo_s), V=V, safe=safe)


P = scenario(ROAD).params


def test_non_intrusive_when_lead_unchanged():
    assert non_intrusive(P, report(0, 30, 30), report(5, 30, 30))


def test_non_intrusive_when_lead_regresses_beyond_envelope():
    assert non_intrusive(P, report(0, 80, 100), report(5, 60, 5 + braking_distance(P, 10.0) + 1.0))


def test_intrusive_when_lead_regresses_inside_envelope():
    assert not non_intrusive(P, report(0, 80, 100), report(5, 10, 10.0))


def test_no_gaps_for_stationary_vehicle():
    assert no_gaps(report(10, 10, 10), 10.0)


def test_no_gaps_detects_overshoot():
    assert no_gaps(report(0, 30, 30), 29.0)
    assert not no_gaps(report(0, 30, 30), 31.0)


def test_step_checks_flag_lemma_failures():
    prev = StateReport(0, {"c": report(0, 30, 30)}, [], [])
    cur = StateReport(1, {"c": report(5, 20, 20, V=15.0)}, [], [])
    out = step_checks(P, StepRecord(prev, cur, {"c": 5.0}))
    assert any("non-intrusive" in x for x in out)
    assert any("lemma" in x for x in out)


def test_lemma_disjoint_flags_overlap_in_safe_state():
    rep = StateReport(0, {"c": SimpleNamespace(safe=True, v=1.0, V=2.0, vid="c")}, [("c", "d")], [])
    assert lemma_disjoint(rep)
    rep = StateReport(0, {"c": SimpleNamespace(safe=True, v=3.0, V=2.0, vid="c")}, [], [])
    assert lemma_disjoint(rep) == ["lemma: c above its speed limit in a safe state"]
