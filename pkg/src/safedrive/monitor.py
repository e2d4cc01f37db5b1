"""Omniscient runtime safety monitor.

Evaluates, on every reached state, the lead obstacle and limit position of
each vehicle, the vista invariants, pairwise free-space disjointness and
collisions; on every step it checks the no-gaps and non-intrusiveness
properties and the lemmas linking them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Tuple

from .autopilot import PolicyState, VistaType, travel_time
from .dynamics import SLACK, DynamicsParams, braking_distance
from .environment import AdsState, Obstacle, RouteInfo, Vista, World
from .metric_map import EPS, Footprint, MetricGraph


@dataclass
class VehicleReport:
    vid: str
    mode: VistaType
    cl: bool
    s: float
    v: float
    V: float
    fo: Obstacle
    limit: float  # route offset of the limit position (may lie past the route end)
    i1: bool
    i2: bool
    reasons: List[str] = field(default_factory=list)

    @property
    def safe(self) -> bool:
        return self.i1 and self.i2

    @property
    def free_space(self) -> float:
        return self.limit - self.s


@dataclass
class StateReport:
    step: int
    vehicles: Dict[str, VehicleReport]
    overlaps: List[Tuple[str, str]]
    collisions: List[Tuple[str, str]]

    @property
    def safe(self) -> bool:
        return all(r.safe for r in self.vehicles.values())

    def violations(self) -> List[str]:
        out = []
        for r in self.vehicles.values():
            out.extend(f"{r.vid}: {x}" for x in r.reasons)
        out.extend(f"free spaces of {a} and {b} intersect" for a, b in self.overlaps)
        out.extend(f"collision between {a} and {b}" for a, b in self.collisions)
        return out


@dataclass
class StepRecord:
    prev: StateReport
    next: StateReport
    virtual_s: Mapping[str, float]
    retired: Tuple[str, ...] = ()


# --------------------------------------------------------------------------- per vista
def lead_obstacle(vista: Vista, ps: PolicyState) -> Obstacle:
    """Obstacle followed by the current guarded command."""
    if ps.mode == VistaType.ROAD or ps.cl:
        return vista.f
    return vista.h


def limit_position(params: DynamicsParams, vista: Vista, ps: PolicyState) -> float:
    """Strongest of the lead obstacle, the current limit envelope and upcoming speed signs."""
    fo = lead_obstacle(vista, ps)
    s_e = vista.ego.s
    lim = min(fo.s, s_e + braking_distance(params, vista.ego.V))
    for s, V in vista.speed_signals(s_e, fo.s):
        lim = min(lim, s + braking_distance(params, V))
    return lim


def specific_condition(params: DynamicsParams, vista: Vista, ps: PolicyState, s_fo: float) -> Tuple[bool, str]:
    """The per-type side condition required during the progress phase."""
    s_h, cd = vista.s_h, vista.cd
    if ps.mode in (VistaType.MERGE_YIELD, VistaType.CROSS_YIELD, VistaType.LANE_CHANGE):
        tt = travel_time(params, vista, s_h + cd, s_fo)
        for a in vista.arriving:
            if not a.V * tt + braking_distance(params, a.V) <= a.d + SLACK:
                return False, f"arriving vehicle {a.id or 'fictitious'} at {a.d:.3f} m may reach the junction"
        return True, ""
    if ps.mode == VistaType.CROSS_TRAFFIC_LIGHT:
        sig = vista.h.signal
        if vista.ego.s <= s_h + EPS:
            if not travel_time(params, vista, s_h, s_fo) < sig.ttr:
                return False, "light turns red before the entry is reached"
        tt_out = travel_time(params, vista, s_h + cd, s_fo)
        for a in vista.arriving:
            if a.guard is not None and a.guard in vista.ttg and not tt_out < vista.ttg[a.guard]:
                return False, f"crossing light {a.guard} turns green before the junction is cleared"
        for a in vista.arriving:
            if a.in_junction and not (a.at_entry and a.v == 0.0):
                return False, f"vehicle {a.id} moving inside the junction"
        return True, ""
    if ps.mode == VistaType.CROSS_STOP:
        st = vista.ego.st if vista.ego.st is not None else ps.st
        mine = (math.inf if st is None else st, vista.priority)
        for a in vista.arriving:
            if not a.in_junction:
                continue
            if not (a.at_entry and a.v == 0.0 and a.st is not None and mine < (a.st, a.priority)):
                return False, f"vehicle {a.id} has precedence at the stop junction"
        return True, ""
    return True, ""


def vista_safe(params: DynamicsParams, vista: Vista, ps: PolicyState) -> VehicleReport:
    """I1 and I2 for one vista, with reasons for any failure."""
    ego = vista.ego
    fo = lead_obstacle(vista, ps)
    lim = limit_position(params, vista, ps)
    reasons = []
    i1 = ego.s + braking_distance(params, ego.v) <= lim + 1e-7
    if not i1:
        reasons.append(
            f"I1: braking envelope {ego.s + braking_distance(params, ego.v):.4f} beyond limit {lim:.4f}"
        )
    i2 = True
    if ps.mode != VistaType.ROAD:
        caution = fo is vista.h and ego.s <= vista.s_h + EPS
        if not caution:
            progress = vista.s_h + vista.cd < fo.s - EPS
            if not progress:
                i2 = False
                reasons.append("I2: lead obstacle inside the critical section")
            else:
                ok, why = specific_condition(params, vista, ps, fo.s)
                if not ok:
                    i2 = False
                    reasons.append(f"I2: {why}")
    return VehicleReport(ego.id, ps.mode, ps.cl, ego.s, ego.v, ego.V, fo, lim, i1, i2, reasons)


# ---------------------------------------------------------------------------- per state
def footprint(graph: MetricGraph, ri: RouteInfo, lo: float, hi: float) -> Footprint:
    """Disjointness footprint of the route piece ``[lo, hi]`` (clamped to the route)."""
    hi = min(hi, ri.length)
    lo = min(lo, hi)
    fp = Footprint()
    i0, _, _ = ri.locate(lo)
    for i in range(i0, len(ri.elements)):
        s0 = ri.starts[i]
        if s0 > hi + EPS:
            break
        e, a, b = ri.elements[i]
        pa = a + max(0.0, lo - s0)
        pb = a + min(b - a, hi - s0)
        if pb < pa:
            continue
        edge = graph.edges[e]
        if pb - pa > EPS:
            fp.pieces.setdefault(e, []).append((pa, pb))
            if graph.is_junction_edge(e):
                fp.junctions.setdefault(graph.junction_id[e], set()).add(e)
        if pa <= EPS:
            fp.points.add(("v", edge.source))
        if pb >= edge.length - EPS:
            fp.points.add(("v", edge.target))
        for off, pid in graph.shared_points(e):
            if pa - EPS <= off <= pb + EPS:
                fp.points.add(("x", pid))
    start, end = ri.position(lo), ri.position(hi)
    fp.end_positions = (start, end)
    fp.ends = {graph.key(start), graph.key(end)}
    for k in fp.ends:
        if k[0] != "e":
            fp.points.add(k)
    return fp


def free_spaces_disjoint(
    world: World, state: AdsState, reports: Mapping[str, VehicleReport]
) -> List[Tuple[str, str]]:
    """Pairs of vehicles whose free spaces intersect."""
    g = world.graph
    fps = {}
    for veh in state.vehicles:
        r = reports[veh.id]
        fps[veh.id] = footprint(g, veh.route, veh.s, max(veh.s, r.limit))
    ids = [v.id for v in state.vehicles]
    bad = []
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            if not g.routes_disjoint(fps[ids[i]], fps[ids[j]]):
                bad.append((ids[i], ids[j]))
    return bad


def collisions(world: World, state: AdsState) -> List[Tuple[str, str]]:
    """Vehicles at one position, or strictly inside one junction on distinct edges."""
    g = world.graph
    info = []
    for veh in state.vehicles:
        e, off = veh.edge_offset
        p = g.position(e, off)
        inside = None
        if p.vertex is None and g.is_junction_edge(e):
            inside = (g.junction_id[e], e)
        info.append((veh.id, g.key(p), p, inside))
    out = []
    for i in range(len(info)):
        for j in range(i + 1, len(info)):
            a, b = info[i], info[j]
            if g.same(a[2], b[2]):
                out.append((a[0], b[0]))
            elif a[3] and b[3] and a[3][0] == b[3][0] and a[3][1] != b[3][1]:
                out.append((a[0], b[0]))
    return out


def state_safe(
    world: World, state: AdsState, vistas: Mapping[str, Vista], policies: Mapping[str, PolicyState]
) -> StateReport:
    """Evaluate every vista plus the global disjointness and collision checks."""
    params = world.params
    reports = {
        veh.id: vista_safe(params, vistas[veh.id], policies[veh.id]) for veh in state.vehicles
    }
    return StateReport(
        state.step, reports, free_spaces_disjoint(world, state, reports), collisions(world, state)
    )


# ----------------------------------------------------------------------------- per step
def non_intrusive(params: DynamicsParams, prev: VehicleReport, cur: VehicleReport) -> bool:
    """The lead obstacle does not regress into the speed-limit braking range."""
    if prev.fo.s <= cur.fo.s + EPS:
        return True
    return cur.s + braking_distance(params, cur.V) <= cur.fo.s + EPS


def no_gaps(prev: VehicleReport, s_next: float) -> bool:
    """The vehicle ended the step inside the free space it had at the start."""
    return prev.s - EPS <= s_next <= prev.limit + 1e-7


def step_checks(params: DynamicsParams, rec: StepRecord) -> List[str]:
    """no-gaps and non-intrusiveness, plus the lemma implications, for one step."""
    out = []
    prev_safe = rec.prev.safe
    for vid, pr in rec.prev.vehicles.items():
        s_next = rec.virtual_s.get(vid)
        if s_next is not None and not no_gaps(pr, s_next):
            out.append(f"{vid}: no-gaps: moved to {s_next:.4f} beyond limit {pr.limit:.4f}")
        cur = rec.next.vehicles.get(vid)
        if cur is None:
            continue
        ni = non_intrusive(params, pr, cur)
        if not ni:
            out.append(f"{vid}: non-intrusive: lead obstacle regressed from {pr.fo.s:.4f} to {cur.fo.s:.4f}")
            if prev_safe:
                out.append(f"{vid}: lemma: safe state followed by an intrusive step")
        elif pr.safe and cur.limit < pr.limit - 1e-7:
            out.append(f"{vid}: lemma: free space retracted from {pr.limit:.4f} to {cur.limit:.4f}")
    return out


def lemma_disjoint(report: StateReport) -> List[str]:
    """A safe state is speed compliant and has pairwise disjoint free spaces."""
    if not report.safe:
        return []
    out = [f"lemma: {a}/{b} free spaces intersect in a safe state" for a, b in report.overlaps]
    for r in report.vehicles.values():
        if r.v > r.V + 1e-7:
            out.append(f"lemma: {r.vid} above its speed limit in a safe state")
    return out
