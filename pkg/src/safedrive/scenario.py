"""Scenario files: JSON parsing (km/h at the boundary, SI inside) and assumption checks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from .dynamics import DynamicsParams, braking_distance
from .environment import (
    GUARD_KINDS,
    AdsState,
    LightProgram,
    RouteInfo,
    ScenarioError,
    SignalKind,
    SignalSpec,
    Visibility,
    World,
    light_cycle,
)
from .metric_map import EPS, Edge, MapError, MetricGraph

KMH = 1.0 / 3.6
FORMAT_VERSION = 1
FAULT_KINDS = ("inflate_dd", "force_clearance", "retract_visibility")


def kmh(x: float) -> float:
    return x * KMH


@dataclass(frozen=True)
class VehicleSpec:
    id: str
    route: Tuple[str, ...]
    start_offset: float
    v: float
    vis: Visibility


@dataclass(frozen=True)
class Fault:
    kind: str
    from_step: int = 0
    factor: float = 20.0


@dataclass
class Scenario:
    world: World
    vehicles: List[VehicleSpec]
    horizon: int
    seed: int
    v0: float
    faults: List[Fault] = field(default_factory=list)
    raw: Dict[str, Any] = field(default_factory=dict)
    routes: Dict[str, RouteInfo] = field(default_factory=dict)

    @property
    def params(self) -> DynamicsParams:
        return self.world.params

    def route_info(self, vid: str) -> RouteInfo:
        if vid not in self.routes:
            spec = next(v for v in self.vehicles if v.id == vid)
            route = self.world.graph.route(spec.route, spec.start_offset)
            self.routes[vid] = self.world.route_info(route)
        return self.routes[vid]

    def initial_state(self) -> AdsState:
        vehicles = []
        for spec in self.vehicles:
            ri = self.route_info(spec.id)
            vehicles.append(self.world.make_vehicle(spec.id, ri, 0.0, spec.v, spec.vis, route_id=spec.id))
        return self.world.initial_state(vehicles)


@dataclass(frozen=True)
class Violation:
    assumption: str
    element: str
    message: str

    def __str__(self) -> str:
        return f"{self.assumption} [{self.element}]: {self.message}"


# ------------------------------------------------------------------------------ parsing
def _table(rows) -> Tuple[Tuple[float, float], ...]:
    return tuple((float(a), float(b)) for a, b in (rows or ()))


def parse_scenario(doc: Dict[str, Any]) -> Scenario:
    """Build a scenario from its JSON document; raises ScenarioError on malformed input."""
    try:
        return _parse(doc)
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scenario: missing or invalid field {exc}") from exc
    except MapError as exc:
        raise ScenarioError(f"invalid map: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from exc


def _parse(doc: Dict[str, Any]) -> Scenario:
    dyn = doc["dynamics"]
    params = DynamicsParams(float(dyn["b_max"]), float(dyn["a_max"]), float(dyn["dt"]))
    v0 = kmh(float(dyn.get("v0_kmh", 5.0)))
    m = doc["map"]
    edges = [
        Edge(
            str(e["id"]),
            str(e["from"]),
            str(e["to"]),
            float(e["length_m"]),
            kmh(float(e["speed_limit_kmh"])) if e.get("speed_limit_kmh") is not None else None,
        )
        for e in m["edges"]
    ]
    shared = [
        ((sp["a"]["edge"], float(sp["a"]["offset"])), (sp["b"]["edge"], float(sp["b"]["offset"])))
        for sp in m.get("shared_positions", [])
    ]
    graph = MetricGraph(m["vertices"], edges, shared)
    lane_changes = {lc["edge"]: lc["continues"] for lc in m.get("lane_changes", [])}
    for e, c in lane_changes.items():
        if e not in graph.edges or c not in graph.edges:
            raise ScenarioError(f"lane change annotation references unknown edge {e!r}/{c!r}")

    sig_doc = doc.get("signals", {})
    signals = []
    for p in sig_doc.get("placements", []):
        kind = SignalKind(p["kind"])
        signals.append(
            SignalSpec(
                str(p["id"]),
                kind,
                str(p["edge"]),
                float(p.get("offset", 0.0)),
                float(p["cd_m"]) if p.get("cd_m") is not None else None,
                kmh(float(p["limit_kmh"])) if p.get("limit_kmh") is not None else None,
            )
        )
        if kind == SignalKind.SPEED_LIMIT and signals[-1].limit is None:
            raise ScenarioError(f"speed-limit signal {p['id']!r} needs limit_kmh")
    programs: List[LightProgram] = [
        light_cycle(
            lc["entries"],
            float(lc["green_s"]),
            float(lc["yellow_s"]),
            float(lc["all_red_s"]),
            params.dt,
            float(lc.get("offset_s", 0.0)),
        )
        for lc in sig_doc.get("light_cycles", [])
    ]
    world = World(
        graph,
        params,
        signals,
        programs,
        lane_changes,
        sig_doc.get("entry_priority", []),
        v0=v0,
        gap=float(dyn.get("standstill_gap_m", 0.0)),
    )
    if world.gap < 0:
        raise ScenarioError("standstill_gap_m must be non-negative")
    vis_doc = doc.get("visibility", {})
    fd, ld = float(vis_doc.get("fd", 100.0)), float(vis_doc.get("ld", 100.0))
    overrides = vis_doc.get("overrides", {})
    vehicles = []
    seen = set()
    for vd in doc.get("vehicles", []):
        vid = str(vd["id"])
        if vid in seen:
            raise ScenarioError(f"duplicate vehicle id {vid!r}")
        seen.add(vid)
        ov = overrides.get(vid, {})
        vis = Visibility(
            float(ov.get("fd", fd)),
            float(ov.get("ld", ld)),
            _table(ov.get("fd_table")),
            _table(ov.get("ld_table")),
        )
        v = kmh(float(vd.get("v_kmh", 0.0)))
        if v < 0:
            raise ScenarioError(f"vehicle {vid!r} has a negative speed")
        vehicles.append(VehicleSpec(vid, tuple(vd["route"]), float(vd.get("start_offset_m", 0.0)), v, vis))
    faults = []
    for f in doc.get("faults", []):
        if f["kind"] not in FAULT_KINDS:
            raise ScenarioError(f"unknown fault kind {f['kind']!r}")
        faults.append(Fault(f["kind"], int(f.get("from_step", 0)), float(f.get("factor", 20.0))))
    sc = Scenario(world, vehicles, int(doc.get("horizon", 1000)), int(doc.get("seed", 0)), v0, faults, doc)
    for spec in vehicles:
        sc.route_info(spec.id)
    return sc


def load_scenario(path) -> Scenario:
    with open(Path(path), encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: not valid JSON ({exc})") from exc
    return parse_scenario(doc)


# ---------------------------------------------------------------------------- validation
def check_a4(params: DynamicsParams, v0: float, v_max: float) -> Optional[float]:
    """First speed in ``[v0, v_max]`` (0.1 m/s grid plus endpoints) with ``v dt > B(v)``."""
    hi = max(v0, v_max)
    grid = [v0]
    k = math.floor(v0 * 10) + 1
    while k / 10.0 < hi:
        grid.append(k / 10.0)
        k += 1
    grid.append(hi)
    for v in grid:
        if v * params.dt > braking_distance(params, v):
            return v
    return None


def max_speed_limit(world: World) -> float:
    lims = [e.speed_limit for e in world.graph.edges.values() if e.speed_limit is not None]
    lims += [s.limit for s in world.signals.values() if s.kind == SignalKind.SPEED_LIMIT]
    return max(lims) if lims else 0.0


def validate_assumptions(sc: Scenario) -> List[Violation]:
    """Check the structural map assumptions and the dynamics/visibility conditions."""
    out: List[Violation] = []
    world, g = sc.world, sc.world.graph
    # A4: one period of driving never exceeds the braking distance above V_0
    bad = check_a4(sc.params, sc.v0, max_speed_limit(world))
    if bad is not None:
        out.append(
            Violation(
                "A4",
                "dynamics",
                f"v*dt = {bad * sc.params.dt:.4f} m exceeds B(v) = {braking_distance(sc.params, bad):.4f} m "
                f"at v = {bad:.3f} m/s",
            )
        )
    for e in g.edges.values():
        if e.speed_limit is None or e.speed_limit <= 0:
            out.append(Violation("map", e.id, "every edge needs a positive speed limit"))
    out.extend(_check_signals(sc))
    max_fd = max((v.vis.fd for v in sc.vehicles), default=0.0)
    max_ld = max((v.vis.ld for v in sc.vehicles), default=0.0)
    for spec in sc.vehicles:
        max_fd = max([max_fd] + [x for _, x in spec.vis.fd_table])
        max_ld = max([max_ld] + [x for _, x in spec.vis.ld_table])
    for spec in sc.vehicles:
        try:
            ri = sc.route_info(spec.id)
        except MapError as exc:
            out.append(Violation("map", spec.id, str(exc)))
            continue
        out.extend(_check_route(sc, spec, ri))
    out.extend(_check_lateral(sc, max_ld))
    return out


def _check_signals(sc: Scenario) -> List[Violation]:
    out = []
    world, g = sc.world, sc.world.graph
    guarded: Dict[str, str] = {}
    for sig in world.signals.values():
        if sig.kind in GUARD_KINDS:
            if not g.is_junction_edge(sig.edge):
                out.append(Violation("A1", sig.id, "junction guard placed on a non-junction edge"))
            if sig.offset > EPS:
                out.append(Violation("A1", sig.id, "junction guard must sit at the start of its junction edge"))
            if sig.edge in guarded:
                out.append(Violation("A1", sig.id, f"edge {sig.edge} already guarded by {guarded[sig.edge]}"))
            guarded[sig.edge] = sig.id
            span = g.edges[sig.edge].length
            if sig.cd is not None and sig.cd < span - EPS:
                out.append(Violation("A1", sig.id, f"critical distance {sig.cd} shorter than junction edge {span}"))
            if sig.kind == SignalKind.TRAFFIC_LIGHT and sig.id not in world.program_of:
                out.append(Violation("signals", sig.id, "traffic light without a light cycle"))
            if sig.kind == SignalKind.STOP and sig.id not in world.priority:
                out.append(Violation("signals", sig.id, "stop sign missing from entry_priority"))
        elif sig.kind == SignalKind.SPEED_LIMIT and (sig.limit is None or sig.limit <= 0):
            out.append(Violation("signals", sig.id, "speed limit must be positive"))
    for sid in world.program_of:
        if sid not in world.signals or world.signals[sid].kind != SignalKind.TRAFFIC_LIGHT:
            out.append(Violation("signals", sid, "light cycle references a non-light signal"))
    # junctions with lights or stops must be guarded uniformly
    for jid, entries in world.entries.items():
        kinds = set()
        for ent in entries.values():
            for e in ent.edges:
                sig = world.guard_of_edge.get(e)
                kinds.add(sig.kind if sig else None)
        strict = {SignalKind.TRAFFIC_LIGHT, SignalKind.STOP} & kinds
        if strict and len(kinds) > 1:
            out.append(
                Violation("A1", f"junction {jid}", "light or stop junctions need the same guard on every edge")
            )
        for e in world.lane_changes:
            if g.junction_id.get(e) == jid and world.guard_of_edge.get(e) is None:
                out.append(Violation("A1", e, "lane change edge needs a yield guard"))
    return out


def _check_route(sc: Scenario, spec: VehicleSpec, ri: RouteInfo) -> List[Violation]:
    out = []
    world, g = sc.world, sc.world.graph
    vis = spec.vis
    # A2: visibility never retracts
    for name, table, base in (("fd", vis.fd_table, vis.fd), ("ld", vis.ld_table, vis.ld)):
        prev_s, prev_x = -math.inf, base
        for s, x in table:
            if s < prev_s or x < prev_x - EPS:
                out.append(Violation("A2", spec.id, f"{name} table retracts at route offset {s}"))
            prev_s, prev_x = s, x
    spans = ri.spans
    for sp in spans:
        if sp.s_in < -EPS or not sp.entry:
            out.append(Violation("map", spec.id, "route starts inside a junction"))
        if vis.fd_at(sp.s_in) < sp.s_out - sp.s_in - EPS:
            out.append(Violation("A2", spec.id, f"junction {sp.jid} not fully visible from its entry"))
        for e in sp.edges:
            sig = world.guard_of_edge.get(e)
            if sig is not None and sig.cd is not None and vis.fd_at(sp.s_in) < sig.cd - EPS:
                out.append(Violation("A2", spec.id, f"critical section of {sig.id} exceeds frontal visibility"))
    # A1: junctions on a route are separated by more than the frontal visibility
    for a, b in zip(spans, spans[1:]):
        gap = b.s_in - a.s_out
        if gap <= vis.fd_at(a.s_out) + EPS:
            out.append(
                Violation("A1", spec.id, f"junctions {a.jid} and {b.jid} only {gap:.1f} m apart on the route")
            )
    # A3: limits never increase when approaching a junction
    window = max(vis.fd, vis.ld)
    for sp in spans:
        lo = sp.s_in - window
        prev = ri.limit_at(max(lo, 0.0))
        for s, lim in zip(ri.limit_s, ri.limit_v):
            if lo < s < sp.s_out - EPS:
                if lim > prev + EPS:
                    out.append(
                        Violation("A3", spec.id, f"speed limit rises to {lim / KMH:.0f} km/h {sp.s_in - s:.1f} m before junction {sp.jid}")
                    )
                prev = lim
    # edge limits agree with the signal-derived limit along the route
    for i, (e, a, _) in enumerate(ri.elements):
        if i == 0:
            continue
        edge_lim = g.edges[e].speed_limit
        if edge_lim is not None and abs(ri.limit_at(ri.starts[i]) - edge_lim) > 1e-6:
            out.append(
                Violation("A3", e, f"edge limit {edge_lim / KMH:.0f} km/h disagrees with the signed limit on route {spec.id}")
            )
    return out


def _check_lateral(sc: Scenario, ld: float) -> List[Violation]:
    """No other junction lies within lateral visibility upstream of a junction entry."""
    out = []
    world, g = sc.world, sc.world.graph
    for jid, entries in world.entries.items():
        for u in entries:
            stack = [(u, 0.0)]
            seen = {u: 0.0}
            while stack:
                x, d = stack.pop()
                for e in g.in_edges[x]:
                    other = g.junction_id[e]
                    if g.is_junction_edge(e) and other != jid:
                        out.append(
                            Violation("A1", f"junction {jid}", f"junction {other} within {d:.1f} m upstream of entry {u}")
                        )
                        continue
                    if other == jid:
                        continue
                    nd = d + g.edges[e].length
                    src = g.edges[e].source
                    if nd < ld and seen.get(src, math.inf) > nd:
                        seen[src] = nd
                        stack.append((src, nd))
    return sorted(set(out), key=str)
