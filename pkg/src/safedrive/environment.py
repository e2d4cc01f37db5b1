"""Global ADS state, signals, visibility, vista construction and the synchronous step.

Vehicles are tracked by their offset ``s`` along their own route; map
positions are derived on demand. ``RouteInfo`` precomputes everything needed
to project other vehicles and signals onto a route.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Dict, List, Mapping, Optional, Sequence, Tuple

from .dynamics import DynamicsParams
from .metric_map import EPS, MetricGraph, Position, Route

if TYPE_CHECKING:
    from .autopilot import Command


class ScenarioError(ValueError):
    """Raised when a scenario breaks a structural assumption at run time."""


class SignalKind(str, Enum):
    YIELD = "yield"
    STOP = "stop"
    TRAFFIC_LIGHT = "traffic_light"
    SPEED_LIMIT = "speed_limit"


GUARD_KINDS = (SignalKind.YIELD, SignalKind.STOP, SignalKind.TRAFFIC_LIGHT)


class Color(str, Enum):
    RED = "red"
    YELLOW = "yellow"
    GREEN = "green"


@dataclass(frozen=True)
class SignalSpec:
    """Static signal placement. Guards sit at offset 0 of the junction edge they protect."""

    id: str
    kind: SignalKind
    edge: str
    offset: float = 0.0
    cd: Optional[float] = None
    limit: Optional[float] = None  # m/s, speed_limit kind only


@dataclass(frozen=True)
class SignalState:
    id: str
    kind: SignalKind
    p: Position
    cd: Optional[float] = None
    color: Optional[Color] = None
    ttr: float = 0.0
    ttg: float = 0.0
    V: Optional[float] = None


# ----------------------------------------------------------------------------- lights
@dataclass(frozen=True)
class LightProgram:
    """Round-robin cycle over junction entries, in whole control periods.

    Entry ``k`` is green during ``[k P, k P + g)`` of each cycle, yellow for
    the next ``y`` periods, then every entry is red for ``ar`` periods.
    """

    entries: Tuple[Tuple[str, ...], ...]
    green: int
    yellow: int
    all_red: int
    dt: float
    offset: int = 0

    @property
    def slot(self) -> int:
        return self.green + self.yellow + self.all_red

    @property
    def period(self) -> int:
        return self.slot * len(self.entries)

    @property
    def T_y(self) -> float:
        return self.yellow * self.dt

    @property
    def T_ar(self) -> float:
        return self.all_red * self.dt

    def entry_of(self, signal_id: str) -> int:
        for i, group in enumerate(self.entries):
            if signal_id in group:
                return i
        raise KeyError(signal_id)

    def state(self, entry: int, step: int) -> Tuple[Color, float, float]:
        """(color, time-to-red, time-to-green) of one entry at a step."""
        P, n = self.slot, len(self.entries)
        local = (step + self.offset) % self.period
        active, r = divmod(local, P)
        if entry == active and r < self.green:
            return Color.GREEN, (self.green + self.yellow - r) * self.dt, 0.0
        if entry == active and r < self.green + self.yellow:
            return Color.YELLOW, (self.green + self.yellow - r) * self.dt, (self.period - r) * self.dt
        ahead = (entry - active) % n
        steps = ahead * P - r if ahead else self.period - r
        return Color.RED, 0.0, steps * self.dt


def light_cycle(
    entries: Sequence[Sequence[str]],
    green: float,
    T_y: float,
    T_ar: float,
    dt: float,
    offset: float = 0.0,
) -> LightProgram:
    """Build a round-robin program from durations in seconds (multiples of ``dt``)."""

    def steps(x: float, name: str, positive: bool = True) -> int:
        k = round(x / dt)
        if abs(k * dt - x) > 1e-6 or (positive and k <= 0) or k < 0:
            raise ValueError(f"{name}={x} s must be a positive multiple of dt={dt}")
        return int(k)

    if not entries:
        raise ValueError("a light cycle needs at least one entry")
    return LightProgram(
        entries=tuple(tuple(e) for e in entries),
        green=steps(green, "green"),
        yellow=steps(T_y, "yellow"),
        all_red=steps(T_ar, "all_red"),
        dt=dt,
        offset=steps(offset, "offset", positive=False),
    )


# -------------------------------------------------------------------------- visibility
@dataclass(frozen=True)
class Visibility:
    """Frontal and lateral visibility, optionally piecewise constant along the route."""

    fd: float
    ld: float
    fd_table: Tuple[Tuple[float, float], ...] = ()
    ld_table: Tuple[Tuple[float, float], ...] = ()

    @staticmethod
    def _lookup(base: float, table, s: float) -> float:
        val = base
        for start, x in table:
            if s + EPS >= start:
                val = x
            else:
                break
        return val

    def fd_at(self, s: float) -> float:
        return self._lookup(self.fd, self.fd_table, s) if self.fd_table else self.fd

    def ld_at(self, s: float) -> float:
        return self._lookup(self.ld, self.ld_table, s) if self.ld_table else self.ld


# -------------------------------------------------------------------------- route index
@dataclass(frozen=True)
class JunctionSpan:
    jid: int
    s_in: float
    s_out: float
    entry: str  # entry vertex
    edges: Tuple[str, ...]


class RouteInfo:
    """Precomputed projections for one route."""

    def __init__(self, graph: MetricGraph, route: Route, signals: Mapping[str, SignalSpec]):
        self.graph = graph
        self.route = route
        self.length = route.length
        self.elements = route.elements
        self.starts: List[float] = []
        acc = 0.0
        for _, a, b in route.elements:
            self.starts.append(acc)
            acc += b - a
        self.by_edge: Dict[str, List[int]] = {}
        for i, (e, _, _) in enumerate(route.elements):
            self.by_edge.setdefault(e, []).append(i)
        # vertices and shared points with their route offsets
        self.points: Dict[tuple, List[float]] = {}
        for i, (e, a, b) in enumerate(route.elements):
            edge = graph.edges[e]
            s0 = self.starts[i]
            if a <= EPS:
                self._add_point(("v", edge.source), s0)
            if b >= edge.length - EPS:
                self._add_point(("v", edge.target), s0 + b - a)
            for off, pid in graph.shared_points(e):
                if a - EPS <= off <= b + EPS:
                    self._add_point(("x", pid), s0 + off - a)
        for k in self.points:
            self.points[k].sort()

        sigs: List[Tuple[float, SignalSpec]] = []
        for sig in signals.values():
            if sig.kind in GUARD_KINDS:
                for i in self.by_edge.get(sig.edge, ()):
                    if route.elements[i][1] <= EPS:
                        sigs.append((self.starts[i], sig))
            else:
                s = self.offset_of(sig.edge, sig.offset)
                if s is not None:
                    sigs.append((s, sig))
        sigs.sort(key=lambda x: (x[0], x[1].id))
        self.signals = sigs
        self.signal_s = [s for s, _ in sigs]
        self.guard_s = {sig.id: s for s, sig in sigs if sig.kind in GUARD_KINDS}
        first = graph.edges[route.elements[0][0]]
        self.start_limit = first.speed_limit if first.speed_limit is not None else math.inf
        # a sign passed on the first edge before the start still applies
        behind = [
            sig
            for sig in signals.values()
            if sig.kind == SignalKind.SPEED_LIMIT and sig.edge == first.id and sig.offset < route.elements[0][1] - EPS
        ]
        if behind:
            self.start_limit = max(behind, key=lambda x: x.offset).limit
        self.limit_s: List[float] = []
        self.limit_v: List[float] = []
        for s, sig in sigs:
            if sig.kind == SignalKind.SPEED_LIMIT:
                self.limit_s.append(s)
                self.limit_v.append(sig.limit)
        self.stop_s = [s for s, sig in sigs if sig.kind == SignalKind.STOP]

        self.spans: List[JunctionSpan] = []
        for i, (e, a, b) in enumerate(route.elements):
            if not graph.is_junction_edge(e):
                continue
            jid = graph.junction_id[e]
            s_in, s_out = self.starts[i], self.starts[i] + b - a
            if self.spans and self.spans[-1].jid == jid and abs(self.spans[-1].s_out - s_in) <= EPS:
                last = self.spans[-1]
                self.spans[-1] = JunctionSpan(jid, last.s_in, s_out, last.entry, last.edges + (e,))
            else:
                entry = graph.edges[e].source if a <= EPS else ""
                self.spans.append(JunctionSpan(jid, s_in, s_out, entry, (e,)))
        self.span_by_jid: Dict[int, List[JunctionSpan]] = {}
        for sp in self.spans:
            self.span_by_jid.setdefault(sp.jid, []).append(sp)

    def _add_point(self, key, s):
        lst = self.points.setdefault(key, [])
        if not any(abs(x - s) <= EPS for x in lst):
            lst.append(s)

    # --- projections
    def locate(self, s: float) -> Tuple[int, str, float]:
        """Element index, edge and edge offset at route offset ``s`` (clamped to the route)."""
        s = min(max(s, 0.0), self.length)
        i = bisect.bisect_right(self.starts, s + EPS) - 1
        i = max(0, min(i, len(self.elements) - 1))
        e, a, b = self.elements[i]
        return i, e, min(b, a + max(0.0, s - self.starts[i]))

    def position(self, s: float) -> Position:
        _, e, off = self.locate(s)
        return self.graph.position(e, off)

    def offset_of(self, edge: str, off: float, after: float = -math.inf) -> Optional[float]:
        """Route offset of map position ``(edge, off)``, first occurrence ``>= after``."""
        g = self.graph
        length = g.edges[edge].length
        best = None
        if off <= EPS or off >= length - EPS:
            u = g.edges[edge].source if off <= EPS else g.edges[edge].target
            lst = self.points.get(("v", u))
            if lst:
                for s in lst:
                    if s >= after - EPS:
                        return s
            return None
        for i in self.by_edge.get(edge, ()):
            e, a, b = self.elements[i]
            if a - EPS <= off <= b + EPS:
                s = self.starts[i] + off - a
                if s >= after - EPS and (best is None or s < best):
                    best = s
        if best is not None:
            return best
        if g.shared_points(edge):
            for o, pid in g.shared_points(edge):
                if abs(o - off) <= EPS:
                    for s in self.points.get(("x", pid), ()):
                        if s >= after - EPS:
                            return s
        return None

    def limit_at(self, s: float) -> float:
        i = bisect.bisect_right(self.limit_s, s + EPS)
        return self.limit_v[i - 1] if i else self.start_limit

    def speed_signals_between(self, lo: float, hi: float) -> List[Tuple[float, float]]:
        """Speed-limit changes with ``lo < s < hi`` (route offsets)."""
        i = bisect.bisect_right(self.limit_s, lo + EPS)
        out = []
        while i < len(self.limit_s) and self.limit_s[i] < hi - EPS:
            out.append((self.limit_s[i], self.limit_v[i]))
            i += 1
        return out

    def span_at(self, s: float) -> Optional[JunctionSpan]:
        """Junction span containing ``s`` at its entry or strictly inside."""
        for sp in self.spans:
            if sp.s_in - EPS <= s < sp.s_out - EPS:
                return sp
        return None


# ----------------------------------------------------------------------------- state
@dataclass(frozen=True)
class VehicleState:
    id: str
    route: RouteInfo = field(repr=False, compare=False)
    s: float
    v: float
    V: float
    vis: Visibility
    st: Optional[float] = None
    lane_change_active: bool = False
    route_id: str = ""

    @property
    def fd(self) -> float:
        return self.vis.fd_at(self.s)

    @property
    def ld(self) -> float:
        return self.vis.ld_at(self.s)

    @property
    def edge_offset(self) -> Tuple[str, float]:
        _, e, off = self.route.locate(self.s)
        return e, off

    @property
    def p(self) -> Position:
        return self.route.position(self.s)


@dataclass(frozen=True)
class AdsState:
    step: int
    t: float
    vehicles: Tuple[VehicleState, ...]
    lights: Mapping[str, Tuple[Color, float, float]]

    def vehicle(self, vid: str) -> VehicleState:
        for v in self.vehicles:
            if v.id == vid:
                return v
        raise KeyError(vid)


@dataclass(frozen=True)
class JunctionEntry:
    vertex: str
    edges: Tuple[str, ...]
    guards: Tuple[str, ...]


class World:
    """Static scenario context shared by the environment, autopilots and the monitor."""

    def __init__(
        self,
        graph: MetricGraph,
        params: DynamicsParams,
        signals: Sequence[SignalSpec] = (),
        programs: Sequence[LightProgram] = (),
        lane_changes: Mapping[str, str] = None,
        entry_priority: Sequence[str] = (),
        v0: float = 1.0,
        gap: float = 0.0,
    ):
        self.graph = graph
        self.params = params
        self.v0 = v0
        # standstill gap: a vehicle is an obstacle this far behind its position
        self.gap = gap
        self.signals: Dict[str, SignalSpec] = {}
        for sig in signals:
            if sig.id in self.signals:
                raise ScenarioError(f"duplicate signal id {sig.id!r}")
            if sig.edge not in graph.edges:
                raise ScenarioError(f"signal {sig.id!r} on unknown edge {sig.edge!r}")
            self.signals[sig.id] = sig
        self.programs = list(programs)
        self.program_of: Dict[str, Tuple[LightProgram, int]] = {}
        for prog in self.programs:
            for i, group in enumerate(prog.entries):
                for sid in group:
                    if sid in self.program_of:
                        raise ScenarioError(f"signal {sid!r} appears in two light cycles")
                    self.program_of[sid] = (prog, i)
        self.lane_changes: Dict[str, str] = dict(lane_changes or {})
        self.priority: Dict[str, int] = {sid: i for i, sid in enumerate(entry_priority)}
        self.guard_of_edge: Dict[str, SignalSpec] = {}
        for sig in self.signals.values():
            if sig.kind in GUARD_KINDS:
                self.guard_of_edge[sig.edge] = sig
        # junction entries
        self.entries: Dict[int, Dict[str, JunctionEntry]] = {}
        for jid, cls in enumerate(graph.junction_classes):
            if len(cls) < 2:
                continue
            by_vertex: Dict[str, List[str]] = {}
            for e in sorted(cls):
                by_vertex.setdefault(graph.edges[e].source, []).append(e)
            self.entries[jid] = {
                u: JunctionEntry(
                    u,
                    tuple(es),
                    tuple(self.guard_of_edge[e].id for e in es if e in self.guard_of_edge),
                )
                for u, es in by_vertex.items()
            }
        self._approach_cache: Dict[Tuple[str, float], float] = {}

    def topology(self, sig: SignalSpec) -> str:
        """'lane_change', 'merge' or 'cross' for a guarded junction edge."""
        if sig.edge in self.lane_changes:
            return "lane_change"
        g = self.graph
        post = g.edges[sig.edge].target
        jid = g.junction_id[sig.edge]
        others = [e for e in g.in_edges[post] if e != sig.edge and g.junction_id.get(e) == jid]
        return "merge" if others else "cross"

    def light_state(self, sid: str, step: int) -> Tuple[Color, float, float]:
        prog, i = self.program_of[sid]
        return prog.state(i, step)

    def lights_at(self, step: int) -> Dict[str, Tuple[Color, float, float]]:
        return {sid: self.light_state(sid, step) for sid in self.program_of}

    def timing(self, sid: str) -> Tuple[float, float]:
        prog, _ = self.program_of[sid]
        return prog.T_y, prog.T_ar

    def signal_state(self, sid: str, lights: Mapping[str, Tuple[Color, float, float]]) -> SignalState:
        sig = self.signals[sid]
        p = self.graph.position(sig.edge, sig.offset)
        if sig.kind == SignalKind.TRAFFIC_LIGHT:
            color, ttr, ttg = lights[sid]
            return SignalState(sid, sig.kind, p, sig.cd, color, ttr, ttg)
        return SignalState(sid, sig.kind, p, sig.cd, V=sig.limit)

    def approach_limit(self, vertex: str, ld: float) -> float:
        """Highest speed limit on any edge within ``ld`` upstream of ``vertex``."""
        key = (vertex, ld)
        if key in self._approach_cache:
            return self._approach_cache[key]
        g = self.graph
        best = 0.0
        frontier = [(vertex, 0.0)]
        seen: Dict[str, float] = {vertex: 0.0}
        while frontier:
            u, d = frontier.pop()
            for e in g.in_edges[u]:
                edge = g.edges[e]
                best = max(best, self.edge_max_limit(e))
                nd = d + edge.length
                if nd < ld and seen.get(edge.source, math.inf) > nd:
                    seen[edge.source] = nd
                    frontier.append((edge.source, nd))
        if best <= 0.0:
            best = max((e.speed_limit or 0.0) for e in g.edges.values())
        self._approach_cache[key] = best
        return best

    def edge_max_limit(self, e: str) -> float:
        lim = self.graph.edges[e].speed_limit or 0.0
        for sig in self.signals.values():
            if sig.kind == SignalKind.SPEED_LIMIT and sig.edge == e:
                lim = max(lim, sig.limit)
        return lim

    def route_info(self, route: Route) -> RouteInfo:
        return RouteInfo(self.graph, route, self.signals)

    def make_vehicle(
        self,
        vid: str,
        route: RouteInfo,
        s: float,
        v: float,
        vis: Visibility,
        t: float = 0.0,
        route_id: str = "",
    ) -> VehicleState:
        st = t if (v <= EPS and any(abs(s - x) <= EPS for x in route.stop_s)) else None
        return VehicleState(vid, route, s, v, route.limit_at(s), vis, st, False, route_id)

    def initial_state(self, vehicles: Sequence[VehicleState]) -> AdsState:
        return AdsState(0, 0.0, tuple(vehicles), self.lights_at(0))


# ----------------------------------------------------------------------------- vista
@dataclass(frozen=True)
class Obstacle:
    """A front obstacle projected on the ego route."""

    kind: str  # "vehicle", "fictitious" or a SignalKind value
    id: Optional[str]
    s: float
    d: float
    v: float = 0.0
    V: float = 0.0
    lane_change_active: bool = False
    signal: Optional[SignalState] = None

    @property
    def is_vehicle(self) -> bool:
        return self.kind in ("vehicle", "fictitious")


@dataclass(frozen=True)
class Arriving:
    """An arriving vehicle (or junction occupant) relative to the ego's junction."""

    id: Optional[str]
    d: float  # distance to its junction entry, 0 inside the junction
    v: float
    V: float
    entry: str
    in_junction: bool = False
    at_entry: bool = False
    st: Optional[float] = None
    lane_change_active: bool = False
    guard: Optional[str] = None
    fictitious: bool = False
    priority: int = 0


@dataclass(frozen=True)
class Vista:
    ego: VehicleState
    t: float
    front: Tuple[Obstacle, ...]  # simplified, ordered; ends with the closest front vehicle
    f: Obstacle  # closest front vehicle (possibly fictitious)
    vtype: "object"
    h: Optional[Obstacle] = None
    cd: float = 0.0
    jid: Optional[int] = None
    entry: Optional[str] = None
    arriving: Tuple[Arriving, ...] = ()
    T_y: float = 0.0
    T_ar: float = 0.0
    ttg: Mapping[str, float] = field(default_factory=dict)
    lane_peers: Tuple[Obstacle, ...] = ()  # lane-change: f1 and a1 candidates
    v0: float = 1.0
    priority: int = 0

    @property
    def s_e(self) -> float:
        return self.ego.s

    @property
    def s_h(self) -> float:
        return self.h.s if self.h is not None else math.inf

    def speed_signals(self, lo: float, hi: float) -> List[Tuple[float, float]]:
        return self.ego.route.speed_signals_between(lo, hi)


def _project(world: World, ego: VehicleState, other: VehicleState) -> Optional[float]:
    e, off = other.edge_offset
    return ego.route.offset_of(e, off, after=ego.s)


def front_obstacles(world: World, state: AdsState, ego: VehicleState) -> List[Obstacle]:
    """All obstacles within frontal visibility, closest first, ending with the fictitious vehicle."""
    s_e = ego.s
    fd = ego.fd
    horizon = s_e + fd
    out: List[Obstacle] = []
    for o in state.vehicles:
        if o.id == ego.id:
            continue
        s = _project(world, ego, o)
        if s is None or s < s_e - EPS or s > horizon + EPS:
            continue
        s -= world.gap
        out.append(Obstacle("vehicle", o.id, s, max(0.0, s - s_e), o.v, o.V, o.lane_change_active))
    ri = ego.route
    i = bisect.bisect_left(ri.signal_s, s_e - EPS)
    while i < len(ri.signals) and ri.signals[i][0] <= horizon + EPS:
        s, sig = ri.signals[i]
        i += 1
        if sig.kind == SignalKind.SPEED_LIMIT and s <= s_e + EPS:
            continue
        st = world.signal_state(sig.id, state.lights)
        out.append(Obstacle(sig.kind.value, sig.id, s, max(0.0, s - s_e), V=sig.limit or 0.0, signal=st))
    V_fict = ri.limit_at(min(horizon, ri.length))
    out.append(Obstacle("fictitious", None, horizon - world.gap, fd - world.gap, V_fict, V_fict))
    # vehicles win ties against signals
    out.sort(key=lambda o: (o.s, 0 if o.is_vehicle else 1))
    return out


def build_vista(world: World, state: AdsState, vid: str) -> Vista:
    """Collect, classify and simplify the vista of one vehicle."""
    from .autopilot import VistaType, classify

    ego = state.vehicle(vid)
    raw = front_obstacles(world, state, ego)
    vtype, front, h = classify(world, raw)
    f = next(o for o in raw if o.is_vehicle)
    if vtype == VistaType.ROAD:
        return Vista(ego, state.t, tuple(front), f, vtype, v0=world.v0)
    sig = world.signals[h.id]
    jid = world.graph.junction_id[sig.edge]
    entry = world.graph.edges[sig.edge].source
    cd = sig.cd if sig.cd is not None else _span_length(ego.route, h.s, jid)
    arriving = arriving_vehicles(world, state, ego, jid, entry)
    T_y = T_ar = 0.0
    ttg: Dict[str, float] = {}
    if sig.kind == SignalKind.TRAFFIC_LIGHT:
        T_y, T_ar = world.timing(sig.id)
        for ent in world.entries[jid].values():
            for gid in ent.guards:
                if gid in state.lights:
                    ttg[gid] = state.lights[gid][2]
    peers: Tuple[Obstacle, ...] = ()
    if vtype == VistaType.LANE_CHANGE:
        peers = lane_peers(world, state, ego, sig)
    return Vista(
        ego,
        state.t,
        tuple(front),
        f,
        vtype,
        h=h,
        cd=cd,
        jid=jid,
        entry=entry,
        arriving=tuple(arriving),
        T_y=T_y,
        T_ar=T_ar,
        ttg=ttg,
        lane_peers=peers,
        v0=world.v0,
        priority=world.priority.get(sig.id, 0),
    )


def _span_length(ri: RouteInfo, s_h: float, jid: int) -> float:
    for sp in ri.span_by_jid.get(jid, ()):
        if abs(sp.s_in - s_h) <= EPS:
            return sp.s_out - sp.s_in
    raise ScenarioError("guard signal is not at a junction entry of the route")


def arriving_vehicles(
    world: World, state: AdsState, ego: VehicleState, jid: int, ego_entry: str
) -> List[Arriving]:
    """Closest vehicle per other entry within lateral visibility, plus every junction occupant."""
    ld = ego.ld
    entries = world.entries.get(jid, {})
    closest: Dict[str, Arriving] = {}
    occupants: List[Arriving] = []
    for o in state.vehicles:
        if o.id == ego.id:
            continue
        for sp in o.route.span_by_jid.get(jid, ()):
            if o.s >= sp.s_out - EPS:
                continue
            guard = world.guard_of_edge.get(sp.edges[0])
            gid = guard.id if guard is not None else None
            prio = world.priority.get(gid, 0)
            if o.s > sp.s_in + EPS:
                occupants.append(
                    Arriving(o.id, 0.0, o.v, o.V, sp.entry, True, False, o.st, o.lane_change_active, gid,
                             priority=prio)
                )
                break
            if sp.entry == ego_entry:
                break
            d = max(0.0, sp.s_in - o.s)
            if d > ld + EPS:
                break
            at_entry = d <= EPS
            a = Arriving(o.id, d, o.v, o.V, sp.entry, at_entry, at_entry, o.st, o.lane_change_active, gid,
                         priority=prio)
            cur = closest.get(sp.entry)
            if cur is None or (a.d, a.id) < (cur.d, cur.id):
                closest[sp.entry] = a
            break
    out: List[Arriving] = []
    for u in sorted(entries):
        if u == ego_entry:
            continue
        if u in closest:
            out.append(closest[u])
        else:
            V = world.approach_limit(u, ld)
            guards = entries[u].guards
            out.append(Arriving(None, ld, V, V, u, guard=guards[0] if guards else None, fictitious=True))
    return out + occupants


def lane_peers(world: World, state: AdsState, ego: VehicleState, sig: SignalSpec) -> Tuple[Obstacle, ...]:
    """Closest vehicle ahead on the lane being left and closest vehicle behind the ego."""
    cont = world.lane_changes.get(sig.edge)
    ahead: Optional[Obstacle] = None
    behind: Optional[Obstacle] = None
    for o in state.vehicles:
        if o.id == ego.id:
            continue
        e, off = o.edge_offset
        if cont is not None and e == cont:
            if ahead is None or off < ahead.d:
                ahead = Obstacle("vehicle", o.id, math.nan, off, o.v, o.V, o.lane_change_active)
            continue
        if o.route is not ego.route:
            s = ego.route.offset_of(e, off)
        else:
            s = o.s
        if s is not None and s < ego.s - EPS and ego.s - s <= ego.ld:
            if behind is None or s > behind.s:
                behind = Obstacle("vehicle", o.id, s, ego.s - s, o.v, o.V, o.lane_change_active)
    return tuple(x for x in (ahead, behind) if x is not None)


# ------------------------------------------------------------------------------ step
@dataclass(frozen=True)
class StepResult:
    state: AdsState
    retired: Tuple[str, ...]
    virtual_s: Mapping[str, float]


def step(world: World, state: AdsState, commands: Mapping[str, "Command"]) -> StepResult:
    """Apply every command synchronously and advance the clock by one period."""
    dt = world.params.dt
    t1 = round((state.step + 1) * dt, 9)
    nxt: List[VehicleState] = []
    retired: List[str] = []
    virtual: Dict[str, float] = {}
    for veh in state.vehicles:
        cmd = commands.get(veh.id)
        if cmd is None:
            raise ScenarioError(f"no command for vehicle {veh.id!r}")
        if cmd.dd < -EPS:
            raise ScenarioError(f"negative displacement for vehicle {veh.id!r}")
        s1 = veh.s + max(0.0, cmd.dd)
        v1 = veh.v + cmd.dv
        if v1 < 1e-9:
            v1 = 0.0
        virtual[veh.id] = s1
        if s1 >= veh.route.length - EPS:
            retired.append(veh.id)
            continue
        V1 = veh.route.limit_at(s1)
        st = veh.st
        at_stop = any(abs(s1 - x) <= EPS for x in veh.route.stop_s)
        if at_stop and v1 == 0.0:
            if st is None:
                st = t1
        else:
            st = None
        nxt.append(replace(veh, s=s1, v=v1, V=V1, st=st, lane_change_active=cmd.lane_change_active))
    new = AdsState(state.step + 1, t1, tuple(nxt), world.lights_at(state.step + 1))
    return StepResult(new, tuple(retired), virtual)
