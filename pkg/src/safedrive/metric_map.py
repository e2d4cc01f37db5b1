"""Metric-graph maps: positions, routes, distances, junctions and route disjointness.

Edges carry only a length. Crossings between edges are declared explicitly as
shared positions, i.e. pairs ``(edge1, offset1) == (edge2, offset2)``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import networkx as nx

EPS = 1e-9


class MapError(ValueError):
    """Raised for structurally invalid maps, positions or routes."""


@dataclass(frozen=True)
class Edge:
    id: str
    source: str
    target: str
    length: float
    speed_limit: Optional[float] = None  # m/s in force at the edge start


@dataclass(frozen=True)
class Position:
    """A map position: either a vertex or an offset on an edge.

    Use :meth:`MetricGraph.position` to build normalized instances; compare
    with :meth:`MetricGraph.same`, never with ``==``.
    """

    edge: Optional[str] = None
    offset: float = 0.0
    vertex: Optional[str] = None

    def __str__(self) -> str:
        if self.vertex is not None:
            return self.vertex
        return f"({self.edge},{self.offset:g})"


@dataclass(frozen=True)
class Route:
    """A chain of edge pieces ``(edge, entry_offset, exit_offset)``."""

    start: Position
    end: Position
    elements: Tuple[Tuple[str, float, float], ...]
    length: float

    @property
    def edges(self) -> Tuple[str, ...]:
        return tuple(e for e, _, _ in self.elements)


@dataclass
class Footprint:
    """Precomputed summary of a route used by disjointness checks."""

    pieces: Dict[str, List[Tuple[float, float]]] = field(default_factory=dict)
    junctions: Dict[int, set] = field(default_factory=dict)
    points: set = field(default_factory=set)
    ends: set = field(default_factory=set)
    end_positions: Tuple[Position, ...] = ()


class MetricGraph:
    """Immutable metric graph ``(U, E, S)`` with declared shared positions."""

    def __init__(
        self,
        vertices: Iterable[str],
        edges: Iterable[Edge],
        shared_positions: Iterable[Tuple[Tuple[str, float], Tuple[str, float]]] = (),
    ):
        self.vertices: FrozenSet[str] = frozenset(vertices)
        self.edges: Dict[str, Edge] = {}
        for e in edges:
            if e.id in self.edges:
                raise MapError(f"duplicate edge id {e.id!r}")
            if not e.length > 0:
                raise MapError(f"edge {e.id!r} must have a strictly positive length")
            for u in (e.source, e.target):
                if u not in self.vertices:
                    raise MapError(f"edge {e.id!r} references unknown vertex {u!r}")
            self.edges[e.id] = e
        self.out_edges: Dict[str, List[str]] = {u: [] for u in self.vertices}
        self.in_edges: Dict[str, List[str]] = {u: [] for u in self.vertices}
        for e in self.edges.values():
            self.out_edges[e.source].append(e.id)
            self.in_edges[e.target].append(e.id)

        # union-find over declared identifications -> shared point ids
        parent: Dict[Tuple[str, float], Tuple[str, float]] = {}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        pairs = []
        for (e1, a1), (e2, a2) in shared_positions:
            for e, a in ((e1, a1), (e2, a2)):
                if e not in self.edges:
                    raise MapError(f"shared position on unknown edge {e!r}")
                if not (EPS < a < self.edges[e].length - EPS):
                    raise MapError(
                        f"shared position offset {a} must lie strictly inside edge {e!r}"
                    )
            if e1 == e2:
                raise MapError(f"edge {e1!r} is self-crossing")
            k1, k2 = (e1, float(a1)), (e2, float(a2))
            parent.setdefault(k1, k1)
            parent.setdefault(k2, k2)
            pairs.append((k1, k2))
        for k1, k2 in pairs:
            r1, r2 = find(k1), find(k2)
            if r1 != r2:
                parent[r1] = r2
        roots = sorted({find(k) for k in parent})
        root_id = {r: i for i, r in enumerate(roots)}
        self.point_members: Dict[int, List[Tuple[str, float]]] = {}
        self._shared: Dict[str, List[Tuple[float, int]]] = {e: [] for e in self.edges}
        for k in sorted(parent):
            pid = root_id[find(k)]
            self.point_members.setdefault(pid, []).append(k)
            self._shared[k[0]].append((k[1], pid))
        for pid, members in self.point_members.items():
            if len({e for e, _ in members}) != len(members):
                raise MapError(f"edge is self-crossing at shared point {members}")
        for e in self._shared:
            self._shared[e].sort()
        self._shared_offsets = {e: [a for a, _ in lst] for e, lst in self._shared.items()}

        self.junction_classes: List[FrozenSet[str]] = compute_junctions(self)
        self.junction_id: Dict[str, int] = {}
        for jid, cls in enumerate(self.junction_classes):
            for e in cls:
                self.junction_id[e] = jid
        self._dist_graph: Optional[nx.DiGraph] = None

    # ------------------------------------------------------------------ positions
    def length(self, edge: str) -> float:
        return self.edges[edge].length

    def shared_points(self, edge: str) -> List[Tuple[float, int]]:
        return self._shared[edge]

    def is_junction_edge(self, edge: str) -> bool:
        return len(self.junction_classes[self.junction_id[edge]]) > 1

    def vertex(self, u: str) -> Position:
        if u not in self.vertices:
            raise MapError(f"unknown vertex {u!r}")
        return Position(vertex=u)

    def position(self, edge: str, offset: float) -> Position:
        """Normalized position; endpoints collapse to their vertex."""
        if edge not in self.edges:
            raise MapError(f"unknown edge {edge!r}")
        e = self.edges[edge]
        if offset < -EPS or offset > e.length + EPS or math.isnan(offset):
            raise MapError(f"offset {offset} outside edge {edge!r} of length {e.length}")
        if offset <= EPS:
            return Position(vertex=e.source)
        if offset >= e.length - EPS:
            return Position(vertex=e.target)
        return Position(edge=edge, offset=float(offset))

    def check(self, p: Position) -> Position:
        if p.vertex is not None:
            return self.vertex(p.vertex)
        if p.edge is None:
            raise MapError("position has neither vertex nor edge")
        return self.position(p.edge, p.offset)

    def shared_id(self, p: Position) -> Optional[int]:
        if p.vertex is not None or p.edge is None:
            return None
        offs = self._shared_offsets[p.edge]
        i = bisect.bisect_left(offs, p.offset - EPS)
        if i < len(offs) and abs(offs[i] - p.offset) <= EPS:
            return self._shared[p.edge][i][1]
        return None

    def key(self, p: Position):
        """Hashable identity of a position; identified positions share a key."""
        p = self.check(p)
        if p.vertex is not None:
            return ("v", p.vertex)
        pid = self.shared_id(p)
        if pid is not None:
            return ("x", pid)
        return ("e", p.edge, p.offset)

    def same(self, p: Position, q: Position) -> bool:
        kp, kq = self.key(p), self.key(q)
        if kp[0] == "e" and kq[0] == "e":
            return kp[1] == kq[1] and abs(kp[2] - kq[2]) <= EPS
        return kp == kq

    def edges_at(self, p: Position) -> List[Tuple[str, float]]:
        """All (edge, offset) representations of a position."""
        p = self.check(p)
        if p.vertex is not None:
            return [(e, self.edges[e].length) for e in self.in_edges[p.vertex]] + [
                (e, 0.0) for e in self.out_edges[p.vertex]
            ]
        pid = self.shared_id(p)
        if pid is not None:
            return list(self.point_members[pid])
        return [(p.edge, p.offset)]

    def junction_of(self, p: Position) -> Optional[int]:
        """Junction class of an interior edge position, None for non-junction edges.

        Vertices are ambiguous and belong to no single junction.
        """
        p = self.check(p)
        if p.vertex is not None:
            return None
        if self.is_junction_edge(p.edge):
            return self.junction_id[p.edge]
        for e, _ in self.edges_at(p):
            if self.is_junction_edge(e):
                return self.junction_id[e]
        return None

    def in_same_junction(self, p: Position, q: Position) -> bool:
        jp, jq = self.junction_of(p), self.junction_of(q)
        return jp is not None and jp == jq

    # --------------------------------------------------------------------- routes
    def route(
        self, edges: Sequence[str], start_offset: float = 0.0, end_offset: Optional[float] = None
    ) -> Route:
        if not edges:
            raise MapError("a route needs at least one edge")
        for a, b in zip(edges, edges[1:]):
            if a not in self.edges or b not in self.edges:
                raise MapError(f"unknown edge in route {list(edges)}")
            if self.edges[a].target != self.edges[b].source:
                raise MapError(f"route edges {a!r} and {b!r} do not chain")
        for e in edges:
            if e not in self.edges:
                raise MapError(f"unknown edge {e!r}")
        elements = []
        last = len(edges) - 1
        for i, e in enumerate(edges):
            lo = start_offset if i == 0 else 0.0
            hi = self.edges[e].length if (i < last or end_offset is None) else end_offset
            if lo < -EPS or hi > self.edges[e].length + EPS or hi < lo - EPS:
                raise MapError(f"invalid offsets [{lo}, {hi}] on edge {e!r}")
            elements.append((e, float(lo), float(hi)))
        if len(elements) > 1 and elements[0][2] - elements[0][1] <= EPS:
            elements.pop(0)
        if len(elements) > 1 and elements[-1][2] - elements[-1][1] <= EPS:
            elements.pop()
        length = sum(b - a for _, a, b in elements)
        start = self.position(elements[0][0], elements[0][1])
        end = self.position(elements[-1][0], elements[-1][2])
        return Route(start=start, end=end, elements=tuple(elements), length=length)

    def offset_on_route(self, p: Position, route: Route) -> float:
        """Distance from the route start to the first occurrence of ``p``."""
        reps = self.edges_at(p)
        s = 0.0
        for e, a, b in route.elements:
            for re_, ra in reps:
                if re_ == e and a - EPS <= ra <= b + EPS:
                    return s + max(0.0, ra - a)
            s += b - a
        raise MapError(f"position {p} is not on the route")

    def position_on_route(self, route: Route, s: float) -> Position:
        if s < -EPS or s > route.length + EPS:
            raise MapError(f"route offset {s} outside [0, {route.length}]")
        acc = 0.0
        for e, a, b in route.elements:
            span = b - a
            if s <= acc + span + EPS:
                return self.position(e, min(b, a + max(0.0, s - acc)))
            acc += span
        e, _, b = route.elements[-1]
        return self.position(e, b)

    def advance(self, p: Position, route: Route, d: float) -> Position:
        """The position ``p +_route d``."""
        if d < -EPS:
            raise MapError("cannot advance by a negative distance")
        s = self.offset_on_route(p, route)
        if s + d > route.length + EPS:
            raise MapError(
                f"advancing {d} m from {p} exceeds the remaining route ({route.length - s} m)"
            )
        return self.position_on_route(route, s + d)

    # ------------------------------------------------------------------ distance
    def _breakpoints(self, edge: str) -> List[Tuple[float, object]]:
        e = self.edges[edge]
        pts: List[Tuple[float, object]] = [(0.0, ("v", e.source))]
        pts += [(a, ("x", pid)) for a, pid in self._shared[edge]]
        pts.append((e.length, ("v", e.target)))
        return pts

    def _distance_graph(self) -> nx.DiGraph:
        if self._dist_graph is None:
            g = nx.DiGraph()
            for eid in self.edges:
                pts = self._breakpoints(eid)
                for (a, u), (b, v) in zip(pts, pts[1:]):
                    w = b - a
                    if not g.has_edge(u, v) or g[u][v]["weight"] > w:
                        g.add_edge(u, v, weight=w)
            for u in self.vertices:
                g.add_node(("v", u))
            self._dist_graph = g
        return self._dist_graph

    def distance(self, p: Position, q: Position) -> float:
        """Length of the shortest route from ``p`` to ``q`` (``inf`` if none)."""
        p, q = self.check(p), self.check(q)
        if self.same(p, q):
            return 0.0
        g = self._distance_graph()
        kp, kq = self.key(p), self.key(q)
        best = math.inf
        # sources: breakpoints reachable from p along its own edge
        if kp[0] == "e":
            sources = []
            for a, node in self._breakpoints(kp[1]):
                if a > kp[2]:
                    sources.append((node, a - kp[2]))
        else:
            sources = [(kp, 0.0)]
        if kq[0] == "e":
            targets = []
            for a, node in self._breakpoints(kq[1]):
                if a < kq[2]:
                    targets.append((node, kq[2] - a))
            if kp[0] == "e" and kp[1] == kq[1] and kp[2] <= kq[2]:
                best = kq[2] - kp[2]
        else:
            targets = [(kq, 0.0)]
        for src, d0 in sources:
            lengths = nx.single_source_dijkstra_path_length(g, src, weight="weight")
            for tgt, d1 in targets:
                if tgt in lengths:
                    best = min(best, d0 + lengths[tgt] + d1)
        return best

    # -------------------------------------------------------------- disjointness
    def footprint(self, route: Route) -> Footprint:
        fp = Footprint()
        for e, a, b in route.elements:
            edge = self.edges[e]
            if b - a > EPS:
                fp.pieces.setdefault(e, []).append((a, b))
                if self.is_junction_edge(e):
                    fp.junctions.setdefault(self.junction_id[e], set()).add(e)
            if a <= EPS:
                fp.points.add(("v", edge.source))
            if b >= edge.length - EPS:
                fp.points.add(("v", edge.target))
            for off, pid in self._shared[e]:
                if a - EPS <= off <= b + EPS:
                    fp.points.add(("x", pid))
        fp.ends = {self.key(route.start), self.key(route.end)}
        fp.end_positions = (route.start, route.end)
        for k in fp.ends:
            if k[0] != "e":
                fp.points.add(k)
        return fp

    def routes_disjoint(self, r1, r2) -> bool:
        """``r1 ⊎ r2``: no common positions and no common junction, endpoints excepted.

        A common position is tolerated only when it is an endpoint of both
        routes. Pieces on distinct edges of one junction class conflict; pieces
        on the same edge conflict only when they overlap.
        """
        f1 = r1 if isinstance(r1, Footprint) else self.footprint(r1)
        f2 = r2 if isinstance(r2, Footprint) else self.footprint(r2)
        both_ends = _common_ends(f1, f2, self)
        for e, ivs1 in f1.pieces.items():
            ivs2 = f2.pieces.get(e)
            if not ivs2:
                continue
            for a1, b1 in ivs1:
                for a2, b2 in ivs2:
                    lo, hi = max(a1, a2), min(b1, b2)
                    if hi - lo > EPS:
                        return False
                    if hi - lo >= -EPS:
                        k = self.key(self.position(e, 0.5 * (lo + hi)))
                        if not _in_ends(k, both_ends):
                            return False
        for pt in f1.points & f2.points:
            if not _in_ends(pt, both_ends):
                return False
        for jid, es1 in f1.junctions.items():
            es2 = f2.junctions.get(jid)
            if es2 and (len(es1 | es2) > 1 and not (es1 == es2 and len(es1) == 1)):
                return False
        return True


def _common_ends(f1: Footprint, f2: Footprint, g: MetricGraph) -> list:
    out = []
    for p in f1.end_positions:
        for q in f2.end_positions:
            if g.same(p, q):
                out.append(g.key(p))
    return out


def _in_ends(k, ends: list) -> bool:
    for e in ends:
        if k[0] == "e" and e[0] == "e":
            if k[1] == e[1] and abs(k[2] - e[2]) <= EPS:
                return True
        elif k == e:
            return True
    return False


def compute_junctions(graph: MetricGraph) -> List[FrozenSet[str]]:
    """Junction classes: closure of 'crossing' and 'same target vertex' over edges."""
    g = nx.Graph()
    g.add_nodes_from(graph.edges)
    by_target: Dict[str, List[str]] = {}
    for e in graph.edges.values():
        by_target.setdefault(e.target, []).append(e.id)
    for group in by_target.values():
        for a, b in zip(group, group[1:]):
            g.add_edge(a, b)
    for members in graph.point_members.values():
        for (a, _), (b, _) in zip(members, members[1:]):
            g.add_edge(a, b)
    classes = [frozenset(c) for c in nx.connected_components(g)]
    return sorted(classes, key=lambda c: sorted(c))


def distance(graph: MetricGraph, p: Position, q: Position) -> float:
    return graph.distance(p, q)


def advance(graph: MetricGraph, p: Position, route: Route, d: float) -> Position:
    return graph.advance(p, route, d)


def routes_disjoint(graph: MetricGraph, r1: Route, r2: Route) -> bool:
    return graph.routes_disjoint(r1, r2)
