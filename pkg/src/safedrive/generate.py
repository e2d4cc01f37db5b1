"""Random scenario generation for the seven map profiles.

Every generated scenario satisfies the map assumptions and starts in a safe
state: vehicles are placed off junctions with generous gaps and their initial
speeds are lowered until the monitor accepts the initial state.
"""

from __future__ import annotations

import json
import random
from typing import Any, Dict, List, Optional

from .scenario import FORMAT_VERSION, parse_scenario, validate_assumptions

PROFILES = (
    "straight-road",
    "merge",
    "lane-change",
    "yield-cross",
    "light-cross",
    "stop-cross",
    "mixed-grid",
)

JUNCTION_LEN = 20.0
STANDSTILL_GAP = 2.0


class _Builder:
    """Accumulates the JSON blocks of a scenario."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.vertices: List[str] = []
        self.edges: List[Dict[str, Any]] = []
        self.shared: List[Dict[str, Any]] = []
        self.lane_changes: List[Dict[str, str]] = []
        self.placements: List[Dict[str, Any]] = []
        self.cycles: List[Dict[str, Any]] = []
        self.priority: List[str] = []
        self.routes: Dict[str, List[str]] = {}
        self.first_edge_len: Dict[str, float] = {}

    def vertex(self, name: str) -> str:
        if name not in self.vertices:
            self.vertices.append(name)
        return name

    def edge(self, eid: str, a: str, b: str, length: float, limit: float) -> str:
        self.vertex(a)
        self.vertex(b)
        self.edges.append(
            {"id": eid, "from": a, "to": b, "length_m": round(length, 3), "speed_limit_kmh": limit}
        )
        return eid

    def signal(self, sid: str, kind: str, edge: str, offset: float = 0.0, **extra) -> str:
        self.placements.append({"id": sid, "kind": kind, "edge": edge, "offset": offset, **extra})
        return sid

    def cross(self, e1: str, o1: float, e2: str, o2: float):
        self.shared.append({"a": {"edge": e1, "offset": o1}, "b": {"edge": e2, "offset": o2}})

    def light_cycle(self, entries: List[List[str]]):
        rng = self.rng
        green = float(rng.choice([8, 10, 12, 15]))
        yellow, all_red = 3.0, 2.0
        period = (green + yellow + all_red) * len(entries)
        offset = rng.randrange(int(period * 2)) * 0.5
        self.cycles.append(
            {"entries": entries, "green_s": green, "yellow_s": yellow, "all_red_s": all_red, "offset_s": offset}
        )


def _limit(rng: random.Random) -> float:
    return float(rng.choice([30, 40, 50, 60]))


def _approach(rng: random.Random) -> float:
    return float(rng.randint(240, 320))


# ------------------------------------------------------------------------------ profiles
def _straight(b: _Builder):
    rng = b.rng
    n = rng.randint(4, 6)
    lim = _limit(rng)
    names = [f"v{i}" for i in range(n + 1)]
    edges = []
    for i in range(n):
        length = float(rng.randint(150, 300))
        eid = b.edge(f"e{i}", names[i], names[i + 1], length, lim)
        edges.append(eid)
        if i + 1 < n and rng.random() < 0.7:
            new = _limit(rng)
            if new != lim:
                off = float(rng.randint(20, int(length) - 20))
                b.signal(f"sl{i}", "speed_limit", eid, off, limit_kmh=new)
                lim = new
    b.routes["road"] = edges


def _merge(b: _Builder):
    rng = b.rng
    main_lim, ramp_lim = _limit(rng), float(rng.choice([30, 40]))
    b.edge("m0", "A", "B", _approach(rng), main_lim)
    b.edge("m1", "B", "Y", JUNCTION_LEN, main_lim)
    b.edge("m2", "Y", "C", float(rng.randint(250, 350)), main_lim)
    b.edge("r0", "R0", "R1", _approach(rng), ramp_lim)
    b.edge("r1", "R1", "Y", JUNCTION_LEN, ramp_lim)
    b.signal("yield_ramp", "yield", "r1", 0.0, cd_m=JUNCTION_LEN)
    if main_lim != ramp_lim:
        b.signal("sl_merge", "speed_limit", "m2", 0.0, limit_kmh=main_lim)
    b.routes["main"] = ["m0", "m1", "m2"]
    b.routes["ramp"] = ["r0", "r1", "m2"]


def _lane_change(b: _Builder):
    rng = b.rng
    lim = _limit(rng)
    l1 = _approach(rng)
    b.edge("a0", "P", "X", l1, lim)
    b.edge("a1", "X", "Q", float(rng.randint(250, 350)), lim)
    b.edge("b0", "W", "Z", l1, lim)
    b.edge("b1", "Z", "Y", JUNCTION_LEN, lim)
    b.edge("b2", "Y", "E", float(rng.randint(250, 350)), lim)
    b.edge("t", "X", "Y", JUNCTION_LEN, lim)
    b.lane_changes.append({"edge": "t", "continues": "a1"})
    b.signal("yield_lc", "yield", "t", 0.0, cd_m=JUNCTION_LEN)
    b.routes["change"] = ["a0", "t", "b2"]
    b.routes["stay1"] = ["a0", "a1"]
    b.routes["lane2"] = ["b0", "b1", "b2"]


def _two_way_cross(b: _Builder, guard_main: Optional[str], guard_minor: str):
    rng = b.rng
    main_lim, minor_lim = _limit(rng), float(rng.choice([30, 40, 50]))
    half = JUNCTION_LEN / 2
    b.edge("m0", "A", "M1", _approach(rng), main_lim)
    b.edge("m1", "M1", "M2", JUNCTION_LEN, main_lim)
    b.edge("m2", "M2", "B", float(rng.randint(250, 350)), main_lim)
    b.edge("n0", "N", "N1", _approach(rng), minor_lim)
    b.edge("n1", "N1", "N2", JUNCTION_LEN, minor_lim)
    b.edge("n2", "N2", "S", float(rng.randint(250, 350)), minor_lim)
    b.cross("m1", half, "n1", half)
    ids = []
    if guard_main:
        ids.append(b.signal("g_main", guard_main, "m1", 0.0, cd_m=JUNCTION_LEN))
    ids.append(b.signal("g_minor", guard_minor, "n1", 0.0, cd_m=JUNCTION_LEN))
    b.routes["main"] = ["m0", "m1", "m2"]
    b.routes["minor"] = ["n0", "n1", "n2"]
    return ids


def _four_way(b: _Builder, kind: str) -> List[str]:
    """Four one-lane approaches meeting in one junction; returns the guard ids."""
    rng = b.rng
    lo, hi = 7.0, 13.0
    lims = {d: _limit(rng) for d in "WENS"}
    for d in "WENS":
        b.edge(f"{d}0", f"{d}a", f"{d}b", _approach(rng), lims[d])
        b.edge(f"{d}1", f"{d}b", f"{d}c", JUNCTION_LEN, lims[d])
        b.edge(f"{d}2", f"{d}c", f"{d}d", float(rng.randint(250, 350)), lims[d])
        b.routes[d] = [f"{d}0", f"{d}1", f"{d}2"]
    # W1 eastbound, E1 westbound, N1 southbound, S1 northbound
    b.cross("W1", lo, "N1", hi)
    b.cross("W1", hi, "S1", lo)
    b.cross("E1", lo, "S1", hi)
    b.cross("E1", hi, "N1", lo)
    return [b.signal(f"{kind}_{d}", kind, f"{d}1", 0.0, cd_m=JUNCTION_LEN) for d in "WENS"]


def _light_cross(b: _Builder):
    if b.rng.random() < 0.5:
        ids = _two_way_cross(b, "traffic_light", "traffic_light")
    else:
        ids = _four_way(b, "traffic_light")
    b.light_cycle([[i] for i in ids])


def _stop_cross(b: _Builder):
    if b.rng.random() < 0.4:
        ids = _two_way_cross(b, "stop", "stop")
    else:
        ids = _four_way(b, "stop")
    order = list(ids)
    b.rng.shuffle(order)
    b.priority.extend(order)


def _mixed_grid(b: _Builder):
    """Two eastbound and two southbound one-way roads crossing in four junctions."""
    rng = b.rng
    gap = 230.0
    half = JUNCTION_LEN / 2
    kinds = ["traffic_light", "stop", "yield", rng.choice(["traffic_light", "stop"])]
    rng.shuffle(kinds)
    roads = {}
    for r in ("H1", "H2", "V1", "V2"):
        lim = _limit(rng)
        b.edge(f"{r}_0", f"{r}a", f"{r}b", _approach(rng), lim)
        b.edge(f"{r}_j1", f"{r}b", f"{r}c", JUNCTION_LEN, lim)
        b.edge(f"{r}_1", f"{r}c", f"{r}d", gap, lim)
        b.edge(f"{r}_j2", f"{r}d", f"{r}e", JUNCTION_LEN, lim)
        b.edge(f"{r}_2", f"{r}e", f"{r}f", float(rng.randint(200, 300)), lim)
        roads[r] = [f"{r}_0", f"{r}_j1", f"{r}_1", f"{r}_j2", f"{r}_2"]
        b.routes[r] = roads[r]
    cells = [("H1", "j1", "V1", "j1"), ("H1", "j2", "V2", "j1"), ("H2", "j1", "V1", "j2"), ("H2", "j2", "V2", "j2")]
    for (h, hj, v, vj), kind in zip(cells, kinds):
        he, ve = f"{h}_{hj}", f"{v}_{vj}"
        b.cross(he, half, ve, half)
        if kind == "yield":
            minor = rng.choice([he, ve])
            b.signal(f"yield_{minor}", "yield", minor, 0.0, cd_m=JUNCTION_LEN)
        elif kind == "traffic_light":
            ids = [b.signal(f"tl_{e}", "traffic_light", e, 0.0, cd_m=JUNCTION_LEN) for e in (he, ve)]
            b.light_cycle([[i] for i in ids])
        else:
            ids = [b.signal(f"stop_{e}", "stop", e, 0.0, cd_m=JUNCTION_LEN) for e in (he, ve)]
            rng.shuffle(ids)
            b.priority.extend(ids)


_PROFILE_BUILDERS = {
    "straight-road": _straight,
    "merge": _merge,
    "lane-change": _lane_change,
    "yield-cross": lambda b: _two_way_cross(b, None, "yield"),
    "light-cross": _light_cross,
    "stop-cross": _stop_cross,
    "mixed-grid": _mixed_grid,
}


# ----------------------------------------------------------------------------- vehicles
def _place_vehicles(b: _Builder, n: int) -> List[Dict[str, Any]]:
    """Spread ``n`` vehicles over the routes, on their first edge, far from its end."""
    rng = b.rng
    lengths = {e["id"]: e["length_m"] for e in b.edges}
    limits = {e["id"]: e["speed_limit_kmh"] for e in b.edges}
    names = sorted(b.routes)
    # vehicles sharing a first edge need distinct slots
    slots: Dict[str, List[float]] = {}
    out = []
    for i in range(n):
        rname = names[i % len(names)] if i < len(names) else rng.choice(names)
        route = b.routes[rname]
        first = route[0]
        usable = lengths[first] - 15.0
        taken = slots.setdefault(first, [])
        for _ in range(50):
            off = round(rng.uniform(0.0, usable), 2)
            if all(abs(off - x) >= 45.0 for x in taken):
                break
        else:
            continue
        taken.append(off)
        v = round(rng.uniform(0.0, limits[first]), 2)
        out.append({"id": f"c{i}", "route": route, "start_offset_m": off, "v_kmh": v})
    return out


def _document(b: _Builder, profile: str, seed: int, vehicles, dyn, vis, horizon: int) -> Dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "profile": profile,
        "seed": seed,
        "horizon": horizon,
        "dynamics": dyn,
        "visibility": vis,
        "map": {
            "vertices": b.vertices,
            "edges": b.edges,
            "shared_positions": b.shared,
            "lane_changes": b.lane_changes,
        },
        "signals": {"placements": b.placements, "light_cycles": b.cycles, "entry_priority": b.priority},
        "vehicles": vehicles,
        "faults": [],
    }


def generate(seed: int, profile: str, horizon: int = 1000) -> Dict[str, Any]:
    """A random scenario document for ``profile``; identical output for identical seeds."""
    if profile not in _PROFILE_BUILDERS:
        raise ValueError(f"unknown profile {profile!r}; choose from {', '.join(PROFILES)}")
    rng = random.Random(f"{profile}:{seed}")
    b = _Builder(rng)
    _PROFILE_BUILDERS[profile](b)
    dyn = {
        "b_max": 3.4,
        "a_max": 2.5,
        "dt": 0.5,
        "v0_kmh": float(rng.choice([20, 25, 30])),
        "standstill_gap_m": STANDSTILL_GAP,
    }
    vis = {"fd": float(rng.choice([80, 90, 100])), "ld": 150.0, "overrides": {}}
    vehicles = _place_vehicles(b, rng.randint(3, 6))
    doc = _document(b, profile, seed, vehicles, dyn, vis, horizon)
    _make_initially_safe(doc)
    problems = validate_assumptions(parse_scenario(doc))
    if problems:
        raise AssertionError(f"generator produced an invalid scenario: {problems[0]}")
    return doc


def _make_initially_safe(doc: Dict[str, Any]) -> None:
    """Lower initial speeds until the initial state passes every monitor check."""
    from .simulate import initial_problems

    for _ in range(40):
        sc = parse_scenario(doc)
        bad = initial_problems(sc)
        if not bad:
            return
        for veh in doc["vehicles"]:
            if veh["id"] in bad:
                veh["v_kmh"] = 0.0 if veh["v_kmh"] < 2.0 else round(veh["v_kmh"] * 0.7, 2)
    raise AssertionError("could not construct a safe initial state")


def dumps(doc: Dict[str, Any]) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"
