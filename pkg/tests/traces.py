"""Offline checks over NDJSON traces and an observer sampling travel times."""

from __future__ import annotations

import io
import json
import random
from typing import Dict, List, Optional, Tuple

from safedrive.autopilot import lead_position, travel_time
from safedrive.environment import SignalKind
from safedrive.simulate import RunResult, run

EPS = 1e-6


def run_with_trace(sc, **kwargs) -> Tuple[RunResult, List[dict]]:
    buf = io.StringIO()
    res = run(sc, trace=buf, **kwargs)
    return res, [json.loads(line) for line in buf.getvalue().splitlines()]


def _spans(sc) -> Dict[str, list]:
    return {spec.id: sc.route_info(spec.id).spans for spec in sc.vehicles}


def inside(sc, records) -> List[Dict[str, Tuple[int, str]]]:
    """Per record, vehicles strictly inside a junction: ``vid -> (junction, edge)``."""
    spans = _spans(sc)
    out = []
    for rec in records:
        occ = {}
        for row in rec["vehicles"]:
            for sp in spans[row["id"]]:
                if sp.s_in + EPS < row["s"] < sp.s_out - EPS:
                    occ[row["id"]] = (sp.jid, row["edge"])
        out.append(occ)
    return out


def mutual_exclusion_violations(sc, records) -> List[str]:
    """Two vehicles inside one junction; every pair of positions there is related."""
    out = []
    for rec, occ in zip(records, inside(sc, records)):
        by_jid: Dict[int, Dict[str, str]] = {}
        for vid, (jid, edge) in occ.items():
            by_jid.setdefault(jid, {})[vid] = edge
        for jid, members in by_jid.items():
            if len(members) > 1:
                out.append(f"step {rec['step']}: junction {jid} shared by {sorted(members.items())}")
    return out


def _priority(sc, sp) -> int:
    guard = sc.world.guard_of_edge.get(sp.edges[0])
    return sc.world.priority.get(guard.id, 0) if guard is not None else 0


def stop_order_violations(sc, records) -> List[str]:
    """A vehicle entering a stop junction must have stopped and hold the smallest (stop time, priority)."""
    spans = _spans(sc)
    occ = inside(sc, records)
    out = []
    for k in range(1, len(records)):
        prev_rows = {r["id"]: r for r in records[k - 1]["vehicles"]}
        for vid, (jid, _) in occ[k].items():
            if vid in occ[k - 1] or vid not in prev_rows:
                continue
            px = prev_rows[vid]
            sp_x = next(sp for sp in spans[vid] if sp.jid == jid)
            guard = sc.world.guard_of_edge.get(sp_x.edges[0])
            if guard is None or guard.kind != SignalKind.STOP:
                continue
            if px["st"] is None:
                out.append(f"step {k}: {vid} entered junction {jid} without stopping")
                continue
            key_x = (px["st"], _priority(sc, sp_x))
            for yid, py in prev_rows.items():
                if yid == vid or py["st"] is None or py["v"] != 0.0:
                    continue
                for sp in spans[yid]:
                    if sp.jid == jid and abs(py["s"] - sp.s_in) <= EPS:
                        key_y = (py["st"], _priority(sc, sp))
                        if key_y < key_x:
                            out.append(f"step {k}: {vid} {key_x} entered junction {jid} ahead of {yid} {key_y}")
    return out


class TravelTimeSampler:
    """Observer recording travel-time pairs over consecutive states.

    A pair is kept when the vehicle keeps its mode and clearance and its
    followed position does not regress; the target is the followed position
    of the earlier state.
    """

    def __init__(self, params, rng: random.Random, rate: float = 0.05):
        self.params = params
        self.rng = rng
        self.rate = rate
        self.pairs: List[Tuple[float, float]] = []
        self._prev: Dict[str, tuple] = {}

    def __call__(self, k, state, vistas, policies, report) -> None:
        pending = self._prev
        self._prev = {}
        for vid, vista in vistas.items():
            ps = policies[vid]
            lead = lead_position(ps, vista)
            prev: Optional[tuple] = pending.get(vid)
            if prev is not None and prev[:2] == (ps.mode, ps.cl) and lead >= prev[2] - 1e-9:
                self.pairs.append((prev[3], travel_time(self.params, vista, prev[2], lead)))
            if vista.ego.s < lead - 1e-9 and self.rng.random() < self.rate:
                self._prev[vid] = (ps.mode, ps.cl, lead, travel_time(self.params, vista, lead, lead))
