"""Autopilot: vista classification, the follow primitive, travel-time prediction,
the six control policies and the mode automaton switching between them."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple

from .dynamics import (
    SLACK,
    DynamicsParams,
    braking_distance,
    controllable,
    shift_limits,
    speed_control,
)
from .metric_map import EPS

if TYPE_CHECKING:
    from .environment import Obstacle, Vista, World


class VistaType(str, Enum):
    ROAD = "road"
    MERGE_YIELD = "merge-yield"
    LANE_CHANGE = "lane-change"
    CROSS_YIELD = "cross-yield"
    CROSS_TRAFFIC_LIGHT = "cross-traffic-light"
    CROSS_STOP = "cross-stop"


YIELD_TYPES = (VistaType.MERGE_YIELD, VistaType.CROSS_YIELD, VistaType.LANE_CHANGE)


class ModeError(ValueError):
    """A transition between two non-road policies (the maps should rule this out)."""


class FollowPreconditionError(RuntimeError):
    """follow was asked to drive from a state that is not controllable."""


@dataclass(frozen=True)
class PolicyState:
    mode: VistaType = VistaType.ROAD
    cl: bool = False
    h: Optional[str] = None
    st: Optional[float] = None


@dataclass(frozen=True)
class Command:
    dv: float
    dd: float
    lane_change_active: bool = False


# ------------------------------------------------------------------------ classification
def classify(world: "World", raw: Sequence["Obstacle"]) -> Tuple[VistaType, List["Obstacle"], Optional["Obstacle"]]:
    """Type the raw vista and drop everything past the closest front vehicle.

    The closest junction-guarding signal decides the type when it lies
    strictly before the closest front vehicle.
    """
    from .environment import GUARD_KINDS, ScenarioError, SignalKind

    guards = []
    f = None
    kept = []
    for o in raw:
        if o.is_vehicle:
            f = o
            break
        if o.signal is not None and o.signal.kind in GUARD_KINDS:
            guards.append(o)
        kept.append(o)
    if f is None:
        raise ScenarioError("vista without a closing front vehicle")
    kept.append(f)
    if not guards:
        return VistaType.ROAD, kept, None
    if len(guards) > 1:
        raise ScenarioError(
            f"two junction guards {guards[0].id!r} and {guards[1].id!r} in one visibility window"
        )
    h = guards[0]
    sig = world.signals[h.id]
    if sig.kind == SignalKind.TRAFFIC_LIGHT:
        vt = VistaType.CROSS_TRAFFIC_LIGHT
    elif sig.kind == SignalKind.STOP:
        vt = VistaType.CROSS_STOP
    else:
        topo = world.topology(sig)
        vt = {"lane_change": VistaType.LANE_CHANGE, "merge": VistaType.MERGE_YIELD}.get(
            topo, VistaType.CROSS_YIELD
        )
    return vt, kept, h


# ------------------------------------------------------------------------------ follow
def speed_limits(vista: "Vista", s_target: float) -> List[Tuple[float, float]]:
    """Constraint list towards a stop at route offset ``s_target``."""
    s_e = vista.ego.s
    vl = [(0.0, vista.ego.V)]
    for s, lim in vista.speed_signals(s_e, s_target):
        vl.append((s - s_e, lim))
    d = max(0.0, s_target - s_e)
    if d <= EPS:
        return [(0.0, 0.0)]
    vl.append((d, 0.0))
    return vl


def follow(params: DynamicsParams, vista: "Vista", s_target: float) -> Command:
    """Drive as fast as allowed while staying able to stop at ``s_target``."""
    ego = vista.ego
    vl = speed_limits(vista, s_target)
    if ego.v > ego.V + 1e-7 or not controllable(params, ego.v, vl):
        raise FollowPreconditionError(
            f"vehicle {ego.id}: speed {ego.v:.6g} cannot honour limits {vl} (target {s_target:.6g})"
        )
    out = speed_control(params, ego.v, vl, check=False)
    return Command(out.dv, out.dd)


def travel_time(params: DynamicsParams, vista: "Vista", s_prime: float, s_lead: float) -> float:
    """Predicted time to reach ``s_prime`` while following a frozen lead at ``s_lead``."""
    ego = vista.ego
    x = s_prime - ego.s
    if x <= 1e-9:
        return 0.0
    vl = speed_limits(vista, s_lead)
    v = ego.v
    if not controllable(params, v, vl):
        return math.inf
    dt = params.dt
    span = max(s_lead - ego.s, x)
    cap = max(10, math.ceil(10.0 * span / (max(vista.v0, 1e-3) * dt)))
    t = 0.0
    for _ in range(cap):
        dv, dd = speed_control(params, v, vl, check=False)
        if dd <= 0.0 and v + dv <= 0.0 and v <= 0.0:
            return math.inf
        t += dt
        x -= dd
        if x <= 1e-9:
            return t
        v = max(0.0, v + dv)
        vl = shift_limits(vl, dd)
    return math.inf


# ----------------------------------------------------------------------------- policies
def mode_transition(ps: PolicyState, new_type: VistaType, h: Optional[str] = None) -> PolicyState:
    """Re-initialise the policy state when the vista type (or its guard) changes."""
    if new_type == ps.mode and (new_type == VistaType.ROAD or h == ps.h):
        return ps
    if ps.mode != VistaType.ROAD and new_type != VistaType.ROAD:
        raise ModeError(f"direct transition {ps.mode.value} -> {new_type.value}")
    if new_type == VistaType.ROAD:
        return PolicyState()
    return PolicyState(new_type, False, h, None)


def front_clear(vista: "Vista") -> bool:
    """The closest front vehicle lies beyond the critical section."""
    return vista.f.s > vista.s_h + vista.cd + EPS


def yield_clearance(params: DynamicsParams, vista: "Vista") -> bool:
    tt = travel_time(params, vista, vista.s_h + vista.cd, vista.f.s)
    if math.isinf(tt):
        return False
    for a in vista.arriving:
        if a.V * tt + braking_distance(params, a.V) > a.d + SLACK:
            return False
    return True


def lane_change_clearance(params: DynamicsParams, vista: "Vista") -> bool:
    if not yield_clearance(params, vista):
        return False
    if braking_distance(params, vista.ego.v) > vista.f.s - vista.ego.s + SLACK:
        return False
    return not any(p.lane_change_active for p in vista.lane_peers)


def light_clearance(params: DynamicsParams, vista: "Vista") -> bool:
    from .environment import Color

    if vista.h.signal.color != Color.GREEN:
        return False
    if any(a.in_junction and not (a.at_entry and a.v == 0.0) for a in vista.arriving):
        return False
    if travel_time(params, vista, vista.s_h, vista.f.s) > vista.T_y + SLACK:
        return False
    return travel_time(params, vista, vista.s_h + vista.cd, vista.f.s) <= vista.T_y + vista.T_ar + SLACK


def stop_order(vista: "Vista") -> Tuple[float, int]:
    st = vista.ego.st
    return (math.inf if st is None else st, vista.priority)


def stop_clearance(vista: "Vista") -> bool:
    ego = vista.ego
    if abs(ego.s - vista.s_h) > EPS or ego.st is None:
        return False
    mine = stop_order(vista)
    for a in vista.arriving:
        if not a.in_junction:
            continue
        if not (a.at_entry and a.v == 0.0 and a.st is not None):
            return False
        if not mine < (a.st, a.priority):
            return False
    return True


def update_clearance(params: DynamicsParams, ps: PolicyState, vista: "Vista") -> PolicyState:
    """Evaluate the clearance guard of the current caution phase.

    Clearance is monotone within a mode instance; the updated flag selects
    the command of this very step.
    """
    if ps.mode == VistaType.ROAD or ps.cl:
        return ps
    if not front_clear(vista):
        return ps
    if ps.mode in (VistaType.MERGE_YIELD, VistaType.CROSS_YIELD):
        ok = yield_clearance(params, vista)
    elif ps.mode == VistaType.LANE_CHANGE:
        ok = lane_change_clearance(params, vista)
    elif ps.mode == VistaType.CROSS_TRAFFIC_LIGHT:
        ok = light_clearance(params, vista)
    else:
        ok = stop_clearance(vista)
    if ps.mode == VistaType.CROSS_STOP:
        ps = replace(ps, st=vista.ego.st)
    return replace(ps, cl=True) if ok else ps


def lead_position(ps: PolicyState, vista: "Vista") -> float:
    """Route offset of the obstacle the current guarded command follows."""
    if ps.mode == VistaType.ROAD or ps.cl:
        return vista.f.s
    return vista.s_h


def command(params: DynamicsParams, ps: PolicyState, vista: "Vista", on_lane_change_edge: bool = False) -> Command:
    """The guarded command of the policy matching ``ps.mode``."""
    cmd = follow(params, vista, lead_position(ps, vista))
    flashing = on_lane_change_edge or (ps.mode == VistaType.LANE_CHANGE and ps.cl)
    return Command(cmd.dv, cmd.dd, flashing)


def policy_step(
    params: DynamicsParams, ps: PolicyState, vista: "Vista", on_lane_change_edge: bool = False
) -> Tuple[Command, PolicyState]:
    """One period of the autopilot for a vista whose type matches ``ps.mode``."""
    ps = update_clearance(params, ps, vista)
    return command(params, ps, vista, on_lane_change_edge), ps
