"""Deterministic closed-loop simulation with inline monitoring and trace output."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from typing import IO, Any, Dict, List, Optional

from .autopilot import (
    Command,
    FollowPreconditionError,
    PolicyState,
    VistaType,
    command,
    mode_transition,
    update_clearance,
)
from .environment import AdsState, Visibility, Vista, build_vista, step
from .metric_map import EPS
from .monitor import StateReport, StepRecord, lemma_disjoint, state_safe, step_checks
from .scenario import FORMAT_VERSION, Fault, Scenario

SAFE, VIOLATION, INVALID = 0, 1, 2


class UnsafeInitialState(ValueError):
    """The initial state does not satisfy the vista invariants."""


@dataclass
class RunResult:
    verdict: int
    steps: int
    first_violation: Optional[int] = None
    violations: List[str] = field(default_factory=list)
    stats: Dict[str, Any] = field(default_factory=dict)

    @property
    def safe(self) -> bool:
        return self.verdict == SAFE

    @property
    def label(self) -> str:
        return "SAFE" if self.verdict == SAFE else "VIOLATION"


def _faults_active(faults: List[Fault], k: int, kind: str) -> Optional[Fault]:
    for f in faults:
        if f.kind == kind and k >= f.from_step:
            return f
    return None


def _retract(state: AdsState, factor: float) -> AdsState:
    vehicles = tuple(
        replace(v, vis=Visibility(v.vis.fd * factor, v.vis.ld * factor)) for v in state.vehicles
    )
    return replace(state, vehicles=vehicles)


def _trace_record(sc: Scenario, state: AdsState, report: StateReport, extra: List[str]) -> Dict[str, Any]:
    vehicles = []
    for veh in state.vehicles:
        r = report.vehicles[veh.id]
        e, off = veh.edge_offset
        vehicles.append(
            {
                "id": veh.id,
                "edge": e,
                "offset": round(off, 6),
                "s": round(veh.s, 6),
                "v": round(veh.v, 6),
                "V": round(veh.V, 6),
                "mode": r.mode.value,
                "cl": r.cl,
                "st": veh.st,
                "lane_change": veh.lane_change_active,
                "fo": r.fo.id if r.fo.id is not None else r.fo.kind,
                "fo_s": round(r.fo.s, 6),
                "free_space": round(r.free_space, 6),
                "I1": r.i1,
                "I2": r.i2,
            }
        )
    lights = [
        {"id": sid, "color": c.value, "ttr": ttr, "ttg": ttg} for sid, (c, ttr, ttg) in sorted(state.lights.items())
    ]
    violations = report.violations() + extra
    return {
        "format_version": FORMAT_VERSION,
        "step": state.step,
        "t": state.t,
        "vehicles": vehicles,
        "lights": lights,
        "safe": not violations,
        "violations": violations,
    }


CSV_FIELDS = ["step", "t", "id", "edge", "offset", "s", "v", "V", "mode", "cl", "free_space", "I1", "I2"]


def initial_problems(sc: Scenario) -> Dict[str, List[str]]:
    """Monitor findings on the initial state, keyed by the vehicles involved."""
    world, state = sc.world, sc.initial_state()
    vistas: Dict[str, Vista] = {}
    policies: Dict[str, PolicyState] = {}
    for veh in state.vehicles:
        vista = build_vista(world, state, veh.id)
        h = vista.h.id if vista.h is not None else None
        ps = mode_transition(PolicyState(), vista.vtype, h)
        vistas[veh.id] = vista
        policies[veh.id] = update_clearance(sc.params, ps, vista)
    report = state_safe(world, state, vistas, policies)
    out: Dict[str, List[str]] = {}
    for r in report.vehicles.values():
        if r.reasons:
            out.setdefault(r.vid, []).extend(r.reasons)
    for a, b in report.overlaps + report.collisions:
        out.setdefault(a, []).append(f"conflict with {b}")
        out.setdefault(b, []).append(f"conflict with {a}")
    return out


def run(
    sc: Scenario,
    trace: Optional[IO[str]] = None,
    csv_out: Optional[IO[str]] = None,
    until_violation: bool = False,
    horizon: Optional[int] = None,
    observer=None,
) -> RunResult:
    """Simulate ``sc`` for its horizon, checking every safety property at every step.

    ``observer(k, state, vistas, policies, report)`` is called once per reached state.
    """
    world, params = sc.world, sc.params
    horizon = sc.horizon if horizon is None else horizon
    faults = list(sc.faults)
    state = sc.initial_state()
    policies: Dict[str, PolicyState] = {v.id: PolicyState() for v in state.vehicles}
    writer = csv.DictWriter(csv_out, CSV_FIELDS) if csv_out is not None else None
    if writer is not None:
        writer.writeheader()
    result = RunResult(SAFE, 0)
    prev_report: Optional[StateReport] = None
    last_step = None
    retracted = False
    counts = {"vehicle_steps": 0, "clearances": 0}

    for k in range(horizon + 1):
        if not retracted and _faults_active(faults, k, "retract_visibility"):
            f = _faults_active(faults, k, "retract_visibility")
            state = _retract(state, 1.0 / f.factor)
            retracted = True
        vistas: Dict[str, Vista] = {}
        for veh in state.vehicles:
            vista = build_vista(world, state, veh.id)
            vistas[veh.id] = vista
            h = vista.h.id if vista.h is not None else None
            ps = mode_transition(policies.get(veh.id, PolicyState()), vista.vtype, h)
            before = ps.cl
            ps = update_clearance(params, ps, vista)
            if _faults_active(faults, k, "force_clearance") and ps.mode != VistaType.ROAD:
                ps = replace(ps, cl=True)
            if ps.cl and not before:
                counts["clearances"] += 1
            policies[veh.id] = ps
        policies = {vid: ps for vid, ps in policies.items() if vid in vistas}

        report = state_safe(world, state, vistas, policies)
        problems = report.violations() + lemma_disjoint(report)
        if last_step is not None:
            rec = StepRecord(prev_report, report, last_step.virtual_s, last_step.retired)
            problems += step_checks(params, rec)
        if k == 0 and problems:
            raise UnsafeInitialState("; ".join(problems))
        if observer is not None:
            observer(k, state, vistas, policies, report)
        if trace is not None:
            trace.write(json.dumps(_trace_record(sc, state, report, problems[len(report.violations()):])) + "\n")
        if writer is not None:
            for row in _trace_record(sc, state, report, [])["vehicles"]:
                writer.writerow({"step": state.step, "t": state.t, **{c: row[c] for c in CSV_FIELDS[2:]}})
        if problems:
            if result.first_violation is None:
                result.first_violation = k
                result.verdict = VIOLATION
            result.violations.extend(f"step {k}: {p}" for p in problems)
            if until_violation:
                result.steps = k
                break
        result.steps = k
        if k == horizon:
            break

        commands: Dict[str, Command] = {}
        inflate = _faults_active(faults, k, "inflate_dd")
        for veh in state.vehicles:
            vista, ps = vistas[veh.id], policies[veh.id]
            e, off = veh.edge_offset
            on_lc = e in world.lane_changes and EPS < off < world.graph.length(e) - EPS
            try:
                cmd = command(params, ps, vista, on_lc)
            except FollowPreconditionError:
                if result.verdict == SAFE:
                    raise
                # already unsafe: brake as hard as possible and keep observing
                dv = max(-params.b_max * params.dt, -veh.v)
                cmd = Command(dv, max(0.0, veh.v * params.dt + dv * params.dt / 2.0), on_lc)
            if inflate is not None:
                cmd = Command(cmd.dv, cmd.dd * inflate.factor, cmd.lane_change_active)
            commands[veh.id] = cmd
        counts["vehicle_steps"] += len(state.vehicles)
        last_step = step(world, state, commands)
        state = last_step.state
        prev_report = report
    result.stats = counts
    return result
