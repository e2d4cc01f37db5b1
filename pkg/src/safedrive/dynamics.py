"""Vehicle dynamics contract: braking distance and speed control.

The reference vehicle picks one constant acceleration in ``[-b_max, a_max]``
per control period ``dt``. Braking distances follow from braking at ``b_max``
period after period; speed control returns the largest acceleration that keeps
every upcoming speed-limit constraint reachable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence, Tuple

SLACK = 1e-9

# A speed-limit constraint list: (distance, limit) pairs, distance ascending, first at 0.
SpeedLimits = Sequence[Tuple[float, float]]


class ControllabilityError(ValueError):
    """speed_control was called outside its domain."""


@dataclass(frozen=True)
class DynamicsParams:
    b_max: float = 3.4
    a_max: float = 2.5
    dt: float = 1.0

    def __post_init__(self):
        if not self.b_max > 0:
            raise ValueError("b_max must be > 0")
        if not self.a_max >= 0:
            raise ValueError("a_max must be >= 0")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")


class ControlOutput(NamedTuple):
    dv: float
    dd: float


def braking_distance(params: DynamicsParams, v: float) -> float:
    """Distance needed to stop from speed ``v`` braking at ``b_max`` each period.

    Closed form of the period-by-period recursion: with ``n`` full braking
    periods, ``B(v) = (n + 1/2) v dt - b dt^2 n (n + 1) / 2``.
    """
    if v < 0:
        raise ValueError(f"speed must be non-negative, got {v}")
    b, dt = params.b_max, params.dt
    n = math.floor(v / (b * dt))
    return (n + 0.5) * v * dt - b * dt * dt * n * (n + 1) / 2.0


def max_speed_for_distance(params: DynamicsParams, d: float) -> float:
    """Largest ``v`` with ``B(v) <= d`` (inverse of the braking function)."""
    if d <= 0:
        return 0.0
    b, dt = params.b_max, params.dt
    # B at v = n*b*dt equals b*dt^2*n*(n+1)/2 + n*b*dt^2/2 ... solve piecewise.
    n = 0
    while True:
        hi = (n + 1) * b * dt
        if braking_distance(params, hi) > d:
            break
        n += 1
    # on [n b dt, (n+1) b dt): B(v) = (n + 1/2) v dt - b dt^2 n (n+1)/2
    return (d + b * dt * dt * n * (n + 1) / 2.0) / ((n + 0.5) * dt)


def controllable(params: DynamicsParams, v: float, vl: SpeedLimits) -> bool:
    """True iff the vehicle can slow down to every limit before reaching it."""
    bv = braking_distance(params, v)
    for d, lim in vl:
        if bv > d + braking_distance(params, lim) + SLACK:
            return False
    return True


def _max_accel(params: DynamicsParams, v: float, d: float, lim: float, lo: float) -> float:
    """Largest admissible acceleration for one constraint ``(d, lim)``."""
    dt = params.dt
    if d <= 0.0:
        return min(params.a_max, (lim - v) / dt)
    b = params.b_max
    budget = d + braking_distance(params, lim) - v * dt / 2.0
    # g(w) = v dt/2 + (n+1) w dt - b dt^2 n(n+1)/2 where w is the new speed,
    # n its number of full braking periods; pick the largest n with g(n b dt) <= d + B(lim).
    bdt2 = b * dt * dt
    if budget < 0.0:
        return lo
    n = math.floor((math.sqrt(1.0 + 8.0 * budget / bdt2) - 1.0) / 2.0)
    while n > 0 and bdt2 * n * (n + 1) / 2.0 > budget:
        n -= 1
    while bdt2 * (n + 1) * (n + 2) / 2.0 <= budget:
        n += 1
    w = (budget + bdt2 * n * (n + 1) / 2.0) / ((n + 1) * dt)
    return min(params.a_max, max(lo, (w - v) / dt))


def max_acceleration(params: DynamicsParams, v: float, vl: SpeedLimits) -> float:
    lo = max(-params.b_max, -v / params.dt)
    a = params.a_max
    for d, lim in vl:
        a = min(a, _max_accel(params, v, d, lim, lo))
    return max(a, lo)


def speed_control(params: DynamicsParams, v: float, vl: SpeedLimits, check: bool = True) -> ControlOutput:
    """Greatest admissible ``(dv, dd)`` over one period for speed ``v`` and limits ``vl``."""
    if v < 0:
        raise ValueError(f"speed must be non-negative, got {v}")
    if check and not controllable(params, v, vl):
        raise ControllabilityError(f"speed {v:.6g} m/s is not controllable for limits {list(vl)}")
    a = max_acceleration(params, v, vl)
    dt = params.dt
    dv = a * dt
    if v + dv < 0.0:
        dv = -v
    return ControlOutput(dv, max(0.0, v * dt + a * dt * dt / 2.0))


def shift_limits(vl: SpeedLimits, dd: float) -> List[Tuple[float, float]]:
    """Re-anchor ``vl`` after travelling ``dd``; constraints already passed are dropped."""
    out: List[Tuple[float, float]] = []
    n = len(vl)
    for i, (d, lim) in enumerate(vl):
        nxt = vl[i + 1][0] if i + 1 < n else math.inf
        if dd < nxt:
            nd = d - dd if d > dd else 0.0
            if out and out[-1][0] == nd:
                out[-1] = (nd, min(out[-1][1], lim))
            else:
                out.append((nd, lim))
    return out


def check_postconditions(
    params: DynamicsParams, v: float, vl: SpeedLimits, out: ControlOutput, slack: float = 1e-7
) -> List[str]:
    """Literal evaluation of the three speed-control requirements; returns failures."""
    dv, dd = out
    w = v + dv
    fails = []
    if w < -slack:
        fails.append("negative speed")
    n = len(vl)
    for i, (d, lim) in enumerate(vl):
        nxt = vl[i + 1][0] if i + 1 < n else math.inf
        if d <= dd < nxt and w > lim + slack:
            fails.append(f"speed {w} above limit {lim} on [{d}, {nxt})")
        if dd <= d and dd + braking_distance(params, max(w, 0.0)) > d + braking_distance(params, lim) + slack:
            fails.append(f"braking envelope broken for constraint ({d}, {lim})")
        if lim == 0 and dd > d + slack:
            fails.append(f"overshoots stop at {d}")
    return fails
