"""Shared random-instance builders for the tests."""

from __future__ import annotations

import random
from typing import List, Tuple

from safedrive.dynamics import DynamicsParams

from . import oracles


def random_instance(rng: random.Random) -> Tuple[DynamicsParams, float, List[Tuple[float, float]]]:
    """Random parameters, speed and limit list with the speed controllable for the list."""
    params = DynamicsParams(
        b_max=round(rng.uniform(1.5, 8.0), 3),
        a_max=round(rng.uniform(0.0, 4.0), 3),
        dt=rng.choice([0.1, 0.2, 0.25, 0.5, 1.0]),
    )
    n = rng.randint(1, 4)
    vl = [(0.0, rng.uniform(1.0, 40.0))]
    d = 0.0
    for i in range(n):
        d += rng.uniform(0.5, 150.0)
        last = i == n - 1
        lim = 0.0 if last and rng.random() < 0.6 else rng.uniform(0.5, 40.0)
        vl.append((d, lim))
    while True:
        v = rng.uniform(0.0, vl[0][1])
        if rng.random() < 0.1:
            v = 0.0
        for _ in range(60):
            bv = oracles.braking(params.b_max, params.dt, v)
            if all(bv <= dd + oracles.braking(params.b_max, params.dt, lim) for dd, lim in vl):
                return params, v, vl
            v *= 0.8
        v = 0.0
        return params, v, vl
