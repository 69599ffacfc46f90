"""Throughput-driven instance sizing and load-balancing weights (linear capacity model)."""

from __future__ import annotations

import math
from functools import reduce
from typing import Sequence

from ..app_model import Microservice
from ..fabric import to_millicores


def required_instances(ms: Microservice, demand: float) -> tuple[int, tuple[float, int]]:
    """Number of reference-sized replicas needed to sustain `demand` requests/second."""
    if not demand > 0:
        raise ValueError("demand must be positive")
    count = max(1, math.ceil(round(demand / ms.ref_throughput, 9)))
    return count, (ms.ref_cpu, ms.ref_memory)


def vertical_allocation(ms: Microservice, demand: float) -> tuple[float, int]:
    """Resources of a single instance scaled linearly to `demand`, never below the reference size."""
    if not demand > 0:
        raise ValueError("demand must be positive")
    factor = max(1.0, demand / ms.ref_throughput)
    cpu = to_millicores(ms.ref_cpu * factor) / 1000
    mem = int(math.ceil(ms.ref_memory * factor))
    return cpu, mem


def capacity_units(ms: Microservice, cpu: float) -> float:
    """Reference-throughput multiples an instance of `cpu` cores provides."""
    return cpu / ms.ref_cpu


def servers_for(ms: Microservice, cpu: float) -> int:
    return max(1, math.ceil(round(cpu / ms.ref_cpu, 9)))


def subset_weights(capacities: Sequence[float]) -> list[int]:
    """Integer WRR weights proportional to instance capacities.

    Exact small ratios are kept as their smallest integer form (1:2:1); anything else
    falls back to rounded percentages.
    """
    if not capacities:
        return []
    if any(c <= 0 for c in capacities):
        raise ValueError("capacities must be positive")
    milli = [to_millicores(c) for c in capacities]
    g = reduce(math.gcd, milli)
    reduced = [m // g for m in milli]
    if max(reduced) <= 100:
        return reduced
    total = sum(milli)
    pct = [max(1, round(100 * m / total)) for m in milli]
    g = reduce(math.gcd, pct)
    return [p // g for p in pct]
