"""Latency metrics over a simulation trace."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..exceptions import EmptyTrace

NS_PER_MS = 1_000_000


def nearest_rank(values, percentile, presorted=False):
    """Smallest sample with at least ``percentile`` % of the sample at or below it."""
    if not len(values):
        raise EmptyTrace("percentile of an empty sample")
    if not 0 < percentile <= 100:
        raise ValueError(f"percentile must be in (0, 100], got {percentile}")
    ordered = values if presorted else sorted(values)
    rank = max(1, math.ceil(percentile / 100.0 * len(ordered)))
    return ordered[rank - 1]


@dataclass(frozen=True)
class RunMetrics:
    policy: str
    seed: object
    component_p99_ms: dict = field(default_factory=dict)
    mean_overall_ms: float = math.nan
    completed: int = 0
    migrations: int = 0
    saturated: bool = False
    sched_ms: float = 0.0

    @property
    def max_component_p99_ms(self):
        return max(self.component_p99_ms.values()) if self.component_p99_ms else math.nan

    @property
    def mean_component_p99_ms(self):
        vals = list(self.component_p99_ms.values())
        return sum(vals) / len(vals) if vals else math.nan


def compute_metrics(trace, percentile=99.0):
    """Per-component tail latency and mean end-to-end latency of one run.

    Each sub-request's response time (stage dispatch to first finished
    replica) is credited to the component that ran that winning replica.
    """
    overall = trace.overall_latencies_ns()
    if not overall:
        raise EmptyTrace("trace has no completed requests")
    p99 = {}
    for comp in trace.component_ids:
        lat = trace.component_latency.get(comp)
        if lat is not None and len(lat):
            p99[comp] = nearest_rank(lat, percentile) / NS_PER_MS
    return RunMetrics(
        policy=trace.policy,
        seed=trace.seed,
        component_p99_ms=p99,
        mean_overall_ms=sum(overall) / len(overall) / NS_PER_MS,
        completed=len(overall),
        migrations=len(trace.migrations),
        saturated=trace.saturated,
        sched_ms=trace.scheduler_wall_s * 1000.0,
    )
