"""Synthetic batch-job interference traces and Poisson request arrivals."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

from ..contention import FIELDS, ContentionVector
from ..exceptions import BadConfig


def stream_rng(seed, stream):
    """Independent, reproducible ``random.Random`` for one named purpose."""
    return random.Random(f"pcsched:{seed}:{stream}")


@dataclass(frozen=True)
class SizeLevel:
    size_gb: float
    footprint: ContentionVector


@dataclass(frozen=True)
class JobClass:
    """One batch workload type.

    Footprints come either from an explicit ``sizes`` table (input size to
    contention) or, when the table is empty, from ``footprint_per_gb``
    scaled by a size drawn uniformly from ``size_range_gb``.
    """

    name: str
    rate_per_node: float  # job starts per node per second
    duration_s: tuple = (10.0, 120.0)
    sizes: tuple = ()
    footprint_per_gb: ContentionVector = field(default_factory=ContentionVector)
    size_range_gb: tuple = (0.5, 8.0)
    nodes: tuple = ()  # restrict to these node ids; empty means every node

    def __post_init__(self):
        if not self.rate_per_node >= 0 or not math.isfinite(self.rate_per_node):
            raise BadConfig(f"job class {self.name!r}: rate_per_node must be a finite value >= 0")
        lo, hi = self.duration_s
        if not 0 < lo <= hi:
            raise BadConfig(f"job class {self.name!r}: duration_s must satisfy 0 < min <= max")
        slo, shi = self.size_range_gb
        if not self.sizes and not 0 < slo <= shi:
            raise BadConfig(f"job class {self.name!r}: size_range_gb must satisfy 0 < min <= max")

    def footprint_for(self, size_gb):
        for level in self.sizes:
            if level.size_gb == size_gb:
                return level.footprint
        if self.sizes:
            raise BadConfig(f"job class {self.name!r} has no footprint for size {size_gb}")
        return self.footprint_per_gb.scaled(size_gb)

    def sample_size(self, rng):
        if self.sizes:
            return rng.choice(self.sizes).size_gb
        lo, hi = self.size_range_gb
        return rng.uniform(lo, hi)


@dataclass(frozen=True)
class BatchJobSpec:
    workload_class: str
    start: float
    duration: float
    contention_footprint: ContentionVector
    node: str
    size_gb: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise BadConfig(f"batch job duration must be > 0, got {self.duration}")

    @property
    def end(self):
        return self.start + self.duration

    def to_json(self):
        return json.dumps(
            {
                "class": self.workload_class,
                "node": self.node,
                "start": self.start,
                "duration": self.duration,
                "size_gb": self.size_gb,
                **{k: v for k, v in self.contention_footprint.as_dict().items()},
            },
            sort_keys=True,
        )


def generate_interference_trace(nodes, job_mix, horizon, seed):
    """Poisson batch-job starts on every node for every job class.

    Each (node, class) pair gets its own random stream, so adding a node or
    a class never perturbs the jobs generated for the others.
    """
    if not horizon > 0:
        raise BadConfig(f"horizon must be > 0, got {horizon}")
    jobs = []
    for node in nodes:
        for job_class in job_mix:
            if job_class.rate_per_node == 0 or (job_class.nodes and node not in job_class.nodes):
                continue
            rng = stream_rng(seed, f"batch:{node}:{job_class.name}")
            t = rng.expovariate(job_class.rate_per_node)
            while t < horizon:
                size = job_class.sample_size(rng)
                duration = rng.uniform(*job_class.duration_s)
                jobs.append(
                    BatchJobSpec(job_class.name, t, duration, job_class.footprint_for(size), node, size)
                )
                t += rng.expovariate(job_class.rate_per_node)
    jobs.sort(key=lambda j: (j.start, j.node, j.workload_class))
    return jobs


class PoissonArrivals:
    """Piecewise-constant-rate Poisson arrival stream.

    ``schedule`` is a list of ``(start_time_s, rate)`` pairs; a bare number
    means a constant rate from time zero.
    """

    def __init__(self, schedule):
        if isinstance(schedule, (int, float)):
            schedule = [(0.0, float(schedule))]
        schedule = sorted((float(t), float(r)) for t, r in schedule)
        if not schedule or schedule[0][0] != 0.0:
            raise BadConfig("arrival schedule must start at time 0")
        if any(r < 0 or not math.isfinite(r) for _, r in schedule):
            raise BadConfig("arrival rates must be finite and >= 0")
        self.schedule = schedule

    def rate_at(self, t):
        rate = self.schedule[0][1]
        for start, r in self.schedule:
            if start <= t:
                rate = r
        return rate

    def times(self, horizon, rng):
        """Yield arrival times in seconds, strictly below ``horizon``."""
        bounds = [t for t, _ in self.schedule[1:]] + [horizon]
        for (start, rate), end in zip(self.schedule, bounds):
            end = min(end, horizon)
            if rate == 0 or start >= end:
                continue
            t = start + rng.expovariate(rate)
            while t < end:
                yield t
                t += rng.expovariate(rate)


__all__ = [
    "FIELDS",
    "BatchJobSpec",
    "JobClass",
    "PoissonArrivals",
    "SizeLevel",
    "generate_interference_trace",
    "stream_rng",
]
