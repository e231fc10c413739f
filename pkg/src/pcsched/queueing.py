"""Queueing latency of components, stages and the whole service.

Saturated queues (utilisation >= 1) are represented by ``math.inf``: it is
absorbing under ``max`` and ``sum`` and compares greater than every finite
latency, which is exactly what ranking placements needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from .exceptions import EmptyStage, EmptyTopology, InvalidLoad, MissingLoad

SATURATED = math.inf


def is_saturated(latency):
    return latency == SATURATED


@dataclass(frozen=True)
class ComponentLoad:
    arrival_rate: float
    mean_service_time: float
    service_time_variance: float = 0.0

    def __post_init__(self):
        for name in ("arrival_rate", "mean_service_time", "service_time_variance"):
            value = getattr(self, name)
            if not isinstance(value, (int, float, np.floating, np.integer)) or not math.isfinite(value):
                raise InvalidLoad(f"{name} must be a finite number, got {value!r}")
        if self.arrival_rate < 0:
            raise InvalidLoad(f"arrival_rate must be >= 0, got {self.arrival_rate}")
        if self.mean_service_time <= 0:
            raise InvalidLoad(f"mean_service_time must be > 0, got {self.mean_service_time}")
        if self.service_time_variance < 0:
            raise InvalidLoad(f"service_time_variance must be >= 0, got {self.service_time_variance}")

    @property
    def utilization(self):
        return self.arrival_rate * self.mean_service_time


def mg1_latency(load):
    """Expected M/G/1 response time (Pollaczek-Khinchine), or ``SATURATED``."""
    lam = load.arrival_rate
    mean = load.mean_service_time
    rho = lam * mean
    if rho >= 1.0:
        return SATURATED
    mu = 1.0 / mean
    cs2 = load.service_time_variance / (mean * mean)
    return mean + lam * (1.0 + cs2) / (2.0 * mu * mu * (1.0 - rho))


def mg1_latency_array(arrival_rate, mean, variance):
    """Vectorised :func:`mg1_latency` over numpy arrays (no validation)."""
    mean = np.asarray(mean, dtype=float)
    rho = arrival_rate * mean
    with np.errstate(divide="ignore", invalid="ignore"):
        # lam * (1 + C^2) / (2 mu^2 (1 - rho)) == lam * (mean^2 + var) / (2 (1 - rho))
        wait = arrival_rate * (mean * mean + variance) / (2.0 * (1.0 - rho))
    return np.where(rho >= 1.0, np.inf, mean + wait)


def stage_latency(component_latencies):
    latencies = list(component_latencies)
    if not latencies:
        raise EmptyStage("a stage needs at least one component latency")
    return max(latencies)


def overall_latency(stage_latencies):
    latencies = list(stage_latencies)
    if not latencies:
        raise EmptyTopology("a service needs at least one stage")
    total = 0.0
    for value in latencies:
        total += value
    return total


@dataclass(frozen=True)
class ServiceTopology:
    """Ordered stages of parallel components plus their hosting nodes."""

    stages: tuple
    placement: MappingProxyType = field(default_factory=dict)

    def __post_init__(self):
        stages = tuple(tuple(stage) for stage in self.stages)
        if not stages:
            raise EmptyTopology("topology needs at least one stage")
        seen = set()
        for idx, stage in enumerate(stages):
            if not stage:
                raise EmptyStage(f"stage {idx} has no components")
            for comp in stage:
                if comp in seen:
                    raise ValueError(f"component {comp!r} appears in more than one stage")
                seen.add(comp)
        placement = dict(self.placement)
        missing = [c for c in seen if c not in placement]
        if missing:
            raise ValueError(f"components without a node: {sorted(map(str, missing))}")
        extra = [c for c in placement if c not in seen]
        if extra:
            raise ValueError(f"placement names unknown components: {sorted(map(str, extra))}")
        object.__setattr__(self, "stages", stages)
        object.__setattr__(self, "placement", MappingProxyType(placement))

    @property
    def components(self):
        return [c for stage in self.stages for c in stage]

    def stage_index(self, component):
        for idx, stage in enumerate(self.stages):
            if component in stage:
                return idx
        raise KeyError(component)

    def residents(self, node):
        return [c for c in self.components if self.placement[c] == node]

    def with_placement(self, placement):
        merged = dict(self.placement)
        merged.update(placement)
        return ServiceTopology(self.stages, merged)


def predict_overall(topology, per_component_loads):
    """Compose component, stage and service latency for a placed topology."""
    stage_values = []
    for stage in topology.stages:
        values = []
        for comp in stage:
            try:
                load = per_component_loads[comp]
            except KeyError:
                raise MissingLoad(comp) from None
            values.append(mg1_latency(load))
        stage_values.append(stage_latency(values))
    return overall_latency(stage_values)
