"""Request-handling policies compared by the simulator."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..exceptions import BadConfig
from ..scheduler import SchedulerConfig


@dataclass(frozen=True)
class Basic:
    name = "basic"


@dataclass(frozen=True)
class Redundancy:
    """Send ``replica_count`` copies of every sub-request; keep the first finisher."""

    replica_count: int = 3

    def __post_init__(self):
        if self.replica_count < 2:
            raise BadConfig(f"redundancy needs at least 2 replicas, got {self.replica_count}")

    @property
    def name(self):
        return f"red-{self.replica_count}"


@dataclass(frozen=True)
class Reissue:
    """Send one copy; reissue once if it is still running after the p-th percentile."""

    percentile: float = 90.0

    def __post_init__(self):
        if not 0 < self.percentile < 100:
            raise BadConfig(f"reissue percentile must be in (0, 100), got {self.percentile}")

    @property
    def name(self):
        p = self.percentile
        return f"ri-{int(p) if float(p).is_integer() else p}"


@dataclass(frozen=True)
class PCS:
    """Periodic predictive component-level rescheduling."""

    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    interval: float = 600.0
    models: object = None  # mapping service-class name -> CombinedModel; None trains by profiling

    def __post_init__(self):
        if not self.interval > 0:
            raise BadConfig(f"PCS interval must be > 0, got {self.interval}")

    name = "pcs"


_RED = re.compile(r"^red-(\d+)$")
_RI = re.compile(r"^ri-(\d+(?:\.\d+)?)$")


def parse_policy(text, scheduler=None, interval=600.0):
    """Turn ``basic``, ``red-3``, ``ri-99`` or ``pcs`` into a policy object."""
    key = str(text).strip().lower()
    if key == "basic":
        return Basic()
    if key == "pcs":
        return PCS(scheduler or SchedulerConfig(), interval)
    if m := _RED.match(key):
        return Redundancy(int(m.group(1)))
    if m := _RI.match(key):
        return Reissue(float(m.group(1)))
    raise BadConfig(f"unknown policy {text!r}")


def policy_name(policy):
    return policy.name
