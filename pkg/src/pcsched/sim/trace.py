"""Recorded output of one simulation run."""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class SimulationTrace:
    policy: str
    seed: object
    horizon: float
    component_ids: tuple
    request_arrival: object = None  # array('q') of ns
    request_completion: object = None  # array('q') of ns, -1 when unfinished
    component_latency: dict = field(default_factory=dict)  # component id -> array('q') of ns
    busy_ns: dict = field(default_factory=dict)
    mean_service_s: dict = field(default_factory=dict)  # time-averaged over the horizon
    migrations: list = field(default_factory=list)
    scheduler_wall_s: float = 0.0
    saturated: bool = False
    abort_reason: str = ""
    stats: dict = field(default_factory=dict)
    horizon_ns: int = 0
    end_ns: int = 0
    jobs: list = None

    @property
    def request_count(self):
        return 0 if self.request_arrival is None else len(self.request_arrival)

    def overall_latencies_ns(self):
        """End-to-end latency of every completed request, in arrival order."""
        return [d - a for a, d in zip(self.request_arrival, self.request_completion) if d >= 0]

    def utilization(self):
        """Fraction of the simulated span each component spent serving."""
        span = max(self.end_ns, self.horizon_ns, 1)
        return {c: b / span for c, b in self.busy_ns.items()}

    def offered_utilization(self):
        """Arrival rate times time-averaged mean service time, per component.

        This is the load each component would carry with one copy per
        sub-request, whatever the policy actually dispatched.
        """
        rate = self.request_count / self.horizon if self.horizon > 0 else 0.0
        return {c: rate * x for c, x in self.mean_service_s.items()}

    def iter_records(self):
        """Newline-delimited export records; wall-clock timings are left out."""
        yield {
            "type": "run",
            "policy": self.policy,
            "seed": self.seed,
            "horizon_s": self.horizon,
            "saturated": self.saturated,
            "abort_reason": self.abort_reason,
            **{k: self.stats[k] for k in sorted(self.stats)},
        }
        for rid, (a, d) in enumerate(zip(self.request_arrival or (), self.request_completion or ())):
            yield {"type": "request", "request": rid, "arrival_ns": a, "completion_ns": d if d >= 0 else None}
        for interval, t, comp, origin, dest, reduction in self.migrations:
            yield {
                "type": "migration",
                "interval": interval,
                "time_ns": t,
                "component": comp,
                "origin": origin,
                "destination": dest,
                "predicted_reduction_s": round(reduction, 12),
            }
        for job in self.jobs or ():
            yield {"type": "job", **job}

    def write_ndjson(self, path_or_file):
        if hasattr(path_or_file, "write"):
            self._dump(path_or_file)
        else:
            with open(path_or_file, "w", encoding="utf-8") as fh:
                self._dump(fh)

    def _dump(self, fh):
        for rec in self.iter_records():
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")
