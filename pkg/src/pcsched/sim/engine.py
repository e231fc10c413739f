"""Deterministic discrete-event simulator of a multi-stage online service.

Every component is a FIFO single-server queue. A request visits the stages
in order; inside a stage it fans out to every component and the stage
finishes when each sub-request has one finished replica. Simulated time is
kept in integer nanoseconds and simultaneous events are ordered by their
insertion sequence number, so a run is a pure function of its inputs.
"""

from __future__ import annotations

import bisect
import heapq
import math
import time
from array import array
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..contention import ContentionVector, clip_contention
from ..exceptions import BadConfig, SaturationAbort
from ..matrix import NodeState, PlacementProblem
from ..queueing import ServiceTopology
from ..scheduler import schedule
from .policies import PCS, Basic, Redundancy, Reissue
from .profiling import noisy_reading, train_class_model
from .trace import SimulationTrace
from .workload import PoissonArrivals, stream_rng

NS = 1_000_000_000

_ARRIVAL, _COMPLETE, _CANCEL, _BATCH_START, _BATCH_END = 0, 1, 2, 3, 4
_MONITOR, _SCHEDULE, _RESUME, _REISSUE, _NEXT_STAGE = 5, 6, 7, 8, 9

_QUEUED, _RUNNING, _DONE, _CANCELLED = 0, 1, 2, 3


def to_ns(seconds):
    return int(round(seconds * NS))


@dataclass(frozen=True)
class MigrationCostModel:
    """Seconds a migrating component stays unavailable (default: 20 moves in 3 s)."""

    per_migration_delay: float = 0.15

    def __post_init__(self):
        if not self.per_migration_delay >= 0:
            raise BadConfig("per_migration_delay must be >= 0")


@dataclass(frozen=True)
class SimConfig:
    cancel_delay: float = 0.0005
    cancel_on: str = "finish"
    network_delay: float = 0.0
    queue_bound: int = 1_000_000
    drain_limit: float | None = None
    ri_window: int = 10_000
    ri_prior: float = 0.05
    ri_min_samples: int = 100
    monitor_period: float = 1.0
    micro_period: float = 60.0
    monitor_noise: float = 0.0
    sample_window: float | None = None
    migration: MigrationCostModel = field(default_factory=MigrationCostModel)
    record_jobs: bool = False

    def __post_init__(self):
        if self.cancel_on not in ("finish", "start"):
            raise BadConfig(f"cancel_on must be 'finish' or 'start', got {self.cancel_on!r}")
        if self.cancel_delay < 0 or self.network_delay < 0:
            raise BadConfig("delays must be >= 0")
        if self.queue_bound < 1:
            raise BadConfig("queue_bound must be >= 1")


@dataclass(frozen=True)
class Service:
    """Static description of the simulated deployment."""

    topology: ServiceTopology
    classes: dict  # component id -> ServiceClass
    nodes: tuple  # node ids
    background: dict = field(default_factory=dict)  # node id -> ContentionVector

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        missing = [c for c in self.topology.components if c not in self.classes]
        if missing:
            raise BadConfig(f"components without a service class: {missing}")
        unknown = {n for n in self.topology.placement.values()} - set(self.nodes)
        if unknown:
            raise BadConfig(f"placement refers to unknown nodes: {sorted(unknown)}")


class _Request:
    __slots__ = ("rid", "arrival", "stage", "remaining")

    def __init__(self, rid, arrival):
        self.rid = rid
        self.arrival = arrival
        self.stage = 0
        self.remaining = 0


class _Sub:
    __slots__ = ("req", "stage", "owner", "t0", "done", "jobs", "reissued", "cancel_sent")

    def __init__(self, req, stage, owner, t0):
        self.req = req
        self.stage = stage
        self.owner = owner
        self.t0 = t0
        self.done = False
        self.jobs = []
        self.reissued = False
        self.cancel_sent = False


class _Job:
    __slots__ = ("sub", "comp", "node", "replica", "state", "dispatch", "start", "jid")

    def __init__(self, sub, comp, node, replica, dispatch, jid):
        self.sub = sub
        self.comp = comp
        self.node = node
        self.replica = replica
        self.state = _QUEUED
        self.dispatch = dispatch
        self.start = -1
        self.jid = jid


class _PercentileWindow:
    """Nearest-rank percentile over the most recent ``size`` values."""

    def __init__(self, size, percentile):
        self.size = size
        self.q = percentile / 100.0
        self.values = deque()
        self.sorted = []

    def add(self, value):
        self.values.append(value)
        bisect.insort(self.sorted, value)
        if len(self.values) > self.size:
            old = self.values.popleft()
            del self.sorted[bisect.bisect_left(self.sorted, old)]

    def __len__(self):
        return len(self.values)

    def value(self):
        n = len(self.sorted)
        rank = max(1, math.ceil(self.q * n))
        return self.sorted[rank - 1]


class Simulation:
    """One simulation run. Use :func:`run_simulation` unless you need hooks."""

    def __init__(self, service, trace, policy, arrivals, ground_truth, horizon, seed, config=None, on_schedule=None):
        if not horizon > 0:
            raise BadConfig(f"horizon must be > 0, got {horizon}")
        self.service = service
        self.batch_trace = list(trace)
        self.policy = policy
        self.arrivals = arrivals if isinstance(arrivals, PoissonArrivals) else PoissonArrivals(arrivals)
        self.gt = ground_truth
        self.horizon = float(horizon)
        self.seed = seed
        self.config = config or SimConfig()
        self.on_schedule = on_schedule

        topo = service.topology
        self.comp_ids = topo.components
        self.stage_comps = []
        pos = 0
        for stage in topo.stages:
            self.stage_comps.append(list(range(pos, pos + len(stage))))
            pos += len(stage)
        self.node_ids = list(service.nodes)
        node_index = {n: j for j, n in enumerate(self.node_ids)}
        m, k = len(self.comp_ids), len(self.node_ids)
        self.comp_class = [service.classes[c] for c in self.comp_ids]
        self.footprint = [cls.footprint.as_array() for cls in self.comp_class]
        self.comp_node = [node_index[topo.placement[c]] for c in self.comp_ids]
        self.node_comps = [set() for _ in range(k)]
        for c, j in enumerate(self.comp_node):
            self.node_comps[j].add(c)
        self.background = [
            service.background.get(n, ContentionVector()).as_array() for n in self.node_ids
        ]
        self.node_batch = [bg.copy() for bg in self.background]
        self.comp_mean = [0.0] * m
        # time integral of each component's mean service time, for offered load
        self._horizon_ns = to_ns(self.horizon)
        self._mean_area = [0.0] * m
        self._mean_since = [0] * m
        for j in range(k):
            self._refresh_node(j)

        self.queues = [deque() for _ in range(m)]
        self.busy = [None] * m
        self.available_at = [0] * m
        self.resume_pending = [False] * m
        self.busy_ns = [0] * m
        self.now = 0
        self._arrival_times = deque()
        self._init_monitor()

    # -- helpers --------------------------------------------------------------

    def _corunner(self, c):
        j = self.comp_node[c]
        u = self.node_batch[j].copy()
        for other in self.node_comps[j]:
            if other != c:
                u += self.footprint[other]
        return u

    def _refresh_node(self, j, now=0):
        for c in self.node_comps[j]:
            self._area_checkpoint(c, now)
            self.comp_mean[c] = self.gt.mean(self.comp_class[c], clip_contention(self._corunner(c)))

    def _area_checkpoint(self, c, now):
        now = min(now, self._horizon_ns)
        self._mean_area[c] += self.comp_mean[c] * (now - self._mean_since[c])
        self._mean_since[c] = now

    def mean_service_times(self, until_ns):
        """Time-averaged ground-truth mean service time of every component."""
        out = []
        for c in range(len(self.comp_ids)):
            area = self._mean_area[c] + self.comp_mean[c] * max(0, until_ns - self._mean_since[c])
            out.append(area / until_ns if until_ns > 0 else self.comp_mean[c])
        return out

    def node_aggregate(self, j):
        u = self.node_batch[j].copy()
        for c in self.node_comps[j]:
            u += self.footprint[c]
        return clip_contention(u)

    # -- main loop --------------------------------------------------------------

    def run(self):
        cfg = self.config
        policy = self.policy
        horizon_ns = to_ns(self.horizon)
        drain = cfg.drain_limit if cfg.drain_limit is not None else 10.0 * self.horizon
        stop_ns = horizon_ns + to_ns(drain)
        m = len(self.comp_ids)

        if isinstance(policy, (Basic, PCS)):
            mode, copies = 0, 1
        elif isinstance(policy, Redundancy):
            mode, copies = 1, policy.replica_count
        elif isinstance(policy, Reissue):
            mode, copies = 2, 1
        else:
            raise BadConfig(f"unsupported policy {policy!r}")
        cancel_ns = to_ns(cfg.cancel_delay)
        cancel_on_start = mode == 1 and cfg.cancel_on == "start"
        net_ns = to_ns(cfg.network_delay)
        bound = cfg.queue_bound
        record = cfg.record_jobs

        heap = []
        seq = 0
        push = heapq.heappush
        pop = heapq.heappop

        trace = SimulationTrace(
            policy=policy.name, seed=self.seed, horizon=self.horizon, component_ids=tuple(self.comp_ids)
        )
        comp_lat = [array("q") for _ in range(m)]
        req_arrival = array("q")
        req_done = array("q")
        job_log = [] if record else None
        stats = {"dispatched": 0, "started": 0, "cancelled": 0, "wasted": 0, "reissued": 0}

        draw = self.gt.sampler(stream_rng(self.seed, "service"))
        arrival_iter = self.arrivals.times(self.horizon, stream_rng(self.seed, "arrivals"))
        arrival_times = self._arrival_times
        keep_ns = to_ns(self._window_s)

        queues, busy, comp_mean = self.queues, self.busy, self.comp_mean
        available_at, resume_pending, busy_ns = self.available_at, self.resume_pending, self.busy_ns
        stage_comps = self.stage_comps
        comp_node = self.comp_node
        n_stages = len(stage_comps)

        ri_windows = None
        ri_prior_ns = to_ns(cfg.ri_prior)
        if mode == 2:
            ri_windows = [_PercentileWindow(cfg.ri_window, policy.percentile) for _ in stage_comps]

        def ri_threshold(stage):
            win = ri_windows[stage]
            if len(win) < cfg.ri_min_samples:
                return ri_prior_ns
            return max(1, win.value())

        # seed the calendar
        first = next(arrival_iter, None)
        if first is not None:
            push(heap, (to_ns(first), seq, _ARRIVAL, None))
            seq += 1
        for bj in self.batch_trace:
            if bj.start >= self.horizon or bj.node not in self.node_ids:
                continue
            j = self.node_ids.index(bj.node)
            vec = bj.contention_footprint.as_array()
            push(heap, (to_ns(bj.start), seq, _BATCH_START, (j, vec)))
            seq += 1
            push(heap, (to_ns(bj.end), seq, _BATCH_END, (j, vec)))
            seq += 1
        monitoring = isinstance(policy, PCS)
        if monitoring:
            push(heap, (0, seq, _MONITOR, None))
            seq += 1
            interval_ns = to_ns(policy.interval)
            if interval_ns < horizon_ns:
                push(heap, (interval_ns, seq, _SCHEDULE, 1))
                seq += 1
            self._models = self._pcs_models()

        jid = 0
        rid = 0
        now = 0
        open_requests = 0
        saturated = False
        abort_reason = ""

        def start_next(c, now):
            nonlocal seq
            if now < available_at[c]:
                if not resume_pending[c]:
                    resume_pending[c] = True
                    push(heap, (available_at[c], seq, _RESUME, c))
                    seq += 1
                return
            q = queues[c]
            while q:
                job = q.popleft()
                if job.state != _QUEUED:
                    continue
                job.state = _RUNNING
                job.start = now
                dur = max(1, int(draw(comp_mean[c]) * NS + 0.5))
                busy[c] = job
                busy_ns[c] += dur
                stats["started"] += 1
                push(heap, (now + dur, seq, _COMPLETE, job))
                seq += 1
                if cancel_on_start:
                    sub = job.sub
                    if not sub.cancel_sent:
                        sub.cancel_sent = True
                        push(heap, (now + cancel_ns, seq, _CANCEL, sub))
                        seq += 1
                return

        def enqueue(sub, c, replica, now):
            nonlocal jid
            job = _Job(sub, c, comp_node[c], replica, now, jid)
            jid += 1
            sub.jobs.append(job)
            stats["dispatched"] += 1
            q = queues[c]
            q.append(job)
            if len(q) > bound:
                raise SaturationAbort(f"queue of {self.comp_ids[c]} exceeded {bound}")
            if busy[c] is None:
                start_next(c, now)

        def dispatch_stage(req, now):
            nonlocal seq
            comps = stage_comps[req.stage]
            n = len(comps)
            req.remaining = n
            subs = [_Sub(req, req.stage, c, now) for c in comps]
            if mode == 0:
                for sub in subs:
                    enqueue(sub, sub.owner, 0, now)
            elif mode == 1:
                for level in range(copies):
                    for pos, sub in enumerate(subs):
                        enqueue(sub, comps[(pos + level) % n], level, now)
            else:
                threshold = ri_threshold(req.stage)
                for sub in subs:
                    enqueue(sub, sub.owner, 0, now)
                    push(heap, (now + threshold, seq, _REISSUE, sub))
                    seq += 1

        def cancel_siblings(sub):
            for job in sub.jobs:
                if job.state == _QUEUED:
                    job.state = _CANCELLED
                    stats["cancelled"] += 1
                    if record:
                        job_log.append(job)

        try:
            while heap:
                now, _, kind, payload = pop(heap)
                if now > stop_ns:
                    saturated = True
                    abort_reason = "drain limit reached"
                    break
                if kind == _COMPLETE:
                    job = payload
                    c = job.comp
                    busy[c] = None
                    job.state = _DONE
                    sub = job.sub
                    if record:
                        job_log.append((job, now))
                    if not sub.done:
                        sub.done = True
                        comp_lat[c].append(now - sub.t0)
                        if mode == 2:
                            ri_windows[sub.stage].add(now - sub.t0)
                        if len(sub.jobs) > 1:
                            if cancel_ns == 0:
                                cancel_siblings(sub)
                            else:
                                push(heap, (now + cancel_ns, seq, _CANCEL, sub))
                                seq += 1
                        req = sub.req
                        req.remaining -= 1
                        if req.remaining == 0:
                            req.stage += 1
                            if req.stage == n_stages:
                                req_done[req.rid] = now
                                open_requests -= 1
                            elif net_ns:
                                push(heap, (now + net_ns, seq, _NEXT_STAGE, req))
                                seq += 1
                            else:
                                dispatch_stage(req, now)
                    else:
                        stats["wasted"] += 1
                    if queues[c]:
                        start_next(c, now)
                elif kind == _ARRIVAL:
                    req = _Request(rid, now)
                    rid += 1
                    req_arrival.append(now)
                    req_done.append(-1)
                    open_requests += 1
                    arrival_times.append(now)
                    while now - arrival_times[0] > keep_ns:
                        arrival_times.popleft()
                    dispatch_stage(req, now)
                    nxt = next(arrival_iter, None)
                    if nxt is not None:
                        push(heap, (to_ns(nxt), seq, _ARRIVAL, None))
                        seq += 1
                elif kind == _CANCEL:
                    cancel_siblings(payload)
                elif kind == _REISSUE:
                    sub = payload
                    if not sub.done and not sub.reissued:
                        sub.reissued = True
                        stats["reissued"] += 1
                        comps = stage_comps[sub.stage]
                        pos = comps.index(sub.owner)
                        enqueue(sub, comps[(pos + 1) % len(comps)], 1, now)
                elif kind == _NEXT_STAGE:
                    dispatch_stage(payload, now)
                elif kind == _RESUME:
                    c = payload
                    resume_pending[c] = False
                    if busy[c] is None:
                        start_next(c, now)
                elif kind == _BATCH_START or kind == _BATCH_END:
                    j, vec = payload
                    if kind == _BATCH_START:
                        self.node_batch[j] = self.node_batch[j] + vec
                    else:
                        self.node_batch[j] = self.node_batch[j] - vec
                    self._refresh_node(j, now)
                elif kind == _MONITOR:
                    self.now = now
                    self._sample(now)
                    nxt = now + to_ns(cfg.monitor_period)
                    if nxt < horizon_ns:
                        push(heap, (nxt, seq, _MONITOR, None))
                        seq += 1
                elif kind == _SCHEDULE:
                    self.now = now
                    moved = self._reschedule(now, payload, trace)
                    for c in moved:
                        if busy[c] is None:
                            start_next(c, now)
                    nxt = now + interval_ns
                    if nxt < horizon_ns:
                        push(heap, (nxt, seq, _SCHEDULE, payload + 1))
                        seq += 1
        except SaturationAbort as exc:
            saturated = True
            abort_reason = str(exc)

        if open_requests:
            saturated = True
            abort_reason = abort_reason or f"{open_requests} requests incomplete"
        self.now = now
        trace.end_ns = now
        trace.request_arrival = req_arrival
        trace.request_completion = req_done
        trace.component_latency = {cid: comp_lat[c] for c, cid in enumerate(self.comp_ids)}
        trace.busy_ns = dict(zip(self.comp_ids, busy_ns))
        trace.mean_service_s = dict(zip(self.comp_ids, self.mean_service_times(horizon_ns)))
        trace.saturated = saturated
        trace.abort_reason = abort_reason
        trace.stats = stats
        trace.horizon_ns = horizon_ns
        if record:
            trace.jobs = self._job_records(job_log)
        return trace

    # -- trace export ---------------------------------------------------------

    def _job_records(self, job_log):
        records = []
        for item in job_log:
            if isinstance(item, tuple):
                job, finish = item
                cancelled = False
            else:
                job, finish, cancelled = item, None, True
            sub = job.sub
            records.append(
                {
                    "request": sub.req.rid,
                    "stage": sub.stage,
                    "component": self.comp_ids[job.comp],
                    "owner": self.comp_ids[sub.owner],
                    "node": self.node_ids[job.node],
                    "job": job.jid,
                    "dispatch_ns": job.dispatch,
                    "start_ns": job.start if job.start >= 0 else None,
                    "finish_ns": finish,
                    "replica": job.replica > 0,
                    "cancelled": cancelled,
                }
            )
        records.sort(key=lambda r: r["job"])
        return records

    # -- monitoring and PCS ---------------------------------------------------

    def _init_monitor(self):
        cfg = self.config
        if cfg.sample_window is not None:
            window = cfg.sample_window
        elif isinstance(self.policy, PCS):
            window = self.policy.interval
        else:
            window = 60.0
        self._sample_cap = max(1, int(round(window / cfg.monitor_period)))
        self._samples = [deque(maxlen=self._sample_cap) for _ in self.comp_ids]
        self._cache_reading = [0.0] * len(self.comp_ids)
        self._last_micro = None
        self._monitor_rng = stream_rng(self.seed, "monitor")
        self._window_s = window

    def monitor_snapshot(self, component):
        """Aggregate contention on the component's node and the arrival-rate estimate."""
        c = self.comp_ids.index(component)
        j = self.comp_node[c]
        agg = self.node_aggregate(j)
        noise = self.config.monitor_noise
        if noise:
            agg = noisy_reading(agg, noise, self._monitor_rng)
        return ContentionVector.from_array(agg), self.arrival_rate_estimate(self.now)

    def arrival_rate_estimate(self, now_ns, window_s=None):
        window_s = self._window_s if window_s is None else window_s
        lo = now_ns - to_ns(window_s)
        times = self._arrival_times
        while times and times[0] < lo:
            times.popleft()
        span = min(window_s, now_ns / NS) if now_ns > 0 else window_s
        return len(times) / span if span > 0 else 0.0

    def _sample(self, now):
        cfg = self.config
        micro = self._last_micro is None or now - self._last_micro >= to_ns(cfg.micro_period)
        if micro:
            self._last_micro = now
        for c in range(len(self.comp_ids)):
            u = clip_contention(self._corunner(c))
            if cfg.monitor_noise:
                u = noisy_reading(u, cfg.monitor_noise, self._monitor_rng)
            if micro:
                self._cache_reading[c] = float(u[1])
            else:
                u = u.copy()
                u[1] = self._cache_reading[c]
            self._samples[c].append(u)

    def _pcs_models(self):
        if self.policy.models is not None:
            return {cid: self.policy.models[self.comp_class[c].name] for c, cid in enumerate(self.comp_ids)}
        footprints = sorted(
            {tuple(bj.contention_footprint.as_array()) for bj in self.batch_trace}
        ) or [(0.0, 0.0, 0.0, 0.0)]
        footprints = [np.array(f) for f in footprints]
        bg = self.background[0] if self.background else None
        by_class = {}
        for cls in self.comp_class:
            if cls.name not in by_class:
                by_class[cls.name] = train_class_model(
                    cls, self.gt, footprints, bg, seed=self.seed, monitor_noise=self.config.monitor_noise
                )
        return {cid: by_class[self.comp_class[c].name] for c, cid in enumerate(self.comp_ids)}

    def current_problem(self, now):
        """Snapshot the monitored state as a :class:`PlacementProblem`."""
        topo = self.service.topology
        placement = {cid: self.node_ids[self.comp_node[c]] for c, cid in enumerate(self.comp_ids)}
        topology = ServiceTopology(topo.stages, placement)
        nodes = []
        for j, node_id in enumerate(self.node_ids):
            hosted = sorted(self.node_comps[j])
            contrib = {self.comp_ids[c]: ContentionVector.from_array(self.footprint[c]) for c in hosted}
            agg = self.node_aggregate(j)
            if self.config.monitor_noise:
                agg = noisy_reading(agg, self.config.monitor_noise, self._monitor_rng)
            batch = agg - sum((self.footprint[c] for c in hosted), np.zeros(4))
            nodes.append(NodeState(node_id, ContentionVector.from_array(batch), contrib))
        samples = {
            cid: [ContentionVector.from_array(u) for u in self._samples[c]] or [ContentionVector.from_array(self._corunner(c))]
            for c, cid in enumerate(self.comp_ids)
        }
        lam = self.arrival_rate_estimate(now)
        return PlacementProblem(topology, nodes, self._models, lam, samples)

    def _reschedule(self, now, interval_idx, trace):
        started = time.perf_counter()
        problem = self.current_problem(now)
        state = problem.state()
        matrix = state.full_matrix()
        plan = schedule(matrix, state, self.policy.scheduler, interval=interval_idx)
        trace.scheduler_wall_s += time.perf_counter() - started
        if self.on_schedule is not None:
            self.on_schedule(interval_idx, problem, matrix, plan)
        moved = []
        delay_ns = to_ns(self.config.migration.per_migration_delay)
        index = {cid: c for c, cid in enumerate(self.comp_ids)}
        for mig in plan.migrations:
            c = index[mig.component]
            origin = self.comp_node[c]
            dest = self.node_ids.index(mig.destination)
            self.node_comps[origin].discard(c)
            self.node_comps[dest].add(c)
            self.comp_node[c] = dest
            self._area_checkpoint(c, now)
            self._refresh_node(origin, now)
            self._refresh_node(dest, now)
            self.available_at[c] = max(self.available_at[c], now + delay_ns)
            self._samples[c].clear()
            moved.append(c)
            trace.migrations.append(
                (interval_idx, now, mig.component, mig.origin, mig.destination, mig.predicted_reduction)
            )
        return moved


def run_simulation(service, trace, policy, arrivals, ground_truth, horizon, seed, config=None, on_schedule=None):
    """Run one simulation and return its :class:`SimulationTrace`."""
    return Simulation(service, trace, policy, arrivals, ground_truth, horizon, seed, config, on_schedule).run()
