"""Performance matrix of predicted overall-latency reductions.

A component's contention vector is the load put on its node by everything
*except* itself: the co-located batch jobs plus the other hosted
components. Under that reading a hypothetical migration changes
contention by these exact rules:

==========================  ===========================================
component                   updated contention
==========================  ===========================================
the mover                   destination's aggregate contention
resident of the origin      current minus the mover's footprint (>= 0)
resident of the destination current plus the mover's footprint
anything else               unchanged
==========================  ===========================================

Contention samples are observed at the placement the problem was built
with. Evaluating another placement shifts every sample of a component by
the change of its co-runner load, which reduces to the table above for a
single migration and lets the brute-force oracle, the matrix and the
incremental update share one arithmetic path.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from .contention import FIELDS, UPPER_BOUNDS, ContentionVector
from .exceptions import EmptySamples, MissingLoad
from .model import CombinedModel
from .queueing import mg1_latency_array

# cap on float64 elements materialised per evaluation chunk
_CHUNK_ELEMENTS = 1 << 21


class MigrationRole(str, enum.Enum):
    MIGRATING = "migrating"
    ON_ORIGIN = "on_origin"
    ON_DESTINATION = "on_destination"
    OTHER = "other"


def updated_contention(role, current, mover_footprint, destination_aggregate):
    """Contention of a component, in ``role``, after a hypothetical migration."""
    role = MigrationRole(role)
    if role is MigrationRole.MIGRATING:
        return destination_aggregate
    if role is MigrationRole.ON_ORIGIN:
        return current - mover_footprint
    if role is MigrationRole.ON_DESTINATION:
        return current + mover_footprint
    return current


@dataclass(frozen=True)
class NodeState:
    node_id: str
    batch_contribution: ContentionVector = field(default_factory=ContentionVector)
    component_contributions: MappingProxyType = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "component_contributions", MappingProxyType(dict(self.component_contributions))
        )

    @property
    def aggregate_contention(self):
        total = self.batch_contribution.as_array()
        for vec in self.component_contributions.values():
            total = total + vec.as_array()
        return ContentionVector.from_array(total)


@dataclass(frozen=True)
class PerformanceMatrix:
    """``entries[i, j]``: predicted drop in overall latency if component i moves to node j."""

    entries: np.ndarray
    self_reduction: np.ndarray
    baseline_overall: float
    component_ids: tuple
    node_ids: tuple
    assignment: tuple

    @property
    def shape(self):
        return self.entries.shape

    def entry(self, component, node):
        return float(self.entries[self.component_ids.index(component), self.node_ids.index(node)])

    def copy(self):
        return PerformanceMatrix(
            self.entries.copy(),
            self.self_reduction.copy(),
            self.baseline_overall,
            self.component_ids,
            self.node_ids,
            self.assignment,
        )

    def to_csv(self, fh=None):
        """Write ``component_id,node_id,reduction_ms,self_reduction_ms`` rows."""
        out = fh if fh is not None else io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["component_id", "node_id", "reduction_ms", "self_reduction_ms"])
        for i, comp in enumerate(self.component_ids):
            for j, node in enumerate(self.node_ids):
                writer.writerow(
                    [comp, node, f"{self.entries[i, j] * 1e3:.6f}", f"{self.self_reduction[i, j] * 1e3:.6f}"]
                )
        if fh is None:
            return out.getvalue()
        return None


def _as_array(vec):
    return vec.as_array() if isinstance(vec, ContentionVector) else np.asarray(vec, dtype=float)


class PlacementProblem:
    """Everything needed to predict the service latency of any placement.

    Parameters
    ----------
    topology : ServiceTopology
        Stages and the placement at which ``contention_samples`` were taken.
    nodes : sequence of NodeState
        Column order of the performance matrix. Each node lists the batch
        load and the contribution of each component it currently hosts.
    model : CombinedModel or mapping of component id to CombinedModel
    arrival_rate : float
        Request rate seen by every component (each stage handles every request).
    contention_samples : mapping of component id to list of ContentionVector
    """

    def __init__(self, topology, nodes, model, arrival_rate, contention_samples):
        self.topology = topology
        self.nodes = tuple(nodes)
        self.arrival_rate = float(arrival_rate)
        self.component_ids = tuple(topology.components)
        self.node_ids = tuple(n.node_id for n in self.nodes)
        if len(set(self.node_ids)) != len(self.node_ids):
            raise ValueError("duplicate node ids")
        node_index = {n: j for j, n in enumerate(self.node_ids)}
        m, k = len(self.component_ids), len(self.node_ids)

        self.stage_starts = np.cumsum([0] + [len(s) for s in topology.stages[:-1]])
        self.stage_of = np.repeat(np.arange(len(topology.stages)), [len(s) for s in topology.stages])

        try:
            self.initial_assignment = np.array(
                [node_index[topology.placement[c]] for c in self.component_ids], dtype=np.intp
            )
        except KeyError as exc:
            raise ValueError(f"placement refers to unknown node {exc.args[0]!r}") from None

        self.batch = np.array([_as_array(n.batch_contribution) for n in self.nodes]).reshape(k, 4)
        self.contrib = np.zeros((m, 4))
        comp_index = {c: i for i, c in enumerate(self.component_ids)}
        for j, node in enumerate(self.nodes):
            for comp, vec in node.component_contributions.items():
                if comp not in comp_index:
                    raise ValueError(f"node {node.node_id!r} lists unknown component {comp!r}")
                if self.initial_assignment[comp_index[comp]] != j:
                    raise ValueError(f"node {node.node_id!r} lists {comp!r}, which is placed elsewhere")
                self.contrib[comp_index[comp]] = _as_array(vec)

        self._init_models(model)
        self._init_samples(contention_samples)
        nodesum0 = self._node_sums(self.initial_assignment)
        self.corunner0 = self.batch[self.initial_assignment] + nodesum0[self.initial_assignment] - self.contrib

    def _init_models(self, model):
        m = len(self.component_ids)
        self.intercepts = np.empty((m, 4))
        self.slopes = np.empty((m, 4))
        self.weights = np.empty((m, 4))
        self.floors = np.empty(m)
        for i, comp in enumerate(self.component_ids):
            mdl = model if isinstance(model, CombinedModel) else model[comp]
            self.intercepts[i] = mdl.intercepts_
            self.slopes[i] = mdl.slopes_
            self.weights[i] = mdl.weights_ / mdl.weight_sum_
            self.floors[i] = mdl.floor

    def _init_samples(self, contention_samples):
        counts = []
        for comp in self.component_ids:
            if comp not in contention_samples:
                raise MissingLoad(comp)
            n = len(contention_samples[comp])
            if n == 0:
                raise EmptySamples(f"no contention samples for component {comp!r}")
            counts.append(n)
        m, s_max = len(self.component_ids), max(counts)
        self.samples = np.zeros((m, s_max, 4))
        self.sample_mask = np.zeros((m, s_max))
        for i, comp in enumerate(self.component_ids):
            arr = np.array([_as_array(v) for v in contention_samples[comp]], dtype=float).reshape(-1, 4)
            self.samples[i, : len(arr)] = arr
            self.sample_mask[i, : len(arr)] = 1.0
        self.sample_count = np.array(counts, dtype=float)

    # -- latency arithmetic -------------------------------------------------

    def _node_sums(self, assignment):
        sums = np.zeros((len(self.node_ids), 4))
        np.add.at(sums, assignment, self.contrib)
        return sums

    def latency_for(self, comps, shifts):
        """Predicted latency of components ``comps`` with sample shift ``shifts``.

        ``comps`` has any shape ``S``; ``shifts`` has shape ``S + (4,)``.
        """
        comps = np.asarray(comps, dtype=np.intp)
        u = self.samples[comps] + shifts[..., None, :]
        np.clip(u, 0.0, UPPER_BOUNDS, out=u)
        pred = self.intercepts[comps][..., None, :] + self.slopes[comps][..., None, :] * u
        pred = np.einsum("...sr,...r->...s", pred, self.weights[comps])
        np.maximum(pred, self.floors[comps][..., None], out=pred)
        mask = self.sample_mask[comps]
        count = self.sample_count[comps]
        mean = (pred * mask).sum(axis=-1) / count
        dev = (pred - mean[..., None]) * mask
        var = (dev * dev).sum(axis=-1) / count
        return mg1_latency_array(self.arrival_rate, mean, var)

    def service_stats_for(self, comps, shifts):
        comps = np.asarray(comps, dtype=np.intp)
        u = np.clip(self.samples[comps] + shifts[..., None, :], 0.0, UPPER_BOUNDS)
        pred = self.intercepts[comps][..., None, :] + self.slopes[comps][..., None, :] * u
        pred = np.maximum(np.einsum("...sr,...r->...s", pred, self.weights[comps]), self.floors[comps][..., None])
        mask = self.sample_mask[comps]
        count = self.sample_count[comps]
        mean = (pred * mask).sum(axis=-1) / count
        dev = (pred - mean[..., None]) * mask
        return mean, (dev * dev).sum(axis=-1) / count

    def shifts_for(self, assignments):
        """Sample shifts for one ``(m,)`` or many ``(n, m)`` assignments."""
        assignments = np.asarray(assignments, dtype=np.intp)
        if assignments.ndim == 1:
            nodesum = self._node_sums(assignments)
            agg = self.batch + nodesum
            return agg[assignments] - self.contrib - self.corunner0
        k = len(self.node_ids)
        onehot = np.zeros(assignments.shape + (k,))
        np.put_along_axis(onehot, assignments[..., None], 1.0, axis=-1)
        agg = self.batch[None] + np.einsum("nmk,md->nkd", onehot, self.contrib)
        own = np.take_along_axis(agg, assignments[..., None], axis=1)
        return own - self.contrib[None] - self.corunner0[None]

    def component_latencies(self, assignment=None):
        assignment = self.initial_assignment if assignment is None else self._coerce(assignment)
        m = len(self.component_ids)
        return self.latency_for(np.arange(m), self.shifts_for(assignment))

    def overall_from_latencies(self, latencies):
        return np.add.reduce(np.maximum.reduceat(latencies, self.stage_starts, axis=-1), axis=-1)

    def overall_latency(self, assignment=None):
        """Predicted overall latency of a placement, computed from scratch."""
        return float(self.overall_from_latencies(self.component_latencies(assignment)))

    def overall_latencies(self, assignments):
        """Vectorised :meth:`overall_latency` for an ``(n, m)`` batch of placements."""
        assignments = np.asarray(assignments, dtype=np.intp)
        m = len(self.component_ids)
        per_row = max(1, _CHUNK_ELEMENTS // max(1, m * self.samples.shape[1] * 4))
        out = np.empty(len(assignments))
        comps = np.arange(m)
        for lo in range(0, len(assignments), per_row):
            chunk = assignments[lo : lo + per_row]
            shifts = self.shifts_for(chunk)
            lat = self.latency_for(np.broadcast_to(comps, chunk.shape), shifts)
            out[lo : lo + per_row] = self.overall_from_latencies(lat)
        return out

    def _coerce(self, assignment):
        if isinstance(assignment, dict):
            index = {n: j for j, n in enumerate(self.node_ids)}
            return np.array([index[assignment[c]] for c in self.component_ids], dtype=np.intp)
        return np.asarray(assignment, dtype=np.intp)

    def assignment_to_dict(self, assignment):
        return {c: self.node_ids[int(j)] for c, j in zip(self.component_ids, assignment)}

    def state(self, assignment=None):
        return MigrationState(self, self.initial_assignment if assignment is None else self._coerce(assignment))

    def build_matrix(self):
        return self.state().full_matrix()


class MigrationState:
    """Cached latencies for the current placement, for fast single-move evaluation.

    Holds, for the current assignment ``A``:

    * ``lat[c]``          latency of every component,
    * ``lat_join[r, i]``  latency of ``r`` if ``i`` joined its node,
    * ``lat_leave[r, i]`` latency of ``r`` if ``i`` left its node,
    * ``lat_move[c, v]``  latency of ``c`` if it were hosted on ``v``.

    Committing a move with :meth:`apply` refreshes only what the move touched.
    """

    def __init__(self, problem, assignment):
        self.problem = problem
        self.assignment = np.array(assignment, dtype=np.intp)
        p = problem
        m, k = len(p.component_ids), len(p.node_ids)
        self.m, self.k = m, k
        self.nodesum = p._node_sums(self.assignment)
        self.shift = (p.batch + self.nodesum)[self.assignment] - p.contrib - p.corunner0
        self.lat = p.latency_for(np.arange(m), self.shift)
        self.lat_join = np.empty((m, m))
        self.lat_leave = np.empty((m, m))
        self._refresh_pair_rows(np.arange(m))
        self.lat_move = np.empty((m, k))
        self._refresh_move_columns(np.arange(k))
        self.base = float(p.overall_from_latencies(self.lat))

    def _refresh_pair_rows(self, rows):
        p = self.problem
        m = self.m
        per_chunk = max(1, _CHUNK_ELEMENTS // max(1, m * p.samples.shape[1] * 4))
        for lo in range(0, len(rows), per_chunk):
            r = rows[lo : lo + per_chunk]
            comps = np.broadcast_to(r[:, None], (len(r), m))
            base_shift = self.shift[r][:, None, :]
            self.lat_join[r] = p.latency_for(comps, base_shift + p.contrib[None, :, :])
            self.lat_leave[r] = p.latency_for(comps, base_shift - p.contrib[None, :, :])

    def _refresh_move_columns(self, cols):
        p = self.problem
        cols = np.asarray(cols, dtype=np.intp)
        agg = p.batch[cols] + self.nodesum[cols]  # (C, 4)
        on_col = self.assignment[:, None] == cols[None, :]  # (m, C)
        corunner = agg[None, :, :] - on_col[..., None] * p.contrib[:, None, :]
        shifts = corunner - p.corunner0[:, None, :]
        comps = np.broadcast_to(np.arange(self.m)[:, None], (self.m, len(cols)))
        self.lat_move[:, cols] = p.latency_for(comps, shifts)

    def evaluate(self, rows, cols):
        """Reductions and self-reductions for moving each of ``rows`` to each of ``cols``."""
        rows = np.asarray(rows, dtype=np.intp).reshape(-1)
        cols = np.asarray(cols, dtype=np.intp).reshape(-1)
        red = np.empty((len(rows), len(cols)))
        if len(rows) == 0 or len(cols) == 0:
            return red, red.copy()
        per_chunk = max(1, _CHUNK_ELEMENTS // (len(cols) * self.m))
        for lo in range(0, len(rows), per_chunk):
            red[lo : lo + per_chunk] = self._evaluate_chunk(rows[lo : lo + per_chunk], cols)
        origin = self.assignment[rows]
        with np.errstate(invalid="ignore"):
            selfred = self.lat[rows][:, None] - self.lat_move[rows][:, cols]
        selfred[np.isnan(selfred)] = 0.0
        same = origin[:, None] == cols[None, :]
        red[same] = 0.0
        selfred[same] = 0.0
        return red, selfred

    def _evaluate_chunk(self, rows, cols):
        A = self.assignment
        origin = A[rows]
        origin_res = A[None, :] == origin[:, None]  # (R, m)
        dest_res = A[None, :] == cols[:, None]  # (C, m)
        leave = self.lat_leave[:, rows].T  # (R, m)
        join = self.lat_join[:, rows].T
        T = np.where(origin_res, leave, self.lat[None, :])[:, None, :]
        T = np.where(dest_res[None, :, :], join[:, None, :], T)
        T[np.arange(len(rows)), :, rows] = self.lat_move[rows][:, cols]
        new_overall = self.problem.overall_from_latencies(T)
        if np.isinf(self.base):
            return np.where(np.isinf(new_overall), 0.0, np.inf)
        return self.base - new_overall

    def full_matrix(self):
        red, selfred = self.evaluate(np.arange(self.m), np.arange(self.k))
        p = self.problem
        return PerformanceMatrix(
            red, selfred, self.base, p.component_ids, p.node_ids, tuple(p.node_ids[j] for j in self.assignment)
        )

    def apply(self, component, destination):
        """Commit the move of ``component`` (index) to ``destination`` (index)."""
        p = self.problem
        origin = int(self.assignment[component])
        destination = int(destination)
        if origin == destination:
            return
        self.assignment[component] = destination
        self.nodesum[origin] -= p.contrib[component]
        self.nodesum[destination] += p.contrib[component]
        touched = np.flatnonzero((self.assignment == origin) | (self.assignment == destination))
        agg = p.batch + self.nodesum
        self.shift[touched] = agg[self.assignment[touched]] - p.contrib[touched] - p.corunner0[touched]
        self.lat[touched] = p.latency_for(touched, self.shift[touched])
        self._refresh_pair_rows(touched)
        self._refresh_move_columns([origin, destination])
        self.base = float(p.overall_from_latencies(self.lat))


def build_matrix(topology, nodes, model, arrival_rate, contention_samples):
    return PlacementProblem(topology, nodes, model, arrival_rate, contention_samples).build_matrix()


def component_self_reduction(problem, component, node):
    """Drop in the mover's own predicted latency for a single hypothetical move."""
    i = problem.component_ids.index(component)
    j = problem.node_ids.index(node)
    _, selfred = problem.state().evaluate([i], [j])
    return float(selfred[0, 0])


__all__ = [
    "FIELDS",
    "MigrationRole",
    "MigrationState",
    "NodeState",
    "PerformanceMatrix",
    "PlacementProblem",
    "build_matrix",
    "component_self_reduction",
    "updated_contention",
]
