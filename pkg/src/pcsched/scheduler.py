"""Greedy component-level scheduling over the performance matrix."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import InconsistentMatrix, TooLarge

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 10**6


@dataclass(frozen=True)
class SchedulerConfig:
    """Knobs of the greedy loop.

    ``epsilon`` is the minimum predicted reduction (seconds) a migration must
    bring. ``verify_selected`` re-evaluates the chosen cell against the
    current placement before committing it, because cells outside the
    incrementally refreshed rows/columns can be stale.
    """

    epsilon: float = 0.005
    max_iterations: int | None = None
    verify_selected: bool = True
    tie_tolerance: float = 1e-12

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


@dataclass(frozen=True)
class Migration:
    component: str
    origin: str
    destination: str
    predicted_reduction: float
    self_reduction: float

    def log_line(self, interval=0):
        return (
            f"{interval}\t{self.component}\t{self.origin}\t{self.destination}\t"
            f"{self.predicted_reduction * 1e3:.6f}"
        )


@dataclass
class AllocationPlan:
    assignments: dict
    migrations: list = field(default_factory=list)
    baseline_overall: float = float("nan")
    final_overall: float = float("nan")
    reevaluations: int = 0

    def log_lines(self, interval=0):
        return [mig.log_line(interval) for mig in self.migrations]


def update_matrix(entries, self_reduction, state, candidates, origin, destination):
    """Refresh the matrix after a committed move (in place).

    Columns ``origin`` and ``destination`` are recomputed for every candidate
    row, then every column of the candidate rows hosted on either node. Rows
    of components no longer in ``candidates`` are left as they are.
    """
    cand = np.flatnonzero(candidates)
    if len(cand) == 0:
        return
    cols = np.array([origin, destination], dtype=np.intp)
    red, sr = state.evaluate(cand, cols)
    entries[np.ix_(cand, cols)] = red
    self_reduction[np.ix_(cand, cols)] = sr
    hosted = state.assignment[cand]
    rows = cand[(hosted == origin) | (hosted == destination)]
    if len(rows):
        red, sr = state.evaluate(rows, np.arange(entries.shape[1]))
        entries[rows] = red
        self_reduction[rows] = sr


def _close(a, b, tol):
    return a == b or abs(a - b) <= tol


def _select(entries, self_reduction, candidates, tol):
    masked = np.where(candidates[:, None], entries, -np.inf)
    best = masked.max()
    if not np.isfinite(best) and best < 0:
        return None, best
    ties = masked >= best - tol if np.isfinite(best) else masked == best
    keyed = np.where(ties, self_reduction, -np.inf)
    flat = int(np.argmax(keyed))  # first maximum: lowest component, then lowest node
    if not ties.flat[flat]:
        flat = int(np.argmax(ties))
    return divmod(flat, entries.shape[1]), best


def schedule(matrix, state, config=None, interval=0):
    """Run the greedy loop on ``matrix`` and commit moves into ``state``.

    ``state`` must expose ``assignment``, ``evaluate(rows, cols)`` and
    ``apply(component, node)``; :class:`~pcsched.matrix.MigrationState` is
    the production implementation.
    """
    config = config or SchedulerConfig()
    entries = np.array(matrix.entries, dtype=float, copy=True)
    self_reduction = np.array(matrix.self_reduction, dtype=float, copy=True)
    m, k = entries.shape
    if self_reduction.shape != (m, k):
        raise InconsistentMatrix(f"self-reduction shape {self_reduction.shape} != {(m, k)}")
    if len(matrix.component_ids) != m or len(matrix.node_ids) != k or len(state.assignment) != m:
        raise InconsistentMatrix(
            f"matrix is {m}x{k} but describes {len(matrix.component_ids)} components, "
            f"{len(matrix.node_ids)} nodes and an assignment of {len(state.assignment)}"
        )
    limit = m if config.max_iterations is None else min(m, config.max_iterations)
    candidates = np.ones(m, dtype=bool)
    migrations = []
    reevaluations = 0
    baseline = float(matrix.baseline_overall)

    while candidates.any() and len(migrations) < limit:
        picked, best = _select(entries, self_reduction, candidates, config.tie_tolerance)
        if picked is None or not best > config.epsilon:
            break
        i, j = picked
        if config.verify_selected:
            red, sr = state.evaluate([i], [j])
            fresh, fresh_self = float(red[0, 0]), float(sr[0, 0])
            if not (
                _close(fresh, entries[i, j], config.tie_tolerance)
                and _close(fresh_self, self_reduction[i, j], config.tie_tolerance)
            ):
                entries[i, j] = fresh
                self_reduction[i, j] = fresh_self
                reevaluations += 1
                continue
        origin = int(state.assignment[i])
        reduction = float(entries[i, j])
        state.apply(i, j)
        candidates[i] = False
        mig = Migration(
            matrix.component_ids[i], matrix.node_ids[origin], matrix.node_ids[j], reduction, float(self_reduction[i, j])
        )
        migrations.append(mig)
        logger.info(mig.log_line(interval))
        update_matrix(entries, self_reduction, state, candidates, origin, j)

    final = getattr(state, "base", float("nan"))
    return AllocationPlan(
        assignments={c: matrix.node_ids[int(a)] for c, a in zip(matrix.component_ids, state.assignment)},
        migrations=migrations,
        baseline_overall=baseline,
        final_overall=float(final),
        reevaluations=reevaluations,
    )


def brute_force_allocate(problem, limit=BRUTE_FORCE_LIMIT):
    """Exhaustively search every placement; returns (assignment dict, latency)."""
    m, k = len(problem.component_ids), len(problem.node_ids)
    if k**m > limit:
        raise TooLarge(f"{k}^{m} placements exceed the limit of {limit}")
    placements = np.array(list(itertools.product(range(k), repeat=m)), dtype=np.intp).reshape(-1, m)
    overall = problem.overall_latencies(placements)
    best = int(np.argmin(overall))
    return problem.assignment_to_dict(placements[best]), float(overall[best])


class PCSScheduler(TransformerMixin, BaseEstimator):
    """Estimator wrapper around build-matrix + greedy scheduling.

    ``fit`` takes a :class:`~pcsched.matrix.PlacementProblem` and computes
    the allocation plan; ``transform`` returns the topology with the planned
    placement applied.
    """

    def __init__(self, epsilon=0.005, max_iterations=None, verify_selected=True):
        self.epsilon = epsilon
        self.max_iterations = max_iterations
        self.verify_selected = verify_selected

    def fit(self, problem, y=None):
        config = SchedulerConfig(self.epsilon, self.max_iterations, self.verify_selected)
        state = problem.state()
        self.matrix_ = state.full_matrix()
        self.plan_ = schedule(self.matrix_, state, config)
        self.assignments_ = self.plan_.assignments
        return self

    def transform(self, problem):
        check_is_fitted(self, "plan_")
        return problem.topology.with_placement(self.assignments_)

    def predict(self, problem):
        """Node id per component, in topology order."""
        check_is_fitted(self, "plan_")
        return [self.assignments_[c] for c in problem.component_ids]
