import logging
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import MS, from_scratch_entry, random_instance, worked_example
from pcsched.exceptions import InconsistentMatrix, TooLarge
from pcsched.scheduler import (
    Migration,
    PCSScheduler,
    SchedulerConfig,
    brute_force_allocate,
    schedule,
    update_matrix,
)


class StubState:
    """Scripted placement state: a reduction table per number of committed moves."""

    def __init__(self, assignment, tables):
        self.assignment = np.array(assignment, dtype=np.intp)
        self.tables = tables
        self.applied = []
        self.evaluated = []

    def _table(self):
        return self.tables[min(len(self.applied), len(self.tables) - 1)]

    def evaluate(self, rows, cols):
        rows, cols = np.asarray(rows), np.asarray(cols)
        self.evaluated.append((tuple(rows), tuple(cols)))
        red, sr = self._table()
        return red[np.ix_(rows, cols)], sr[np.ix_(rows, cols)]

    def apply(self, i, j):
        self.applied.append((int(i), int(j)))
        self.assignment[i] = j


def stub_matrix(red, sr, comps, nodes, assignment):
    return SimpleNamespace(
        entries=red,
        self_reduction=sr,
        component_ids=tuple(comps),
        node_ids=tuple(nodes),
        baseline_overall=0.1,
        assignment=tuple(nodes[a] for a in assignment),
    )


def test_tie_is_broken_by_self_reduction_then_loop_stops():
    comps, nodes = ("c1", "c2", "c3"), ("n1", "n2", "n3", "n4")
    assign = [0, 1, 2]
    red0 = np.zeros((3, 4))
    sr0 = np.zeros((3, 4))
    red0[1, 2], sr0[1, 2] = 18 * MS, 20 * MS
    red0[1, 3], sr0[1, 3] = 18 * MS, 30 * MS
    red0[0, 3], sr0[0, 3] = 4 * MS, 9 * MS
    after = np.full((3, 4), 1 * MS), np.zeros((3, 4))
    state = StubState(assign, [(red0, sr0), after])
    plan = schedule(stub_matrix(red0, sr0, comps, nodes, assign), state, SchedulerConfig(epsilon=5 * MS))
    assert state.applied == [(1, 3)]
    assert [(m.component, m.origin, m.destination) for m in plan.migrations] == [("c2", "n2", "n4")]
    assert plan.migrations[0].predicted_reduction == pytest.approx(18 * MS)
    assert plan.migrations[0].self_reduction == pytest.approx(30 * MS)
    assert plan.assignments == {"c1": "n1", "c2": "n4", "c3": "n3"}


def test_full_tie_goes_to_lowest_component_then_node():
    assign = [0, 0]
    red = np.array([[0.0, 0.01, 0.01], [0.0, 0.01, 0.01]])
    sr = np.array([[0.0, 0.02, 0.02], [0.0, 0.02, 0.02]])
    state = StubState(assign, [(red, sr), (np.zeros((2, 3)), np.zeros((2, 3)))])
    schedule(stub_matrix(red, sr, ("a", "b"), ("x", "y", "z"), assign), state, SchedulerConfig(epsilon=0.0))
    assert state.applied == [(0, 1)]


def test_nothing_above_epsilon_means_no_migration(worked_problem):
    state = worked_problem.state()
    plan = schedule(state.full_matrix(), state, SchedulerConfig(epsilon=18 * MS))
    assert plan.migrations == []
    assert plan.final_overall == pytest.approx(57 * MS)


def test_epsilon_is_a_strict_threshold(worked_problem):
    state = worked_problem.state()
    plan = schedule(state.full_matrix(), state, SchedulerConfig(epsilon=17.9 * MS))
    assert len(plan.migrations) >= 1


def test_worked_example_first_move_and_result():
    problem = worked_example()
    state = problem.state()
    plan = schedule(state.full_matrix(), state, SchedulerConfig(epsilon=0.0))
    first = plan.migrations[0]
    # n1, n3 and n4 tie at 18ms; n1 gives c2 the largest gain of its own
    assert (first.component, first.destination) == ("c2", "n1")
    assert first.predicted_reduction == pytest.approx(18 * MS)
    assert plan.final_overall == pytest.approx(problem.overall_latency(plan.assignments))
    assert plan.final_overall <= 39 * MS + 1e-12


def test_each_component_moves_at_most_once():
    problem, _ = random_instance(5, m=12, k=5, lam=10.0)
    state = problem.state()
    plan = schedule(state.full_matrix(), state, SchedulerConfig(epsilon=0.0))
    moved = [m.component for m in plan.migrations]
    assert len(moved) == len(set(moved))


def test_max_iterations_caps_the_loop():
    problem, _ = random_instance(5, m=12, k=5, lam=10.0)
    state = problem.state()
    plan = schedule(state.full_matrix(), state, SchedulerConfig(epsilon=0.0, max_iterations=1))
    assert len(plan.migrations) <= 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(2, 8), st.integers(2, 5), st.sampled_from([0.0, 1e-4, 1e-3]))
def test_each_committed_move_has_the_logged_effect(seed, m, k, eps):
    problem, _ = random_instance(seed, m, k, lam=float(seed % 30))
    state = problem.state()
    matrix = state.full_matrix()
    assignment = problem.initial_assignment.copy()
    plan = schedule(matrix, state, SchedulerConfig(epsilon=eps))
    for mig in plan.migrations:
        i = problem.component_ids.index(mig.component)
        j = problem.node_ids.index(mig.destination)
        want = from_scratch_entry(problem, assignment, i, j)
        assert mig.predicted_reduction > eps
        assert mig.predicted_reduction == pytest.approx(want, rel=1e-9, abs=1e-12) or np.isinf(want)
        assignment[i] = j
    assert problem.overall_latency(assignment) <= problem.overall_latency() + 1e-12


@pytest.mark.parametrize("seed", range(6))
def test_greedy_is_never_better_than_brute_force(seed):
    problem, _ = random_instance(seed, m=5, k=3, lam=15.0)
    best, best_latency = brute_force_allocate(problem)
    assert best_latency == pytest.approx(problem.overall_latency(best))
    state = problem.state()
    plan = schedule(state.full_matrix(), state, SchedulerConfig(epsilon=0.0))
    assert plan.final_overall >= best_latency - 1e-12
    assert plan.final_overall <= problem.overall_latency()


def test_brute_force_on_worked_example():
    _, latency = brute_force_allocate(worked_example())
    assert latency <= 39 * MS


def test_brute_force_refuses_large_searches():
    problem, _ = random_instance(0, m=8, k=6)
    with pytest.raises(TooLarge):
        brute_force_allocate(problem, limit=1000)


def test_inconsistent_matrix_is_rejected(worked_problem):
    state = worked_problem.state()
    matrix = state.full_matrix()
    bad = SimpleNamespace(**{**matrix.__dict__, "self_reduction": np.zeros((2, 2))})
    with pytest.raises(InconsistentMatrix):
        schedule(bad, state)
    bad = SimpleNamespace(**{**matrix.__dict__, "node_ids": ("n1",)})
    with pytest.raises(InconsistentMatrix):
        schedule(bad, state)


def test_stale_cell_is_reevaluated_before_commit():
    red = np.array([[0.0, 0.02]])
    sr = np.array([[0.0, 0.02]])
    fresh = (np.array([[0.0, 0.001]]), np.array([[0.0, 0.001]]))
    state = StubState([0], [fresh])
    plan = schedule(stub_matrix(red, sr, ("a",), ("x", "y"), [0]), state, SchedulerConfig(epsilon=0.005))
    assert plan.migrations == [] and plan.reevaluations == 1
    state = StubState([0], [fresh])
    cfg = SchedulerConfig(epsilon=0.005, verify_selected=False)
    plan = schedule(stub_matrix(red, sr, ("a",), ("x", "y"), [0]), state, cfg)
    assert len(plan.migrations) == 1


def test_update_matrix_refreshes_touched_rows_and_columns():
    problem, _ = random_instance(3, m=8, k=4, lam=5.0)
    state = problem.state()
    entries = np.full((8, 4), -99.0)
    selfred = np.full((8, 4), -99.0)
    origin = int(state.assignment[2])
    dest = (origin + 1) % 4
    state.apply(2, dest)
    cand = np.ones(8, dtype=bool)
    cand[2] = False
    update_matrix(entries, selfred, state, cand, origin, dest)
    full, _ = state.evaluate(np.arange(8), np.arange(4))
    for i in range(8):
        touched_row = cand[i] and state.assignment[i] in (origin, dest)
        for j in range(4):
            if cand[i] and (touched_row or j in (origin, dest)):
                assert entries[i, j] == pytest.approx(full[i, j])
            else:
                assert entries[i, j] == -99.0


def test_log_line_format():
    line = Migration("search-3", "n2", "n5", 0.0123456789, 0.02).log_line(7)
    assert line == "7\tsearch-3\tn2\tn5\t12.345679"


def test_migrations_are_logged(worked_problem, caplog):
    state = worked_problem.state()
    with caplog.at_level(logging.INFO, logger="pcsched.scheduler"):
        plan = schedule(state.full_matrix(), state, SchedulerConfig(epsilon=0.0), interval=3)
    assert caplog.messages[: len(plan.migrations)] == plan.log_lines(3)


def test_config_validation():
    assert SchedulerConfig().epsilon == pytest.approx(5 * MS)
    with pytest.raises(ValueError):
        SchedulerConfig(epsilon=-1)
    with pytest.raises(ValueError):
        SchedulerConfig(max_iterations=-1)


def test_estimator_api(worked_problem):
    est = PCSScheduler(epsilon=0.0)
    with pytest.raises(NotFittedError):
        est.predict(worked_problem)
    assert est.fit(worked_problem) is est
    assert est.matrix_.entry("c2", "n4") == pytest.approx(18 * MS)
    nodes = est.predict(worked_problem)
    assert nodes == [est.assignments_[c] for c in ("c1", "c2", "c3", "c4")]
    topo = est.transform(worked_problem)
    assert dict(topo.placement) == est.assignments_
    assert clone(est).get_params() == {"epsilon": 0.0, "max_iterations": None, "verify_selected": True}
