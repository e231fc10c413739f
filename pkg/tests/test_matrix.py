import csv
import io
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import MS, core, core_only_model, from_scratch_entry, random_instance
from pcsched.contention import ContentionVector
from pcsched.exceptions import EmptySamples, MissingLoad
from pcsched.matrix import (
    MigrationRole,
    NodeState,
    PlacementProblem,
    build_matrix,
    component_self_reduction,
    updated_contention,
)
from pcsched.queueing import ServiceTopology


# -- update rules -----------------------------------------------------------------


def test_update_rules_for_each_role():
    u, mover, dest = np.array([0.5, 2, 3, 4]), np.array([0.1, 1, 1, 1]), np.array([0.9, 9, 9, 9])
    assert updated_contention(MigrationRole.MIGRATING, u, mover, dest) is dest
    assert updated_contention("on_origin", u, mover, dest) == pytest.approx([0.4, 1, 2, 3])
    assert updated_contention("on_destination", u, mover, dest) == pytest.approx([0.6, 3, 4, 5])
    assert updated_contention("other", u, mover, dest) is u


def test_update_rules_work_on_contention_vectors():
    u = ContentionVector(0.05, 1.0, 0.0, 0.0)
    ci = ContentionVector(0.1, 2.0, 0.0, 0.0)
    # subtraction clamps at zero
    assert updated_contention("on_origin", u, ci, None).as_array() == pytest.approx([0, 0, 0, 0])
    assert updated_contention("on_destination", u, ci, None).core_usage == pytest.approx(0.15)


def test_unknown_role_is_rejected():
    with pytest.raises(ValueError):
        updated_contention("sideways", 0, 0, 0)


# -- worked example ------------------------------------------------------------------


def test_worked_example_baseline_and_best_move(worked_problem):
    assert worked_problem.overall_latency() == pytest.approx(57 * MS)
    matrix = worked_problem.build_matrix()
    assert matrix.baseline_overall == pytest.approx(57 * MS)
    assert matrix.entry("c2", "n4") == pytest.approx(18 * MS)
    assert component_self_reduction(worked_problem, "c2", "n4") == pytest.approx(27 * MS)
    moved = {"c1": "n1", "c2": "n4", "c3": "n3", "c4": "n4"}
    assert worked_problem.overall_latency(moved) == pytest.approx(39 * MS)


def test_worked_example_three_way_tie(worked_problem):
    # on n1, c2 runs at 5ms but pushes c1 to 10ms: 10 + 19 + 10 = 39ms as well
    matrix = worked_problem.build_matrix()
    assert matrix.entry("c2", "n1") == pytest.approx(18 * MS)
    assert matrix.entries.max() == pytest.approx(18 * MS)
    assert matrix.entry("c2", "n3") == pytest.approx(18 * MS)
    # c2 starts at 42ms; the tie is broken by what the mover itself gains
    assert component_self_reduction(worked_problem, "c2", "n1") == pytest.approx(37 * MS)
    assert component_self_reduction(worked_problem, "c2", "n3") == pytest.approx(23 * MS)


def test_entries_on_current_node_are_zero(worked_problem):
    matrix = worked_problem.build_matrix()
    for i, node in enumerate(matrix.assignment):
        j = matrix.node_ids.index(node)
        assert matrix.entries[i, j] == 0.0
        assert matrix.self_reduction[i, j] == 0.0


def test_matrix_csv_dump(worked_problem):
    text = worked_problem.build_matrix().to_csv()
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["component_id", "node_id", "reduction_ms", "self_reduction_ms"]
    assert len(rows) == 1 + 4 * 4
    row = next(r for r in rows if r[:2] == ["c2", "n4"])
    assert float(row[2]) == pytest.approx(18.0)
    assert float(row[3]) == pytest.approx(27.0)
    buf = io.StringIO()
    assert worked_problem.build_matrix().to_csv(buf) is None
    assert buf.getvalue() == text


# -- effect of a move on others ----------------------------------------------------------


def two_node_problem(batch_a, batch_b, lam=0.0):
    """c1 on a busy node with c2; c3 alone on the other node."""
    topo = ServiceTopology([("c1", "c2", "c3")], {"c1": "a", "c2": "a", "c3": "b"})
    contrib = {"c1": core(0.1), "c2": core(0.1), "c3": core(0.1)}
    nodes = [
        NodeState("a", core(batch_a), {"c1": contrib["c1"], "c2": contrib["c2"]}),
        NodeState("b", core(batch_b), {"c3": contrib["c3"]}),
    ]
    samples = {"c1": [core(batch_a + 0.1)], "c2": [core(batch_a + 0.1)], "c3": [core(batch_b)]}
    return PlacementProblem(topo, nodes, core_only_model(5 * MS, 50 * MS), lam, samples)


def test_leaving_a_node_relieves_the_residents_left_behind():
    p = two_node_problem(0.6, 0.0)
    before = p.component_latencies()
    after = p.component_latencies({"c1": "b", "c2": "a", "c3": "b"})
    assert after[1] < before[1]  # c2 no longer shares with c1
    assert after[2] > before[2]  # c3 gains a co-runner
    assert after[0] < before[0]  # the mover escapes the batch load


def test_moving_onto_a_hot_node_is_a_negative_entry():
    p = two_node_problem(0.6, 0.0)
    matrix = p.build_matrix()
    assert matrix.entry("c3", "a") < 0
    assert matrix.entry("c1", "b") == pytest.approx(matrix.entry("c2", "b"))


def test_symmetric_nodes_give_symmetric_entries():
    p = two_node_problem(0.0, 0.0)
    m = p.build_matrix()
    # without batch load, swapping which of c1/c2 moves changes nothing
    assert m.entry("c1", "b") == pytest.approx(m.entry("c2", "b"))
    # b gains exactly what a loses
    assert m.entry("c1", "b") == pytest.approx(0.0, abs=1e-15)


# -- oracle agreement ----------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(8))
def test_matrix_matches_independent_oracle(seed):
    problem, oracle = random_instance(seed, m=5, k=3)
    matrix = problem.build_matrix()
    assign = problem.initial_assignment
    for i in range(5):
        for j in range(3):
            want = oracle.entry(assign, i, j)
            got = matrix.entries[i, j]
            if np.isinf(want):
                assert np.isinf(got)
            else:
                assert got == pytest.approx(want, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_overall_latency_matches_oracle_for_every_placement(seed):
    problem, oracle = random_instance(seed, m=4, k=3, lam=20.0)
    placements = np.array(list(itertools.product(range(3), repeat=4)))
    batch = problem.overall_latencies(placements)
    for assign, got in zip(placements, batch):
        want = oracle.overall(oracle.placement_of(assign))
        assert got == pytest.approx(want, rel=1e-9) or (np.isinf(got) and np.isinf(want))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 7), st.integers(2, 5), st.data())
def test_incremental_state_matches_recompute(seed, m, k, data):
    problem, _ = random_instance(seed, m, k, lam=float(seed % 40))
    state = problem.state()
    for _ in range(data.draw(st.integers(1, 4))):
        i = data.draw(st.integers(0, m - 1))
        j = data.draw(st.integers(0, k - 1))
        state.apply(i, j)
        red, _ = state.evaluate(np.arange(m), np.arange(k))
        for r in range(m):
            for c in range(k):
                want = from_scratch_entry(problem, state.assignment, r, c)
                if state.assignment[r] == c:
                    want = 0.0
                got = red[r, c]
                assert (np.isinf(want) and np.isinf(got)) or got == pytest.approx(want, rel=1e-9, abs=1e-12)
        assert state.base == pytest.approx(problem.overall_latency(state.assignment), rel=1e-12) or (
            np.isinf(state.base) and np.isinf(problem.overall_latency(state.assignment))
        )


def test_partial_evaluation_agrees_with_full_matrix():
    problem, _ = random_instance(11, m=9, k=4, lam=15.0)
    state = problem.state()
    full, fself = state.evaluate(np.arange(9), np.arange(4))
    part, pself = state.evaluate([7, 2], [3, 0])
    assert part == pytest.approx(full[np.ix_([7, 2], [3, 0])])
    assert pself == pytest.approx(fself[np.ix_([7, 2], [3, 0])])
    empty, _ = state.evaluate([], [0])
    assert empty.shape == (0, 1)


def test_saturated_baseline_entries_are_inf_or_zero():
    p = two_node_problem(0.6, 0.0, lam=60.0)  # c1, c2 at ~40ms service -> rho > 1
    assert np.isinf(p.overall_latency())
    m = p.build_matrix()
    assert set(np.unique(m.entries)) <= {0.0, np.inf}


def test_per_component_models():
    p = two_node_problem(0.6, 0.0)
    models = {c: core_only_model(5 * MS, 50 * MS) for c in ("c1", "c2", "c3")}
    q = PlacementProblem(p.topology, p.nodes, models, 0.0, {c: [core(0.7)] if c != "c3" else [core(0.0)] for c in models})
    assert q.build_matrix().entries == pytest.approx(p.build_matrix().entries)


def test_build_matrix_function(worked_problem):
    p = worked_problem
    samples = {c: [core(x)] for c, x in zip(("c1", "c2", "c3", "c4"), (0.0, 0.74, 0.28, 0.1))}
    m = build_matrix(p.topology, p.nodes, core_only_model(5 * MS, 50 * MS), 0.0, samples)
    assert m.entry("c2", "n4") == pytest.approx(18 * MS)


def test_missing_and_empty_samples(worked_problem):
    p = worked_problem
    with pytest.raises(MissingLoad):
        PlacementProblem(p.topology, p.nodes, core_only_model(0.005, 0.05), 0.0, {"c1": [core(0)]})
    samples = {c: [core(0)] for c in ("c1", "c2", "c3")} | {"c4": []}
    with pytest.raises(EmptySamples):
        PlacementProblem(p.topology, p.nodes, core_only_model(0.005, 0.05), 0.0, samples)


def test_inconsistent_node_listing_is_rejected(worked_problem):
    p = worked_problem
    nodes = list(p.nodes)
    nodes[0] = NodeState("n1", core(0), {"c1": core(0), "c4": core(0.1)})
    with pytest.raises(ValueError, match="placed elsewhere"):
        PlacementProblem(p.topology, nodes, core_only_model(0.005, 0.05), 0.0, {c: [core(0)] for c in p.component_ids})
