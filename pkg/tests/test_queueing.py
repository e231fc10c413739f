import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcsched.exceptions import EmptyStage, EmptyTopology, InvalidLoad, MissingLoad
from pcsched.queueing import (
    SATURATED,
    ComponentLoad,
    ServiceTopology,
    is_saturated,
    mg1_latency,
    mg1_latency_array,
    overall_latency,
    predict_overall,
    stage_latency,
)

MS = 1e-3


def test_no_arrivals_means_latency_is_service_time():
    assert mg1_latency(ComponentLoad(0.0, 10 * MS, 4e-6)) == pytest.approx(10 * MS)


def test_exponential_service_matches_mm1_closed_form():
    # variance = mean^2 -> 1 / (mu - lambda)
    for lam in (10.0, 50.0, 90.0):
        got = mg1_latency(ComponentLoad(lam, 10 * MS, (10 * MS) ** 2))
        assert got == pytest.approx(1.0 / (100.0 - lam), rel=1e-12)


def test_deterministic_service_waits_half_as_long_as_exponential():
    mean, lam = 10 * MS, 60.0
    md1 = mg1_latency(ComponentLoad(lam, mean, 0.0)) - mean
    mm1 = mg1_latency(ComponentLoad(lam, mean, mean * mean)) - mean
    assert md1 == pytest.approx(mm1 / 2)


def test_worked_number():
    # lambda=50, mean=10ms, var=1e-4: rho=.5, wait = 50*(1e-4+1e-4)/(2*.5) = 10ms
    assert mg1_latency(ComponentLoad(50.0, 10 * MS, 1e-4)) == pytest.approx(20 * MS)


@pytest.mark.parametrize("lam", [100.0, 150.0])
def test_full_or_overloaded_queue_is_saturated(lam):
    assert is_saturated(mg1_latency(ComponentLoad(lam, 10 * MS, 0.0)))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"arrival_rate": -1.0, "mean_service_time": 0.01},
        {"arrival_rate": 1.0, "mean_service_time": 0.0},
        {"arrival_rate": 1.0, "mean_service_time": 0.01, "service_time_variance": -1.0},
        {"arrival_rate": math.nan, "mean_service_time": 0.01},
        {"arrival_rate": 1.0, "mean_service_time": math.inf},
    ],
)
def test_invalid_loads(kwargs):
    with pytest.raises(InvalidLoad):
        ComponentLoad(**kwargs)


loads = st.builds(
    ComponentLoad,
    st.floats(0, 200),
    st.floats(1e-4, 0.05),
    st.floats(0, 1e-3),
)


@settings(max_examples=200, deadline=None)
@given(loads, st.floats(0, 50), st.floats(0, 0.01), st.floats(0, 1e-3))
def test_latency_is_monotone_in_each_input(load, d_lam, d_mean, d_var):
    base = mg1_latency(load)
    assert base >= load.mean_service_time
    for bumped in (
        ComponentLoad(load.arrival_rate + d_lam, load.mean_service_time, load.service_time_variance),
        ComponentLoad(load.arrival_rate, load.mean_service_time + d_mean, load.service_time_variance),
        ComponentLoad(load.arrival_rate, load.mean_service_time, load.service_time_variance + d_var),
    ):
        assert mg1_latency(bumped) >= base * (1 - 1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(loads, min_size=1, max_size=20))
def test_vectorised_latency_matches_scalar(batch):
    lam = batch[0].arrival_rate
    means = np.array([b.mean_service_time for b in batch])
    vars_ = np.array([b.service_time_variance for b in batch])
    got = mg1_latency_array(lam, means, vars_)
    want = [mg1_latency(ComponentLoad(lam, m, v)) for m, v in zip(means, vars_)]
    for g, w in zip(got, want):
        assert g == pytest.approx(w, rel=1e-12) or (math.isinf(g) and math.isinf(w))


def test_stage_takes_slowest_and_service_sums_stages():
    assert stage_latency([3 * MS, 9 * MS, 5 * MS]) == 9 * MS
    assert overall_latency([1 * MS, 2 * MS, 3 * MS]) == pytest.approx(6 * MS)


def test_saturation_absorbs_through_stage_and_service():
    assert stage_latency([1 * MS, SATURATED]) == SATURATED
    assert overall_latency([1 * MS, SATURATED, 2 * MS]) == SATURATED
    assert SATURATED > 1e300


def test_empty_stage_and_service_are_errors():
    with pytest.raises(EmptyStage):
        stage_latency([])
    with pytest.raises(EmptyTopology):
        overall_latency([])


def test_topology_validation():
    with pytest.raises(EmptyTopology):
        ServiceTopology([], {})
    with pytest.raises(EmptyStage):
        ServiceTopology([("a",), ()], {"a": "n"})
    with pytest.raises(ValueError, match="more than one stage"):
        ServiceTopology([("a",), ("a",)], {"a": "n"})
    with pytest.raises(ValueError, match="without a node"):
        ServiceTopology([("a", "b")], {"a": "n"})
    with pytest.raises(ValueError, match="unknown"):
        ServiceTopology([("a",)], {"a": "n", "z": "n"})


def test_topology_helpers():
    topo = ServiceTopology([("a",), ("b", "c")], {"a": "n1", "b": "n1", "c": "n2"})
    assert topo.components == ["a", "b", "c"]
    assert topo.stage_index("c") == 1
    assert topo.residents("n1") == ["a", "b"]
    moved = topo.with_placement({"b": "n2"})
    assert moved.placement["b"] == "n2" and topo.placement["b"] == "n1"


def test_worked_example_latency_before_and_after_move():
    # no queueing; service = 5ms + 50ms * co-runner core usage
    topo = ServiceTopology([("c1",), ("c2", "c3"), ("c4",)], {c: c.replace("c", "n") for c in ("c1", "c2", "c3", "c4")})

    def loads(c2_core, c4_core):
        core = {"c1": 0.0, "c2": c2_core, "c3": 0.28, "c4": c4_core}
        return {c: ComponentLoad(0.0, 5 * MS + 50 * MS * u) for c, u in core.items()}

    assert predict_overall(topo, loads(0.74, 0.1)) == pytest.approx(57 * MS)
    # c2 joins n4: sees 0.1 batch + 0.1 from c4; c4 now also sees c2's 0.1
    assert predict_overall(topo, loads(0.2, 0.2)) == pytest.approx(39 * MS)


def test_predict_overall_reports_missing_component():
    topo = ServiceTopology([("a", "b")], {"a": "n", "b": "n"})
    with pytest.raises(MissingLoad) as err:
        predict_overall(topo, {"a": ComponentLoad(1.0, 0.01)})
    assert "b" in str(err.value)
