"""Random placement problems for oracle tests and timing runs."""

from __future__ import annotations

import numpy as np

from ..contention import ContentionVector
from ..matrix import NodeState, PlacementProblem
from ..model import CombinedModel, ResourceRegression
from ..queueing import ServiceTopology

_REFERENCE_MODEL = (
    ("core", 0.004, 0.010, 0.8),
    ("cache", 0.004, 0.0005, 0.5),
    ("diskBW", 0.004, 5e-11, 0.3),
    ("networkBW", 0.004, 2e-11, 0.2),
)


def reference_model():
    """A fixed combined model with plausible millisecond-scale coefficients."""
    return CombinedModel.from_regressions(
        [ResourceRegression.from_coefficients(r, a, b, w) for r, a, b, w in _REFERENCE_MODEL]
    )


def random_problem(rng, m, k, *, stages=3, samples=4, arrival_rate=None, model=None, hot_fraction=0.3):
    """A random ``m``-component, ``k``-node problem.

    A ``hot_fraction`` of the nodes carry heavy batch load, so that a
    scheduler has real stragglers to move.
    """
    rng = np.random.default_rng(rng)
    comps = [f"c{i}" for i in range(m)]
    n_stages = max(1, min(stages, m))
    cuts = np.sort(rng.choice(np.arange(1, m), size=n_stages - 1, replace=False)) if n_stages > 1 else []
    groups = [tuple(g) for g in np.split(np.array(comps, dtype=object), cuts)]
    node_ids = [f"n{j}" for j in range(k)]
    place = {c: node_ids[int(rng.integers(k))] for c in comps}
    topo = ServiceTopology(groups, place)

    contrib = {c: ContentionVector(*rng.uniform(0, [0.05, 1.0, 1e7, 1e7])) for c in comps}
    hot = rng.random(k) < hot_fraction
    nodes = []
    for j, node in enumerate(node_ids):
        hi = [0.7, 8.0, 1.5e8, 1.5e8] if hot[j] else [0.15, 2.0, 2e7, 2e7]
        batch = ContentionVector(*rng.uniform(0, hi))
        nodes.append(NodeState(node, batch, {c: contrib[c] for c in comps if place[c] == node}))

    by_id = {n.node_id: n for n in nodes}
    sample_map = {}
    for c in comps:
        co = by_id[place[c]].aggregate_contention.as_array() - contrib[c].as_array()
        sample_map[c] = [
            ContentionVector.from_array(np.maximum(co * rng.uniform(0.8, 1.2, 4), 0.0)) for _ in range(samples)
        ]
    lam = float(rng.uniform(5.0, 40.0)) if arrival_rate is None else arrival_rate
    return PlacementProblem(topo, nodes, model or reference_model(), lam, sample_map)
