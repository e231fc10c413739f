"""Offline profiling runs that produce training data for the service-time model."""

from __future__ import annotations

import numpy as np

from ..contention import ContentionVector, clip_contention
from ..exceptions import InsufficientTraining
from ..model import DEFAULT_FLOOR, CombinedModel
from .workload import stream_rng


def noisy_reading(u, noise, rng):
    """Multiplicative zero-mean Gaussian noise on each field, clamped at 0."""
    if noise == 0:
        return np.array(u, dtype=float)
    return clip_contention(np.array([x * (1.0 + noise * rng.gauss(0.0, 1.0)) for x in u]))


def profile_samples(
    service_class,
    ground_truth,
    footprints,
    background=None,
    *,
    seed,
    levels=40,
    seconds_per_level=10,
    draws_per_second=20,
    max_colocated=2,
    monitor_noise=0.0,
):
    """Co-locate one component with random mixes of batch footprints.

    Returns ``(X, y)``: one row per profiled second, holding the monitored
    contention and the mean of the service times observed in that second.
    """
    footprints = [f.as_array() if isinstance(f, ContentionVector) else np.asarray(f, float) for f in footprints]
    if not footprints:
        raise InsufficientTraining("profiling needs at least one batch footprint")
    bg = np.zeros(4) if background is None else np.asarray(
        background.as_array() if isinstance(background, ContentionVector) else background, float
    )
    rng = stream_rng(seed, f"profile:{service_class.name}")
    draw = ground_truth.sampler(rng)
    X, y = [], []
    for _ in range(levels):
        u_true = bg.copy()
        for _ in range(rng.randint(0, max_colocated)):
            u_true = u_true + footprints[rng.randrange(len(footprints))]
        u_true = clip_contention(u_true)
        mean = ground_truth.mean(service_class, u_true)
        for _ in range(seconds_per_level):
            X.append(noisy_reading(u_true, monitor_noise, rng))
            y.append(sum(draw(mean) for _ in range(draws_per_second)) / draws_per_second)
    return np.array(X), np.array(y)


def train_class_model(service_class, ground_truth, footprints, background=None, floor=DEFAULT_FLOOR, **kwargs):
    X, y = profile_samples(service_class, ground_truth, footprints, background, **kwargs)
    if len(y) < 3:
        raise InsufficientTraining(f"{service_class.name}: only {len(y)} profiling samples")
    return CombinedModel(floor=floor).fit(X, y)
