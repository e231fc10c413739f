"""Hidden service-time generator used as the simulator's ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..contention import FIELDS, ContentionVector, clip_contention
from ..exceptions import BadConfig

DISTRIBUTIONS = ("lognormal", "exponential", "deterministic")


@dataclass(frozen=True)
class ServiceClass:
    """A kind of component (e.g. segmenting, searching, aggregating).

    Mean service time under co-runner contention ``U`` is
    ``base_s * (1 + s + nonlinearity * s**2)`` with ``s = sensitivity . U``.
    ``footprint`` is the contention the component itself puts on its node.
    """

    name: str
    base_s: float
    sensitivity: tuple = (0.0, 0.0, 0.0, 0.0)  # per contention field, in FIELDS order
    footprint: ContentionVector = field(default_factory=ContentionVector)

    def __post_init__(self):
        if not self.base_s > 0:
            raise BadConfig(f"service class {self.name!r}: base_s must be > 0")
        sens = self.sensitivity
        if isinstance(sens, ContentionVector):
            sens = sens.as_array()
        elif isinstance(sens, dict):
            sens = [sens.get(f, 0.0) for f in FIELDS]
        sens = tuple(float(x) for x in sens)
        if len(sens) != 4 or any(not (x >= 0 and math.isfinite(x)) for x in sens):
            raise BadConfig(f"service class {self.name!r}: sensitivity needs 4 finite values >= 0")
        object.__setattr__(self, "sensitivity", sens)

    @property
    def sensitivity_array(self):
        return np.array(self.sensitivity)


@dataclass(frozen=True)
class GroundTruth:
    distribution: str = "lognormal"
    cv: float = 0.3
    nonlinearity: float = 0.0

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise BadConfig(f"distribution must be one of {DISTRIBUTIONS}, got {self.distribution!r}")
        if not self.cv >= 0:
            raise BadConfig("cv must be >= 0")

    def mean(self, service_class, u):
        """Mean service time (s) for one contention reading (vector or array)."""
        arr = u.as_array() if isinstance(u, ContentionVector) else clip_contention(np.asarray(u, float))
        s = float(arr @ service_class.sensitivity_array)
        return service_class.base_s * (1.0 + s + self.nonlinearity * s * s)

    def sampler(self, rng):
        """Return ``draw(mean) -> seconds`` bound to ``rng`` (a ``random.Random``)."""
        if self.distribution == "deterministic" or (self.distribution == "lognormal" and self.cv == 0):
            return lambda mean: mean
        if self.distribution == "exponential":
            expo = rng.expovariate
            return lambda mean: expo(1.0 / mean)
        sigma2 = math.log1p(self.cv * self.cv)
        sigma = math.sqrt(sigma2)
        shift = -0.5 * sigma2
        gauss = rng.gauss
        exp = math.exp
        return lambda mean: mean * exp(shift + sigma * gauss(0.0, 1.0))

    @property
    def squared_cv(self):
        if self.distribution == "exponential":
            return 1.0
        if self.distribution == "deterministic":
            return 0.0
        return self.cv * self.cv
