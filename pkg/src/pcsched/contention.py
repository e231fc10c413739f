"""Shared-resource contention readings and training samples."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .exceptions import PCSError

RESOURCES = ("core", "cache", "diskBW", "networkBW")
FIELDS = ("core_usage", "cache_mpki", "disk_bw", "network_bw")
CSV_HEADER = FIELDS + ("service_time_s",)

# Per-field clamp applied whenever a raw array is turned into a reading.
UPPER_BOUNDS = np.array([1.0, np.inf, np.inf, np.inf])


def clip_contention(u):
    """Clamp a raw ``(..., 4)`` array into the valid contention range."""
    return np.clip(u, 0.0, UPPER_BOUNDS)


@dataclass(frozen=True)
class ContentionVector:
    """Contention seen by one program on one node.

    ``core_usage`` is a time fraction and is clamped to 1; the other three
    fields are unbounded rates (MPKI, bytes/s, bytes/s).
    """

    core_usage: float = 0.0
    cache_mpki: float = 0.0
    disk_bw: float = 0.0
    network_bw: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            value = float(getattr(self, f.name))
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{f.name} must be finite and >= 0, got {value!r}")
            object.__setattr__(self, f.name, value)
        if self.core_usage > 1.0:
            object.__setattr__(self, "core_usage", 1.0)

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def from_array(cls, values):
        arr = clip_contention(np.asarray(values, dtype=float).reshape(4))
        return cls(*arr.tolist())

    @classmethod
    def from_mapping(cls, mapping):
        unknown = set(mapping) - set(FIELDS)
        if unknown:
            raise ValueError(f"unknown contention fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in mapping.items()})

    def as_array(self):
        return np.array([self.core_usage, self.cache_mpki, self.disk_bw, self.network_bw])

    def as_dict(self):
        return {name: getattr(self, name) for name in FIELDS}

    def __add__(self, other):
        if not isinstance(other, ContentionVector):
            return NotImplemented
        return ContentionVector.from_array(self.as_array() + other.as_array())

    def __sub__(self, other):
        if not isinstance(other, ContentionVector):
            return NotImplemented
        return ContentionVector.from_array(self.as_array() - other.as_array())

    def scaled(self, factor):
        return ContentionVector.from_array(self.as_array() * float(factor))


@dataclass(frozen=True)
class TrainingSample:
    contention: ContentionVector
    service_time: float

    def __post_init__(self):
        st = float(self.service_time)
        if not math.isfinite(st) or st <= 0:
            raise ValueError(f"service_time must be finite and > 0, got {st!r}")
        object.__setattr__(self, "service_time", st)


def samples_to_arrays(samples):
    """Split TrainingSamples into an ``(n, 4)`` contention matrix and targets."""
    X = np.array([s.contention.as_array() for s in samples], dtype=float).reshape(-1, 4)
    y = np.array([s.service_time for s in samples], dtype=float)
    return X, y


def read_training_csv(path):
    """Load training samples from a CSV with the fixed five-column header."""
    path = Path(path)
    samples = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise PCSError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise PCSError(f"{path}:{lineno}: {exc}") from None
            if len(values) != 5 or not all(math.isfinite(v) for v in values):
                raise PCSError(f"{path}:{lineno}: expected 5 finite decimals")
            try:
                samples.append(TrainingSample(ContentionVector(*values[:4]), values[4]))
            except ValueError as exc:
                raise PCSError(f"{path}:{lineno}: {exc}") from None
    return samples


def write_training_csv(path, samples):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for s in samples:
            writer.writerow([repr(float(v)) for v in s.contention.as_array()] + [repr(float(s.service_time))])
