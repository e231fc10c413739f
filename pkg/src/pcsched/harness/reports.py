"""Prediction-error and scheduler-scalability reports."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import InsufficientTraining
from ..scheduler import SchedulerConfig, schedule
from ..sim.profiling import noisy_reading, train_class_model
from ..sim.workload import generate_interference_trace, stream_rng
from .synthetic import random_problem

ERROR_BUCKETS = (0.03, 0.05, 0.08)


@dataclass(frozen=True)
class LevelError:
    service_class: str
    level: int
    job_class: str
    size_gb: float
    true_ms: float
    predicted_ms: float

    @property
    def relative_error(self):
        return abs(self.predicted_ms - self.true_ms) / self.true_ms


@dataclass(frozen=True)
class PredictionErrorReport:
    levels: tuple

    @property
    def errors(self):
        return np.array([lv.relative_error for lv in self.levels])

    @property
    def mean_error(self):
        return float(self.errors.mean())

    def bucket_fractions(self, buckets=ERROR_BUCKETS):
        errs = self.errors
        return {b: float((errs < b).mean()) for b in buckets}

    def format(self):
        lines = [f"{'class':<12}{'level':>6}{'batch_job':>12}{'size_gb':>9}{'true_ms':>11}{'pred_ms':>11}{'error_%':>9}"]
        for lv in self.levels:
            lines.append(
                f"{lv.service_class:<12}{lv.level:>6}{lv.job_class:>12}{lv.size_gb:>9.3f}{lv.true_ms:>11.4f}"
                f"{lv.predicted_ms:>11.4f}{100 * lv.relative_error:>9.3f}"
            )
        lines.append("")
        for b, frac in self.bucket_fractions().items():
            lines.append(f"error < {100 * b:.0f}%: {100 * frac:.2f}% of levels")
        lines.append(f"mean error: {100 * self.mean_error:.3f}%")
        return "\n".join(lines)


def _footprints(trace):
    seen = {}
    for job in trace:
        arr = job.contention_footprint.as_array()
        seen.setdefault(tuple(arr), arr)
    return [seen[key] for key in sorted(seen)]


def _evaluation_footprints(job_mix, total_levels):
    """One single-job interference case per (job class, input size).

    Levels are split evenly across job classes; classes with a size table
    contribute each table entry once, the others use evenly spaced sizes
    over their size range.
    """
    active = [j for j in job_mix if j.rate_per_node > 0] or list(job_mix)
    cases = []
    per_class = max(1, total_levels // max(1, len(active)))
    for job in active:
        if job.sizes:
            sizes = [lv.size_gb for lv in job.sizes]
        else:
            lo, hi = job.size_range_gb
            sizes = list(np.linspace(lo, hi, per_class)) if per_class > 1 else [0.5 * (lo + hi)]
        cases.extend((job.name, float(size), job.footprint_for(size).as_array()) for size in sizes)
    return cases


def prediction_error_report(config, seed=None):
    """Train on one interference window, evaluate on held-out single-job cases.

    Training profiles each service class next to batch footprints taken
    from a generated trace. Evaluation co-locates the component with one
    batch job per case (every job class at a spread of input sizes) and
    compares the model's prediction, made from a monitored and possibly
    noisy reading, with the generator's true mean service time.
    """
    seed = config.seeds[0] if seed is None else seed
    pcfg = config.prediction
    train_trace = generate_interference_trace(config.node_ids, config.job_mix, config.horizon_s, f"{seed}:train")
    train_fp = _footprints(train_trace)
    cases = _evaluation_footprints(config.job_mix, pcfg.eval_levels)
    if not train_fp or not cases:
        raise InsufficientTraining("the job mix produced no batch jobs to train or evaluate on")
    noise = config.sim.monitor_noise
    bg = config.background.as_array()
    names = [pcfg.service_class] if pcfg.service_class else [c.name for c in config.classes]
    classes = config.class_by_name()
    gt = config.ground_truth

    levels = []
    for name in names:
        cls = classes[name]
        model = train_class_model(
            cls,
            gt,
            train_fp,
            bg,
            seed=seed,
            levels=pcfg.training_levels,
            seconds_per_level=pcfg.seconds_per_level,
            draws_per_second=pcfg.draws_per_second,
            max_colocated=pcfg.max_colocated,
            monitor_noise=noise,
        )
        rng = stream_rng(seed, f"eval:{name}")
        for level, (job_name, size, footprint) in enumerate(cases):
            u = np.clip(bg + footprint, 0.0, [1.0, np.inf, np.inf, np.inf])
            reading = noisy_reading(u, noise, rng)
            true = gt.mean(cls, u)
            pred = float(model.predict_raw(reading))
            levels.append(LevelError(name, level, job_name, size, true * 1e3, pred * 1e3))
    return PredictionErrorReport(tuple(levels))


@dataclass(frozen=True)
class TimingRow:
    m: int
    k: int
    build_s: float
    schedule_s: float
    migrations: int

    @property
    def total_s(self):
        return self.build_s + self.schedule_s


@dataclass
class ScalabilityReport:
    rows: list = field(default_factory=list)

    def exponent_in_m(self, k=None):
        """Log-log slope of total time against m, at the largest k unless given."""
        k = max(r.k for r in self.rows) if k is None else k
        pts = sorted((r.m, r.total_s) for r in self.rows if r.k == k)
        pts = [(m, t) for m, t in pts if m > 1 and t > 0]
        if len(pts) < 2:
            return math.nan
        x = np.log([m for m, _ in pts])
        y = np.log([t for _, t in pts])
        return float(np.polyfit(x, y, 1)[0])

    def row(self, m, k):
        for r in self.rows:
            if r.m == m and r.k == k:
                return r
        raise KeyError((m, k))

    def format(self):
        lines = [f"{'m':>6}{'k':>6}{'build_ms':>12}{'schedule_ms':>13}{'total_ms':>11}{'migrations':>12}"]
        for r in self.rows:
            lines.append(
                f"{r.m:>6}{r.k:>6}{1e3 * r.build_s:>12.2f}{1e3 * r.schedule_s:>13.2f}"
                f"{1e3 * r.total_s:>11.2f}{r.migrations:>12}"
            )
        exp = self.exponent_in_m()
        lines.append(f"fitted exponent in m (k={max(r.k for r in self.rows)}): {exp:.3f}")
        return "\n".join(lines)


def scalability_report(m_values, k_values, *, epsilon=0.0, repeats=3, seed=0):
    """Time matrix construction plus the greedy loop on synthetic problems.

    ``epsilon`` defaults to zero so the loop keeps migrating while anything
    improves, which is the expensive end of the workload. Each cell keeps
    the fastest of ``repeats`` runs.
    """
    report = ScalabilityReport()
    config = SchedulerConfig(epsilon=epsilon)
    for k in k_values:
        for m in m_values:
            problem = random_problem(seed, m, k, arrival_rate=20.0)
            best = None
            for _ in range(repeats):
                t0 = time.perf_counter()
                state = problem.state()
                matrix = state.full_matrix()
                t1 = time.perf_counter()
                plan = schedule(matrix, state, config)
                t2 = time.perf_counter()
                row = TimingRow(m, k, t1 - t0, t2 - t1, len(plan.migrations))
                if best is None or row.total_s < best.total_s:
                    best = row
            report.rows.append(best)
    return report
