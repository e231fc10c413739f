"""Policy sweeps over arrival rates and seeds, with CSV and summary output."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..sim.engine import run_simulation
from ..sim.metrics import compute_metrics

logger = logging.getLogger(__name__)

CSV_HEADER = (
    "policy",
    "lambda",
    "seed",
    "p99_component_ms",
    "mean_overall_ms",
    "migrations",
    "saturated",
    "sched_ms",
)
OUTPUT_DIR_ENV = "PCSCHED_OUTPUT_DIR"
BASELINES = ("basic", "red-3", "red-5", "ri-90", "ri-99")


@dataclass(frozen=True)
class CellResult:
    policy: str
    arrival_rate: float
    seed: int
    metrics: object = None  # RunMetrics, or None when the cell failed
    error: str | None = None

    @property
    def failed(self):
        return self.metrics is None

    def csv_row(self):
        head = [self.policy, _fmt(self.arrival_rate), str(self.seed)]
        if self.failed:
            return head + ["nan", "nan", "0", "failed", "nan"]
        m = self.metrics
        return head + [
            _fmt(m.max_component_p99_ms),
            _fmt(m.mean_overall_ms),
            str(m.migrations),
            "true" if m.saturated else "false",
            f"{m.sched_ms:.3f}",
        ]


@dataclass
class MetricsReport:
    cells: list = field(default_factory=list)

    @property
    def failures(self):
        return [c for c in self.cells if c.failed]

    def cell(self, policy, arrival_rate, seed):
        for c in self.cells:
            if c.policy == policy and c.arrival_rate == arrival_rate and c.seed == seed:
                return c
        raise KeyError((policy, arrival_rate, seed))

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for c in self.cells:
            writer.writerow(c.csv_row())
        return buf.getvalue()

    def summary(self):
        return format_summary(self)


def _fmt(x):
    return "nan" if isinstance(x, float) and math.isnan(x) else f"{x:.6f}"


def run_cell(config, policy, arrival_rate, seed, trace_dir=None):
    """Simulate one (policy, rate, seed) cell; never raises."""
    try:
        trace = run_simulation(
            config.service(),
            config.interference_trace(seed),
            config.policy(policy),
            arrival_rate,
            config.ground_truth,
            config.horizon_s,
            seed,
            config.sim_config(record_jobs=trace_dir is not None),
        )
        if trace_dir is not None:
            trace.write_ndjson(Path(trace_dir) / f"trace-{policy}-{_fmt(arrival_rate)}-{seed}.ndjson")
        return CellResult(policy, arrival_rate, seed, compute_metrics(trace))
    except Exception as exc:  # a failed cell must not stop the sweep
        logger.warning("cell %s/%s/%s failed: %s", policy, arrival_rate, seed, exc)
        detail = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        return CellResult(policy, arrival_rate, seed, error=detail)


def _cell_args(config):
    return [(p, lam, seed) for p in config.policies for lam in config.arrival_rates for seed in config.seeds]


def run_experiment(config, out_dir=None, parallelism=None, traces=False):
    """Run every (policy, rate, seed) cell; write ``results.csv`` and ``summary.txt``.

    ``out_dir`` falls back to the scenario's ``output_dir``, then to the
    ``PCSCHED_OUTPUT_DIR`` environment variable. With neither, nothing is
    written and the report is only returned.
    """
    out_dir = out_dir or config.output_dir or os.environ.get(OUTPUT_DIR_ENV)
    trace_dir = None
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        if traces:
            trace_dir = Path(out_dir) / "traces"
            trace_dir.mkdir(exist_ok=True)
    workers = parallelism or config.parallelism
    args = _cell_args(config)
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_cell, config, *a, trace_dir) for a in args]
            cells = [f.result() for f in futures]
    else:
        cells = [run_cell(config, *a, trace_dir) for a in args]
    report = MetricsReport(cells)
    if out_dir is not None:
        (Path(out_dir) / "results.csv").write_text(report.to_csv(), encoding="utf-8")
        (Path(out_dir) / "summary.txt").write_text(report.summary() + "\n", encoding="utf-8")
    return report


def _mean(values):
    values = [v for v in values if not math.isnan(v)]
    return sum(values) / len(values) if values else math.nan


def format_summary(report):
    """Seed-averaged table per (policy, rate) plus PCS reductions against baselines.

    Reductions are averaged with equal weight over arrival rates and seeds.
    """
    groups = {}
    for c in report.cells:
        groups.setdefault((c.policy, c.arrival_rate), []).append(c)
    lines = [
        f"{'policy':<8}{'lambda':>9}{'p99_max_ms':>14}{'p99_mean_ms':>14}{'mean_overall_ms':>17}"
        f"{'migrations':>12}{'saturated':>11}{'failed':>8}"
    ]
    for (policy, lam), cells in groups.items():
        ok = [c.metrics for c in cells if not c.failed]
        lines.append(
            f"{policy:<8}{lam:>9g}"
            f"{_mean([m.max_component_p99_ms for m in ok]):>14.3f}"
            f"{_mean([m.mean_component_p99_ms for m in ok]):>14.3f}"
            f"{_mean([m.mean_overall_ms for m in ok]):>17.3f}"
            f"{_mean([m.migrations for m in ok]):>12.1f}"
            f"{sum(m.saturated for m in ok):>11}"
            f"{len(cells) - len(ok):>8}"
        )
    reductions = pcs_reductions(report)
    if reductions:
        lines.append("")
        lines.append("PCS reduction vs baseline (equal weight over rates and seeds)")
        for base, (p99, overall) in reductions.items():
            lines.append(f"  {base:<8} p99_max {100 * p99:7.2f}%   mean_overall {100 * overall:7.2f}%")
    for c in report.failures:
        lines.append(f"FAILED {c.policy} lambda={c.arrival_rate:g} seed={c.seed}: {c.error}")
    return "\n".join(lines)


def pcs_reductions(report):
    """Mean relative reduction of PCS against each baseline present in the report."""
    out = {}
    pcs = {(c.arrival_rate, c.seed): c for c in report.cells if c.policy == "pcs" and not c.failed}
    if not pcs:
        return out
    for base in BASELINES:
        p99, overall = [], []
        for c in report.cells:
            if c.policy != base or c.failed or (c.arrival_rate, c.seed) not in pcs:
                continue
            mine = pcs[(c.arrival_rate, c.seed)].metrics
            theirs = c.metrics
            p99.append(1.0 - mine.max_component_p99_ms / theirs.max_component_p99_ms)
            overall.append(1.0 - mine.mean_overall_ms / theirs.mean_overall_ms)
        if p99:
            out[base] = (_mean(p99), _mean(overall))
    return out
