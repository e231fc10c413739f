"""Command-line entry point: ``pcsched run|predict-error|scalability|dump-matrix``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from ..exceptions import PCSError
from ..sim.engine import Simulation
from ..sim.policies import PCS
from .experiment import OUTPUT_DIR_ENV, run_experiment
from .reports import prediction_error_report, scalability_report
from .scenario import load_scenario

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="pcsched", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log scheduler decisions")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="sweep policies x arrival rates x seeds")
    run.add_argument("scenario")
    run.add_argument("--out", help=f"output directory (default: scenario output_dir, then ${OUTPUT_DIR_ENV})")
    run.add_argument("--parallelism", type=int, default=None)
    run.add_argument("--traces", action="store_true", help="also write per-cell NDJSON traces")

    pe = sub.add_parser("predict-error", help="held-out prediction error of the service-time model")
    pe.add_argument("scenario")

    sc = sub.add_parser("scalability", help="time matrix build + greedy scheduling on synthetic problems")
    sc.add_argument("--m", type=_int_list, default=[40, 80, 160, 320, 640])
    sc.add_argument("--k", type=_int_list, default=[32, 128])
    sc.add_argument("--epsilon-ms", type=float, default=0.0)
    sc.add_argument("--repeats", type=int, default=3)

    dm = sub.add_parser("dump-matrix", help="print the performance matrix PCS builds at one interval")
    dm.add_argument("scenario")
    dm.add_argument("--interval", type=int, required=True, help="scheduling interval index (1-based)")
    dm.add_argument("--lambda", dest="arrival_rate", type=float, default=None)
    dm.add_argument("--seed", type=int, default=None)
    return parser


def _cmd_run(args):
    config = load_scenario(args.scenario)
    report = run_experiment(config, out_dir=args.out, parallelism=args.parallelism, traces=args.traces)
    print(report.summary())
    return EXIT_PARTIAL if report.failures else EXIT_OK


def _cmd_predict_error(args):
    print(prediction_error_report(load_scenario(args.scenario)).format())
    return EXIT_OK


def _cmd_scalability(args):
    report = scalability_report(args.m, args.k, epsilon=args.epsilon_ms / 1000.0, repeats=args.repeats)
    print(report.format())
    return EXIT_OK


def _cmd_dump_matrix(args):
    config = load_scenario(args.scenario)
    if args.interval < 1:
        print("--interval must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    interval_s = config.scheduler.interval_s
    horizon = args.interval * interval_s + config.sim.monitor_period_s
    config = dataclasses.replace(config, horizon_s=horizon)
    seed = config.seeds[0] if args.seed is None else args.seed
    rate = config.arrival_rates[0] if args.arrival_rate is None else args.arrival_rate
    captured = {}

    def hook(index, problem, matrix, plan):
        if index == args.interval:
            captured["matrix"] = matrix
            captured["plan"] = plan

    policy = config.policy("pcs")
    assert isinstance(policy, PCS)
    sim = Simulation(
        config.service(),
        config.interference_trace(seed),
        policy,
        rate,
        config.ground_truth,
        horizon,
        seed,
        config.sim_config(),
        on_schedule=hook,
    )
    sim.run()
    if "matrix" not in captured:
        print(f"interval {args.interval} was never reached", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(captured["matrix"].to_csv())
    for line in captured["plan"].log_lines(args.interval):
        print(f"# {line}")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "predict-error": _cmd_predict_error,
    "scalability": _cmd_scalability,
    "dump-matrix": _cmd_dump_matrix,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except PCSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
