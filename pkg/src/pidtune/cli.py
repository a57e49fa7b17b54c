"""Command-line front end: ``generate``, ``run``, ``sim``, ``report``.

Exit codes: 0 success, 1 usage or config error, 2 I/O error. A trial that
does not converge is a result, not an error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from pidtune.config import ConfigError, load_config, read_matrix, write_matrix
from pidtune.metrics import compute_metrics
from pidtune.pid import GainVector
from pidtune.plant import run_experiment
from pidtune.report import (
    FALLBACK_BANDWIDTH_MS,
    ExportError,
    kde_or_fallback,
    read_results_json,
    settling_samples,
    summarize,
    write_curves_svg,
    write_results_json,
    write_summary_csv,
)
from pidtune.serialize import fmt
from pidtune.trials import gains_in_bounds, run_batch, write_trial_log

CONFIG_ENV = "PIDTUNE_CONFIG"
EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 1, 2
MATRIX_NAME = "trials.json"
RESULTS_NAME = "results.json"
SUMMARY_NAME = "summary.csv"

log = logging.getLogger("pidtune")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _config_path(args):
    return args.config or os.environ.get(CONFIG_ENV) or None


def cmd_generate(args) -> int:
    cfg = load_config(_config_path(args)).filtered(
        optimizers=args.optimizer,
        robots=args.robot,
        eecs=args.eec,
        initial_states=args.init_state,
        seeds=args.seeds,
    )
    if not cfg.initial_states:
        _warn("no initial states selected; the trial matrix is empty")
    configs = cfg.generate()
    path = write_matrix(configs, cfg.robots, Path(args.output_dir) / MATRIX_NAME)
    print(len(configs))
    log.info("wrote %s", path)
    return EXIT_OK


def cmd_run(args) -> int:
    configs, robots = read_matrix(args.matrix)
    results = run_batch(configs, robots, parallelism=args.parallelism)
    out = Path(args.output_dir)
    for r in results:
        write_trial_log(r, out / "logs" / f"{r.config.trial_id}.csv")
    write_results_json(results, out / RESULTS_NAME)
    converged = sum(r.converged for r in results)
    failed = sum(r.failed for r in results)
    print(f"{len(results)} trials, {converged} converged, {failed} failed")
    return EXIT_OK


def cmd_sim(args) -> int:
    cfg = load_config(_config_path(args))
    if args.robot not in cfg.robots:
        raise UsageError(f"unknown robot {args.robot!r}; known: {', '.join(cfg.robots)}")
    gains = GainVector.from_seq(args.gains)
    if not gains_in_bounds(gains, cfg.bounds):
        raise UsageError(f"gains {gains.as_tuple()} outside bounds {cfg.bounds}")
    robot = cfg.robots[args.robot]
    trace = run_experiment(gains, robot.plant, robot.experiment, args.seed)
    metrics = compute_metrics(trace)

    path = Path(args.output_dir) / f"trace_{args.robot}.csv"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t_ms", "theta_deg"))
            for t, theta in zip(trace.times_ms(), trace.samples):
                w.writerow((t, fmt(theta)))
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc.strerror or exc}") from exc

    print(f"rise_time_ms={fmt(metrics.rise_time_ms)}")
    print(f"overshoot_pct={fmt(metrics.overshoot_pct)}")
    print(f"settling_time_ms={fmt(metrics.settling_time_ms)}")
    print(f"sse_deg={fmt(metrics.steady_state_error_deg)}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        results = read_results_json(args.results)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise UsageError(f"{args.results}: malformed results file ({exc})") from exc
    out = Path(args.output_dir)
    rows = summarize(results)
    write_summary_csv(rows, out / SUMMARY_NAME)
    for row in rows:
        if row.converged == 0:
            _warn(
                f"no converged runs for robot={row.robot} eec={row.eec} "
                f"init={row.initial_state} optimizer={row.optimizer}"
            )

    n_fig = 0
    for (robot, eec), series in settling_samples(results).items():
        curves = {
            name: kde_or_fallback(samples, FALLBACK_BANDWIDTH_MS)
            for name, samples in series.items()
            if samples
        }
        write_curves_svg(curves, out / f"settling_kde_{robot}_eec{eec}.svg",
                         title=f"{robot} / EEC {eec}")
        n_fig += 1
    print(f"{len(rows)} summary rows, {n_fig} figures")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pidtune", description="Simulated PID auto-tuning workbench.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="enumerate the trial matrix")
    g.add_argument("--config", help=f"YAML config (default: ${CONFIG_ENV} or bundled)")
    g.add_argument("--output-dir", "-o", default="out")
    g.add_argument("--optimizer", nargs="+", choices=("de", "bo"))
    g.add_argument("--robot", nargs="+")
    g.add_argument("--eec", nargs="+", type=int)
    g.add_argument("--init-state", nargs="+", type=int)
    g.add_argument("--seeds", nargs="+", type=int)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="execute a trial matrix")
    r.add_argument("matrix")
    r.add_argument("--parallelism", "-j", type=int, default=1)
    r.add_argument("--output-dir", "-o", default="out")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sim", help="simulate one rotation with fixed gains")
    s.add_argument("--gains", nargs=3, type=float, required=True, metavar=("KP", "KI", "KD"))
    s.add_argument("--robot", default="ddrm")
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output-dir", "-o", default="out")
    s.set_defaults(func=cmd_sim)

    rep = sub.add_parser("report", help="summary table and settling-time KDE figures")
    rep.add_argument("results")
    rep.add_argument("--output-dir", "-o", default="out")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: no such file", file=sys.stderr)
        return EXIT_IO
    except (ExportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
