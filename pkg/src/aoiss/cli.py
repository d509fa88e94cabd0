"""Command-line entry point: ``aoiss <experiment> --config cfg.json``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import EXPERIMENTS, ConfigError, ExperimentConfig, load_config, run_experiment
from .model import InfeasibleInstanceError
from .offline import EnumerationCapError

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_CAP = 0, 2, 3, 4

log = logging.getLogger("aoiss")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aoiss", description="Peak-AoI energy-minimal transmission experiments.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", help="JSON experiment config (defaults are used when omitted)")
    ap.add_argument("--seed", type=int, help="RNG seed; overrides the config")
    ap.add_argument("--out", help="output directory; overrides the config")
    ap.add_argument("--policy", choices=("greedy", "fcfs"))
    ap.add_argument("--power", help="poly:alpha=<a> | exp | table:<csv>")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = dict(experiment=args.experiment, seed=args.seed, out=args.out, policy=args.policy, power=args.power)
    try:
        if args.config:
            cfg = load_config(args.config, **overrides)
        else:
            cfg = ExperimentConfig.from_dict({}, **overrides)
        report = run_experiment(cfg, jobs=max(1, args.jobs))
    except ConfigError as exc:
        log.error("invalid config: %s", exc)
        return EXIT_CONFIG
    except EnumerationCapError as exc:
        log.error("%s", exc)
        return EXIT_CAP
    except InfeasibleInstanceError as exc:
        log.error("infeasible instance: %s", exc)
        return EXIT_INFEASIBLE
    summary = {k: report[k] for k in ("experiment", "energy", "ratio", "chosen", "rows") if k in report}
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
