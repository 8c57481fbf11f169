"""Command-line entry point.

Exit codes: 0 success, 1 unexpected pipeline error, 2 configuration error,
3 geometry error, 4 contract violation, 5 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .config import load_config
from .errors import MprtiError

EXIT_CODES = {"error": 1, "config": 2, "geometry": 3, "contract": 4, "io": 5}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML scenario config (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="override the scenario and tuner seed")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--max-order", type=int, choices=(0, 1, 2), help="reflection order of the imaging model")
    common.add_argument("--workers", type=int, default=1, help="worker processes for target positions")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mprti", description="Multipath radio tomographic imaging simulator")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("trace", parents=[common], help="write traced pathways as CSV")
    sub.add_parser("run", parents=[common], help="localize every target position of one scenario")
    sub.add_parser("sweep", parents=[common], help="run the configured parameter sweep")
    sub.add_parser("tune", parents=[common], help="Bayesian optimization of alpha and gamma")
    sub.add_parser("protocol", parents=[common], help="simulate one measurement round's event log")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.max_order is not None:
            cfg = cfg.with_max_order(args.max_order)
        out = args.out or cfg.out
        if args.command == "trace":
            path = harness.run_trace(cfg, out)
            print(f"pathways written to {path}")
        elif args.command == "run":
            res = harness.run_scenario(cfg, out, args.workers)
            _print_summary("run", res.summary())
        elif args.command == "sweep":
            results = harness.run_sweep(cfg, out, args.workers)
            for v, res in results.items():
                _print_summary(f"{cfg.sweep.variable}={v}", res.summary())
        elif args.command == "tune":
            trace = harness.run_tune(cfg, out)
            best, value = trace.best
            print("best " + " ".join(f"{k}={v:.4g}" for k, v in best.items()) + f" mean_error_m={value:.4g}")
        elif args.command == "protocol":
            plan, schedule, log = harness.run_protocol(cfg, out)
            print(f"{len(plan.phases)} phases, {len(plan.links())} links, snapshot {schedule.duration * 1e6:.2f} us, "
                  f"round {log.duration:.3f} s")
    except MprtiError as exc:
        print(f"mprti: {exc.category} error: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)
    except OSError as exc:
        print(f"mprti: io error: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]
    return 0


def _print_summary(label: str, s: dict) -> None:
    print(f"{label}: positions={s['positions']} median={s['median_m']:.3f} m mean={s['mean_m']:.3f} m "
          f"below_1m={s['frac_below_1m']:.2f} detected={s['detected']}")


if __name__ == "__main__":
    sys.exit(main())
