"""Command line entry point: ``beamspace-noma {solve,sweep,trace,validate}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

import yaml

from .beamdesign import ALGORITHMS
from .simcli import (AXES, ConfigError, SweepSpec, convergence_trace, load_scenario, report_dict,
                     run_sweep, solve_scenario, write_csv)

EXIT_USAGE = 2
EXIT_IO = 3


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _values(text):
    try:
        return [float(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma list of numbers: {text!r}") from None


def _parser():
    p = argparse.ArgumentParser(prog="beamspace-noma", description="Beamspace NOMA beam design simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="YAML scenario file")
        sp.add_argument("--seed", type=int, help="override the config seed")
        return sp

    s = common(sub.add_parser("solve", help="design and evaluate one algorithm"))
    s.add_argument("--algo", default="alg1", choices=ALGORITHMS)
    s.add_argument("--out", help="write the JSON report here instead of stdout")

    s = common(sub.add_parser("sweep", help="sweep one axis and emit CSV"))
    s.add_argument("--axis", required=True, choices=AXES)
    s.add_argument("--values", required=True, type=_values, help="comma list, e.g. 0,5,10")
    s.add_argument("--algo", type=_csv_list, default=list(ALGORITHMS), help="comma list of algorithms")
    s.add_argument("--out", help="CSV path (stdout if omitted)")
    s.add_argument("--timing", action="store_true", help="fill wall_time_ms (breaks byte determinism)")
    s.add_argument("--workers", type=int, default=1)

    s = common(sub.add_parser("trace", help="per-iteration convergence trace as CSV"))
    s.add_argument("--algo", default="alg1", choices=("alg1", "alg2", "alg3"))
    s.add_argument("--out", help="CSV path (stdout if omitted)")

    common(sub.add_parser("validate", help="check a config and print it with defaults"))
    return p


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as f:
            f.write(text)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(levelname)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        config = load_scenario(args.config, seed=args.seed)
        if args.command == "validate":
            _emit(yaml.safe_dump(config.to_dict(), sort_keys=False), None)
        elif args.command == "solve":
            report, trace = solve_scenario(config, args.algo)
            _emit(json.dumps(report_dict(report, trace), indent=2) + "\n", args.out)
        elif args.command == "sweep":
            sweep = SweepSpec(args.axis, args.values, tuple(args.algo), args.out)
            rows = run_sweep(config, sweep, timing=args.timing, workers=args.workers)
            if args.out is None:
                sys.stdout.write(write_csv(rows))
        elif args.command == "trace":
            rows = convergence_trace(config, args.algo)
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["iteration", "surrogate", "budget_usage"])
            w.writerows([r["iteration"], repr(r["surrogate"]), repr(r["budget_usage"])] for r in rows)
            _emit(buf.getvalue(), args.out)
    except ConfigError as e:
        where = f" (field {e.field})" if e.field else ""
        print(f"error: {e}{where}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
