"""Command-line interface: ``plrd estimate | simulate | dgp | bandwidth``."""

import argparse
import json
import os
import sys
import time

from . import __version__
from .bandwidth import sm_bandwidth
from .dataio import ResultRecord, atomic_write, dataset_csv, load_dataset, load_sim_config
from .errors import ConfigError, DataFormatError, PlrdError
from .estimate import parse_bandwidth_rule, ple_estimate
from .ik import ik_bandwidth
from .kernels import KERNELS, get_kernel
from .ple import min_feasible_bandwidth, stage
from .simulation import dgp_sample, get_dgp, run_study
from .variance import METHODS

EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_ESTIMATION = 5
EXIT_IO = 6


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error({"error": "usage_error", "message": f"{self.prog}: {message}"})
        sys.exit(EXIT_USAGE)


def _emit_error(body):
    sys.stderr.write(json.dumps(body) + "\n")


def _output(text, out):
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _add_data_args(p):
    p.add_argument("input", help="CSV file with a header row")
    p.add_argument("--x-col", default="x", help="running-variable column (default: x)")
    p.add_argument("--y-col", default="y", help="response column (default: y)")
    p.add_argument("--cutoff", type=float, default=0.0)
    p.add_argument("--degree", type=int, default=1, choices=range(6))
    p.add_argument("--kernel", default="epanechnikov", choices=sorted(KERNELS))
    p.add_argument("--out", help="write to this file instead of stdout")


def cmd_estimate(args):
    data = load_dataset(args.input, args.x_col, args.y_col, args.cutoff)
    t0 = time.perf_counter()
    result = ple_estimate(data, args.degree, args.kernel, args.bandwidth, args.alpha,
                          args.variance)
    elapsed = time.perf_counter() - t0
    record = ResultRecord.from_result(result, data, args.treated, args.alpha, args.variance,
                                      elapsed)
    _output(record.to_json() if args.format == "json" else record.to_csv(), args.out)


def bandwidth_report(data, rule, degree=1, kernel="epanechnikov"):
    """Every quantity the chosen bandwidth rule used, as a JSON-ready dict."""
    kernel = get_kernel(kernel)
    name, value = parse_bandwidth_rule(rule)
    floor = stage("min_feasible_bandwidth", min_feasible_bandwidth, data, degree, kernel)
    report = {"rule": name, "kernel": kernel.name, "degree": degree, "n": data.n,
              "h_min": floor.h_min}
    if name == "sm":
        h, diag = sm_bandwidth(data, kernel, degree, h_min=floor.h_min)
        report.update(diag.as_dict())
        report["h_used"] = h
        return report
    h = value if name == "fixed" else ik_bandwidth(data, kernel)
    clamps = []
    report["h_requested"] = h
    if h < floor.h_min:
        h = floor.h_min
        clamps.append("raised_to_min_feasible")
    report["h_used"] = h
    report["clamps"] = clamps
    return report


def cmd_bandwidth(args):
    data = load_dataset(args.input, args.x_col, args.y_col, args.cutoff)
    report = bandwidth_report(data, args.rule, args.degree, args.kernel)
    _output(json.dumps(report, indent=2) + "\n", args.out)


def cmd_dgp(args):
    data = dgp_sample(get_dgp(args.dgp), args.n, args.seed)
    _output(dataset_csv(data), args.out)


def cmd_simulate(args):
    config = load_sim_config(args.config)
    workers = args.workers or config.workers
    t0 = time.perf_counter()
    table = run_study(config.study, workers)
    elapsed = time.perf_counter() - t0
    out = config.output_dir
    if not os.path.isabs(out):
        out = os.path.join(os.path.dirname(os.path.abspath(args.config)), out)
    manifest = {
        "config": config.raw,
        "n": config.study.n,
        "version": __version__,
        "workers": workers,
        "wall_time_seconds": elapsed,
    }
    atomic_write(os.path.join(out, "metrics.csv"), table.to_csv())
    atomic_write(os.path.join(out, "metrics.json"), table.to_json())
    atomic_write(os.path.join(out, "manifest.json"), json.dumps(manifest, indent=2) + "\n")
    sys.stdout.write(json.dumps({"output_dir": out, "n": config.study.n,
                                 "common_success_count": table.common_success_count}) + "\n")


def build_parser():
    parser = _Parser(prog="plrd", description="Partial linear regression discontinuity estimation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="estimate the jump at the cutoff from a CSV file")
    _add_data_args(p)
    p.add_argument("--bandwidth", default="sm", help="sm | ik | fixed:<h> (default: sm)")
    p.add_argument("--variance", default="ple_wu", choices=METHODS)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--treated", default="above", choices=("above", "below"),
                   help="side of the cutoff that receives treatment")
    p.add_argument("--format", default="json", choices=("json", "csv"))
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bandwidth", help="report every intermediate of a bandwidth rule")
    _add_data_args(p)
    p.add_argument("--rule", default="sm", help="sm | ik | fixed:<h> (default: sm)")
    p.set_defaults(func=cmd_bandwidth)

    p = sub.add_parser("dgp", help="draw a dataset from one of the simulation designs")
    p.add_argument("dgp", type=int, choices=(1, 2, 3, 4))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dgp)

    p = sub.add_parser("simulate", help="run a Monte Carlo study from a JSON config")
    p.add_argument("config")
    p.add_argument("--workers", type=int, help="override the config's worker count")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        _emit_error(exc.to_dict())
        return EXIT_CONFIG
    except DataFormatError as exc:
        _emit_error(exc.to_dict())
        return EXIT_DATA
    except PlrdError as exc:
        _emit_error(exc.to_dict())
        return EXIT_ESTIMATION
    except OSError as exc:
        _emit_error({"error": "io_error", "message": str(exc)})
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
