"""Command-line entry point.

    sdsmoother experiment [--n N] [--seed S] [--omega W] [--epsilon E]
                          [--beta B] [--gamma G] [--max-outer M]
                          [--baseline median|fixed=V|oracle] [--out PATH]
    sdsmoother bench --sizes N1,N2,...

``experiment`` writes the per-step CSV to ``--out`` (stdout if omitted) and,
when writing to a file, a figure next to it.  Exit status is 0 when the
smoother converged, 2 when it hit the iteration limit and 1 on any error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import SmootherError
from .experiment import ExperimentConfig, bench, run_experiment
from .ggn import Status

EXIT_OK, EXIT_ERROR, EXIT_MAXITER = 0, 1, 2


def _baseline(text):
    if text in ("median", "oracle"):
        return text, None
    if text.startswith("fixed="):
        try:
            value = float(text.split("=", 1)[1])
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad fixed baseline value in {text!r}") from None
        if value <= 0:
            raise argparse.ArgumentTypeError("fixed baseline variance must be positive")
        return "fixed", value
    raise argparse.ArgumentTypeError("baseline must be median, oracle or fixed=V")


def _sizes(text):
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from None
    if not sizes or min(sizes) < 2:
        raise argparse.ArgumentTypeError("sizes must be integers >= 2")
    return sizes


def build_parser():
    parser = argparse.ArgumentParser(prog="sdsmoother", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    subs = parser.add_subparsers(dest="command", required=True)

    exp = subs.add_parser("experiment", help="run the synthetic smoothing experiment")
    exp.add_argument("--n", type=int, default=100, help="number of time steps")
    exp.add_argument("--seed", type=int, default=0)
    exp.add_argument("--omega", type=float, default=ExperimentConfig.omega)
    exp.add_argument("--epsilon", type=float, default=None)
    exp.add_argument("--beta", type=float, default=ExperimentConfig.beta)
    exp.add_argument("--gamma", type=float, default=ExperimentConfig.gamma)
    exp.add_argument("--max-outer", type=int, default=ExperimentConfig.max_outer)
    exp.add_argument("--baseline", type=_baseline, default=("median", None))
    exp.add_argument("--out", default=None, help="CSV output path (default: stdout)")
    exp.add_argument("--figure", default=None, help="figure path (default: next to --out, .png)")
    exp.add_argument("--no-figure", action="store_true")

    b = subs.add_parser("bench", help="time the smoother for several N")
    b.add_argument("--sizes", type=_sizes, default=[1000, 2000, 4000])
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--figure", default=None, help="optional log-log timing plot")
    return parser


def _experiment(args) -> int:
    mode, value = args.baseline
    cfg = ExperimentConfig(
        N=args.n,
        seed=args.seed,
        omega=args.omega,
        epsilon=args.epsilon,
        beta=args.beta,
        gamma=args.gamma,
        max_outer=args.max_outer,
        baseline=mode,
        baseline_value=value,
        output_path=args.out,
    )
    result = run_experiment(cfg)
    if args.out is None:
        sys.stdout.write(result.to_csv())
    if not args.no_figure and (args.figure or args.out):
        from .plotting import plot_experiment

        plot_experiment(result, args.figure or str(Path(args.out).with_suffix(".png")))
    status = result.solution.status
    if status is Status.CONVERGED:
        return EXIT_OK
    if status is Status.MAX_ITERATIONS:
        return EXIT_MAXITER
    return EXIT_ERROR


def _bench(args) -> int:
    rows = bench(args.sizes, seed=args.seed, repeats=args.repeats)
    print("N,outer_iters,inner_iters,seconds,seconds_per_outer,ratio,status")
    prev = None
    for row in rows:
        ratio = "" if prev is None else f"{row.per_outer / prev.per_outer:.4f}"
        print(f"{row.N},{row.outer_iters},{row.inner_iters},{row.seconds:.6f},{row.per_outer:.6f},{ratio},{row.status}")
        prev = row
    if args.figure:
        from .plotting import plot_bench

        plot_bench(rows, args.figure)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "experiment":
            return _experiment(args)
        return _bench(args)
    except (SmootherError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
