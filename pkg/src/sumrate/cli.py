"""Command line entry point: ``sumrate {sweep,converge,density,single}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .algorithms import ALGORITHMS, RunOptions
from .harness import SweepSpec, apply_psnr, run_convergence, run_density, run_single, run_sweep, trial_seed
from .scenario import REFERENCE_SCENARIO, ConfigError, draw_channels, load_config

log = logging.getLogger("sumrate")


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")


def _algo_list(text):
    algos = [a.strip() for a in text.split(",") if a.strip()]
    bad = [a for a in algos if a not in ALGORITHMS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown algorithm(s) {bad}; choose from {sorted(ALGORITHMS)}")
    return algos


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML scenario file (default: the reference scenario)")
    common.add_argument("--seed", type=_seed, default=0)
    common.add_argument("--trials", type=int, default=200)
    common.add_argument("--psnr-db", type=_float_list, default=None, help="comma separated pseudo SNRs in dB")
    common.add_argument("--rho", type=float, default=0.5, help="fraction of the total power given to the BSs")
    common.add_argument("--algos", type=_algo_list, default=list(ALGORITHMS))
    common.add_argument("--out", default="results")
    common.add_argument("--epsilon", type=float, default=1e-4)
    common.add_argument("--max-iters", type=int, default=500)
    common.add_argument("--workers", type=int, default=1, help="process pool size")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sumrate", description="Sum rate maximization experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common], help="average sum rate versus pseudo SNR")
    sub.add_parser("converge", parents=[common], help="average sum rate versus iteration")
    sub.add_parser("density", parents=[common], help="distribution of the final sum rates")
    single = sub.add_parser("single", parents=[common], help="one run with its full trace")
    single.add_argument("--trial", type=int, default=0, help="trial index whose channels are used")
    return parser


def _spec(args, default_psnr) -> SweepSpec:
    base = REFERENCE_SCENARIO
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as err:
            raise OSError(f"cannot read config {args.config}: {err}") from err
        base = load_config(text)
    return SweepSpec(
        psnr_db_list=args.psnr_db or default_psnr,
        trials=args.trials,
        algorithms=args.algos,
        power_split=args.rho,
        base=base,
        seed=args.seed,
        epsilon=args.epsilon,
        max_iters=args.max_iters,
        workers=args.workers,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        if args.command == "sweep":
            out = run_sweep(_spec(args, [0.0, 10.0, 20.0, 30.0]), args.out)
            paths = [out["detail"], out["aggregate"]]
        elif args.command == "converge":
            out = run_convergence(_spec(args, [30.0]), args.out)
            paths = [out["convergence"]]
        elif args.command == "density":
            out = run_density(_spec(args, [30.0]), args.out)
            paths = [out["rates"], out["histogram"]]
        else:
            spec = _spec(args, [30.0])
            if len(spec.psnr_db_list) != 1:
                raise ConfigError("psnr_db", "single takes exactly one pseudo SNR")
            cfg = apply_psnr(spec.base, spec.psnr_db_list[0], spec.power_split)
            seed = trial_seed(spec.seed, args.trial)
            ch = draw_channels(cfg, seed)
            paths = []
            for algorithm in spec.algorithms:
                opts = RunOptions(epsilon=spec.epsilon, max_iters=spec.max_iters, init_seed=seed)
                out = run_single(cfg, ch, algorithm, opts, args.out)
                log.info("%s: %.4f bits per slot after %d iterations", algorithm,
                         out["result"].final_rate_per_slot, out["result"].iterations_used)
                paths.append(out["trace"])
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    for path in paths:
        log.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
