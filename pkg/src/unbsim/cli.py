"""Command line front end.

Subcommands:
  simulate  run a Monte Carlo batch and print per-strategy summaries
  sweep     run a parameter sweep and emit long-format CSV rows
  solve     read decode statistics (or station locations) and print the
            optimized band vector
  train     simulate one training phase and write the estimated decode
            statistics to a file

The solve output is the hyphen-joined 1-based band per station, one line on
stdout, so it can be fed to other tools directly.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from unbsim.core import SimConfig
from unbsim.harness import (
    CSV_HEADER,
    SWEEP_PARAMS,
    derive_seeds,
    draw_topology,
    format_result_row,
    load_config,
    run_monte_carlo,
    simulate_draw,
    sweep,
    write_results_csv,
)
from unbsim.solvers import (
    ENUMERATION_CAP,
    build_p3_objective,
    build_p4_objective,
    solve_enumeration,
    solve_local_search,
)
from unbsim.training import (
    load_stats,
    replicate_across_bands,
    save_stats,
    slot_records,
    stats_from_records,
)

__all__ = ["build_parser", "main"]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default: config master_seed)")
    common.add_argument("--realizations", type=int, default=10, help="Monte Carlo realization count")
    common.add_argument("--config", default=None, help="key = value config file")
    common.add_argument("--out", default=None, help="output file path")

    parser = argparse.ArgumentParser(
        prog="unbsim",
        description="Multiband ultra-narrowband uplink simulator and band-assignment optimizer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="run one Monte Carlo batch")

    sw = sub.add_parser("sweep", parents=[common], help="sweep one parameter with paired seeds")
    sw.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS))
    sw.add_argument("--values", required=True, help="comma-separated sweep values")
    sw.add_argument(
        "--nested-topologies",
        action="store_true",
        help="station-count sweep only: share the deployment substream so each value's stations nest",
    )

    so = sub.add_parser("solve", parents=[common], help="optimize a band assignment")
    so.add_argument("--stats", default=None, help="decode statistics file (required for p3)")
    so.add_argument("--objective", choices=("p3", "p4"), default="p3")
    so.add_argument("--locations", default=None, help="station locations file for p4, 'x y' per line")
    so.add_argument("--eta", type=float, default=None, help="p4 distance exponent (default: config)")

    tr = sub.add_parser("train", parents=[common], help="estimate decode statistics from a training phase")
    tr.add_argument("--low-overhead", action="store_true", help="probe a single band and replicate")

    return parser


def _load(args) -> tuple[SimConfig, int]:
    config = load_config(args.config) if args.config else SimConfig()
    seed = config.master_seed if args.seed is None else args.seed
    return config, seed


def _read_locations(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'x y', got {raw!r}")
            rows.append((float(parts[0]), float(parts[1])))
    if not rows:
        raise ValueError(f"{path}: no station locations found")
    return np.array(rows)


def _solve(obj, seed: int):
    if obj.num_bands ** obj.num_bs <= ENUMERATION_CAP:
        return solve_enumeration(obj)
    return solve_local_search(obj, rng=np.random.default_rng(seed))


def _cmd_simulate(args) -> int:
    config, seed = _load(args)
    run = run_monte_carlo(config, args.realizations, seed)
    if args.out:
        write_results_csv(run.results, args.out)
    for s in run.summary.values():
        print(
            f"{s.strategy} mean_error={s.mean_error!r} se_error={s.se_error!r} "
            f"mean_pdp={s.mean_pdp!r} mean_rate={s.mean_rate!r} n={s.n}"
        )
    return 0


def _cmd_sweep(args) -> int:
    config, seed = _load(args)
    values = [float(tok) for tok in args.values.split(",") if tok.strip()]
    if not values:
        print("error: --values must list at least one number", file=sys.stderr)
        return 2
    rows = sweep(
        config,
        args.param,
        values,
        args.realizations,
        master_seed=seed,
        nested_topologies=args.nested_topologies,
        out_path=args.out,
    )
    if args.out:
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        print(CSV_HEADER)
        for r in rows:
            print(format_result_row(r))
    return 0


def _cmd_solve(args) -> int:
    config, seed = _load(args)
    if args.objective == "p3":
        if not args.stats:
            print("error: --stats is required for the p3 objective", file=sys.stderr)
            return 2
        obj = build_p3_objective(load_stats(args.stats))
    else:
        eta = config.heuristic_eta if args.eta is None else args.eta
        if args.locations:
            locs = _read_locations(args.locations)
        else:
            locs = draw_topology(config, derive_seeds(seed, 1)[0]).bs_locations
        obj = build_p4_objective(locs, eta=eta, num_bands=config.num_bands)
    result = _solve(obj, seed)
    print(result.assignment.compact())
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(result.assignment.compact() + "\n")
    return 0


def _cmd_train(args) -> int:
    config, seed = _load(args)
    if not args.out:
        print("error: --out is required for train", file=sys.stderr)
        return 2
    draw = simulate_draw(config, derive_seeds(seed, 1)[0])
    tau = config.sinr_threshold
    if args.low_overhead:
        probe = config.probe_band
        records = slot_records([draw.training_slots[probe - 1]], tau, config.num_bands)
        stats = replicate_across_bands(stats_from_records(records), probe)
    else:
        stats = stats_from_records(slot_records(draw.training_slots, tau, config.num_bands))
    save_stats(stats, args.out)
    print(f"wrote decode statistics ({config.num_bs} stations, {config.num_bands} bands) to {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "sweep": _cmd_sweep,
        "solve": _cmd_solve,
        "train": _cmd_train,
    }
    return handlers[args.command](args)
