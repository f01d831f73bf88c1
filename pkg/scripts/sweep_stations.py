"""Sweep the station count and print per-strategy mean error rates."""
import argparse
import sys

import numpy as np

from unbsim.core import SimConfig
from unbsim.harness import STRATEGIES, load_config, sweep


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--values", default="3,4,5,6,7,8,9",
                        help="comma-separated station counts")
    parser.add_argument("--realizations", type=int, default=200)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--nested", action="store_true",
                        help="grow each topology instead of redrawing it, "
                             "making the oracle exactly monotone per realization")
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--out", help="write long-format rows as CSV")
    args = parser.parse_args(argv)

    cfg = load_config(args.config) if args.config else SimConfig()
    values = [int(v) for v in args.values.split(",")]
    rows = sweep(cfg, "num_bs", values, args.realizations,
                 master_seed=args.seed, nested_topologies=args.nested,
                 out_path=args.out)

    by_cell: dict[tuple, list] = {}
    for r in rows:
        by_cell.setdefault((r.param_value, r.strategy), []).append(r.error_rate)

    header = "stations " + " ".join(f"{s:>21s}" for s in STRATEGIES)
    print(header)
    for v in values:
        cells = " ".join(f"{np.mean(by_cell[(v, s)]):21.5f}" for s in STRATEGIES)
        print(f"{v:8d} {cells}")
    if args.out:
        print(f"wrote {len(rows)} rows to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
