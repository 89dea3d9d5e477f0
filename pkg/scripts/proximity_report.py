#!/usr/bin/env python3
"""Tabulate the bundle-proximity constant and its parts over a range of delta."""

import argparse

from singspec.construction import bundle_proximity


def parse_args(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--deltas", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.025])
    p.add_argument("--samples", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=0)
    return p.parse_args(argv)


if __name__ == "__main__":
    args = parse_args()
    print(f"{'delta':>8} {'N':>6} {'log10 K':>10} {'log10 KQ':>10} {'log10 C':>10}")
    for d in args.deltas:
        r = bundle_proximity(d, args.samples, args.seed)
        print(f"{d:8.4f} {r['N']:6d} {r['log10_K']:10.1f} {r['log10_KQ_at_max']:10.1f} {r['log10_C']:10.1f}")
