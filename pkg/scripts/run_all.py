#!/usr/bin/env python3
"""Run every JSON config under configs/ through the CLI and print a status table."""

import argparse
import json
import sys
import time
from pathlib import Path

from singspec.cli import main

ROOT = Path(__file__).resolve().parents[1]


def parse_args(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--configs", type=Path, default=ROOT / "configs")
    p.add_argument("--out", type=Path, default=ROOT / "results")
    p.add_argument("--skip", nargs="*", default=[], help="config stems to skip")
    return p.parse_args(argv)


def run_all(configs: Path, out: Path, skip=()) -> int:
    worst = 0
    for cfg in sorted(configs.glob("*.json")):
        if cfg.stem in skip:
            continue
        experiment = json.loads(cfg.read_text())["experiment"]
        t0 = time.perf_counter()
        code = main([experiment, "--config", str(cfg), "--out", str(out / cfg.stem)])
        print(f"{cfg.stem:<20} {experiment:<20} exit {code}  {time.perf_counter() - t0:7.1f}s", flush=True)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    args = parse_args()
    sys.exit(run_all(args.configs, args.out, args.skip))
