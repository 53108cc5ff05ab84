#!/usr/bin/env python3
"""Runs the desk-scale blob search and prints the resulting front.

Usage:
    python3 scripts/run_desk_scale.py [--config CONFIG] [--output DIR]
"""

import argparse
import sys
from pathlib import Path

from moncae.cli import cmd_evolve, parse_config

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--config", default=str(ROOT / "configs" / "blobs_small.yaml")
    )
    parser.add_argument("--output", default=None, help="override output_dir")
    args = parser.parse_args(argv)
    config = parse_config(args.config)
    status = cmd_evolve(config, args.output)
    if status != 0:
        return status
    out_root = Path(args.output if args.output is not None else config.output_dir)
    for seed in config.seeds:
        pareto = out_root / f"run_{seed}" / "pareto.csv"
        print(f"\n{pareto}:")
        print(pareto.read_text().rstrip())
    return 0


if __name__ == "__main__":
    sys.exit(main())
