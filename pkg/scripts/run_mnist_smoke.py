#!/usr/bin/env python3
"""Long-running smoke search on downsampled MNIST.

Not part of the test suite: a full population-20, generation-20 search
takes on the order of an hour on a laptop CPU. The script only asserts
the two properties that survive any hardware: the archive hypervolume
never decreases, and the final front holds at least one architecture
compressing the input by a factor of two or more.

Usage:
    python3 scripts/run_mnist_smoke.py --images train-images-idx3-ubyte.gz \
        --labels train-labels-idx1-ubyte.gz [--output DIR] [--subset N]
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from moncae.cli import (
    DatasetConfig,
    EvaluatorConfig,
    EvolutionSettings,
    LimitsConfig,
    RunConfig,
    cmd_evolve,
)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--images", required=True, help="IDX image file (.gz ok)")
    parser.add_argument("--labels", default=None, help="IDX label file (.gz ok)")
    parser.add_argument("--output", default="runs/mnist_smoke")
    parser.add_argument("--population", type=int, default=20)
    parser.add_argument("--generations", type=int, default=20)
    parser.add_argument("--downsample", type=int, default=2)
    parser.add_argument("--subset", type=int, default=10000)
    parser.add_argument("--seed", type=int, default=46)
    args = parser.parse_args(argv)

    config = RunConfig(
        dataset=DatasetConfig(
            kind="idx",
            image_path=args.images,
            label_path=args.labels,
            downsample_factor=args.downsample,
            subset_n=args.subset,
            split_fractions=(0.8, 0.1, 0.1),
            seed=args.seed,
        ),
        evolution=EvolutionSettings(
            population_size=args.population, generations=args.generations
        ),
        limits=LimitsConfig(max_conv_layers=4, max_filters=32),
        evaluator=EvaluatorConfig(max_epochs=5, batch_size=256),
        seeds=(args.seed,),
    )
    status = cmd_evolve(config, args.output)
    if status != 0:
        return status

    run_dir = Path(args.output) / f"run_{args.seed}"
    records = [
        json.loads(line)
        for line in (run_dir / "generations.jsonl").read_text().splitlines()
    ]
    hvis = [r["archive_hvi"] for r in records]
    if not all(b >= a for a, b in zip(hvis, hvis[1:])):
        print("FAIL archive hypervolume decreased", file=sys.stderr)
        return 1

    meta = json.loads((run_dir / "meta.json").read_text())
    input_elements = int(np.prod(meta["input_shape"]))
    counts = []
    for line in (run_dir / "pareto.csv").read_text().splitlines()[1:]:
        loc = float(line.split(",")[1])
        counts.append(int(round(10**loc)))
    if not any(count <= input_elements // 2 for count in counts):
        print("FAIL no individual compresses by a factor of 2", file=sys.stderr)
        return 1

    print(
        f"OK archive hypervolume {hvis[-1]:.3f}, "
        f"smallest bottleneck {min(counts)} of {input_elements} elements"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
