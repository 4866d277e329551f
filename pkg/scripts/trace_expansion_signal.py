#!/usr/bin/env python3
"""Trace the per-expert expansion statistic over a run without letting
the model expand (threshold forced to 0), to calibrate lambda for a new
data source.

    python3 scripts/trace_expansion_signal.py --config configs/synthetic_2mode.json --seed 0

Prints one line per full-buffer check: step, min statistic, buffer
size.  Pick lambda between the matched-phase floor and the dip you want
to trigger on; values above the whole band make the model expand at
every check (one expert per memory window).
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import numpy as np

from evomix.config import load_config
from evomix.harness import build_model, build_stream_and_test


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--every", type=int, default=1, help="print every n-th check")
    args = parser.parse_args()

    config = load_config(args.config)
    config.model.lam = 0.0
    config.model.direction = "below"
    stream, _ = build_stream_and_test(config, args.seed)
    rng = np.random.default_rng(args.seed)
    model, buffer = build_model(config, rng)

    values = []
    while (batch := stream.next_batch()) is not None:
        report = model.train_step(batch, buffer, rng)
        if report is not None:
            values.append(report.min_value)
            if (len(values) - 1) % args.every == 0:
                print(f"step {report.step:5d}  min {report.min_value:.4e}  buffer {len(buffer)}")
    if values:
        arr = np.array(values)
        print(
            f"\nchecks {arr.size}: min {arr.min():.3e}  median {np.median(arr):.3e}  "
            f"max {arr.max():.3e}"
        )
    else:
        print("buffer never filled; no checks ran")


if __name__ == "__main__":
    main()
