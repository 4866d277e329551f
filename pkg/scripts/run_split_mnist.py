#!/usr/bin/env python3
"""Run the full Split MNIST protocol (b=10, memory 2000, sliding-window
dropout, 5 seeds).

Expects the four standard IDX files; point EVOMIX_DATA_DIR at the
directory holding them (paths in the config are relative):

    EVOMIX_DATA_DIR=/path/to/mnist python3 scripts/run_split_mnist.py --jobs 5

Use configs/split_mnist_fast.json for the 14x14 quick variant.
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from evomix.cli import main

if __name__ == "__main__":
    os.makedirs("runs", exist_ok=True)
    config = "configs/split_mnist.json"
    args = sys.argv[1:]
    if "--fast" in args:
        args.remove("--fast")
        config = "configs/split_mnist_fast.json"
    sys.exit(main(["-v", "run", "--config", config] + args))
