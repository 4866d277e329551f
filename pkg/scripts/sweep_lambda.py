#!/usr/bin/env python3
"""Sweep the expansion threshold on the 4-mode synthetic stream and
print the expert-count/accuracy table (the ablation analogue).

    python3 scripts/sweep_lambda.py [--lambda 2e-5,5e-5,1e-4,3e-4,1e-3]
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from evomix.cli import main

DEFAULT_GRID = "2e-5,5e-5,1e-4,3e-4,1e-3"

if __name__ == "__main__":
    os.makedirs("runs", exist_ok=True)
    args = sys.argv[1:]
    if "--lambda" not in args:
        args = ["--lambda", DEFAULT_GRID] + args
    sys.exit(main(["-v", "sweep", "--config", "configs/synthetic_4mode.json"] + args))
