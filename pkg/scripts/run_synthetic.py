#!/usr/bin/env python3
"""Run the 2-mode synthetic shift experiment (5 seeds) and print the
per-seed results.  Equivalent to:

    evomix -v run --config configs/synthetic_2mode.json

Extra CLI arguments are passed through (e.g. --seed 7 --jobs 4).
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from evomix.cli import main

if __name__ == "__main__":
    os.makedirs("runs", exist_ok=True)
    sys.exit(main(["-v", "run", "--config", "configs/synthetic_2mode.json"] + sys.argv[1:]))
