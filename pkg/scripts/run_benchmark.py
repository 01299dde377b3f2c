#!/usr/bin/env python3
"""Run the desk-scale benchmark matrix and print the comparison table.

Equivalent to ``chargeplan benchmark`` but convenient to edit for one-off
experiments (different seed counts, b ranges, or algorithm subsets).

Examples:
    python scripts/run_benchmark.py
    python scripts/run_benchmark.py --suite tiny --seeds 5 --b-values 0,1,2,3
    EVCEC_THREADS=4 python scripts/run_benchmark.py --seeds 8
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from chargeplan.cli import main  # noqa: E402

if __name__ == "__main__":
    argv = sys.argv[1:]
    if not any(a.startswith("--out-dir") for a in argv):
        argv += ["--out-dir", "benchmark_out"]
    if not any(a == "--suite" or a.startswith("--suite=") for a in argv):
        argv = ["--suite", "tiny"] + argv
    sys.exit(main(["benchmark"] + argv))
