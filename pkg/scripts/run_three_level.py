#!/usr/bin/env python3
"""Run the three-level config and print comm totals per run.

Usage: python scripts/run_three_level.py [--out DIR]
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from hsgd.harness import load_experiment, run_experiment


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="results/three-level")
    args = parser.parse_args()
    config = os.path.join(os.path.dirname(__file__), "..", "configs",
                          "three_level.toml")
    spec = load_experiment(config)
    summary = run_experiment(spec, args.out)
    width = max(len(r["name"]) for r in summary["runs"])
    print(f"{'run':<{width}}  final_loss    comm_ms    compute_ms")
    for row in summary["runs"]:
        print(f"{row['name']:<{width}}  {row['final_loss']:<12.6g}"
              f"  {row['cum_comm_ms']:<9.1f}  {row['cum_compute_ms']:.1f}")


if __name__ == "__main__":
    main()
