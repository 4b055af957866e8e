#!/usr/bin/env python3
"""Run the sandwich grid config and print final metrics per run.

Usage: python scripts/run_sandwich_grid.py [--out DIR] [--threads N]
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from hsgd.harness import load_experiment, run_experiment


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="results/sandwich-grid")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()
    config = os.path.join(os.path.dirname(__file__), "..", "configs",
                          "sandwich_grid.toml")
    spec = load_experiment(config)
    summary = run_experiment(spec, args.out, threads=args.threads)
    width = max(len(r["name"]) for r in summary["runs"])
    print(f"{'run':<{width}}  final_loss    mean_grad_norm_sq  comm_ms")
    for row in summary["runs"]:
        print(f"{row['name']:<{width}}  {row['final_loss']:<12.6g}"
              f"  {row['mean_grad_norm_sq']:<17.6g}  {row['cum_comm_ms']:.1f}")
    print(f"\nwrote {len(summary['runs'])} traces to {args.out}")


if __name__ == "__main__":
    main()
