#!/usr/bin/env python3
"""Time needed to reach a shared loss target, per schedule.

Desk-scale counterpart of a wall-clock-to-accuracy table: every case runs
the same seeds on the non-IID quadratic fixture, the target is the loss the
P=5 baseline ends at, and the cost model charges one latency per synchronous
round (unit model by default).

Usage: python scripts/comm_tradeoff_table.py [--model unit] [--seeds N]
"""

import argparse
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from hsgd.bounds import lr_max
from hsgd.comm import builtin_model, time_to_target
from hsgd.engine import RunConfig, run
from hsgd.objectives import make_quadratic_fixture
from hsgd.topology import build_two_level

CASES = {
    "P=5": build_two_level([10], [5], 5),
    "P=10": build_two_level([10], [10], 10),
    "P=50": build_two_level([10], [50], 50),
    "G=50,I=5": build_two_level([5, 5], [5, 5], 50),
    "G=50,I=10": build_two_level([5, 5], [10, 10], 50),
}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--model", default="unit")
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--horizon", type=int, default=1000)
    args = parser.parse_args()
    model = builtin_model(args.model)
    objective = make_quadratic_fixture("QF10")
    gamma = 0.8 * lr_max(50, objective.lipschitz)

    totals = {name: [] for name in CASES}
    for seed in range(args.seeds):
        traces = {}
        for name, topo in CASES.items():
            traces[name] = run(RunConfig(
                topology=topo, objective=objective, gamma=gamma,
                horizon=args.horizon, seed=seed, w0=1.0,
                noise="gaussian", sigma2=0.25,
            ))
        target = float(traces["P=5"].loss[-1]) * (1.0 + 1e-9)
        for name, trace in traces.items():
            hit = time_to_target(trace, model, "loss", target)
            totals[name].append(hit.total_ms if hit else float("nan"))

    print(f"target: final P=5 loss, {args.seeds} seeds, model={args.model}")
    print(f"{'case':<10}  mean total time (ms)")
    for name, values in totals.items():
        arr = np.array(values)
        reached = np.isfinite(arr)
        label = f"{np.nanmean(arr):.1f}" if reached.any() else "never"
        misses = int((~reached).sum())
        suffix = f"  ({misses} seeds never reached target)" if misses else ""
        print(f"{name:<10}  {label}{suffix}")


if __name__ == "__main__":
    main()
