"""Gradient-divergence measures and their random-grouping expectations.

The pointwise global divergence at w splits exactly into an upward part
(group means vs the global mean) and a size-weighted downward part (workers
vs their group mean).  Under uniform random equal-size grouping the expected
upward and downward parts have closed forms proportional to (N-1)/(n-1); the
checkers here compare those closed forms against exhaustive enumeration or
Monte Carlo sampling.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, asdict
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BadLevelError,
    ExplosionError,
    SizeError,
    UnknownGroupError,
    UnsupportedError,
)
from .topology import (
    Grouping,
    MultiLevelTopology,
    enumerate_equal_groupings,
    uniform_random_grouping,
)

LEVEL_ENUMERATION_LIMIT = 8  # n! assignments enumerated up to here


def _worker_gradients(objective, w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    return np.stack([objective.grad(j, w) for j in range(objective.n_workers)])


def global_divergence(objective, w) -> float:
    """Mean squared deviation of worker gradients from the global gradient."""
    grads = _worker_gradients(objective, w)
    diffs = grads - grads.mean(axis=0)
    return float(np.mean(np.sum(diffs * diffs, axis=1)))


# the pointwise quantity is the same expression; the alias keeps call sites
# honest about whether they mean a bound or a value at one point
pointwise_global_divergence = global_divergence


def upward_divergence(objective, grouping: Grouping, w) -> float:
    """Size-weighted squared deviation of group-mean gradients from the global one."""
    grads = _worker_gradients(objective, w)
    gbar = grads.mean(axis=0)
    n = grouping.n
    total = 0.0
    for members in grouping.group_members:
        diff = grads[list(members)].mean(axis=0) - gbar
        total += len(members) / n * float(diff @ diff)
    return total


def downward_divergence(objective, grouping: Grouping, group: int, w) -> float:
    """Mean squared deviation of one group's worker gradients from the group mean."""
    if not 0 <= group < grouping.num_groups:
        raise UnknownGroupError(f"group {group} outside 0..{grouping.num_groups - 1}")
    grads = _worker_gradients(objective, w)
    members = list(grouping.group_members[group])
    local = grads[members]
    diffs = local - local.mean(axis=0)
    return float(np.mean(np.sum(diffs * diffs, axis=1)))


def weighted_downward_divergence(objective, grouping: Grouping, w) -> float:
    """Sum over groups of (n_i/n) times the group's downward divergence."""
    n = grouping.n
    return sum(
        len(members) / n * downward_divergence(objective, grouping, i, w)
        for i, members in enumerate(grouping.group_members)
    )


@dataclass(frozen=True)
class PartitionIdentity:
    lhs: float
    rhs: float
    residual: float


def check_partition_identity(objective, grouping: Grouping, w) -> PartitionIdentity:
    """Global divergence vs upward + weighted downward; exact in exact arithmetic."""
    lhs = global_divergence(objective, w)
    rhs = upward_divergence(objective, grouping, w) + weighted_downward_divergence(
        objective, grouping, w
    )
    return PartitionIdentity(lhs, rhs, abs(lhs - rhs))


def level_divergences(
    objective,
    topology: MultiLevelTopology,
    level: int,
    w,
    leaf_order: Optional[Sequence[int]] = None,
) -> tuple[float, tuple[float, ...]]:
    """Level-``level`` upward divergence and per-path downward divergences.

    ``leaf_order[slot]`` names the objective worker sitting at tree slot
    ``slot`` (identity if omitted).  Upward averages over the level's nodes;
    each downward entry averages over one node's descendant workers.
    """
    if not 1 <= level <= topology.levels - 1:
        raise BadLevelError(f"level {level} outside 1..{topology.levels - 1}")
    grads = _worker_gradients(objective, w)
    if leaf_order is not None:
        if sorted(leaf_order) != list(range(topology.n)):
            raise SizeError("leaf_order must be a permutation of 0..n-1")
        grads = grads[list(leaf_order)]
    gbar = grads.mean(axis=0)
    width = topology.subtree_leaves(level)
    nodes = grads.reshape(topology.server_count(level), width, -1)
    node_means = nodes.mean(axis=1)
    up_diffs = node_means - gbar
    upward = float(np.mean(np.sum(up_diffs * up_diffs, axis=1)))
    down_diffs = nodes - node_means[:, None, :]
    downward = tuple(
        float(v) for v in np.mean(np.sum(down_diffs * down_diffs, axis=2), axis=1)
    )
    return upward, downward


def expected_upward_closed_form(n: int, num_groups: int, pointwise_div: float) -> float:
    """Expected upward divergence under uniform random equal grouping."""
    if n < 2:
        raise SizeError("need at least two workers")
    return (num_groups - 1) / (n - 1) * pointwise_div


def expected_downward_closed_form(n: int, num_groups: int, pointwise_div: float) -> float:
    """Expected weighted downward divergence under uniform random equal grouping."""
    if n < 2:
        raise SizeError("need at least two workers")
    return (1.0 - (num_groups - 1) / (n - 1)) * pointwise_div


@dataclass(frozen=True)
class GroupingAverageCheck:
    """Empirical grouping average next to its closed form."""

    empirical_mean: float
    closed_form: float
    gap: float
    mode: str
    cases: int


def _grouping_stream(objective, num_groups, w, mode, samples, seed):
    n = objective.n_workers
    if n % num_groups != 0:
        raise SizeError(f"{num_groups} does not divide {n}")
    if mode == "enumerate":
        return list(enumerate_equal_groupings(n, num_groups))
    if mode == "monte-carlo":
        return [uniform_random_grouping(n, num_groups, seed + i) for i in range(samples)]
    raise UnsupportedError(f"unknown mode {mode!r}")


def check_expected_upward(
    objective,
    num_groups: int,
    w,
    mode: str = "enumerate",
    samples: int = 2000,
    seed: int = 0,
) -> GroupingAverageCheck:
    """Average upward divergence over groupings vs (N-1)/(n-1) x pointwise.

    In enumerate mode the equality is exact up to float rounding; Monte Carlo
    mode reports the sampling gap.
    """
    groupings = _grouping_stream(objective, num_groups, w, mode, samples, seed)
    values = [upward_divergence(objective, g, w) for g in groupings]
    empirical = math.fsum(values) / len(values)
    closed = expected_upward_closed_form(
        objective.n_workers, num_groups, pointwise_global_divergence(objective, w)
    )
    return GroupingAverageCheck(empirical, closed, abs(empirical - closed), mode, len(values))


def check_expected_downward(
    objective,
    num_groups: int,
    w,
    mode: str = "enumerate",
    samples: int = 2000,
    seed: int = 0,
) -> GroupingAverageCheck:
    """Average weighted downward divergence vs (1 - (N-1)/(n-1)) x pointwise."""
    groupings = _grouping_stream(objective, num_groups, w, mode, samples, seed)
    values = [weighted_downward_divergence(objective, g, w) for g in groupings]
    empirical = math.fsum(values) / len(values)
    closed = expected_downward_closed_form(
        objective.n_workers, num_groups, pointwise_global_divergence(objective, w)
    )
    return GroupingAverageCheck(empirical, closed, abs(empirical - closed), mode, len(values))


def check_expected_level_divergences(
    objective,
    topology: MultiLevelTopology,
    level: int,
    w,
    mode: str = "enumerate",
    samples: int = 2000,
    seed: int = 0,
) -> tuple[GroupingAverageCheck, GroupingAverageCheck]:
    """Level-wise analogue: average over uniform worker-to-leaf assignments.

    Upward should equal (n_l - 1)/(n - 1) x pointwise and pooled downward the
    complementary share.  Enumerates all n! assignments for n <= 8.
    """
    if not 1 <= level <= topology.levels - 1:
        raise BadLevelError(f"level {level} outside 1..{topology.levels - 1}")
    n = topology.n
    if objective.n_workers != n:
        raise SizeError(f"objective has {objective.n_workers} workers, tree has {n}")
    grads = _worker_gradients(objective, w)
    gbar = grads.mean(axis=0)
    if mode == "enumerate":
        if n > LEVEL_ENUMERATION_LIMIT:
            raise ExplosionError(
                f"n={n} leaf assignments are {math.factorial(n)}; use monte-carlo"
            )
        orders = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    elif mode == "monte-carlo":
        orders = np.stack(
            [
                np.random.Generator(np.random.Philox(key=[seed + i, 0])).permutation(n)
                for i in range(samples)
            ]
        )
    else:
        raise UnsupportedError(f"unknown mode {mode!r}")

    width = topology.subtree_leaves(level)
    count = topology.server_count(level)
    arranged = grads[orders].reshape(orders.shape[0], count, width, -1)
    node_means = arranged.mean(axis=2)
    up = np.mean(np.sum((node_means - gbar) ** 2, axis=2), axis=1)
    down = np.mean(
        np.sum((arranged - node_means[:, :, None, :]) ** 2, axis=3), axis=(1, 2)
    )
    pointwise = pointwise_global_divergence(objective, w)
    n_level = count
    upward_closed = expected_upward_closed_form(n, n_level, pointwise)
    downward_closed = expected_downward_closed_form(n, n_level, pointwise)
    up_mean = float(math.fsum(up.tolist()) / up.shape[0])
    down_mean = float(math.fsum(down.tolist()) / down.shape[0])
    return (
        GroupingAverageCheck(up_mean, upward_closed, abs(up_mean - upward_closed), mode, len(up)),
        GroupingAverageCheck(down_mean, downward_closed, abs(down_mean - downward_closed), mode, len(down)),
    )


@dataclass(frozen=True)
class DivergenceReport:
    """Pointwise divergences maximized over a probe set.

    For quadratics the values do not depend on the probe point, so a single
    probe is already the exact supremum and ``exact`` is set; otherwise the
    maxima are lower bounds of the true suprema.
    """

    global_div: float
    upward: float
    downward: tuple[float, ...]
    weighted_downward: float
    probe_count: int
    exact: bool
    note: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def estimate_sup_divergences(
    objective, grouping: Grouping, probes: Sequence[np.ndarray]
) -> DivergenceReport:
    """Maximize the pointwise divergences over a probe set of points."""
    probes = [np.asarray(p, dtype=np.float64) for p in probes]
    if not probes:
        raise SizeError("probe set must be non-empty")
    glob, up = [], []
    down = [[] for _ in range(grouping.num_groups)]
    for w in probes:
        glob.append(global_divergence(objective, w))
        up.append(upward_divergence(objective, grouping, w))
        for i in range(grouping.num_groups):
            down[i].append(downward_divergence(objective, grouping, i, w))
    exact = hasattr(objective, "curvature")
    down_max = tuple(max(vals) for vals in down)
    weighted = sum(
        len(m) / grouping.n * v for m, v in zip(grouping.group_members, down_max)
    )
    note = (
        "exact: quadratic divergences do not depend on the probe point"
        if exact
        else "estimate, not sup: maxima over the probe set only"
    )
    return DivergenceReport(
        global_div=max(glob),
        upward=max(up),
        downward=down_max,
        weighted_downward=weighted,
        probe_count=len(probes),
        exact=exact,
        note=note,
    )


def default_probe_set(
    mean_history: np.ndarray, count: int = 8, spread: float = 0.5, seed: int = 0
) -> list[np.ndarray]:
    """Trajectory snapshots plus Gaussian jitter around them."""
    from . import rng

    mean_history = np.atleast_2d(np.asarray(mean_history, dtype=np.float64))
    steps = np.linspace(0, mean_history.shape[0] - 1, num=min(count, mean_history.shape[0]))
    base = [mean_history[int(s)] for s in steps]
    gen = rng.stream_generator(seed, rng.DATA_STREAM, 2)
    jittered = [w + spread * gen.standard_normal(w.shape[0]) for w in base]
    return base + jittered
