"""Hierarchical aggregation trees, schedules, and grouping combinatorics.

Two tree shapes are supported: a two-level heterogeneous topology (groups of
possibly different sizes, each with its own local period, plus one global
period) and an M-level uniform tree (fixed branching and one period per
level).  Worker indices are assigned contiguously per group / per leaf path,
so a topology fully determines which array slice each aggregation touches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from .errors import (
    BadLevelError,
    DivisibilityError,
    EmptyGroupError,
    ExplosionError,
    NonSquareError,
    PeriodOrderError,
    SizeError,
    UnknownGroupError,
)

ENUMERATION_GUARD = 10_000


@dataclass(frozen=True, eq=False)
class TwoLevelTopology:
    """Groups of workers, each aggregating every ``local_periods[i]`` steps,
    with a global aggregation every ``global_period`` steps.

    The global period must be a common multiple of all local periods so the
    global round always lands on a local boundary.
    """

    group_sizes: tuple[int, ...]
    local_periods: tuple[int, ...]
    global_period: int

    def __post_init__(self):
        if len(self.group_sizes) == 0:
            raise SizeError("at least one group is required")
        if len(self.group_sizes) != len(self.local_periods):
            raise SizeError(
                f"{len(self.group_sizes)} group sizes vs "
                f"{len(self.local_periods)} local periods"
            )
        for i, size in enumerate(self.group_sizes):
            if size < 1:
                raise EmptyGroupError(f"group {i} has size {size}")
        for i, period in enumerate(self.local_periods):
            if period < 1:
                raise DivisibilityError(f"local period of group {i} is {period} < 1")
        if self.global_period < 1:
            raise DivisibilityError(f"global period {self.global_period} < 1")
        for i, period in enumerate(self.local_periods):
            if self.global_period % period != 0:
                raise DivisibilityError(
                    f"global period {self.global_period} is not a multiple of "
                    f"local period {period} (group {i})"
                )

    @property
    def n(self) -> int:
        return sum(self.group_sizes)

    @property
    def num_groups(self) -> int:
        return len(self.group_sizes)

    @cached_property
    def group_bounds(self) -> tuple[tuple[int, int], ...]:
        """Half-open worker-index range of each group."""
        bounds = []
        lo = 0
        for size in self.group_sizes:
            bounds.append((lo, lo + size))
            lo += size
        return tuple(bounds)

    @cached_property
    def groups(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(range(lo, hi)) for lo, hi in self.group_bounds)

    @cached_property
    def worker_group(self) -> np.ndarray:
        """Worker index -> group index."""
        out = np.empty(self.n, dtype=np.intp)
        for i, (lo, hi) in enumerate(self.group_bounds):
            out[lo:hi] = i
        return out

    def schedule_at(self, t: int):
        """Aggregation performed after step ``t`` (see :func:`schedule_level`)."""
        if t < 0:
            raise ValueError("iteration index must be >= 0")
        if (t + 1) % self.global_period == 0:
            return "global"
        due = tuple(
            i for i, period in enumerate(self.local_periods) if (t + 1) % period == 0
        )
        return ("local", due) if due else None


@dataclass(frozen=True, eq=False)
class MultiLevelTopology:
    """Uniform M-level tree: the root is level 0, servers occupy levels
    1..M-1 and workers sit at level M.  ``branching[l-1]`` children hang off
    every level-(l-1) node and ``periods[l-1]`` is the number of steps between
    aggregations of level-l state by its parent.

    Periods must decrease strictly toward the leaves, each being an integer
    multiple of the next, so a higher-level aggregation always subsumes the
    lower ones scheduled at the same step.
    """

    branching: tuple[int, ...]
    periods: tuple[int, ...]

    def __post_init__(self):
        if len(self.branching) != len(self.periods):
            raise SizeError(
                f"{len(self.branching)} branching factors vs "
                f"{len(self.periods)} periods"
            )
        if len(self.branching) < 2:
            raise SizeError("a multi-level tree needs at least 2 levels")
        for l, fanout in enumerate(self.branching):
            if fanout < 1:
                raise SizeError(f"branching factor at level {l + 1} is {fanout} < 1")
        if self.periods[-1] < 1:
            raise DivisibilityError(f"leaf period {self.periods[-1]} < 1")
        for l in range(1, len(self.periods)):
            if self.periods[l - 1] <= self.periods[l]:
                raise PeriodOrderError(
                    f"periods must decrease strictly: "
                    f"P{l}={self.periods[l - 1]} <= P{l + 1}={self.periods[l]}"
                )
            if self.periods[l - 1] % self.periods[l] != 0:
                raise DivisibilityError(
                    f"P{l}={self.periods[l - 1]} is not an integer multiple "
                    f"of P{l + 1}={self.periods[l]}"
                )

    @property
    def levels(self) -> int:
        return len(self.branching)

    @property
    def n(self) -> int:
        return math.prod(self.branching)

    def server_count(self, level: int) -> int:
        """Number of nodes at ``level`` (product of branching down to it)."""
        if not 0 <= level <= self.levels:
            raise BadLevelError(f"level {level} outside 0..{self.levels}")
        return math.prod(self.branching[:level])

    def subtree_leaves(self, level: int) -> int:
        """Workers under a single level-``level`` node."""
        if not 0 <= level <= self.levels:
            raise BadLevelError(f"level {level} outside 0..{self.levels}")
        return math.prod(self.branching[level:])

    def prefix_bounds(self, level: int) -> tuple[tuple[int, int], ...]:
        """Half-open worker ranges under each level-``level`` node, in path order."""
        width = self.subtree_leaves(level)
        return tuple(
            (k * width, (k + 1) * width) for k in range(self.server_count(level))
        )

    def path_of(self, worker: int) -> tuple[int, ...]:
        """Index path (k_1, ..., k_M) of a worker, each component 1-based."""
        if not 0 <= worker < self.n:
            raise IndexError(f"worker {worker} out of range for n={self.n}")
        path = []
        rem = worker
        for level in range(1, self.levels + 1):
            width = self.subtree_leaves(level)
            path.append(rem // width + 1)
            rem %= width
        return tuple(path)

    def worker_of(self, path: Sequence[int]) -> int:
        if len(path) != self.levels:
            raise SizeError(f"path length {len(path)} != {self.levels}")
        worker = 0
        for level, k in enumerate(path, start=1):
            if not 1 <= k <= self.branching[level - 1]:
                raise IndexError(f"path component {k} out of range at level {level}")
            worker += (k - 1) * self.subtree_leaves(level)
        return worker

    def schedule_at(self, t: int) -> Optional[int]:
        """Smallest level index whose period divides ``t + 1``, if any."""
        if t < 0:
            raise ValueError("iteration index must be >= 0")
        for i, period in enumerate(self.periods, start=1):
            if (t + 1) % period == 0:
                return i
        return None


Topology = Union[TwoLevelTopology, MultiLevelTopology]


def build_two_level(
    group_sizes: Sequence[int],
    local_periods: Sequence[int],
    global_period: int,
) -> TwoLevelTopology:
    """Validate and build a two-level topology with contiguous worker indices."""
    return TwoLevelTopology(tuple(group_sizes), tuple(local_periods), int(global_period))


def build_multi_level(
    branching: Sequence[int], periods: Sequence[int]
) -> MultiLevelTopology:
    """Validate and build a uniform M-level tree (M >= 2)."""
    return MultiLevelTopology(tuple(branching), tuple(int(p) for p in periods))


def schedule_level(topology: Topology, t: int):
    """What is aggregated and distributed after step ``t``.

    For a multi-level tree, returns the smallest level index i with
    P_i | (t + 1) (the levels below are subsumed), or None.  For a two-level
    topology, returns "global" when the global period divides t + 1, else
    ("local", group_indices) for the groups whose local period does, or None.
    """
    return topology.schedule_at(t)


def two_level_equivalent(topology: MultiLevelTopology) -> TwoLevelTopology:
    """The two-level topology matching an M=2 tree."""
    if topology.levels != 2:
        raise SizeError("only an M=2 tree has a two-level equivalent")
    n1, n2 = topology.branching
    return build_two_level(
        [n2] * n1, [topology.periods[1]] * n1, topology.periods[0]
    )


@dataclass(frozen=True, eq=False)
class Grouping:
    """Assignment of workers to groups plus how it was produced.

    ``origin`` is one of "fixed", "uniform-random", "group-iid",
    "group-non-iid"; it is bookkeeping only and does not affect values.
    """

    assignment: tuple[int, ...]
    origin: str = "fixed"

    def __post_init__(self):
        if len(self.assignment) == 0:
            raise SizeError("empty grouping")
        num = max(self.assignment) + 1
        seen = set(self.assignment)
        if min(self.assignment) < 0 or seen != set(range(num)):
            raise SizeError("group indices must cover 0..N-1 with no gaps")

    @property
    def n(self) -> int:
        return len(self.assignment)

    @property
    def num_groups(self) -> int:
        return max(self.assignment) + 1

    @cached_property
    def group_members(self) -> tuple[tuple[int, ...], ...]:
        members = [[] for _ in range(self.num_groups)]
        for worker, group in enumerate(self.assignment):
            members[group].append(worker)
        return tuple(tuple(m) for m in members)

    @property
    def group_sizes(self) -> tuple[int, ...]:
        return tuple(len(m) for m in self.group_members)

    def members(self, group: int) -> tuple[int, ...]:
        if not 0 <= group < self.num_groups:
            raise UnknownGroupError(f"group {group} outside 0..{self.num_groups - 1}")
        return self.group_members[group]


def grouping_from_sets(sets: Sequence[Sequence[int]], origin: str = "fixed") -> Grouping:
    n = sum(len(s) for s in sets)
    assignment = [-1] * n
    for g, members in enumerate(sets):
        for worker in members:
            if not 0 <= worker < n or assignment[worker] != -1:
                raise SizeError("sets must partition 0..n-1")
            assignment[worker] = g
    return Grouping(tuple(assignment), origin)


def contiguous_grouping(group_sizes: Sequence[int], origin: str = "fixed") -> Grouping:
    assignment = []
    for g, size in enumerate(group_sizes):
        if size < 1:
            raise EmptyGroupError(f"group {g} has size {size}")
        assignment.extend([g] * size)
    return Grouping(tuple(assignment), origin)


def round_robin_grouping(n: int, num_groups: int, origin: str = "group-iid") -> Grouping:
    """Deal workers 0..n-1 into groups in turn.

    With workers sorted by data cluster this spreads every cluster across all
    groups, driving the upward divergence toward zero.
    """
    if n % num_groups != 0:
        raise SizeError(f"{num_groups} does not divide {n}")
    return Grouping(tuple(w % num_groups for w in range(n)), origin)


def uniform_random_grouping(n: int, num_groups: int, seed: int) -> Grouping:
    """One equal-size grouping drawn uniformly at random."""
    if n % num_groups != 0:
        raise SizeError(f"{num_groups} does not divide {n}")
    per_group = n // num_groups
    rng = np.random.Generator(np.random.Philox(key=[seed, _GROUPING_STREAM]))
    order = rng.permutation(n)
    assignment = [0] * n
    for slot, worker in enumerate(order):
        assignment[int(worker)] = slot // per_group
    # normalize group labels so that the grouping is a canonical partition
    return Grouping(_canonical_labels(assignment), "uniform-random")


_GROUPING_STREAM = 3 << 48


def _canonical_labels(assignment: Sequence[int]) -> tuple[int, ...]:
    """Relabel groups in order of first appearance."""
    table: dict[int, int] = {}
    out = []
    for g in assignment:
        if g not in table:
            table[g] = len(table)
        out.append(table[g])
    return tuple(out)


def count_equal_groupings(n: int, num_groups: int) -> int:
    """Number of unordered partitions of n workers into equal groups."""
    if n < 1 or num_groups < 1 or n % num_groups != 0:
        raise SizeError(f"{num_groups} does not divide {n}")
    per_group = n // num_groups
    return math.factorial(n) // (
        math.factorial(per_group) ** num_groups * math.factorial(num_groups)
    )


def enumerate_equal_groupings(n: int, num_groups: int) -> Iterator[Grouping]:
    """Yield every unordered equal-size partition of workers 0..n-1 exactly once.

    Refuses to enumerate more than ENUMERATION_GUARD partitions; fall back to
    Monte Carlo sampling above that.
    """
    total = count_equal_groupings(n, num_groups)
    if total > ENUMERATION_GUARD:
        raise ExplosionError(
            f"{total} partitions exceed the enumeration guard ({ENUMERATION_GUARD})"
        )
    per_group = n // num_groups

    def rec(remaining: tuple[int, ...]):
        if not remaining:
            yield []
            return
        first, rest = remaining[0], remaining[1:]
        for companions in combinations(rest, per_group - 1):
            group = (first,) + companions
            taken = set(companions)
            tail = tuple(w for w in rest if w not in taken)
            for others in rec(tail):
                yield [group] + others

    for sets in rec(tuple(range(n))):
        yield grouping_from_sets(sets, origin="fixed")


def aggregation_matrix(topology: TwoLevelTopology) -> np.ndarray:
    """Block-diagonal averaging matrix of a local aggregation round.

    Each group's block has every entry 1/n_i, so the matrix is doubly
    stochastic and acts as in-group averaging.
    """
    n = topology.n
    out = np.zeros((n, n))
    for lo, hi in topology.group_bounds:
        out[lo:hi, lo:hi] = 1.0 / (hi - lo)
    return out


def count_unit_eigenvalues(matrix: np.ndarray) -> int:
    """Multiplicity of eigenvalue 1, via n - rank(A - I).

    Exact for averaging matrices (entries are small rationals and the
    eigenvalue-1 eigenspace is spanned by indicator vectors).
    """
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise NonSquareError(f"expected a square matrix, got shape {matrix.shape}")
    n = matrix.shape[0]
    return int(n - np.linalg.matrix_rank(matrix - np.eye(n)))
