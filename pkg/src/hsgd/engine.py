"""Execution engines for two-level and M-level hierarchical SGD.

Both engines advance every worker by one SGD step per iteration and then
apply whatever aggregation the schedule calls for, replacing worker rows by
segment means and logging the event.  The per-iteration record always tracks
the virtual global average (the plain mean over workers), whether or not any
server currently materializes it.

Reductions run in fixed ascending worker order with sequential accumulation,
so traces are bit-reproducible and the two engines agree exactly on
equivalent schedules.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import rng
from .bounds import lr_max
from .errors import (
    LrTooLargeError,
    NonFiniteParameterError,
    NonPositiveError,
    SizeError,
    UnsupportedError,
)
from .objectives import GradientOracle
from .topology import MultiLevelTopology, Topology, TwoLevelTopology

MEAN_DRIFT_TOL = 1e-12

LR_POLICIES = ("enforce", "warn")


@dataclass(eq=False)
class RunConfig:
    """Everything a run needs; two configs with equal fields give equal traces."""

    topology: Topology
    objective: object
    gamma: float
    horizon: int
    seed: int = 0
    w0: Union[float, Sequence[float], np.ndarray] = 0.0
    noise: str = "exact"
    sigma2: float = 0.0
    batch_size: int = 1
    participation: float = 1.0
    lr_policy: str = "enforce"
    eval_stride: int = 1
    idle_workers_step: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise SizeError(f"horizon must be >= 1, got {self.horizon}")
        if self.gamma <= 0:
            raise NonPositiveError("gamma must be > 0")
        if not 0.0 < self.participation <= 1.0:
            raise NonPositiveError(
                f"participation must be in (0, 1], got {self.participation}"
            )
        if self.lr_policy not in LR_POLICIES:
            raise UnsupportedError(f"unknown lr policy {self.lr_policy!r}")
        if self.eval_stride < 1:
            raise SizeError("eval_stride must be >= 1")

    @property
    def reference_period(self) -> int:
        if isinstance(self.topology, TwoLevelTopology):
            return self.topology.global_period
        return self.topology.periods[0]

    def lr_limit(self) -> float:
        return lr_max(self.reference_period, self.objective.lipschitz)

    def make_oracle(self) -> GradientOracle:
        return GradientOracle(
            self.objective,
            noise=self.noise,
            sigma2=self.sigma2,
            batch_size=self.batch_size,
            seed=self.seed,
        )

    def initial_workers(self) -> np.ndarray:
        n, d = self.topology.n, self.objective.dim
        w0 = np.asarray(self.w0, dtype=np.float64)
        if w0.ndim == 0:
            w0 = np.full(d, float(w0))
        if w0.shape != (d,):
            raise SizeError(f"w0 must broadcast to dimension {d}, got {w0.shape}")
        return np.tile(w0, (n, 1))


@dataclass(eq=False)
class RunTrace:
    """Per-iteration record of a run; exactly ``horizon`` rows."""

    t: np.ndarray
    loss: np.ndarray
    grad_norm_sq: np.ndarray
    upward_mse: np.ndarray
    downward_mse: np.ndarray
    events: list[str]
    cum_local_rounds: np.ndarray
    cum_global_rounds: np.ndarray
    mean_history: np.ndarray
    final_workers: np.ndarray
    meta: dict
    level_upward_mse: Optional[np.ndarray] = None
    level_downward_mse: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.t.shape[0]

    @property
    def levels(self) -> int:
        if self.level_upward_mse is None:
            return 2
        return self.level_upward_mse.shape[1] + 1

    def mean_grad_norm_sq(self) -> float:
        return float(np.nanmean(self.grad_norm_sq))

    def mean_loss(self) -> float:
        return float(np.nanmean(self.loss))


def _ordered_sum(rows: np.ndarray) -> np.ndarray:
    acc = rows[0].copy()
    for k in range(1, rows.shape[0]):
        acc += rows[k]
    return acc


def _segment_mean(W: np.ndarray, lo: int, hi: int) -> np.ndarray:
    return _ordered_sum(W[lo:hi]) / (hi - lo)


def _rows_mean(W: np.ndarray, rows: Sequence[int]) -> np.ndarray:
    acc = W[rows[0]].copy()
    for j in rows[1:]:
        acc += W[j]
    return acc / len(rows)


def sample_participants(
    members: Sequence[int], rho: float, seed: int, round_index: int, group: int = 0
) -> tuple[int, ...]:
    """ceil(rho * n_i) members, uniform without replacement, fixed by
    (seed, group, round_index)."""
    if not 0.0 < rho <= 1.0:
        raise NonPositiveError(f"participation must be in (0, 1], got {rho}")
    members = tuple(members)
    k = math.ceil(rho * len(members))
    if k >= len(members):
        return members
    gen = rng.stream_generator(seed, rng.PARTICIPATION_STREAM + group, round_index)
    picked = gen.permutation(len(members))[:k]
    return tuple(sorted(members[int(i)] for i in picked))


def _block_mses(W: np.ndarray, bounds: Sequence[tuple[int, int]]) -> tuple[float, float]:
    n = W.shape[0]
    wbar = W.mean(axis=0)
    up = 0.0
    down = 0.0
    for lo, hi in bounds:
        gmean = W[lo:hi].mean(axis=0)
        diff = gmean - wbar
        up += (hi - lo) / n * float(diff @ diff)
        local = W[lo:hi] - gmean
        down += float(np.sum(local * local)) / n
    return up, down


def two_level_mses(W: np.ndarray, topology: TwoLevelTopology) -> tuple[float, float]:
    """(upward, downward) parameter MSEs of the current worker state.

    Upward weighs each group's squared distance from the global mean by its
    size share; downward averages worker distances from their group mean.
    """
    return _block_mses(W, topology.group_bounds)


def multi_level_mses(
    W: np.ndarray, topology: MultiLevelTopology
) -> list[tuple[float, float]]:
    """Per-level (upward, downward) parameter MSEs for levels 1..M-1."""
    return [
        _block_mses(W, topology.prefix_bounds(level))
        for level in range(1, topology.levels)
    ]


def measure_parameter_mses(W: np.ndarray, topology: Topology):
    """Dispatch on topology kind; see the two shape-specific helpers."""
    if isinstance(topology, TwoLevelTopology):
        return two_level_mses(W, topology)
    return multi_level_mses(W, topology)


def _checked_lr(config: RunConfig) -> tuple[float, bool]:
    limit = config.lr_limit()
    violated = config.gamma > limit
    if violated:
        if config.lr_policy == "enforce":
            raise LrTooLargeError(
                f"gamma={config.gamma} exceeds the validity limit {limit} "
                f"(period {config.reference_period}, L={config.objective.lipschitz}); "
                "use lr_policy='warn' to run anyway"
            )
        warnings.warn(
            f"gamma={config.gamma} exceeds the validity limit {limit}",
            RuntimeWarning,
            stacklevel=3,
        )
    return limit, violated


def _require_finite(W: np.ndarray, t: int) -> None:
    if not np.isfinite(W).all():
        bad = np.argwhere(~np.isfinite(W))
        raise NonFiniteParameterError(
            f"non-finite parameter at iteration {t}, worker {int(bad[0][0])}, "
            f"coordinate {int(bad[0][1])}"
        )


def run_two_level(config: RunConfig) -> RunTrace:
    """Execute the two-level schedule.

    Each group averages whenever its local period divides t+1; the average is
    redistributed within the group unless the global period also divides t+1,
    in which case a single global average is formed over all workers and
    distributed everywhere.  With participation < 1 only the sampled workers
    of each group round step, aggregate and receive the result; the others
    stay frozen and sync up at the next round that samples them.
    """
    topo = config.topology
    if not isinstance(topo, TwoLevelTopology):
        raise UnsupportedError("run_two_level needs a TwoLevelTopology")
    obj = config.objective
    if obj.n_workers != topo.n:
        raise SizeError(f"objective has {obj.n_workers} workers, topology {topo.n}")
    limit, violated = _checked_lr(config)
    oracle = config.make_oracle()
    n, d, T = topo.n, obj.dim, config.horizon
    gamma = config.gamma
    W = config.initial_workers()
    bounds_ = topo.group_bounds

    loss = np.full(T, np.nan)
    gns = np.full(T, np.nan)
    up = np.full(T, np.nan)
    down = np.full(T, np.nan)
    mean_hist = np.empty((T, d))
    events: list[str] = []
    cum_local = np.zeros(T, dtype=np.int64)
    cum_global = np.zeros(T, dtype=np.int64)
    n_local = n_global = 0
    max_drift = 0.0

    partial = config.participation < 1.0
    if partial:
        active = np.zeros(n, dtype=bool)
        last_agg = config.initial_workers()[: topo.num_groups].copy()
        participants: list[tuple[int, ...]] = [() for _ in range(topo.num_groups)]

    for t in range(T):
        if partial:
            for i, (lo, hi) in enumerate(bounds_):
                if t % topo.local_periods[i] == 0:
                    chosen = sample_participants(
                        range(lo, hi),
                        config.participation,
                        config.seed,
                        t // topo.local_periods[i],
                        group=i,
                    )
                    participants[i] = chosen
                    active[lo:hi] = False
                    for j in chosen:
                        active[j] = True
                        W[j] = last_agg[i]

        wbar = _segment_mean(W, 0, n)
        mean_hist[t] = wbar
        if t % config.eval_stride == 0:
            loss[t] = obj.global_loss(wbar)
            g = obj.global_grad(wbar)
            gns[t] = float(g @ g)
            up[t], down[t] = two_level_mses(W, topo)

        for j in range(n):
            if partial and not (active[j] or config.idle_workers_step):
                continue
            W[j] -= gamma * oracle.sample(j, W[j], t)

        event = ""
        if (t + 1) % topo.global_period == 0:
            if partial:
                rows = [j for chosen in participants for j in chosen]
                agg = _rows_mean(W, rows)
                for j in rows:
                    W[j] = agg
                last_agg[:] = agg
            else:
                agg = _segment_mean(W, 0, n)
                W[:] = agg
                after = _segment_mean(W, 0, n)
                max_drift = max(max_drift, _relative_drift(agg, after))
            event = "global"
            n_global += 1
        else:
            due = [
                i for i, period in enumerate(topo.local_periods) if (t + 1) % period == 0
            ]
            if due:
                if partial:
                    for i in due:
                        rows = participants[i]
                        if rows:
                            agg = _rows_mean(W, rows)
                            for j in rows:
                                W[j] = agg
                            last_agg[i] = agg
                else:
                    before = _segment_mean(W, 0, n)
                    for i in due:
                        lo, hi = bounds_[i]
                        W[lo:hi] = _segment_mean(W, lo, hi)
                    after = _segment_mean(W, 0, n)
                    max_drift = max(max_drift, _relative_drift(before, after))
                event = "local:" + "|".join(str(i) for i in due)
                n_local += 1
        _require_finite(W, t)
        events.append(event)
        cum_local[t] = n_local
        cum_global[t] = n_global

    return RunTrace(
        t=np.arange(T),
        loss=loss,
        grad_norm_sq=gns,
        upward_mse=up,
        downward_mse=down,
        events=events,
        cum_local_rounds=cum_local,
        cum_global_rounds=cum_global,
        mean_history=mean_hist,
        final_workers=W,
        meta={
            "mode": "two-level",
            "seed": config.seed,
            "gamma": gamma,
            "horizon": T,
            "noise": config.noise,
            "sigma2": config.sigma2,
            "participation": config.participation,
            "lr_max": limit,
            "lr_violated": violated,
            "mean_drift_max": max_drift,
            "group_sizes": list(topo.group_sizes),
            "local_periods": list(topo.local_periods),
            "global_period": topo.global_period,
        },
    )


def run_multi_level(config: RunConfig) -> RunTrace:
    """Execute the M-level schedule.

    After the step, the smallest level index whose period divides t+1 fires:
    worker blocks under each node one level above it are averaged directly
    and redistributed, which subsumes every lower-level aggregation due at
    the same step.
    """
    topo = config.topology
    if not isinstance(topo, MultiLevelTopology):
        raise UnsupportedError("run_multi_level needs a MultiLevelTopology")
    if config.participation < 1.0:
        raise UnsupportedError(
            "partial participation is defined for the two-level engine only"
        )
    obj = config.objective
    if obj.n_workers != topo.n:
        raise SizeError(f"objective has {obj.n_workers} workers, topology {topo.n}")
    limit, violated = _checked_lr(config)
    oracle = config.make_oracle()
    n, d, T = topo.n, obj.dim, config.horizon
    gamma = config.gamma
    W = config.initial_workers()
    M = topo.levels
    pool_bounds = {level: topo.prefix_bounds(level - 1) for level in range(1, M + 1)}

    loss = np.full(T, np.nan)
    gns = np.full(T, np.nan)
    lvl_up = np.full((T, M - 1), np.nan)
    lvl_down = np.full((T, M - 1), np.nan)
    mean_hist = np.empty((T, d))
    events: list[str] = []
    cum_local = np.zeros(T, dtype=np.int64)
    cum_global = np.zeros(T, dtype=np.int64)
    n_local = n_global = 0
    max_drift = 0.0

    for t in range(T):
        wbar = _segment_mean(W, 0, n)
        mean_hist[t] = wbar
        if t % config.eval_stride == 0:
            loss[t] = obj.global_loss(wbar)
            g = obj.global_grad(wbar)
            gns[t] = float(g @ g)
            for k, (u, dn) in enumerate(multi_level_mses(W, topo)):
                lvl_up[t, k] = u
                lvl_down[t, k] = dn

        for j in range(n):
            W[j] -= gamma * oracle.sample(j, W[j], t)

        event = ""
        fired = topo.schedule_at(t)
        if fired is not None:
            before = _segment_mean(W, 0, n)
            for lo, hi in pool_bounds[fired]:
                W[lo:hi] = _segment_mean(W, lo, hi)
            after = _segment_mean(W, 0, n)
            max_drift = max(max_drift, _relative_drift(before, after))
            event = f"level:{fired}"
            if fired == 1:
                n_global += 1
            else:
                n_local += 1
        _require_finite(W, t)
        events.append(event)
        cum_local[t] = n_local
        cum_global[t] = n_global

    return RunTrace(
        t=np.arange(T),
        loss=loss,
        grad_norm_sq=gns,
        upward_mse=lvl_up[:, 0].copy(),
        downward_mse=lvl_down[:, -1].copy(),
        events=events,
        cum_local_rounds=cum_local,
        cum_global_rounds=cum_global,
        mean_history=mean_hist,
        final_workers=W,
        meta={
            "mode": "multi-level",
            "seed": config.seed,
            "gamma": gamma,
            "horizon": T,
            "noise": config.noise,
            "sigma2": config.sigma2,
            "participation": config.participation,
            "lr_max": limit,
            "lr_violated": violated,
            "mean_drift_max": max_drift,
            "branching": list(topo.branching),
            "periods": list(topo.periods),
        },
        level_upward_mse=lvl_up,
        level_downward_mse=lvl_down,
    )


def run(config: RunConfig) -> RunTrace:
    """Dispatch on the topology kind."""
    if isinstance(config.topology, TwoLevelTopology):
        return run_two_level(config)
    return run_multi_level(config)


def _relative_drift(before: np.ndarray, after: np.ndarray) -> float:
    scale = max(1.0, float(np.linalg.norm(before)))
    return float(np.linalg.norm(after - before)) / scale
