"""Wall-clock accounting of communication and computation for a run trace.

Charging is synchronous per round: one latency per aggregation event
regardless of how many workers or groups took part, and a global round
subsumes the local rounds scheduled at the same step.  Compute time accrues
per iteration and is strictly additive with communication (no overlap).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng
from .engine import RunTrace
from .errors import NonPositiveError, UnknownModelError, UnsupportedError


@dataclass(frozen=True)
class CommModel:
    """Latencies in milliseconds.

    ``level_latencies`` (root first) serves M-level traces; when absent,
    level 1 falls back to ``global_latency`` and deeper levels to
    ``local_latency``.  Optional jitter adds seeded Gaussian noise per charge.
    """

    local_latency: float
    global_latency: float
    compute_per_iteration: float = 0.0
    level_latencies: Optional[tuple[float, ...]] = None
    jitter_std: float = 0.0
    jitter_seed: int = 0

    def __post_init__(self):
        if min(self.local_latency, self.global_latency, self.compute_per_iteration) < 0:
            raise NonPositiveError("latencies must be >= 0")
        if self.jitter_std < 0:
            raise NonPositiveError("jitter_std must be >= 0")
        if self.level_latencies is not None:
            lats = self.level_latencies
            if any(v < 0 for v in lats):
                raise NonPositiveError("latencies must be >= 0")
            if any(lats[i] < lats[i + 1] for i in range(len(lats) - 1)):
                warnings.warn(
                    "level latencies usually do not increase toward the leaves",
                    RuntimeWarning,
                    stacklevel=2,
                )

    def level_latency(self, level: int) -> float:
        if self.level_latencies is not None:
            if not 1 <= level <= len(self.level_latencies):
                raise UnsupportedError(
                    f"no latency for level {level} in a "
                    f"{len(self.level_latencies)}-level model"
                )
            return self.level_latencies[level - 1]
        return self.global_latency if level == 1 else self.local_latency


_BUILTINS = {
    # measured round-trip times of a small conv net and VGG-11 between a home
    # device and near/far EC2 instances; compute is the measured 4 ms VGG-11
    # iteration
    "cnn-emnist": lambda: CommModel(local_latency=0.29, global_latency=4.53),
    "vgg11": lambda: CommModel(
        local_latency=27.81, global_latency=291.82, compute_per_iteration=4.0
    ),
    # three-level variant: mid-level servers at twice the near latency
    "vgg11-3level": lambda: CommModel(
        local_latency=27.81,
        global_latency=291.82,
        compute_per_iteration=4.0,
        level_latencies=(291.82, 55.62, 27.81),
    ),
    "unit": lambda: CommModel(local_latency=1.0, global_latency=10.0),
}


def builtin_model(name: str) -> CommModel:
    """Named latency presets: cnn-emnist, vgg11, vgg11-3level, unit."""
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise UnknownModelError(
            f"unknown comm model {name!r}; available: {sorted(_BUILTINS)}"
        ) from None


@dataclass(frozen=True)
class CommSeries:
    """Cumulative times aligned to the trace records."""

    cum_comm_ms: np.ndarray
    cum_compute_ms: np.ndarray

    def total_at(self, t: int) -> float:
        return float(self.cum_comm_ms[t] + self.cum_compute_ms[t])


def _event_charge(event: str, model: CommModel) -> float:
    if not event:
        return 0.0
    if event == "global":
        return model.global_latency
    if event.startswith("local"):
        return model.local_latency
    if event.startswith("level:"):
        return model.level_latency(int(event.split(":", 1)[1]))
    raise UnsupportedError(f"unknown event {event!r}")


def account(trace: RunTrace, model: CommModel) -> CommSeries:
    """Cumulative (comm, compute) per iteration for a finished trace."""
    T = len(trace)
    comm = np.zeros(T)
    running = 0.0
    for t, event in enumerate(trace.events):
        charge = _event_charge(event, model)
        if charge > 0.0 and model.jitter_std > 0.0:
            gen = rng.stream_generator(model.jitter_seed, rng.JITTER_STREAM, t)
            charge = max(0.0, charge + model.jitter_std * gen.standard_normal())
        running += charge
        comm[t] = running
    compute = model.compute_per_iteration * np.arange(1, T + 1, dtype=np.float64)
    return CommSeries(cum_comm_ms=comm, cum_compute_ms=compute)


@dataclass(frozen=True)
class TargetHit:
    iteration: int
    total_ms: float
    comm_ms: float
    compute_ms: float


def time_to_target(
    trace: RunTrace, model: CommModel, metric: str, target: float
) -> Optional[TargetHit]:
    """First iteration at which the metric drops to the target, with its cost.

    ``metric`` is "loss" or "grad_norm_sq".  Returns None when the run never
    reaches the target (skipped evaluations never match).
    """
    if metric == "loss":
        series = trace.loss
    elif metric == "grad_norm_sq":
        series = trace.grad_norm_sq
    else:
        raise UnsupportedError(f"unknown metric {metric!r}")
    hits = np.where(series <= target)[0]
    if hits.size == 0:
        return None
    t = int(hits[0])
    cost = account(trace, model)
    return TargetHit(
        iteration=t,
        total_ms=cost.total_at(t),
        comm_ms=float(cost.cum_comm_ms[t]),
        compute_ms=float(cost.cum_compute_ms[t]),
    )
