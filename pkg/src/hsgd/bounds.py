"""Convergence-rate upper bounds and the tradeoff checks built on them.

All bounds share the leading terms 2*delta/(gamma*T) + gamma*L*sigma2/n and
differ in the gamma^2-order aggregation penalty.  The gamma^2 terms carry an
L^2 factor throughout; with the fixed constant C = 40/3 this is the only
convention under which the single-group two-level bound collapses exactly to
the local-SGD bound, and the M=2 multi-level bound to the random-grouping
two-level bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import (
    DivisibilityError,
    LrTooLargeError,
    NonPositiveError,
    NotNonTrivialGroupingError,
    SizeError,
    UnsupportedError,
)

C = 40.0 / 3.0


def lr_max(period: float, L: float) -> float:
    """Largest learning rate admitted by the bounds: 1/(2*sqrt(6)*period*L)."""
    if period <= 0 or L <= 0:
        raise NonPositiveError(f"period and L must be > 0, got {period}, {L}")
    return 1.0 / (2.0 * math.sqrt(6.0) * period * L)


@dataclass(frozen=True)
class BoundInputs:
    """Constants feeding the bound evaluators.

    The scalar block (L, sigma2, gamma, T, delta) is always required; the
    topology and divergence blocks are filled per bound flavor.  ``c`` is the
    fixed constant of the gamma^2 terms and exists as a field only so that
    corruption hooks in the verification harness can reach it.
    """

    L: float
    sigma2: float
    gamma: float
    T: float
    delta: float
    n: Optional[int] = None
    # two-level, fixed grouping
    group_sizes: Optional[tuple[int, ...]] = None
    local_periods: Optional[tuple[float, ...]] = None
    global_period: Optional[float] = None
    upward_div: Optional[float] = None
    downward_divs: Optional[tuple[float, ...]] = None
    # two-level, uniform random grouping / single-level local SGD
    num_groups: Optional[int] = None
    local_period: Optional[float] = None
    global_div: Optional[float] = None
    # multi-level
    branching: Optional[tuple[int, ...]] = None
    periods: Optional[tuple[float, ...]] = None
    level_upward_divs: Optional[tuple[float, ...]] = None
    level_downward_divs: Optional[tuple[float, ...]] = None
    c: float = C

    def __post_init__(self):
        if self.L <= 0 or self.gamma <= 0:
            raise NonPositiveError("L and gamma must be > 0")
        if self.T < 1:
            raise SizeError(f"T must be >= 1, got {self.T}")
        if self.sigma2 < 0 or self.delta < 0:
            raise NonPositiveError("sigma2 and delta must be >= 0")

    def _need(self, *names):
        missing = [name for name in names if getattr(self, name) is None]
        if missing:
            raise UnsupportedError(f"bound inputs missing fields: {missing}")


def _leading_terms(inputs: BoundInputs, n: int) -> float:
    return 2.0 * inputs.delta / (inputs.gamma * inputs.T) + (
        inputs.gamma * inputs.L * inputs.sigma2 / n
    )


def _check_lr(inputs: BoundInputs, period: float) -> None:
    limit = lr_max(period, inputs.L)
    if inputs.gamma > limit:
        raise LrTooLargeError(
            f"gamma={inputs.gamma} exceeds 1/(2*sqrt(6)*{period}*L)={limit}"
        )


def fixed_grouping_bound(inputs: BoundInputs) -> float:
    """Two-level bound for an arbitrary fixed grouping.

    Heterogeneous group sizes and local periods enter via per-group sums; the
    upward penalty rides the global period, the downward one the local
    periods.
    """
    inputs._need("group_sizes", "local_periods", "global_period", "upward_div",
                 "downward_divs")
    sizes = inputs.group_sizes
    if len(sizes) != len(inputs.local_periods) or len(sizes) != len(inputs.downward_divs):
        raise SizeError("group_sizes, local_periods and downward_divs must align")
    n = sum(sizes)
    G = inputs.global_period
    _check_lr(inputs, G)
    g2 = inputs.c * inputs.gamma**2 * inputs.L**2
    N = len(sizes)
    up_noise = 2.0 * g2 * G * (N - 1) / n * inputs.sigma2
    up_div = 3.0 * g2 * G**2 * inputs.upward_div
    down_noise = 2.0 * g2 * inputs.sigma2 * sum(
        (size - 1) * period / n for size, period in zip(sizes, inputs.local_periods)
    )
    down_div = 3.0 * g2 * sum(
        size / n * period**2 * div
        for size, period, div in zip(sizes, inputs.local_periods, inputs.downward_divs)
    )
    return _leading_terms(inputs, n) + up_noise + up_div + down_noise + down_div


def local_sgd_bound(inputs: BoundInputs) -> float:
    """Single-level local SGD with aggregation period ``local_period``."""
    inputs._need("n", "local_period", "global_div")
    P = inputs.local_period
    _check_lr(inputs, P)
    n = inputs.n
    g2 = inputs.c * inputs.gamma**2 * inputs.L**2
    return (
        _leading_terms(inputs, n)
        + 2.0 * g2 * inputs.sigma2 * (1.0 - 1.0 / n) * P
        + 3.0 * g2 * P**2 * inputs.global_div
    )


def noise_weight(n: int, num_groups: int, G: float, I: float) -> float:
    """Mixing weight of the noise term under uniform random grouping.

    Computed as ((N-1)G + (n-N)I)/n: one division, so the N=1 and N=n cases
    coincide bit for bit with the single-level weights at periods I and G.
    """
    return ((num_groups - 1) * G + (n - num_groups) * I) / n


def divergence_weight(n: int, num_groups: int, G: float, I: float) -> float:
    """Mixing weight of the divergence term under uniform random grouping."""
    if n == 1:
        return I * I
    return ((num_groups - 1) * G * G + (n - num_groups) * I * I) / (n - 1)


def random_grouping_bound(inputs: BoundInputs) -> float:
    """Two-level bound averaged over uniform random equal-size groupings."""
    inputs._need("n", "num_groups", "global_period", "local_period", "global_div")
    n, N = inputs.n, inputs.num_groups
    if n % N != 0:
        raise SizeError(f"{N} does not divide {n}")
    G, I = inputs.global_period, inputs.local_period
    _check_lr(inputs, G)
    g2 = inputs.c * inputs.gamma**2 * inputs.L**2
    return (
        _leading_terms(inputs, n)
        + 2.0 * g2 * noise_weight(n, N, G, I) * inputs.sigma2
        + 3.0 * g2 * divergence_weight(n, N, G, I) * inputs.global_div
    )


def level_noise_weight(branching: Sequence[int], periods: Sequence[float], level: int) -> float:
    """Noise mixing weight contributed by one tree level: the two-level
    weight with the level's server count as the group count and the root /
    next-lower periods as (G, I)."""
    n = math.prod(branching)
    n_level = math.prod(branching[:level])
    return noise_weight(n, n_level, periods[0], periods[level])


def level_divergence_weight(branching: Sequence[int], periods: Sequence[float], level: int) -> float:
    """Divergence mixing weight contributed by one tree level."""
    n = math.prod(branching)
    n_level = math.prod(branching[:level])
    return divergence_weight(n, n_level, periods[0], periods[level])


def multi_level_bound(inputs: BoundInputs) -> float:
    """M-level bound under uniform random grouping.

    Each level contributes a noise weight blending the root period with the
    period one step below it and a divergence weight doing the same with
    squared periods; levels are averaged.
    """
    inputs._need("branching", "periods", "global_div")
    branching, periods = inputs.branching, inputs.periods
    if len(branching) != len(periods) or len(branching) < 2:
        raise SizeError("branching and periods must align with M >= 2")
    _check_lr(inputs, periods[0])
    n = math.prod(branching)
    M = len(branching)
    g2 = inputs.c * inputs.gamma**2 * inputs.L**2
    acc = 0.0
    for level in range(1, M):
        acc += 2.0 * level_noise_weight(branching, periods, level) * inputs.sigma2
        acc += 3.0 * level_divergence_weight(branching, periods, level) * inputs.global_div
    return _leading_terms(inputs, n) + g2 / (M - 1) * acc


def multi_level_raw_bound(inputs: BoundInputs) -> float:
    """Un-simplified M-level bound with the 1 - 12 gamma^2 L^2 P^2 denominators.

    Uses per-level divergences when provided, otherwise their random-grouping
    expectations derived from the global divergence.
    """
    inputs._need("branching", "periods")
    branching, periods = inputs.branching, inputs.periods
    if len(branching) != len(periods) or len(branching) < 2:
        raise SizeError("branching and periods must align with M >= 2")
    _check_lr(inputs, periods[0])
    n = math.prod(branching)
    M = len(branching)
    up_divs = inputs.level_upward_divs
    down_divs = inputs.level_downward_divs
    if up_divs is None or down_divs is None:
        inputs._need("global_div")
        betas = [
            (math.prod(branching[:level]) - 1) / (n - 1) for level in range(1, M)
        ]
        if up_divs is None:
            up_divs = tuple(beta * inputs.global_div for beta in betas)
        if down_divs is None:
            down_divs = tuple((1.0 - beta) * inputs.global_div for beta in betas)
    if len(up_divs) != M - 1 or len(down_divs) != M - 1:
        raise SizeError("need one upward and one downward divergence per level 1..M-1")

    g2 = inputs.gamma**2 * inputs.L**2
    p1 = periods[0]
    denom1 = 1.0 - 12.0 * g2 * p1**2
    if denom1 <= 0:
        raise LrTooLargeError("1 - 12 gamma^2 L^2 P1^2 must stay positive")
    acc = 0.0
    for level in range(1, M):
        n_level = math.prod(branching[:level])
        below = math.prod(branching[level:])
        p_next = periods[level]
        denom2 = 1.0 - 12.0 * g2 * p_next**2
        upward = (
            8.0 * g2 * p1 * (1.0 - 1.0 / n_level) * (1.0 / below) * inputs.sigma2
            + 12.0 * g2 * p1**2 * up_divs[level - 1]
        ) / denom1
        chain = 1.0 + 8.0 * g2 * p1**2 / denom1
        downward = chain * (
            4.0 * g2 * p_next * (1.0 - 1.0 / below) * inputs.sigma2
            + 12.0 * g2 * p_next**2 * down_divs[level - 1]
        ) / denom2
        acc += upward + downward
    return _leading_terms(inputs, n) + acc / (M - 1)


@dataclass(frozen=True)
class SandwichCheck:
    """Aggregation-penalty weights next to their single-level endpoints."""

    noise_lower: float
    noise_middle: float
    noise_upper: float
    divergence_lower: float
    divergence_middle: float
    divergence_upper: float

    @property
    def noise_holds(self) -> bool:
        return self.noise_lower <= self.noise_middle <= self.noise_upper

    @property
    def divergence_holds(self) -> bool:
        return self.divergence_lower <= self.divergence_middle <= self.divergence_upper

    @property
    def holds(self) -> bool:
        return self.noise_holds and self.divergence_holds


def sandwich_check(n: int, num_groups: int, G: float, I: float) -> SandwichCheck:
    """Two-level weights against the local-SGD weights at periods I and G."""
    if not 1 <= num_groups <= n:
        raise SizeError(f"need 1 <= N <= n, got N={num_groups}, n={n}")
    if n % num_groups != 0:
        raise SizeError(f"{num_groups} does not divide {n}")
    if I > G:
        raise SizeError(f"need I <= G, got I={I}, G={G}")
    return SandwichCheck(
        noise_lower=noise_weight(n, 1, G, I),
        noise_middle=noise_weight(n, num_groups, G, I),
        noise_upper=noise_weight(n, n, G, I),
        divergence_lower=divergence_weight(n, 1, G, I),
        divergence_middle=divergence_weight(n, num_groups, G, I),
        divergence_upper=divergence_weight(n, n, G, I),
    )


def sandwich_check_multi(branching: Sequence[int], periods: Sequence[float]) -> SandwichCheck:
    """M-level analogue: level-averaged weights against periods P_M and P_1."""
    if len(branching) != len(periods) or len(branching) < 2:
        raise SizeError("branching and periods must align with M >= 2")
    n = math.prod(branching)
    M = len(branching)
    avg_noise = sum(
        level_noise_weight(branching, periods, level) for level in range(1, M)
    ) / (M - 1)
    avg_div = sum(
        level_divergence_weight(branching, periods, level) for level in range(1, M)
    ) / (M - 1)
    return SandwichCheck(
        noise_lower=noise_weight(n, 1, periods[-1], periods[-1]),
        noise_middle=avg_noise,
        noise_upper=noise_weight(n, n, periods[0], periods[0]),
        divergence_lower=divergence_weight(n, 1, periods[-1], periods[-1]),
        divergence_middle=avg_div,
        divergence_upper=divergence_weight(n, n, periods[0], periods[0]),
    )


@dataclass(frozen=True)
class RescalingCheck:
    """Stretching G while shrinking I: admissibility and effect."""

    admissible: bool
    l_limit: float
    q_limit: float
    base_coefficient: float
    scaled_coefficient: float

    @property
    def improved(self) -> bool:
        return self.scaled_coefficient <= self.base_coefficient * (1.0 + 1e-12)


def period_rescaling_check(
    n: int, num_groups: int, G: float, I: float, l: float, q: float
) -> RescalingCheck:
    """Is (l*G, q*I) admissible, and does it shrink the divergence weight?

    Admissible means l stays under sqrt((1/m^2)(n-N)/N + 1) with G = m*I and
    q under sqrt(1 - m^2 (l^2 - 1) N / (n - N)); inside that region the
    divergence weight at the rescaled periods never exceeds the original.
    """
    if num_groups <= 1 or num_groups >= n:
        raise NotNonTrivialGroupingError(f"need 1 < N < n, got N={num_groups}, n={n}")
    m = round(G / I)
    if m < 1 or m * I != G:
        raise DivisibilityError(f"G={G} must be an integer multiple of I={I}")
    if l < 1 or q <= 0:
        raise NonPositiveError(f"need l >= 1 and q > 0, got l={l}, q={q}")
    ratio = (n - num_groups) / num_groups
    l_limit = math.sqrt(ratio / m**2 + 1.0)
    radicand = 1.0 - m**2 * (l**2 - 1.0) * num_groups / (n - num_groups)
    q_limit = math.sqrt(radicand) if radicand > 0 else 0.0
    admissible = l < l_limit and q <= q_limit
    return RescalingCheck(
        admissible=admissible,
        l_limit=l_limit,
        q_limit=q_limit,
        base_coefficient=divergence_weight(n, num_groups, G, I),
        scaled_coefficient=divergence_weight(n, num_groups, l * G, q * I),
    )


@dataclass(frozen=True)
class SpeedupPoint:
    n: int
    gamma: float
    leading: float
    remainder: float


def speedup_profile(
    ns: Sequence[int],
    T: float,
    sigma2: float,
    L: float,
    delta: float,
    period: float,
    global_div: float,
) -> list[SpeedupPoint]:
    """Bound pieces at gamma = sqrt(n/T) for each worker count.

    The leading part equals (2*delta + L*sigma2)/sqrt(n*T); the remainder
    collects the gamma^2 terms at the given period, which scale as 1/T for
    fixed n.
    """
    out = []
    for n in ns:
        gamma = math.sqrt(n / T)
        limit = lr_max(period, L)
        if gamma > limit:
            raise LrTooLargeError(
                f"gamma=sqrt({n}/{T})={gamma} exceeds {limit}; increase T"
            )
        leading = 2.0 * delta / (gamma * T) + gamma * L * sigma2 / n
        g2 = C * gamma**2 * L**2
        remainder = (
            2.0 * g2 * sigma2 * (1.0 - 1.0 / n) * period
            + 3.0 * g2 * period**2 * global_div
        )
        out.append(SpeedupPoint(n=n, gamma=gamma, leading=leading, remainder=remainder))
    return out
