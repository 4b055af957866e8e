"""Per-worker loss families with exact gradients, plus stochastic oracles.

Quadratics are the workhorse: gradients are linear, the smoothness constant
and minimum are closed-form, and all gradient-divergence quantities are
independent of the evaluation point, which makes them exact test constants.
A synthetic logistic-regression family provides a nonlinear cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng
from .errors import NonPositiveError, UnknownFixtureError, UnsupportedError


@dataclass(eq=False)
class QuadraticObjective:
    """F_j(w) = (q/2) ||w - a_j||^2 with per-worker anchor a_j.

    Gradients are q(w - a_j), the smoothness constant is exactly q, and the
    global minimizer is the anchor mean.  Treated as immutable.
    """

    anchors: np.ndarray
    curvature: float = 1.0

    def __post_init__(self):
        self.anchors = np.atleast_2d(np.asarray(self.anchors, dtype=np.float64))
        if self.curvature <= 0:
            raise NonPositiveError(f"curvature must be > 0, got {self.curvature}")

    @property
    def n_workers(self) -> int:
        return self.anchors.shape[0]

    @property
    def dim(self) -> int:
        return self.anchors.shape[1]

    @property
    def lipschitz(self) -> float:
        return self.curvature

    @property
    def minimizer(self) -> np.ndarray:
        return self.anchors.mean(axis=0)

    def grad(self, worker: int, w: np.ndarray) -> np.ndarray:
        return self.curvature * (np.asarray(w, dtype=np.float64) - self.anchors[worker])

    def loss(self, worker: int, w: np.ndarray) -> float:
        diff = np.asarray(w, dtype=np.float64) - self.anchors[worker]
        return 0.5 * self.curvature * float(diff @ diff)

    def global_grad(self, w: np.ndarray) -> np.ndarray:
        return self.curvature * (np.asarray(w, dtype=np.float64) - self.minimizer)

    def global_loss(self, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=np.float64)
        diffs = w[None, :] - self.anchors
        return 0.5 * self.curvature * float(np.mean(np.sum(diffs * diffs, axis=1)))

    def group_grad(self, members: Sequence[int], w: np.ndarray) -> np.ndarray:
        anchor = self.anchors[list(members)].mean(axis=0)
        return self.curvature * (np.asarray(w, dtype=np.float64) - anchor)

    def f_star(self) -> float:
        return self.global_loss(self.minimizer)

    def permuted(self, order: Sequence[int]) -> "QuadraticObjective":
        """Same family with workers relabeled; worker j becomes old order[j]."""
        return QuadraticObjective(self.anchors[list(order)], self.curvature)


@dataclass(eq=False)
class LogisticObjective:
    """Regularized binary cross-entropy on per-worker synthetic datasets.

    The reported smoothness constant is the standard upper bound
    reg + max_sample ||x||^2 / 4, which is safe for learning-rate checks.
    f* comes from a long full-batch gradient-descent run, not a closed form.
    """

    features: tuple[np.ndarray, ...]
    labels: tuple[np.ndarray, ...]
    regularization: float = 0.0
    _f_star: float | None = field(default=None, repr=False)
    _f_star_grad_norm: float | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise UnsupportedError("features and labels must pair up per worker")
        self.features = tuple(np.asarray(x, dtype=np.float64) for x in self.features)
        self.labels = tuple(np.asarray(y, dtype=np.float64) for y in self.labels)

    @property
    def n_workers(self) -> int:
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.features[0].shape[1]

    @property
    def lipschitz(self) -> float:
        max_sq = max(float(np.max(np.sum(x * x, axis=1))) for x in self.features)
        return self.regularization + 0.25 * max_sq

    def sample_count(self, worker: int) -> int:
        return self.features[worker].shape[0]

    def loss(self, worker: int, w: np.ndarray) -> float:
        x, y = self.features[worker], self.labels[worker]
        z = x @ w
        nll = float(np.mean(np.logaddexp(0.0, z) - y * z))
        return nll + 0.5 * self.regularization * float(w @ w)

    def grad(self, worker: int, w: np.ndarray) -> np.ndarray:
        x, y = self.features[worker], self.labels[worker]
        p = _sigmoid(x @ w)
        return x.T @ (p - y) / x.shape[0] + self.regularization * np.asarray(w)

    def sample_grad(self, worker: int, w: np.ndarray, idx: np.ndarray) -> np.ndarray:
        """Gradient of the minibatch picked by row indices ``idx``."""
        x, y = self.features[worker][idx], self.labels[worker][idx]
        p = _sigmoid(x @ w)
        return x.T @ (p - y) / x.shape[0] + self.regularization * np.asarray(w)

    def global_loss(self, w: np.ndarray) -> float:
        return sum(self.loss(j, w) for j in range(self.n_workers)) / self.n_workers

    def global_grad(self, w: np.ndarray) -> np.ndarray:
        total = np.zeros(self.dim)
        for j in range(self.n_workers):
            total += self.grad(j, w)
        return total / self.n_workers

    def group_grad(self, members: Sequence[int], w: np.ndarray) -> np.ndarray:
        total = np.zeros(self.dim)
        for j in members:
            total += self.grad(j, w)
        return total / len(members)

    def f_star(self, tol: float = 1e-10, max_steps: int = 100_000) -> float:
        """Minimum value from full-batch gradient descent, cached.

        Terminates once ||grad f|| <= tol; the residual norm is kept in
        ``minimization_residual`` for reporting.
        """
        if self._f_star is None:
            w = np.zeros(self.dim)
            step = 1.0 / self.lipschitz
            gnorm = float(np.linalg.norm(self.global_grad(w)))
            for _ in range(max_steps):
                if gnorm <= tol:
                    break
                w -= step * self.global_grad(w)
                gnorm = float(np.linalg.norm(self.global_grad(w)))
            self._f_star = self.global_loss(w)
            self._f_star_grad_norm = gnorm
        return self._f_star

    @property
    def minimization_residual(self) -> float | None:
        return self._f_star_grad_norm

    def permuted(self, order: Sequence[int]) -> "LogisticObjective":
        return LogisticObjective(
            tuple(self.features[j] for j in order),
            tuple(self.labels[j] for j in order),
            self.regularization,
        )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def make_logistic(
    n_workers: int,
    dim: int,
    samples_per_worker: int,
    label_skew: float = 1.0,
    regularization: float = 1e-2,
    seed: int = 0,
) -> LogisticObjective:
    """Synthetic non-IID logistic family, deterministic in the seed.

    Each worker's features are shifted by a worker-specific direction scaled
    by ``label_skew``; labels follow a shared ground-truth separator, so skew
    directly controls gradient heterogeneity across workers.
    """
    gen = rng.stream_generator(seed, rng.DATA_STREAM, 0)
    truth = gen.standard_normal(dim)
    features = []
    labels = []
    for j in range(n_workers):
        shift = gen.standard_normal(dim) * label_skew
        x = gen.standard_normal((samples_per_worker, dim)) + shift
        p = _sigmoid(x @ truth)
        y = (gen.random(samples_per_worker) < p).astype(np.float64)
        features.append(x)
        labels.append(y)
    return LogisticObjective(tuple(features), tuple(labels), regularization)


NOISE_MODELS = ("exact", "gaussian", "minibatch")


@dataclass(eq=False)
class GradientOracle:
    """Stochastic gradient source with a controlled noise model.

    exact       -- returns the full per-worker gradient.
    gaussian    -- adds N(0, sigma2/d I) noise, so E||g - grad||^2 = sigma2
                   exactly.
    minibatch   -- averages per-sample gradients over a uniform with-
                   replacement batch (objectives exposing ``sample_grad``
                   only); the variance is a measured quantity, not a set one.

    The draw for (worker, t) depends only on (seed, worker, t); see ``rng``.
    """

    objective: object
    noise: str = "exact"
    sigma2: float = 0.0
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.noise not in NOISE_MODELS:
            raise UnsupportedError(f"unknown noise model {self.noise!r}")
        if self.noise == "gaussian" and self.sigma2 < 0:
            raise NonPositiveError("sigma2 must be >= 0")
        if self.noise == "minibatch":
            if not hasattr(self.objective, "sample_grad"):
                raise UnsupportedError(
                    "minibatch noise needs an objective with per-sample gradients"
                )
            if self.batch_size < 1:
                raise NonPositiveError("batch_size must be >= 1")

    def sample(self, worker: int, w: np.ndarray, t: int) -> np.ndarray:
        if self.noise == "exact":
            return self.objective.grad(worker, w)
        if self.noise == "gaussian":
            g = self.objective.grad(worker, w)
            if self.sigma2 == 0.0:
                return g
            d = g.shape[0]
            stream = rng.stream_generator(self.seed, rng.NOISE_STREAM + worker, t)
            return g + math.sqrt(self.sigma2 / d) * stream.standard_normal(d)
        stream = rng.stream_generator(self.seed, rng.NOISE_STREAM + worker, t)
        m = self.objective.sample_count(worker)
        idx = stream.integers(0, m, size=self.batch_size)
        return self.objective.sample_grad(worker, w, idx)

    def variance_estimate(self, worker: int, w: np.ndarray, draws: int = 10_000) -> float:
        """Empirical E||g - grad||^2 at ``w`` (reported sigma2 for minibatch)."""
        g = self.objective.grad(worker, w)
        acc = 0.0
        for t in range(draws):
            diff = self.sample(worker, w, t) - g
            acc += float(diff @ diff)
        return acc / draws


def full_gradient(objective, worker: int, w: np.ndarray) -> np.ndarray:
    """Exact gradient of worker ``worker``'s loss at ``w``."""
    return objective.grad(worker, np.asarray(w, dtype=np.float64))


def sample_gradient(oracle: GradientOracle, worker: int, w: np.ndarray, t: int) -> np.ndarray:
    """Stochastic gradient; a pure function of (oracle.seed, worker, t, w)."""
    return oracle.sample(worker, np.asarray(w, dtype=np.float64), t)


def f_star(objective) -> float:
    """Minimum of the averaged loss (closed form or minimization oracle)."""
    if not hasattr(objective, "f_star"):
        raise UnsupportedError(f"{type(objective).__name__} has no minimum oracle")
    return objective.f_star()


def _fixture_qf1() -> QuadraticObjective:
    return QuadraticObjective(np.array([[0.0], [0.0], [2.0], [2.0]]))


def _fixture_qf2() -> QuadraticObjective:
    return QuadraticObjective(np.array([[0.0], [0.0], [0.0], [2.0], [2.0], [2.0]]))


def _fixture_qf3() -> QuadraticObjective:
    return QuadraticObjective(np.array([[0.0]] * 4 + [[2.0]] * 4))


def _fixture_qf10() -> QuadraticObjective:
    # two clusters of five anchors in d=10 with seeded jitter: markedly
    # non-IID, with every divergence still an exact constant
    gen = rng.stream_generator(20_24, rng.DATA_STREAM, 1)
    direction = gen.standard_normal(10)
    direction /= np.linalg.norm(direction)
    centers = np.vstack([1.5 * direction] * 5 + [-1.5 * direction] * 5)
    anchors = centers + 0.4 * gen.standard_normal((10, 10))
    return QuadraticObjective(anchors)


_FIXTURES = {
    "QF1": _fixture_qf1,
    "QF2": _fixture_qf2,
    "QF3": _fixture_qf3,
    "QF10": _fixture_qf10,
}


def make_quadratic_fixture(name: str) -> QuadraticObjective:
    """Registered deterministic quadratic fixtures.

    QF1: d=1, n=4, anchors (0,0,2,2)      -- f* = 0.5, global divergence 1.
    QF2: d=1, n=6, anchors (0,0,0,2,2,2)  -- same structure, three per side.
    QF3: d=1, n=8, anchors (0^4, 2^4)     -- for three-level grouping checks.
    QF10: d=10, n=10, two seeded anchor clusters -- the non-IID run fixture.
    """
    try:
        factory = _FIXTURES[name]
    except KeyError:
        raise UnknownFixtureError(
            f"unknown fixture {name!r}; registered: {sorted(_FIXTURES)}"
        ) from None
    return factory()
