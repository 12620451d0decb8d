"""Data generators and streams.

Chains are fed by *sources* that return one observation per chain per call,
shaped ``(B, p)`` / ``(B,)``. Chain ``b`` always draws from its own RNG, so a
chain's data does not depend on how many other chains share the batch, and a
single-chain run with the same RNG sees exactly the same observations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import UsageError
from .model import DataPoint, LossModel

CHUNK = 1024


def chain_rngs(seed: int, n: int, offset: int = 0) -> list[np.random.Generator]:
    return [np.random.default_rng([seed, offset + i]) for i in range(n)]


def decaying_theta_star(p: int) -> np.ndarray:
    """theta_j = 10 * exp(-0.75 j), j = 1..p."""
    return 10.0 * np.exp(-0.75 * np.arange(1, p + 1))


@dataclass(frozen=True)
class DataGenerator:
    """Draws i.i.d. (x, y) from a GLM with known parameter.

    ``features`` is ``"gaussian"`` (x ~ N(0, I)) or ``"ones"`` (x = 1, the
    scalar mean model when p = 1). Quadratic responses are
    ``x @ theta_star + sigma * N(0, 1)``; logistic responses are Bernoulli
    with mean ``h(x @ theta_star)``.
    """

    model: LossModel
    theta_star: np.ndarray
    sigma: float = 1.0
    features: str = "gaussian"

    def __post_init__(self):
        object.__setattr__(self, "theta_star", np.asarray(self.theta_star, dtype=float).ravel())
        if self.features not in ("gaussian", "ones"):
            raise UsageError(f"unknown feature distribution {self.features!r}")
        if self.sigma < 0:
            raise UsageError("sigma must be non-negative")

    @property
    def p(self) -> int:
        return self.theta_star.shape[0]

    def draw(self, rng: np.random.Generator, size) -> tuple[np.ndarray, np.ndarray]:
        size = (size,) if np.isscalar(size) else tuple(size)
        if self.features == "gaussian":
            X = rng.standard_normal(size + (self.p,))
        else:
            X = np.ones(size + (self.p,))
        eta = X @ self.theta_star
        if self.model.kind == "logistic":
            y = (rng.random(size) < self.model.h(eta)).astype(float)
        else:
            y = eta + self.sigma * rng.standard_normal(size)
        return X, y


class IIDSource:
    """Fresh draws from a generator, one independent RNG per chain."""

    def __init__(self, generator: DataGenerator, rngs: Sequence[np.random.Generator], chunk: int = CHUNK):
        self.generator = generator
        self.rngs = list(rngs)
        self.chunk = chunk
        self._pos = chunk
        self._X = self._y = None

    @property
    def batch(self) -> int:
        return len(self.rngs)

    def next(self):
        if self._pos == self.chunk:
            draws = [self.generator.draw(r, self.chunk) for r in self.rngs]
            self._X = np.stack([d[0] for d in draws], axis=1)
            self._y = np.stack([d[1] for d in draws], axis=1)
            self._pos = 0
        i = self._pos
        self._pos += 1
        return self._X[i], self._y[i]


class ResampleSource:
    """Finite datasets sampled uniformly with replacement.

    ``X`` is ``(N, p)`` (shared by all chains) or ``(B, N, p)`` (one dataset
    per chain). With ``sequential_pass`` the first N draws walk each dataset
    in order, after which sampling continues with replacement; ``resampling``
    tells whether the source has moved past that first pass.
    """

    def __init__(self, X, y, rngs: Sequence[np.random.Generator], sequential_pass: bool = False,
                 chunk: int = CHUNK):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.rngs = list(rngs)
        B = len(self.rngs)
        if X.ndim == 2:
            X = np.broadcast_to(X, (B,) + X.shape)
            y = np.broadcast_to(y, (B,) + y.shape)
        if X.ndim != 3 or X.shape[0] != B or y.shape != X.shape[:2]:
            raise UsageError(f"dataset shapes {X.shape} / {y.shape} do not match {B} chains")
        if X.shape[1] == 0:
            raise UsageError("empty dataset")
        self.X, self.y = X, y
        self.N = X.shape[1]
        self.sequential_pass = sequential_pass
        self.chunk = chunk
        self.drawn = 0
        self._rows = np.arange(B)
        self._idx = None
        self._pos = chunk

    @property
    def batch(self) -> int:
        return len(self.rngs)

    @property
    def resampling(self) -> bool:
        return not self.sequential_pass or self.drawn > self.N

    def next(self):
        if self.sequential_pass and self.drawn < self.N:
            idx = np.full(self.batch, self.drawn)
        else:
            if self._pos == self.chunk:
                self._idx = np.stack([r.integers(0, self.N, size=self.chunk) for r in self.rngs], axis=1)
                self._pos = 0
            idx = self._idx[self._pos]
            self._pos += 1
        self.drawn += 1
        return self.X[self._rows, idx], self.y[self._rows, idx]


def points(source) -> Iterator[DataPoint]:
    """Single-chain view of a one-chain source, as an endless DataPoint stream."""
    if source.batch != 1:
        raise UsageError("points() needs a one-chain source")
    while True:
        X, y = source.next()
        yield DataPoint(X[0], y[0])


def resample_points(X, y, seed: int) -> Iterator[DataPoint]:
    return points(ResampleSource(X, y, chain_rngs(seed, 1)))


def iid_points(generator: DataGenerator, seed: int) -> Iterator[DataPoint]:
    return points(IIDSource(generator, chain_rngs(seed, 1)))


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise UsageError(f"bad dataset shapes {self.X.shape} / {self.y.shape}")

    def __len__(self):
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def __iter__(self):
        for x, y in zip(self.X, self.y):
            yield DataPoint(x, y)
