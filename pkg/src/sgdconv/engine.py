"""Explicit and implicit SGD steps, chain driver, traces and iterate averaging."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .data import Dataset, resample_points
from .errors import UsageError
from .model import (
    DataPoint,
    LossModel,
    gradient_array,
    implicit_multiplier,
    linear_predictor,
)

DIVERGENCE_NORM = 1e12
SCHEDULES = ("constant", "classical", "external")
UPDATES = ("explicit", "implicit")


# array-level updates: x (..., p), y (...), theta (..., p), gamma scalar or (...)

def explicit_update(model, X, y, theta, gamma):
    """Return (theta_new, gradient used)."""
    g = gradient_array(model, X, y, theta)
    return theta - np.asarray(gamma)[..., None] * g, g


def implicit_update(model, X, y, theta, gamma):
    """Return (theta_new, realized gradient).

    The realized gradient ``-(theta_new - theta) / gamma`` equals the
    point gradient evaluated at ``theta_new``.
    """
    gamma = np.asarray(gamma, dtype=float)
    lam = implicit_multiplier(model, linear_predictor(X, theta), (X * X).sum(axis=-1), y, gamma)
    g = -lam[..., None] * X
    return theta + (gamma * lam)[..., None] * X, g


def update_for(kind: str):
    if kind == "explicit":
        return explicit_update
    if kind == "implicit":
        return implicit_update
    raise UsageError(f"unknown update {kind!r}; expected one of {UPDATES}")


def is_diverged(theta) -> np.ndarray:
    with np.errstate(invalid="ignore", over="ignore"):
        norm = np.sqrt((theta * theta).sum(axis=-1))
    return ~np.isfinite(norm) | (norm > DIVERGENCE_NORM)


@dataclass
class SgdConfig:
    gamma0: float
    schedule: str = "constant"
    update: str = "explicit"
    seed: int = 0
    max_iterations: int = 10_000
    stride: int = 10
    # gamma_n = classical_c / n; defaults to gamma0
    classical_c: Optional[float] = None
    gamma_fn: Optional[Callable[[int], float]] = None

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise UsageError("gamma0 must be positive")
        if self.max_iterations < 1:
            raise UsageError("max_iterations must be at least 1")
        if self.stride < 1:
            raise UsageError("stride must be at least 1")
        if self.schedule not in SCHEDULES:
            raise UsageError(f"unknown schedule {self.schedule!r}")
        if self.update not in UPDATES:
            raise UsageError(f"unknown update {self.update!r}")
        if self.schedule == "external" and self.gamma_fn is None:
            raise UsageError("external schedule needs gamma_fn")

    def gamma_at(self, n: int) -> float:
        if self.schedule == "constant":
            return self.gamma0
        if self.schedule == "classical":
            c = self.gamma0 if self.classical_c is None else self.classical_c
            return c / n
        return float(self.gamma_fn(n))


@dataclass(frozen=True)
class SgdState:
    theta: np.ndarray
    n: int = 0
    gamma: float = 1.0
    # gradient realized by the last step (-(theta_n - theta_{n-1}) / gamma)
    last_grad: Optional[np.ndarray] = None
    # gradient at the previous iterate, grad l(y_n, x_n' theta_{n-1}); same as last_grad for explicit steps
    last_grad_at_prev: Optional[np.ndarray] = None
    diverged: bool = False


def _check_step(point: DataPoint, state: SgdState, gamma: float):
    if point.p != state.theta.shape[-1]:
        raise UsageError(f"dimension mismatch: x has {point.p}, theta has {state.theta.shape[-1]}")
    if not np.all(np.isfinite(state.theta)):
        raise UsageError("step from a non-finite iterate")
    if gamma < 0:
        raise UsageError("gamma must be non-negative")


def step_explicit(model: LossModel, point: DataPoint, state: SgdState, gamma: float) -> SgdState:
    _check_step(point, state, gamma)
    with np.errstate(over="ignore", invalid="ignore"):
        theta, g = explicit_update(model, point.x, point.y, state.theta, gamma)
    return SgdState(theta, state.n + 1, gamma, g, g, bool(is_diverged(theta)))


def step_implicit(model: LossModel, point: DataPoint, state: SgdState, gamma: float) -> SgdState:
    _check_step(point, state, gamma)
    theta, g = implicit_update(model, point.x, point.y, state.theta, gamma)
    g_prev = gradient_array(model, point.x, point.y, state.theta)
    return SgdState(theta, state.n + 1, gamma, g, g_prev, bool(is_diverged(theta)))


class RunningMean:
    """Online mean of iterates, ``mean += (theta - mean) / n``."""

    def __init__(self):
        self.count = 0
        self.value = None

    def update(self, theta):
        theta = np.asarray(theta, dtype=float)
        self.count += 1
        if self.value is None:
            self.value = theta.copy()
        else:
            self.value = self.value + (theta - self.value) / self.count
        return self.value


def averaged_iterate(acc: RunningMean) -> np.ndarray:
    if acc.count == 0:
        raise UsageError("no iterates averaged yet")
    return acc.value


@dataclass
class RunTrace:
    stride: int
    n: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    S: list = field(default_factory=list)
    E: list = field(default_factory=list)
    test_error: list = field(default_factory=list)
    theta: Optional[np.ndarray] = None
    iterations: int = 0
    diverged: bool = False
    stopped: bool = False
    exhausted: bool = False

    def __len__(self):
        return len(self.n)

    def columns(self) -> dict:
        cols = {"n": self.n, "gamma": self.gamma}
        for name in ("S", "E", "test_error"):
            values = getattr(self, name)
            if any(v is not None for v in values):
                cols[name] = values
        return cols

    def write_csv(self, path):
        cols = self.columns()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(cols))
            for row in zip(*cols.values()):
                w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, float) else v) for v in row])


Monitor = Callable[[Optional[np.ndarray], np.ndarray, SgdState], bool]


def _as_stream(data, seed: int) -> Iterable[DataPoint]:
    if isinstance(data, Dataset):
        return resample_points(data.X, data.y, seed)
    if isinstance(data, tuple) and len(data) == 2:
        return resample_points(data[0], data[1], seed)
    return data


def run_chain(
    model: LossModel,
    data,
    config: SgdConfig,
    monitors: Sequence = (),
    theta0=None,
    theta_star=None,
    test_error: Optional[Callable[[np.ndarray], float]] = None,
) -> RunTrace:
    """Run one SGD chain.

    ``data`` is an iterable of DataPoints, or a ``Dataset`` / ``(X, y)`` pair
    which is then resampled with replacement using ``config.seed``. Each
    monitor is called after every step as ``monitor(prev_grad, grad, state)``;
    a truthy return stops the run. A monitor exposing ``statistic`` has it recorded in the trace.
    Records are kept at iterations ``1, 1 + stride, 1 + 2 * stride, ...``.
    """
    stream = iter(_as_stream(data, config.seed))
    try:
        first = next(stream)
    except StopIteration:
        raise UsageError("empty data stream") from None
    p = first.p
    theta = np.zeros(p) if theta0 is None else np.array(theta0, dtype=float)
    if theta.shape != (p,):
        raise UsageError(f"theta0 has shape {theta.shape}, data has dimension {p}")
    star = None if theta_star is None else np.asarray(theta_star, dtype=float)
    step = step_implicit if config.update == "implicit" else step_explicit
    recorder = next((m for m in monitors if hasattr(m, "statistic")), None)

    trace = RunTrace(stride=config.stride)
    state = SgdState(theta, 0, config.gamma0)
    point = first
    while True:
        gamma = config.gamma_at(state.n + 1)
        prev_grad = state.last_grad
        state = step(model, point, state, gamma)
        if state.diverged:
            trace.diverged = True
        stop = False
        if not state.diverged:
            for m in monitors:
                stop = bool(m(prev_grad, state.last_grad, state)) or stop
        if (state.n - 1) % config.stride == 0 or state.diverged:
            trace.n.append(state.n)
            trace.gamma.append(gamma)
            trace.S.append(None if recorder is None else recorder.statistic)
            trace.E.append(None if star is None else float(((state.theta - star) ** 2).sum()))
            trace.test_error.append(None if test_error is None or state.diverged else test_error(state.theta))
        if state.diverged or stop or state.n >= config.max_iterations:
            trace.stopped = stop
            break
        try:
            point = next(stream)
        except StopIteration:
            trace.exhausted = True
            break
    trace.theta = state.theta
    trace.iterations = state.n
    return trace


def expected_records(iterations: int, stride: int) -> int:
    return math.ceil(iterations / stride)


@dataclass
class BatchRun:
    theta: np.ndarray          # (B, p) final (or last finite) iterate
    E: Optional[np.ndarray]    # (B, steps + 1) squared distance to theta_star, if requested
    diverged_at: np.ndarray    # (B,) first divergent iteration, 0 if none
    steps: int
    averaged: Optional[np.ndarray] = None


def run_batch(model, source, theta0, gamma, steps: int, update: str = "explicit",
              theta_star=None, average: bool = False, schedule=None) -> BatchRun:
    """Run B independent chains for ``steps`` iterations.

    ``gamma`` is a scalar or one rate per chain; ``schedule(n)`` if given
    scales it at iteration n (e.g. ``lambda n: 1 / n``). Divergent chains are
    frozen at their last finite iterate and flagged.
    """
    step = update_for(update)
    theta = np.array(theta0, dtype=float)
    B = theta.shape[0]
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (B,))
    star = None if theta_star is None else np.asarray(theta_star, dtype=float)
    E = None
    if star is not None:
        E = np.full((B, steps + 1), np.nan)
        E[:, 0] = ((theta - star) ** 2).sum(axis=1)
    diverged_at = np.zeros(B, dtype=int)
    mean = theta.copy() if average else None
    for n in range(1, steps + 1):
        X, y = source.next()
        g_n = gamma if schedule is None else gamma * schedule(n)
        with np.errstate(over="ignore", invalid="ignore"):
            new, _ = step(model, X, y, theta, g_n)
            bad = is_diverged(new) & (diverged_at == 0)
        diverged_at[bad] = n
        live = diverged_at == 0
        theta = np.where(live[:, None], new, theta)
        if average:
            mean = mean + (theta - mean) / n if n > 1 else theta.copy()
        if E is not None:
            E[:, n] = np.where(live, ((theta - star) ** 2).sum(axis=1), np.nan)
    return BatchRun(theta, E, diverged_at, steps, mean)


__all__ = [
    "DIVERGENCE_NORM", "SgdConfig", "SgdState", "RunTrace", "RunningMean",
    "step_explicit", "step_implicit", "run_chain", "averaged_iterate",
    "explicit_update", "implicit_update", "update_for", "is_diverged",
]
