"""Pflug convergence diagnostic for constant-rate SGD.

The statistic is the running sum of inner products of successive stochastic
gradients. It drifts upward while SGD is still travelling towards the optimum
and downward once the iterates oscillate around it; the diagnostic fires at
the first iteration past ``burnin`` at which the sum is negative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import RunTrace, SgdConfig, is_diverged, run_chain, update_for
from .errors import UsageError
from .model import LossModel

STREAM_BURNIN = 1000


def default_burnin(n_data: Optional[int] = None) -> int:
    """10% of the dataset size when it is known, else a fixed 1000."""
    if n_data is None:
        return STREAM_BURNIN
    return max(1, math.ceil(0.1 * n_data))


class PflugDiagnostic:
    """Running inner-product statistic with a burn-in gated activation rule.

    Iterations are counted from the last reset (``start``); the first observed
    gradient only primes ``prev_grad`` so the first inner product lands on the
    second iteration. ``form`` picks which gradient a chain monitor feeds in:
    ``"realized"`` uses ``-(theta_n - theta_{n-1}) / gamma`` (the difference
    form, canonical for implicit chains), ``"previous"`` the gradient at
    ``theta_{n-1}``. For explicit SGD they coincide.
    """

    def __init__(self, burnin: int, form: str = "realized"):
        if burnin < 0:
            raise UsageError("burnin must be non-negative")
        if form not in ("realized", "previous"):
            raise UsageError(f"unknown gradient form {form!r}")
        self.burnin = int(burnin)
        self.form = form
        self.start = 0
        self.S = 0.0
        self.n_since_reset = 0
        self.prev_grad = None
        self.activated_at = None

    @property
    def statistic(self) -> float:
        return self.S

    @property
    def n(self) -> int:
        return self.start + self.n_since_reset

    def update(self, grad_prev, grad_curr):
        grad_prev = np.asarray(grad_prev, dtype=float)
        grad_curr = np.asarray(grad_curr, dtype=float)
        if grad_prev.shape != grad_curr.shape:
            raise UsageError(f"gradient shapes differ: {grad_prev.shape} vs {grad_curr.shape}")
        self.S += float(grad_curr @ grad_prev)
        self.n_since_reset += 1
        self.prev_grad = grad_curr
        return self

    def observe(self, grad):
        """Feed the gradient of the current iteration."""
        if self.prev_grad is None:
            self.prev_grad = np.asarray(grad, dtype=float)
            self.n_since_reset += 1
            return self
        return self.update(self.prev_grad, grad)

    def tick(self):
        """Count an iteration that contributes no inner product."""
        self.n_since_reset += 1
        return self

    def update_from_differences(self, theta_n, theta_nm1, theta_nm2, gamma: float):
        if not gamma > 0:
            raise UsageError("gamma must be positive")
        step = np.asarray(theta_n, dtype=float) - np.asarray(theta_nm1, dtype=float)
        prev_step = np.asarray(theta_nm1, dtype=float) - np.asarray(theta_nm2, dtype=float)
        if step.shape != prev_step.shape:
            raise UsageError("iterate shapes differ")
        self.S += float(step @ prev_step) / gamma**2
        self.n_since_reset += 1
        return self

    def check_activation(self) -> Optional[int]:
        if self.activated_at is None and self.n_since_reset > self.burnin and self.S < 0:
            self.activated_at = self.n
        return self.activated_at

    def reset(self, new_burnin: Optional[int] = None, at: Optional[int] = None):
        self.start = self.n if at is None else int(at)
        if new_burnin is not None:
            self.burnin = int(new_burnin)
        self.S = 0.0
        self.n_since_reset = 0
        self.prev_grad = None
        self.activated_at = None
        return self

    def __call__(self, prev_grad, grad, state) -> bool:
        g = state.last_grad if self.form == "realized" else state.last_grad_at_prev
        self.observe(g)
        return self.check_activation() is not None


@dataclass
class PflugResult:
    tau: Optional[int]
    trace: RunTrace
    S: float


def run_pflug(
    model: LossModel,
    data,
    gamma: float,
    burnin: int,
    theta0=None,
    update: str = "explicit",
    max_iterations: int = 100_000,
    theta_star=None,
    stride: int = 10,
    seed: int = 0,
    test_error=None,
) -> PflugResult:
    """Run SGD with the diagnostic attached and stop at activation.

    ``tau`` is None when the stream ends, the iteration cap is hit or the
    chain diverges before the diagnostic fires.
    """
    diag = PflugDiagnostic(burnin)
    config = SgdConfig(gamma, update=update, seed=seed, max_iterations=max_iterations, stride=stride)
    trace = run_chain(model, data, config, [diag], theta0=theta0, theta_star=theta_star,
                      test_error=test_error)
    return PflugResult(diag.activated_at, trace, diag.S)


@dataclass
class PflugBatch:
    tau: np.ndarray        # (B,), 0 where the diagnostic never fired
    E: np.ndarray          # (B, steps + 1) squared distance to theta_star; column 0 is theta0
    diverged: np.ndarray   # (B,)
    S: np.ndarray          # (B,) statistic when the run ended
    theta: np.ndarray      # (B, p)
    steps: int


def pflug_batch(
    model: LossModel,
    source,
    theta0,
    gamma,
    burnin: int,
    theta_star,
    update: str = "explicit",
    deadline: Optional[int] = None,
    continue_factor: float = 1.0,
    max_steps: int = 100_000,
) -> PflugBatch:
    """Run the diagnostic on B independent chains at once.

    Chains may only activate at iterations ``<= deadline`` (the end of their
    data stream). After activating at ``tau`` a chain keeps running on the
    same trajectory until ``continue_factor * tau``, so later iterates of the
    same run can be inspected. The batch stops when every chain is done or
    ``max_steps`` is reached.
    """
    step = update_for(update)
    theta = np.array(theta0, dtype=float)
    B, p = theta.shape
    star = np.asarray(theta_star, dtype=float)
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (B,))
    deadline = max_steps if deadline is None else min(deadline, max_steps)

    E = np.full((B, max_steps + 1), np.nan)
    E[:, 0] = ((theta - star) ** 2).sum(axis=1)
    S = np.zeros(B)
    tau = np.zeros(B, dtype=int)
    diverged = np.zeros(B, dtype=bool)
    prev = None
    n = 0
    while n < max_steps:
        n += 1
        X, y = source.next()
        with np.errstate(over="ignore", invalid="ignore"):
            new, g = step(model, X, y, theta, gamma)
            bad = is_diverged(new) & ~diverged
        diverged |= bad
        theta = np.where(diverged[:, None], theta, new)
        E[:, n] = np.where(diverged, np.nan, ((theta - star) ** 2).sum(axis=1))
        if prev is not None:
            with np.errstate(over="ignore", invalid="ignore"):
                S = np.where(diverged, S, S + (g * prev).sum(axis=1))
            if n <= deadline:
                fire = (tau == 0) & ~diverged & (n > burnin) & (S < 0)
                tau[fire] = n
        prev = g
        done = diverged | np.where(tau > 0, n >= continue_factor * tau, n >= deadline)
        if done.all():
            break
    return PflugBatch(tau, E[:, : n + 1], diverged, S, theta, n)
