"""SGD with learning-rate halving on stationarity detection (SGD^1/2, ISGD^1/2).

Constant-rate SGD runs with the difference-form Pflug statistic attached;
each time the statistic is negative more than ``burnin`` iterations after the
last detection, the rate is halved and the statistic reset.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .diagnostic import PflugDiagnostic
from .engine import RunTrace, is_diverged, step_explicit, step_implicit, update_for, SgdState
from .errors import UsageError
from .model import LossModel

CAP_FACTOR = 20


@dataclass
class HalvingConfig:
    gamma0: float
    burnin: int
    maxit: int
    gamma_floor: float = 1e-10
    update: str = "explicit"
    factor: float = 0.5
    stride: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise UsageError("gamma0 must be positive")
        if not 0 < self.gamma_floor < self.gamma0:
            raise UsageError("gamma_floor must lie in (0, gamma0)")
        if self.burnin < 1 or self.maxit < 1:
            raise UsageError("burnin and maxit must be positive")
        if not 0 < self.factor < 1:
            raise UsageError("halving factor must lie in (0, 1)")
        if self.update not in ("explicit", "implicit"):
            raise UsageError(f"unknown update {self.update!r}")

    @property
    def cap(self) -> int:
        return CAP_FACTOR * self.maxit


@dataclass
class HalvingTrace:
    trace: RunTrace
    # (iteration, rate in force before the halving)
    detections: list = field(default_factory=list)
    cap_hit: bool = False
    final_gamma: float = 0.0

    @property
    def diverged(self) -> bool:
        return self.trace.diverged


def run_sgd_half(model: LossModel, data, config: HalvingConfig, theta0=None, theta_star=None,
                 test_error=None):
    """Run SGD^1/2 on one chain and return ``(theta_final, HalvingTrace)``.

    ``data`` is an endless iterable of DataPoints (finite datasets should be
    wrapped with ``resample_points``). Terminates when a detection pushes the
    rate below ``gamma_floor`` after ``maxit`` iterations, at the hard cap
    ``20 * maxit`` (``cap_hit``), or on divergence. Besides the strided
    records, every detection iteration is recorded with the rate in force
    before the halving.
    """
    stream = iter(data)
    step = step_implicit if config.update == "implicit" else step_explicit
    star = None if theta_star is None else np.asarray(theta_star, dtype=float)
    try:
        point = next(stream)
    except StopIteration:
        raise UsageError("empty data stream") from None
    theta = np.zeros(point.p) if theta0 is None else np.array(theta0, dtype=float)

    trace = RunTrace(stride=config.stride)
    out = HalvingTrace(trace)
    diag = PflugDiagnostic(config.burnin)
    gamma = config.gamma0
    state = SgdState(theta, 0, gamma)
    older = None  # theta_{n-2}, only while it was produced under the current rate
    while True:
        old = state.theta
        state = step(model, point, state, gamma)
        n = state.n
        if state.diverged:
            trace.diverged = True
        else:
            if older is None:
                diag.tick()
            else:
                diag.update_from_differences(state.theta, old, older, gamma)
            older = old
        rate_used = gamma
        finished = detected = False
        if not state.diverged and diag.check_activation() is not None:
            detected = True
            out.detections.append((n, gamma))
            gamma *= config.factor
            diag.reset(at=n)
            older = None
            finished = gamma < config.gamma_floor and n > config.maxit
        if (n - 1) % config.stride == 0 or state.diverged or detected:
            trace.n.append(n)
            trace.gamma.append(rate_used)
            trace.S.append(diag.S)
            trace.E.append(None if star is None else float(((state.theta - star) ** 2).sum()))
            trace.test_error.append(None if test_error is None or state.diverged else test_error(state.theta))
        if finished or state.diverged:
            break
        if n >= config.cap:
            out.cap_hit = True
            break
        try:
            point = next(stream)
        except StopIteration:
            trace.exhausted = True
            break
    trace.theta = state.theta
    trace.iterations = state.n
    out.final_gamma = gamma
    return state.theta, out


def run_isgd_half(model: LossModel, data, config: HalvingConfig, **kwargs):
    if config.update != "implicit":
        config = HalvingConfig(**{**config.__dict__, "update": "implicit"})
    return run_sgd_half(model, data, config, **kwargs)


@dataclass
class HalvingBatch:
    theta: np.ndarray
    gamma: np.ndarray
    iterations: np.ndarray       # (B,) iteration at which each chain stopped
    detections: list             # per chain: list of (iteration, rate before halving)
    epoch_mean_E: list           # per chain: mean E_n over each completed epoch (between detections)
    diverged: np.ndarray
    cap_hit: np.ndarray
    curve: Optional[np.ndarray] = None   # (B, len(checkpoints)) value of ``monitor`` at checkpoints


def sgd_half_batch(model: LossModel, source, theta0, config: HalvingConfig, theta_star=None,
                   gamma0=None, checkpoints=(), monitor=None, max_steps=None) -> HalvingBatch:
    """Batched SGD^1/2: same rules as ``run_sgd_half`` for B independent chains.

    ``gamma0`` overrides ``config.gamma0`` per chain. Epoch k covers
    iterations ``(tau_{k-1}, tau_k]`` with ``tau_0 = 0``; the unfinished last
    epoch is not reported. ``monitor(theta) -> (B,)`` is evaluated at the
    iterations listed in ``checkpoints``. ``max_steps`` ends all chains at a
    fixed budget (not flagged as a cap hit).
    """
    step = update_for(config.update)
    theta = np.array(theta0, dtype=float)
    B = theta.shape[0]
    gamma = np.array(np.broadcast_to(config.gamma0 if gamma0 is None else np.asarray(gamma0, float), (B,)),
                     dtype=float)
    star = None if theta_star is None else np.asarray(theta_star, dtype=float)
    s = np.zeros(B)
    since = np.zeros(B, dtype=int)          # iterations since last detection
    prev_step = np.zeros_like(theta)
    have_prev = np.zeros(B, dtype=bool)
    running = np.ones(B, dtype=bool)
    diverged = np.zeros(B, dtype=bool)
    cap_hit = np.zeros(B, dtype=bool)
    stopped_at = np.zeros(B, dtype=int)
    detections = [[] for _ in range(B)]
    epochs = [[] for _ in range(B)]
    e_sum = np.zeros(B)
    checkpoints = list(checkpoints)
    curve = np.full((B, len(checkpoints)), np.nan) if checkpoints else None
    ck = {c: i for i, c in enumerate(checkpoints)}

    n = 0
    while running.any():
        n += 1
        X, y = source.next()
        with np.errstate(over="ignore", invalid="ignore"):
            new, _ = step(model, X, y, theta, gamma)
            bad = running & is_diverged(new)
        diverged |= bad
        running &= ~bad
        move = new - theta
        theta = np.where(running[:, None], new, theta)
        contrib = (move * prev_step).sum(axis=1) / gamma**2
        s = np.where(running & have_prev, s + contrib, s)
        prev_step = np.where(running[:, None], move, prev_step)
        have_prev |= running
        since += running
        if star is not None:
            e_sum += np.where(running, ((theta - star) ** 2).sum(axis=1), 0.0)
        fire = running & (since > config.burnin) & (s < 0)
        for b in np.flatnonzero(fire):
            detections[b].append((n, float(gamma[b])))
            if star is not None:
                epochs[b].append(e_sum[b] / since[b])
        gamma = np.where(fire, gamma * config.factor, gamma)
        s[fire] = 0.0
        since[fire] = 0
        e_sum[fire] = 0.0
        have_prev[fire] = False
        finished = fire & (gamma < config.gamma_floor) & (n > config.maxit)
        if max_steps is not None and n >= max_steps:
            finished = running.copy()
        elif n >= config.cap:
            cap_hit |= running & ~finished
            finished = running.copy()
        if n in ck and monitor is not None:
            curve[:, ck[n]] = np.where(diverged, np.nan, monitor(theta))
        stop = (finished | bad) & (stopped_at == 0)
        stopped_at[stop] = n
        running &= ~finished
    return HalvingBatch(theta, gamma, stopped_at, detections, epochs, diverged, cap_hit, curve)
