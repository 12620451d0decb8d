"""ISGD^1/2 against SVRG, classical ISGD and averaged ISGD on a shared data-pass budget.

Every method runs as a batch of chains (one per tuning rate, or one per
seed). Cost is counted in data accesses: an SGD step reads one observation,
an SVRG snapshot reads the whole dataset and an SVRG inner step reads one
observation. Curves are evaluated on a shared grid of pass counts; a grid
point is filled with the first state reached at or after that cost.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import ResampleSource
from ..diagnostic import default_burnin
from ..engine import implicit_update, is_diverged
from ..errors import UsageError
from ..halving import HalvingConfig, sgd_half_batch
from ..model import LossModel, gradient_array
from ..parallel import cell_map

METHODS = ("ISGD_HALF", "SVRG", "ClassicalISGD", "AveragedISGD")
TUNING_GRID = tuple(2**k * 1e-3 for k in range(11))


def training_loss(model: LossModel, X, y, theta) -> np.ndarray:
    """Mean loss of each chain's iterate over its dataset; inf for non-finite values.

    ``theta`` is (B, p); ``X`` is (B, N, p) or shared (N, p).
    """
    theta = np.atleast_2d(theta)
    X = np.broadcast_to(X, (theta.shape[0],) + np.shape(X)[-2:])
    with np.errstate(over="ignore", invalid="ignore"):
        u = np.einsum("bnp,bp->bn", X, theta)
        if model.kind == "quadratic":
            loss = 0.5 * (y - u) ** 2
        elif model.kind == "logistic":
            loss = -y * u + np.logaddexp(0.0, u)
        else:
            raise UsageError("training loss is only defined for quadratic and logistic models")
        out = loss.mean(axis=-1)
    return np.where(np.isfinite(out), out, np.inf)


class _Recorder:
    def __init__(self, B, checkpoints_steps, metric):
        self.steps = list(checkpoints_steps)
        self.curve = np.full((B, len(self.steps)), np.nan)
        self.metric = metric
        self.k = 0

    def __call__(self, used, theta, diverged):
        if self.k < len(self.steps) and self.steps[self.k] <= used:
            value = np.where(diverged, np.nan, self.metric(theta))
            while self.k < len(self.steps) and self.steps[self.k] <= used:
                self.curve[:, self.k] = value
                self.k += 1


def sgd_curves(model, source, theta0, gamma, steps, checkpoints_steps, metric, schedule=None,
               average=False):
    """Implicit SGD per chain; ``schedule(n)`` scales the rate, ``average`` reports the running mean."""
    theta = np.array(theta0, dtype=float)
    B = theta.shape[0]
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (B,))
    mean = theta.copy()
    diverged = np.zeros(B, dtype=bool)
    rec = _Recorder(B, checkpoints_steps, metric)
    rec(0, theta, diverged)
    for n in range(1, steps + 1):
        X, y = source.next()
        g = gamma if schedule is None else gamma * schedule(n)
        with np.errstate(over="ignore", invalid="ignore"):
            new, _ = implicit_update(model, X, y, theta, g)
        diverged |= is_diverged(new)
        theta = np.where(diverged[:, None], theta, new)
        if average:
            mean = theta.copy() if n == 1 else mean + (theta - mean) / n
        rec(n, mean if average else theta, diverged)
    return (mean if average else theta), rec.curve, diverged


def svrg_curves(model, X, y, source, theta0, gamma, budget_steps, checkpoints_steps, metric):
    """SVRG, epoch length N, snapshot = last iterate.

    ``source`` supplies the inner-loop observations (uniform with
    replacement from each chain's dataset).
    """
    theta = np.array(theta0, dtype=float)
    B = theta.shape[0]
    X = np.broadcast_to(np.asarray(X, dtype=float), (B,) + np.shape(X)[-2:])
    y = np.broadcast_to(np.asarray(y, dtype=float), X.shape[:2])
    N = X.shape[1]
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (B,))
    diverged = np.zeros(B, dtype=bool)
    rec = _Recorder(B, checkpoints_steps, metric)
    rec(0, theta, diverged)
    used = 0
    while used < budget_steps:
        snap = theta.copy()
        with np.errstate(over="ignore", invalid="ignore"):
            full = gradient_array(model, X, y, snap[:, None, :]).mean(axis=1)
        used += N
        rec(used, theta, diverged)
        for _ in range(N):
            if used >= budget_steps:
                break
            xi, yi = source.next()
            with np.errstate(over="ignore", invalid="ignore"):
                g = gradient_array(model, xi, yi, theta) - gradient_array(model, xi, yi, snap) + full
                new = theta - gamma[:, None] * g
            diverged |= is_diverged(new)
            theta = np.where(diverged[:, None], theta, new)
            used += 1
            rec(used, theta, diverged)
    return theta, rec.curve, diverged


def run_method(method, model, X, y, rngs, theta0, gammas, passes, checkpoints, metric, burnin=None):
    """Run ``method`` on B chains (chain b: dataset X[b], rng rngs[b], rate gammas[b]).

    Returns ``(theta, curve, diverged)`` with ``curve`` of shape (B, len(checkpoints)).
    """
    X = np.asarray(X, dtype=float)
    N = X.shape[-2]
    steps = int(round(passes * N))
    ck_steps = [int(round(c * N)) for c in checkpoints]
    source = ResampleSource(X, y, rngs)
    B = len(rngs)
    theta0 = np.broadcast_to(np.asarray(theta0, dtype=float), (B, X.shape[-1]))
    if method == "ISGD_HALF":
        burnin = default_burnin(N) if burnin is None else burnin
        cfg = HalvingConfig(float(np.max(gammas)), burnin, steps, update="implicit")
        rec = _Recorder(B, ck_steps, metric)
        # halving batch evaluates its monitor at exact steps; map onto the recorder
        exact = sorted(set(s for s in ck_steps if s > 0))
        res = sgd_half_batch(model, source, theta0, cfg, gamma0=gammas, checkpoints=exact,
                             monitor=metric, max_steps=steps)
        rec(0, theta0, np.zeros(B, dtype=bool))
        for j, s in enumerate(ck_steps):
            if s > 0:
                rec.curve[:, j] = res.curve[:, exact.index(s)]
        return res.theta, rec.curve, res.diverged
    if method == "SVRG":
        return svrg_curves(model, X, y, source, theta0, gammas, steps, ck_steps, metric)
    if method == "ClassicalISGD":
        return sgd_curves(model, source, theta0, gammas, steps, ck_steps, metric, schedule=lambda n: 1.0 / n)
    if method == "AveragedISGD":
        return sgd_curves(model, source, theta0, gammas, steps, ck_steps, metric, average=True)
    raise UsageError(f"unknown method {method!r}; expected one of {METHODS}")


def tune_rate(method, model, X, y, seed, theta0, passes, grid=TUNING_GRID, burnin=None, reps: int = 3) -> float:
    """Pick the grid rate with the lowest final training loss on one tuning dataset.

    Each rate runs ``reps`` chains and is scored by their mean loss; a
    diverged chain scores the rate as infinite.
    """
    grid = np.asarray(grid, dtype=float)
    rates = np.repeat(grid, reps)
    rngs = [np.random.default_rng([seed, 7919, k]) for k in range(len(rates))]
    theta, _, diverged = run_method(method, model, X, y, rngs, theta0, rates, passes, [passes],
                                    lambda t: np.zeros(len(t)), burnin)
    loss = training_loss(model, X, y, theta)
    loss[diverged] = np.inf
    return float(grid[int(np.argmin(loss.reshape(len(grid), reps).mean(axis=1)))])


@dataclass(frozen=True)
class SquaredError:
    theta_star: np.ndarray

    def __call__(self, theta):
        return ((theta - self.theta_star) ** 2).sum(axis=1)


@dataclass
class Curves:
    checkpoints: np.ndarray
    # method -> (seeds, len(checkpoints)) metric values
    values: dict = field(default_factory=dict)
    rates: dict = field(default_factory=dict)
    diverged: dict = field(default_factory=dict)

    def final(self, method) -> np.ndarray:
        return self.values[method][:, -1]

    def rows(self):
        for method, vals in self.values.items():
            for s in range(vals.shape[0]):
                for c, v in zip(self.checkpoints, vals[s]):
                    yield {"method": method, "seed": s, "passes": float(c), "value": float(v),
                           "rate": self.rates[method]}


def default_checkpoints(passes: float, per_pass: int = 4) -> np.ndarray:
    return np.arange(0, int(round(passes * per_pass)) + 1) / per_pass


def compare_methods(spec, methods=METHODS, passes: float = 10, seeds: int = 10, seed: int = 0,
                    checkpoints=None, grid=TUNING_GRID, burnin=None, workers: int = 1) -> Curves:
    """Learning curves of ``||theta - theta_star||^2`` on simulated data.

    Each method's rate is tuned on a separate tuning dataset, then the
    method runs on ``seeds`` fresh datasets, all starting from zero.
    The halving method's burnin defaults to one data pass.
    """
    from .simulate import simulate_dataset

    if not passes >= 1:
        raise UsageError("budget must be at least one data pass")
    model = spec.loss_model
    star = spec.true_params().theta_star
    checkpoints = default_checkpoints(passes) if checkpoints is None else np.asarray(checkpoints)
    tune_data, _ = simulate_dataset(spec, np.random.default_rng([seed, 0]))
    data = [simulate_dataset(spec, np.random.default_rng([seed, 1, s]))[0] for s in range(seeds)]
    X = np.stack([d.X for d in data])
    y = np.stack([d.y for d in data])
    theta0 = np.zeros(spec.p)
    burnin = spec.N if burnin is None else burnin
    metric = SquaredError(star)
    cells = [(m, model, tune_data.X, tune_data.y, X, y, seed, seeds, theta0, passes, checkpoints, grid, burnin,
              metric) for m in methods]
    out = Curves(checkpoints)
    for m, (rate, curve, div) in zip(methods, cell_map(_method_cell, cells, workers)):
        out.values[m], out.rates[m], out.diverged[m] = curve, rate, div
    return out


def _method_cell(args):
    m, model, Xt, yt, X, y, seed, seeds, theta0, passes, checkpoints, grid, burnin, metric = args
    rate = tune_rate(m, model, Xt, yt, seed, theta0, passes, grid, burnin)
    rngs = [np.random.default_rng([seed, 2, s]) for s in range(seeds)]
    _, curve, div = run_method(m, model, X, y, rngs, theta0, np.full(seeds, rate), passes, checkpoints,
                               metric, burnin)
    return rate, curve, div
