"""GLM-family losses and data points.

Every loss here has the form ``l(y, u) = -y*u + f(u)`` with ``u = x @ theta``,
so the gradient with respect to ``theta`` is ``-(y - h(u)) * x`` where
``h = f'`` is the transfer function. Only ``h`` and ``h'`` are ever needed.

The array-level helpers (``linear_predictor``, ``gradient_array``,
``implicit_multiplier``) broadcast over leading dimensions so the same code
drives a single chain ``(p,)`` or a batch of chains ``(B, p)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import NumericError, UsageError

# |u| beyond this saturates the sigmoid at machine precision
LOGIT_CLAMP = 36.0

IMPLICIT_TOL = 1e-12
IMPLICIT_MAX_STEPS = 200


@dataclass(frozen=True)
class DataPoint:
    x: np.ndarray
    y: float

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim != 1:
            raise UsageError(f"x must be a 1-D vector, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            bad = int(np.flatnonzero(~np.isfinite(x))[0])
            raise NumericError(f"non-finite feature at index {bad}")
        y = float(self.y)
        if not np.isfinite(y):
            raise NumericError("non-finite response")
        x.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def p(self) -> int:
        return self.x.shape[0]


def _identity(u):
    return np.asarray(u, dtype=float)


def _one(u):
    return np.ones_like(np.asarray(u, dtype=float))


def _sigmoid(u):
    return expit(np.clip(u, -LOGIT_CLAMP, LOGIT_CLAMP))


def _sigmoid_prime(u):
    h = _sigmoid(u)
    return h * (1.0 - h)


@dataclass(frozen=True)
class LossModel:
    """A GLM loss identified by its transfer function ``h`` and derivative ``hprime``.

    ``h`` and ``hprime`` must accept numpy arrays and be applied elementwise.
    ``hprime`` must be non-negative, which makes ``h`` monotone and the
    implicit update a well-posed one-dimensional root find.
    """

    kind: str
    h: Callable[[np.ndarray], np.ndarray]
    hprime: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def quadratic(cls) -> "LossModel":
        return cls("quadratic", _identity, _one)

    @classmethod
    def logistic(cls) -> "LossModel":
        return cls("logistic", _sigmoid, _sigmoid_prime)

    @classmethod
    def custom(cls, h, hprime) -> "LossModel":
        return cls("custom", h, hprime)

    @classmethod
    def from_name(cls, name: str) -> "LossModel":
        if name == "quadratic":
            return cls.quadratic()
        if name == "logistic":
            return cls.logistic()
        raise UsageError(f"unknown model {name!r}; expected 'quadratic' or 'logistic'")


def linear_predictor(x, theta):
    return (x * theta).sum(axis=-1)


def gradient_array(model: LossModel, x, y, theta):
    """Point gradient ``-(y - h(x @ theta)) x``, broadcasting over leading dims."""
    resid = y - model.h(linear_predictor(x, theta))
    return -resid[..., None] * x


def implicit_multiplier(model: LossModel, eta, xsq, y, gamma):
    """Solve ``lam = y - h(eta + gamma * lam * xsq)`` elementwise.

    ``eta`` is ``x @ theta_prev`` and ``xsq`` is ``||x||^2``. The implicit
    update is then ``theta_new = theta_prev + gamma * lam * x``.

    Quadratic loss has the closed form ``(y - eta) / (1 + gamma * xsq)``.
    Otherwise a Newton iteration runs inside the bracket between 0 and
    ``y - h(eta)`` and falls back to bisection whenever a Newton step leaves
    the bracket or the last step failed to halve it.
    """
    eta = np.asarray(eta, dtype=float)
    xsq = np.asarray(xsq, dtype=float)
    y = np.asarray(y, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if model.kind == "quadratic":
        return (y - eta) / (1.0 + gamma * xsq)

    r0 = y - model.h(eta)
    lo = np.minimum(0.0, r0)
    hi = np.maximum(0.0, r0)
    lam = np.zeros(np.broadcast(eta, xsq, y, gamma).shape)
    slope = gamma * xsq
    width = hi - lo
    for _ in range(IMPLICIT_MAX_STEPS):
        u = eta + slope * lam
        F = lam - y + model.h(u)
        if not np.all(np.isfinite(F)):
            raise NumericError("non-finite value in implicit root find")
        above = F > 0
        hi = np.where(above, lam, hi)
        lo = np.where(above, lo, lam)
        # Newton only while it keeps halving the bracket, bisection otherwise
        slow = (hi - lo) > 0.5 * width
        width = hi - lo
        newton = lam - F / (1.0 + slope * model.hprime(u))
        use_newton = (newton >= lo) & (newton <= hi) & ~slow
        nxt = np.where(use_newton, newton, 0.5 * (lo + hi))
        nxt = np.where(F == 0, lam, nxt)
        done = (np.abs(nxt - lam) <= IMPLICIT_TOL) | (F == 0)
        lam = nxt
        if np.all(done):
            break
    # one Newton polish step: for stiff h the residual F scales like h' * |dlam|
    u = eta + slope * lam
    F = lam - y + model.h(u)
    polished = lam - F / (1.0 + slope * model.hprime(u))
    lam = np.where(np.isfinite(polished) & (polished >= lo) & (polished <= hi), polished, lam)
    return lam


def _check_dims(x, theta):
    if x.shape[-1] != theta.shape[-1]:
        raise UsageError(f"dimension mismatch: x has {x.shape[-1]}, theta has {theta.shape[-1]}")


def gradient(model: LossModel, point: DataPoint, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    _check_dims(point.x, theta)
    u = linear_predictor(point.x, theta)
    if not np.isfinite(u):
        bad = np.flatnonzero(~np.isfinite(theta))
        where = f" (theta index {int(bad[0])})" if bad.size else ""
        raise NumericError(f"non-finite linear predictor{where}")
    return gradient_array(model, point.x, point.y, theta)


def predict(model: LossModel, x, theta) -> float:
    """Mean response ``h(x @ theta)``; infinite predictors saturate for the logistic model."""
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    _check_dims(x, theta)
    with np.errstate(invalid="ignore"):
        u = linear_predictor(x, theta)
    if np.isnan(u):
        raise NumericError("linear predictor is NaN")
    return float(model.h(u))
