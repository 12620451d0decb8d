"""Ordinary least squares with classical standard errors and t-test p-values."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..errors import UsageError


@dataclass
class OlsFit:
    coefficients: np.ndarray
    std_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    n_obs: int
    df_resid: int
    names: tuple = ()

    def coef(self, name):
        return self.coefficients[self.names.index(name)]

    def p_value(self, name):
        return self.p_values[self.names.index(name)]


def ols_fit(design, response, names=()) -> OlsFit:
    """Least squares via QR. Raises UsageError for rank-deficient designs."""
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if y.shape != (n,):
        raise UsageError(f"response has shape {y.shape}, design has {n} rows")
    if n <= k:
        raise UsageError(f"need more observations ({n}) than columns ({k})")
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.max() == 0 or diag.min() <= 1e-10 * diag.max():
        raise UsageError("design matrix is rank deficient")
    beta = np.linalg.solve(R, Q.T @ y)
    resid = y - X @ beta
    df = n - k
    s2 = resid @ resid / df
    Rinv = np.linalg.inv(R)
    se = np.sqrt(s2 * (Rinv**2).sum(axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.where(beta == 0, 0.0, np.sign(beta) * np.inf))
    p = np.clip(2 * stats.t.sf(np.abs(t), df), 0.0, 1.0)
    return OlsFit(beta, se, t, p, n, df, tuple(names))


def stars(p: float) -> str:
    """Significance codes: *** < 0.1%, ** < 1%, * < 5%, . < 10%."""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    if p < 0.1:
        return "."
    return ""
