"""Simulated GLM datasets with a known parameter."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..data import DataGenerator, Dataset, decaying_theta_star
from ..errors import UsageError
from ..model import LossModel


@dataclass(frozen=True)
class TrueParams:
    theta_star: np.ndarray
    sigma: float


@dataclass(frozen=True)
class SimSpec:
    p: int = 20
    N: int = 5000
    model: str = "normal"          # "normal" or "logistic"
    sigma: float = 3.0
    # for the normal model with x ~ N(0, I), SNR = 1 / sigma^2; overrides sigma
    snr: Optional[float] = None
    sigma0: float = 2.0            # spread of the starting point around theta_star
    features: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.p < 1 or self.N < 1:
            raise UsageError("p and N must be positive")
        if self.model not in ("normal", "logistic"):
            raise UsageError(f"unknown model {self.model!r}; expected 'normal' or 'logistic'")
        if self.snr is not None and not self.snr > 0:
            raise UsageError("snr must be positive")
        if self.sigma < 0 or self.sigma0 < 0:
            raise UsageError("sigma and sigma0 must be non-negative")

    @property
    def noise_sd(self) -> float:
        if self.snr is not None and self.model == "normal":
            return float(np.sqrt(1.0 / self.snr))
        return self.sigma

    @property
    def loss_model(self) -> LossModel:
        return LossModel.quadratic() if self.model == "normal" else LossModel.logistic()

    def generator(self) -> DataGenerator:
        return DataGenerator(self.loss_model, decaying_theta_star(self.p), self.noise_sd, self.features)

    def true_params(self) -> TrueParams:
        return TrueParams(decaying_theta_star(self.p), self.noise_sd)

    @classmethod
    def parse(cls, text: str, **overrides) -> "SimSpec":
        """Build from ``"p=20,N=5000,sigma=3"`` style text."""
        types = {"p": int, "N": int, "model": str, "sigma": float, "snr": float, "sigma0": float,
                 "features": str, "seed": int}
        kwargs = dict(overrides)
        for item in filter(None, (s.strip() for s in text.split(","))):
            key, sep, value = item.partition("=")
            key = key.strip()
            if not sep or key not in types:
                raise UsageError(f"bad simulation setting {item!r}")
            kwargs[key] = types[key](value.strip())
        return cls(**kwargs)


def simulate_dataset(spec: SimSpec, rng: Optional[np.random.Generator] = None):
    """Draw N observations; returns ``(Dataset, TrueParams)``. Deterministic given ``spec.seed``."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    X, y = spec.generator().draw(rng, spec.N)
    return Dataset(X, y, {"spec": spec.__dict__}), spec.true_params()


def draw_theta0(spec: SimSpec, rng: np.random.Generator) -> np.ndarray:
    return decaying_theta_star(spec.p) + spec.sigma0 * rng.standard_normal(spec.p)
