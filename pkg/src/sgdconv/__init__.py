"""Constant-rate SGD with the Pflug stationarity diagnostic and rate halving."""
from .errors import NumericError, UsageError
from .model import DataPoint, LossModel, gradient, predict
from .engine import SgdConfig, SgdState, RunTrace, run_chain, step_explicit, step_implicit
from .diagnostic import PflugDiagnostic, run_pflug
from .halving import HalvingConfig, run_isgd_half, run_sgd_half
from .region import drift_at, empirical_convergence_region, map_pflug_region

__version__ = "0.1.0"
