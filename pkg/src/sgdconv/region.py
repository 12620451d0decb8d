"""Monte-Carlo drift of the Pflug statistic and the regions it defines.

``drift_at`` estimates the expected one-step change of the statistic,
E[g2 . g1], at a fixed parameter value. Mapping it over a 2-D slice gives the
region where the diagnostic decreases in expectation, which is compared with
the region where stationary SGD iterates actually spend their time.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull, Delaunay

from .data import DataGenerator, IIDSource, chain_rngs
from .engine import update_for
from .errors import NumericError, UsageError
from .model import LossModel

MIN_REPS = 100
NEGATIVE, POSITIVE, INDETERMINATE = "negative", "positive", "indeterminate"


@dataclass(frozen=True)
class DriftEstimate:
    theta: np.ndarray
    mean_delta: float
    std_err: float
    reps: int

    def classify(self, width: float = 2.0) -> str:
        if self.mean_delta + width * self.std_err < 0:
            return NEGATIVE
        if self.mean_delta - width * self.std_err > 0:
            return POSITIVE
        return INDETERMINATE


def _drift_samples(model, generator, theta, gamma, update, reps, rng):
    step = update_for(update)
    X1, y1 = generator.draw(rng, reps)
    X2, y2 = generator.draw(rng, reps)
    if not (np.all(np.isfinite(X1)) and np.all(np.isfinite(y1)) and np.all(np.isfinite(X2))
            and np.all(np.isfinite(y2))):
        raise NumericError("non-finite draws from generator")
    theta = np.broadcast_to(theta, X1.shape)
    theta1, g1 = step(model, X1, y1, theta, gamma)
    _, g2 = step(model, X2, y2, theta1, gamma)
    return (g1 * g2).sum(axis=1)


def drift_at(model: LossModel, generator: DataGenerator, theta, gamma: float, update: str = "explicit",
             reps: int = 10_000, seed: int = 0) -> DriftEstimate:
    """Monte-Carlo mean and standard error of ``g2 . g1`` from a fixed ``theta``.

    ``g1`` is the step gradient at ``theta``, ``g2`` the step gradient after
    one update. For implicit updates the realized step divided by ``-gamma``
    plays the role of the gradient.
    """
    if reps < MIN_REPS:
        raise UsageError(f"need at least {MIN_REPS} replications, got {reps}")
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (generator.p,):
        raise UsageError(f"theta has shape {theta.shape}, generator dimension is {generator.p}")
    v = _drift_samples(model, generator, theta, gamma, update, reps, np.random.default_rng(seed))
    return DriftEstimate(theta, float(v.mean()), float(v.std(ddof=1) / np.sqrt(reps)), reps)


@dataclass(frozen=True)
class GridSpec:
    """2-D slice through parameter space: coordinates ``i`` and ``j`` vary, the rest are pinned."""

    i: int
    j: int
    min1: float
    max1: float
    min2: float
    max2: float
    res: int

    def __post_init__(self):
        if self.i == self.j:
            raise UsageError("grid coordinates must differ")
        if not (self.max1 > self.min1 and self.max2 > self.min2) or self.res < 2:
            raise UsageError("degenerate grid")

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        parts = [s.strip() for s in text.split(",")]
        if len(parts) != 7:
            raise UsageError("grid must be 'i,j,min1,max1,min2,max2,res'")
        i, j, res = int(parts[0]), int(parts[1]), int(parts[6])
        return cls(i, j, *map(float, parts[2:6]), res)

    @property
    def axis1(self):
        return np.linspace(self.min1, self.max1, self.res)

    @property
    def axis2(self):
        return np.linspace(self.min2, self.max2, self.res)

    def cells(self) -> np.ndarray:
        """Cell centres as (res * res, 2), first coordinate varying slowest."""
        a, b = np.meshgrid(self.axis1, self.axis2, indexing="ij")
        return np.column_stack([a.ravel(), b.ravel()])

    def occupancy(self, points2d) -> np.ndarray:
        """Count of points whose nearest cell centre is each cell; off-grid points go to the edge cell."""
        def index(v, lo, hi):
            k = np.rint((v - lo) / ((hi - lo) / (self.res - 1))).astype(int)
            return np.clip(k, 0, self.res - 1)
        k1 = index(points2d[:, 0], self.min1, self.max1)
        k2 = index(points2d[:, 1], self.min2, self.max2)
        return np.bincount(k1 * self.res + k2, minlength=self.res * self.res)


@dataclass
class RegionMap:
    grid: GridSpec
    cells: np.ndarray            # (M, 2) slice coordinates
    mean_delta: np.ndarray
    std_err: np.ndarray
    classes: list
    occupancy: np.ndarray
    gamma: float = 0.0
    update: str = "explicit"
    reps: int = 0

    def rows(self):
        for k in range(len(self.cells)):
            yield (float(self.cells[k, 0]), float(self.cells[k, 1]), float(self.mean_delta[k]),
                   float(self.std_err[k]), self.classes[k], int(self.occupancy[k]))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["coord1", "coord2", "mean_delta", "std_err", "class", "occupancy"])
            for r in self.rows():
                w.writerow([repr(r[0]), repr(r[1]), repr(r[2]), repr(r[3]), r[4], r[5]])

    def to_json(self) -> dict:
        g = self.grid
        return {
            "grid": {"i": g.i, "j": g.j, "min1": g.min1, "max1": g.max1, "min2": g.min2,
                     "max2": g.max2, "res": g.res},
            "gamma": self.gamma, "update": self.update, "reps": self.reps,
            "cells": [dict(zip(["coord1", "coord2", "mean_delta", "std_err", "class", "occupancy"], r))
                      for r in self.rows()],
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)


def map_pflug_region(model: LossModel, generator: DataGenerator, grid: GridSpec, gamma: float,
                     update: str = "explicit", reps: int = 1000, seed: int = 0, base=None,
                     occupancy_points=None) -> RegionMap:
    """Drift estimate and sign class for every cell of a 2-D slice.

    Coordinates other than ``grid.i``/``grid.j`` are pinned at ``base``
    (default: the generator's true parameter). Cell k uses the RNG stream
    ``(seed, k)``, so results do not depend on evaluation order.
    """
    if reps < MIN_REPS:
        raise UsageError(f"need at least {MIN_REPS} replications per cell, got {reps}")
    p = generator.p
    if not (0 <= grid.i < p and 0 <= grid.j < p):
        raise UsageError(f"grid coordinates out of range for dimension {p}")
    base = generator.theta_star if base is None else np.asarray(base, dtype=float)
    cells = grid.cells()
    mean = np.empty(len(cells))
    se = np.empty(len(cells))
    for k, (a, b) in enumerate(cells):
        theta = base.copy()
        theta[grid.i], theta[grid.j] = a, b
        est = drift_at(model, generator, theta, gamma, update, reps, seed=[seed, k])
        mean[k], se[k] = est.mean_delta, est.std_err
    classes = [DriftEstimate(None, m, s, reps).classify() for m, s in zip(mean, se)]
    occ = (np.zeros(len(cells), dtype=int) if occupancy_points is None
           else grid.occupancy(np.asarray(occupancy_points)))
    return RegionMap(grid, cells, mean, se, classes, occ, gamma, update, reps)


@dataclass
class ConvergenceRegion:
    center: np.ndarray          # (2,)
    box_lo: np.ndarray          # (2,)
    box_hi: np.ndarray          # (2,)
    radius: float               # coverage quantile of distance to the centre
    hull: np.ndarray            # (k, 2) hull vertices of the points inside the radius
    points: np.ndarray          # pooled post-burn iterates projected on the slice
    coverage: float
    diverged_chains: int = 0
    occupancy: Optional[np.ndarray] = None

    def in_box(self, xy) -> np.ndarray:
        xy = np.atleast_2d(xy)
        return np.all((xy >= self.box_lo) & (xy <= self.box_hi), axis=1)

    def in_hull(self, xy) -> np.ndarray:
        return Delaunay(self.hull).find_simplex(np.atleast_2d(xy)) >= 0

    def distance(self, xy) -> np.ndarray:
        return np.sqrt(((np.atleast_2d(xy) - self.center) ** 2).sum(axis=1))

    def write_csv(self, path):
        """Overlay polygons: the box corners and the hull vertices, each closed."""
        lo, hi = self.box_lo, self.box_hi
        box = [(lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1]), (lo[0], lo[1])]
        hull = [tuple(v) for v in self.hull] + [tuple(self.hull[0])]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["shape", "order", "coord1", "coord2"])
            for name, poly in (("box", box), ("hull", hull)):
                for k, (a, b) in enumerate(poly):
                    w.writerow([name, k, repr(float(a)), repr(float(b))])


def coverage_box(points, coverage: float):
    """Smallest equal-tail quantile box holding at least ``coverage`` of the points.

    Both coordinates are cut at the same tail probability ``t``; ``t`` is
    found by bisection on the joint coverage.
    """
    lo_t, hi_t = 0.0, (1.0 - coverage) / 2
    for _ in range(60):
        t = 0.5 * (lo_t + hi_t)
        lo = np.quantile(points, t, axis=0)
        hi = np.quantile(points, 1 - t, axis=0)
        frac = np.all((points >= lo) & (points <= hi), axis=1).mean()
        if frac >= coverage:
            lo_t = t
        else:
            hi_t = t
    return np.quantile(points, lo_t, axis=0), np.quantile(points, 1 - lo_t, axis=0)


def empirical_convergence_region(model: LossModel, generator: DataGenerator, theta0, gamma: float,
                                 update: str = "explicit", chains: int = 200, steps: int = 2000,
                                 burn_fraction: float = 0.5, coverage: float = 0.95, seed: int = 0,
                                 coords=(0, 1), grid: Optional[GridSpec] = None) -> ConvergenceRegion:
    """Where constant-rate SGD iterates spend ``coverage`` of their post-burn time.

    Runs ``chains`` independent chains on fresh draws, pools the iterates
    after ``burn_fraction * steps`` and projects them on ``coords``.
    """
    if chains < MIN_REPS:
        raise UsageError(f"need at least {MIN_REPS} chains, got {chains}")
    if not 0 < burn_fraction < 1:
        raise UsageError("burn_fraction must lie in (0, 1)")
    if not 0 < coverage < 1:
        raise UsageError("coverage must lie in (0, 1)")
    if grid is not None:
        coords = (grid.i, grid.j)
    theta0 = np.broadcast_to(np.asarray(theta0, dtype=float), (chains, generator.p))
    source = IIDSource(generator, chain_rngs(seed, chains))
    burn = int(burn_fraction * steps)
    pooled = []
    theta = np.array(theta0)
    step = update_for(update)
    diverged = np.zeros(chains, dtype=bool)
    for n in range(1, steps + 1):
        X, y = source.next()
        with np.errstate(over="ignore", invalid="ignore"):
            theta, _ = step(model, X, y, theta, gamma)
        diverged |= ~np.all(np.isfinite(theta), axis=1)
        if n > burn:
            pooled.append(theta[~diverged][:, list(coords)])
    pts = np.concatenate(pooled)
    center = pts.mean(axis=0)
    dist = np.sqrt(((pts - center) ** 2).sum(axis=1))
    radius = float(np.quantile(dist, coverage))
    lo, hi = coverage_box(pts, coverage)
    core = pts[dist <= radius]
    hull = core[ConvexHull(core).vertices]
    occ = None if grid is None else grid.occupancy(pts)
    return ConvergenceRegion(center, lo, hi, radius, hull, pts, coverage, int(diverged.sum()), occ)
