import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgdconv.data import DataGenerator
from sgdconv.errors import UsageError
from sgdconv.model import LossModel
from sgdconv.region import (
    INDETERMINATE, NEGATIVE, POSITIVE, DriftEstimate, GridSpec, coverage_box, drift_at,
    empirical_convergence_region, map_pflug_region,
)

Q = LossModel.quadratic()
STAR = np.array([10 * np.exp(-0.75), 10 * np.exp(-1.5)])
GEN = DataGenerator(Q, STAR, 3.0)


def explicit_drift(theta, gamma, sigma, p):
    d = np.asarray(theta) - STAR[:p]
    return d @ d * (1 - gamma * (p + 2)) - gamma * sigma**2 * p


def test_mc_oracle_for_fourth_moment():
    # E[(x1'x2)^2] = p for independent standard normal vectors
    rng = np.random.default_rng(0)
    x1, x2 = rng.standard_normal((2, 200_000, 2))
    v = ((x1 * x2).sum(1)) ** 2
    assert abs(v.mean() - 2) < 3 * v.std() / np.sqrt(len(v))


@pytest.mark.parametrize("offset", [(0, 0), (1.0, -0.5), (3.0, 2.0)])
def test_explicit_drift_matches_closed_form(offset):
    theta = STAR + np.array(offset)
    est = drift_at(Q, GEN, theta, 0.1, "explicit", reps=40_000, seed=1)
    assert abs(est.mean_delta - explicit_drift(theta, 0.1, 3.0, 2)) < 4 * est.std_err


def test_drift_validation():
    with pytest.raises(UsageError):
        drift_at(Q, GEN, STAR, 0.1, reps=50)
    with pytest.raises(UsageError):
        drift_at(Q, GEN, np.zeros(3), 0.1)
    with pytest.raises(UsageError):
        drift_at(Q, GEN, STAR, 0.1, update="nesterov")


def test_classify():
    assert DriftEstimate(None, -1.0, 0.1, 100).classify() == NEGATIVE
    assert DriftEstimate(None, 1.0, 0.1, 100).classify() == POSITIVE
    assert DriftEstimate(None, 0.1, 0.1, 100).classify() == INDETERMINATE


def test_grid_parse_and_degenerate():
    g = GridSpec.parse("0,1,-1,1,-2,2,5")
    assert g.cells().shape == (25, 2)
    np.testing.assert_array_equal(g.cells()[:2], [[-1, -2], [-1, -1]])
    for bad in ("0,1,1,1,0,2,5", "0,0,-1,1,-1,1,5", "0,1,-1,1,-1,1,1", "0,1,2"):
        with pytest.raises(UsageError):
            GridSpec.parse(bad)


@given(st.lists(st.tuples(st.floats(-20, 20), st.floats(-20, 20)), min_size=1, max_size=200),
       st.integers(2, 12))
def test_occupancy_counts_every_point(pts, res):
    g = GridSpec(0, 1, -3, 3, -1, 4, res)
    occ = g.occupancy(np.array(pts))
    assert occ.sum() == len(pts) and occ.shape == (res * res,)


def test_occupancy_nearest_cell():
    g = GridSpec(0, 1, 0, 2, 0, 2, 3)
    occ = g.occupancy(np.array([[0.1, 0.0], [1.6, 0.9], [1.4, 1.1]]))
    assert occ[0] == 1 and occ[2 * 3 + 1] == 1 and occ[1 * 3 + 1] == 1


def test_map_is_order_independent_and_deterministic(tmp_path):
    g = GridSpec(0, 1, STAR[0] - 3, STAR[0] + 3, STAR[1] - 3, STAR[1] + 3, 5)
    a = map_pflug_region(Q, GEN, g, 0.1, "implicit", reps=200, seed=3)
    b = map_pflug_region(Q, GEN, g, 0.1, "implicit", reps=200, seed=3)
    np.testing.assert_array_equal(a.mean_delta, b.mean_delta)
    k = 7
    theta = STAR.copy()
    theta[0], theta[1] = g.cells()[k]
    single = drift_at(Q, GEN, theta, 0.1, "implicit", reps=200, seed=[3, k])
    assert single.mean_delta == a.mean_delta[k]
    a.write_csv(tmp_path / "a.csv")
    b.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = list(csv.DictReader(open(tmp_path / "a.csv")))
    assert len(rows) == 25 and set(rows[0]) == {"coord1", "coord2", "mean_delta", "std_err", "class", "occupancy"}
    a.write_json(tmp_path / "a.json")
    assert len(json.load(open(tmp_path / "a.json"))["cells"]) == 25


def test_centre_negative_far_cells_positive():
    g = GridSpec(0, 1, STAR[0] - 8, STAR[0] + 8, STAR[1] - 8, STAR[1] + 8, 3)
    m = map_pflug_region(Q, GEN, g, 0.1, "explicit", reps=4000, seed=0)
    assert m.classes[4] == NEGATIVE
    assert all(m.classes[k] == POSITIVE for k in (0, 2, 6, 8))


def test_map_validation():
    g = GridSpec(0, 3, 0, 1, 0, 1, 3)
    with pytest.raises(UsageError):
        map_pflug_region(Q, GEN, g, 0.1)
    with pytest.raises(UsageError):
        map_pflug_region(Q, GEN, GridSpec(0, 1, 0, 1, 0, 1, 3), 0.1, reps=10)


def test_coverage_box_covers():
    rng = np.random.default_rng(2)
    pts = rng.standard_normal((5000, 2)) * [1, 3]
    lo, hi = coverage_box(pts, 0.9)
    frac = np.all((pts >= lo) & (pts <= hi), axis=1).mean()
    assert 0.9 <= frac < 0.92


def test_empirical_region(tmp_path):
    reg = empirical_convergence_region(Q, GEN, STAR, 0.1, "implicit", chains=100, steps=600, seed=1)
    assert np.linalg.norm(reg.center - STAR) < 0.3
    assert reg.diverged_chains == 0
    assert abs(np.mean(reg.distance(reg.points) <= reg.radius) - 0.95) < 0.01
    assert reg.in_hull(reg.center)[0] and reg.in_box(reg.center)[0]
    assert not reg.in_hull(reg.center + 10 * reg.radius)[0]
    reg.write_csv(tmp_path / "o.csv")
    rows = list(csv.DictReader(open(tmp_path / "o.csv")))
    assert {r["shape"] for r in rows} == {"box", "hull"}


@settings(max_examples=5, deadline=None)
@given(st.sampled_from([50, 99]))
def test_empirical_region_validation(chains):
    with pytest.raises(UsageError):
        empirical_convergence_region(Q, GEN, STAR, 0.1, chains=chains)
    with pytest.raises(UsageError):
        empirical_convergence_region(Q, GEN, STAR, 0.1, coverage=1.0)
    with pytest.raises(UsageError):
        empirical_convergence_region(Q, GEN, STAR, 0.1, burn_fraction=0.0)
