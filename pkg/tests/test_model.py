import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgdconv.errors import NumericError, UsageError
from sgdconv.model import LOGIT_CLAMP, DataPoint, LossModel, gradient, predict

from conftest import LOSS, poisson_model

MODELS = {"quadratic": LossModel.quadratic, "logistic": LossModel.logistic, "poisson": poisson_model}


def fd_gradient(kind, x, y, theta):
    g = np.empty_like(theta)
    for i in range(len(theta)):
        h = 1e-6 * (1 + abs(theta[i]))
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        g[i] = (LOSS[kind](y, x @ up) - LOSS[kind](y, x @ down)) / (2 * h)
    return g


def test_gradient_examples():
    q, lg = LossModel.quadratic(), LossModel.logistic()
    np.testing.assert_array_equal(gradient(q, DataPoint([1, 2], 1), [0, 0]), [-1, -2])
    np.testing.assert_array_equal(gradient(lg, DataPoint([1, 0], 1), [0, 0]), [-0.5, 0])
    theta = np.array([0.3, -1.2])
    np.testing.assert_array_equal(gradient(q, DataPoint([1, 0], 0.3), theta), [0, 0])


def test_gradient_errors():
    with pytest.raises(UsageError):
        gradient(LossModel.quadratic(), DataPoint([1, 2], 1), [0, 0, 0])
    with pytest.raises(NumericError, match="index 1"):
        gradient(LossModel.quadratic(), DataPoint([1, 2], 1), [0, np.inf])


def test_datapoint_rejects_non_finite():
    with pytest.raises(NumericError, match="index 2"):
        DataPoint([0, 1, np.nan], 0)
    with pytest.raises(NumericError):
        DataPoint([0, 1], np.inf)
    p = DataPoint([1, 2], 3)
    with pytest.raises(ValueError):
        p.x[0] = 5


def test_predict_examples():
    lg = LossModel.logistic()
    assert predict(lg, [1.0, -1.0], [2.0, 2.0]) == 0.5
    theta = np.array([1.5, -0.5])
    assert predict(LossModel.quadratic(), [2.0, 1.0], theta) == 2.5
    top = predict(lg, [1.0], [np.inf])
    assert top == pytest.approx(1 - 2.3e-16, abs=1e-16)
    assert top == 1 / (1 + np.exp(-LOGIT_CLAMP))
    assert predict(lg, [1.0], [-np.inf]) > 0


def test_from_name():
    assert LossModel.from_name("logistic").kind == "logistic"
    with pytest.raises(UsageError):
        LossModel.from_name("hinge")


vec = st.lists(st.floats(-3, 3), min_size=1, max_size=6)


@settings(max_examples=100, deadline=None)
@given(kind=st.sampled_from(sorted(MODELS)), data=st.data())
def test_gradient_matches_finite_differences(kind, data):
    p = data.draw(st.integers(1, 6))
    x = np.array(data.draw(st.lists(st.floats(-2, 2), min_size=p, max_size=p)))
    theta = np.array(data.draw(st.lists(st.floats(-2, 2), min_size=p, max_size=p)))
    y = data.draw(st.sampled_from([0.0, 1.0]) if kind != "quadratic" else st.floats(-5, 5))
    g = gradient(MODELS[kind](), DataPoint(x, y), theta)
    fd = fd_gradient(kind, x, y, theta)
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-7 * (1 + np.abs(fd).max()))


@given(x=vec, y=st.sampled_from([0.0, 1.0]), scale=st.floats(-50, 50))
def test_logistic_gradient_bounded_by_feature_norm(x, y, scale):
    x = np.array(x)
    g = gradient(LossModel.logistic(), DataPoint(x, y), np.full(len(x), scale))
    assert np.linalg.norm(g) <= np.linalg.norm(x) * (1 + 1e-12)


@given(x=st.lists(st.integers(-8, 8), min_size=2, max_size=2), y=st.integers(-8, 8),
       a=st.lists(st.integers(-8, 8), min_size=2, max_size=2),
       b=st.lists(st.integers(-8, 8), min_size=2, max_size=2))
def test_quadratic_gradient_is_affine(x, y, a, b):
    # small integers keep every intermediate exact in floating point
    q, pt = LossModel.quadratic(), DataPoint(x, y)
    a, b = np.array(a, float), np.array(b, float)
    lhs = gradient(q, pt, a) + gradient(q, pt, b) - 2 * gradient(q, pt, (a + b) / 2)
    assert np.all(lhs == 0)
