import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgdconv.data import ResampleSource, decaying_theta_star
from sgdconv.errors import UsageError
from sgdconv.harness.benchmark import (
    LabelRule, holdout_error, load_benchmark, min_max_scale, parse_csv, parse_libsvm,
)
from sgdconv.harness.compare import (
    METHODS, SquaredError, compare_methods, run_method, svrg_curves, training_loss,
)
from sgdconv.harness.ols import ols_fit, stars
from sgdconv.harness.simulate import SimSpec, simulate_dataset
from sgdconv.harness.table1 import DiagnosticEvalRecord, fit_row, format_table, table1_experiment
from sgdconv.manifest import RunManifest, atomic_write_text
from sgdconv.data import Dataset
from sgdconv.model import LossModel


# --- simulation ---------------------------------------------------------

def test_true_parameter_values():
    star = decaying_theta_star(20)
    assert star[0] == pytest.approx(4.7237, abs=1e-4)
    assert np.all(np.diff(star) < 0) and star[-1] > 0


def test_residual_variance_near_nine():
    data, truth = simulate_dataset(SimSpec(p=20, N=5000, sigma=3.0, seed=4))
    resid = data.y - data.X @ truth.theta_star
    assert 8 <= resid.var() <= 10


def test_snr_sets_noise():
    spec = SimSpec(p=10, snr=5)
    assert spec.noise_sd**2 == pytest.approx(0.2)
    assert SimSpec(p=10, snr=5, model="logistic").noise_sd == 3.0


def test_simulation_is_deterministic():
    a, _ = simulate_dataset(SimSpec(p=3, N=50, seed=9))
    b, _ = simulate_dataset(SimSpec(p=3, N=50, seed=9))
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)


def test_simspec_parse_and_validation():
    s = SimSpec.parse("p=2, sigma=3,N=100", seed=4)
    assert (s.p, s.sigma, s.N, s.seed) == (2, 3.0, 100, 4)
    for bad in ("p", "q=3", "p=0", "model=poisson"):
        with pytest.raises(UsageError):
            SimSpec.parse(bad)


def test_logistic_labels_binary():
    data, _ = simulate_dataset(SimSpec(p=4, N=300, model="logistic", seed=1))
    assert set(np.unique(data.y)) <= {0.0, 1.0}


# --- OLS ----------------------------------------------------------------

def test_ols_exact_fit():
    x = np.arange(10.0)
    fit = ols_fit(np.column_stack([np.ones(10), x]), 2 + 3 * x)
    np.testing.assert_allclose(fit.coefficients, [2, 3], atol=1e-10)
    assert np.all(fit.std_errors < 1e-10)
    assert fit.p_values[1] < 1e-10


def test_ols_orthogonal_response():
    design = np.column_stack([np.ones(4), [1.0, -1.0, 1.0, -1.0]])
    fit = ols_fit(design, [1.0, 1.0, -1.0, -1.0])
    assert fit.coefficients[1] == pytest.approx(0, abs=1e-12)
    assert fit.p_values[1] == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5))
def test_ols_matches_normal_equations(seed, k):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(40), rng.standard_normal((40, k - 1))])
    y = rng.standard_normal(40)
    fit = ols_fit(X, y)
    beta = np.linalg.solve(X.T @ X, X.T @ y)
    np.testing.assert_allclose(fit.coefficients, beta, atol=1e-8)
    s2 = ((y - X @ beta) ** 2).sum() / (40 - k)
    np.testing.assert_allclose(fit.std_errors, np.sqrt(s2 * np.diag(np.linalg.inv(X.T @ X))), rtol=1e-8)
    assert np.all((fit.p_values >= 0) & (fit.p_values <= 1))


def test_ols_rank_deficient():
    X = np.column_stack([np.ones(5), np.ones(5)])
    with pytest.raises(UsageError):
        ols_fit(X, np.arange(5.0))
    with pytest.raises(UsageError):
        ols_fit(np.ones((2, 2)), np.ones(2))


def test_stars():
    assert [stars(p) for p in (0.0005, 0.005, 0.03, 0.07, 0.5)] == ["***", "**", "*", ".", ""]


# --- table of regressions -------------------------------------------------

def test_fit_row_rejects_constant_e0():
    recs = [DiagnosticEvalRecord(0.1, 10 + i, 1.0, float(i), float(i)) for i in range(10)]
    with pytest.raises(UsageError):
        fit_row(0.1, recs, 0, 10)


def test_fit_row_aborts_on_failures():
    row = fit_row(0.1, [], 30, 100)
    assert row.aborted and "30" in row.message
    assert "aborted" in format_table([row])


def test_small_table_run():
    spec = SimSpec(p=5, N=2000, sigma=1.0)
    rows = table1_experiment(gammas=(0.1,), runs_per_gamma=20, spec=spec, seed=3)
    row = rows[0]
    assert not row.aborted
    assert len(row.records) + row.failures == 20
    for r in row.records:
        assert 0 < r.tau <= spec.N
    assert 0 <= row.p_half <= 1 and 0 <= row.p_two <= 1
    again = table1_experiment(gammas=(0.1,), runs_per_gamma=20, spec=spec, seed=3)[0]
    assert [r.tau for r in again.records] == [r.tau for r in row.records]


# --- comparison harness -----------------------------------------------------

def test_budget_below_one_pass_rejected():
    with pytest.raises(UsageError):
        compare_methods(SimSpec(p=2, N=100), passes=0)


def test_training_loss_values():
    Q, L = LossModel.quadratic(), LossModel.logistic()
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    y = np.array([1.0, 0.0])
    assert training_loss(Q, X, y, np.zeros((1, 2)))[0] == pytest.approx(0.25)
    assert training_loss(L, X, y, np.zeros((1, 2)))[0] == pytest.approx(np.log(2))


def test_svrg_snapshot_loss_decreases_on_quadratic():
    spec = SimSpec(p=5, N=500, sigma=1.0, seed=2)
    data, _ = simulate_dataset(spec)
    Q = LossModel.quadratic()
    rngs = [np.random.default_rng(0)]
    src = ResampleSource(data.X[None], data.y[None], rngs)

    def loss(theta):
        return training_loss(Q, data.X, data.y, theta)

    # checkpoints at each snapshot (cost k*(2N) once the inner loop finishes)
    ck = [k * 2 * 500 for k in range(1, 6)]
    _, curve, div = svrg_curves(Q, data.X, data.y, src, np.zeros((1, 5)), 0.02, 5000, ck, loss)
    assert not div[0]
    assert np.all(np.diff(curve[0]) <= 1e-12)


@pytest.mark.parametrize("method", METHODS)
def test_each_method_reduces_error(method):
    spec = SimSpec(p=3, N=400, sigma=1.0, seed=5)
    data, truth = simulate_dataset(spec)
    rngs = [np.random.default_rng([1, b]) for b in range(2)]
    X = np.stack([data.X] * 2)
    y = np.stack([data.y] * 2)
    gam = np.full(2, 1.0 if method == "ClassicalISGD" else 0.05)
    _, curve, div = run_method(method, spec.loss_model, X, y, rngs, np.zeros(3), gam, 3,
                               [0, 1, 3], SquaredError(truth.theta_star), burnin=400)
    assert not div.any()
    assert np.all(curve[:, -1] < 0.2 * curve[:, 0])


def test_compare_small_run_is_deterministic():
    spec = SimSpec(p=3, N=300, model="logistic", seed=0)
    kw = dict(methods=("SVRG", "AveragedISGD"), passes=2, seeds=2, seed=1, grid=(0.01, 0.1))
    a, b = compare_methods(spec, **kw), compare_methods(spec, **kw)
    for m in kw["methods"]:
        np.testing.assert_array_equal(a.values[m], b.values[m])
        assert a.rates[m] in kw["grid"]
    rows = list(a.rows())
    assert len(rows) == 2 * 2 * len(a.checkpoints)
    assert set(rows[0]) == {"method", "seed", "passes", "value", "rate"}


def test_unknown_method():
    with pytest.raises(UsageError):
        run_method("Adam", LossModel.quadratic(), np.zeros((1, 5, 2)), np.zeros((1, 5)),
                   [np.random.default_rng(0)], np.zeros(2), [0.1], 1, [1], lambda t: t[:, 0])


# --- benchmark ingestion ----------------------------------------------------

def test_libsvm_line(tmp_path):
    f = tmp_path / "a.libsvm"
    f.write_text("1 3:0.5 7:1\n")
    X, labels = parse_libsvm(f, n_features=10)
    assert X.shape == (1, 10) and labels[0] == 1
    assert X[0, 2] == 0.5 and X[0, 6] == 1 and X[0].sum() == 1.5


def test_libsvm_errors(tmp_path):
    f = tmp_path / "bad.libsvm"
    f.write_text("1 1:2\n0 2:x\n")
    with pytest.raises(UsageError, match="line 2"):
        parse_libsvm(f)
    f.write_text("1 0:2\n")
    with pytest.raises(UsageError, match="line 1"):
        parse_libsvm(f)
    f.write_text("\n\n")
    with pytest.raises(UsageError, match="no observations"):
        parse_libsvm(f)
    f.write_text("1 5:1\n")
    with pytest.raises(UsageError):
        parse_libsvm(f, n_features=3)


def test_csv_parse(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("a,y,b\n1,0,2\n3,1,4\n")
    X, labels = parse_csv(f)
    np.testing.assert_array_equal(X, [[1, 2], [3, 4]])
    np.testing.assert_array_equal(labels, [0, 1])
    f.write_text("a,y\n1,0,2\n")
    with pytest.raises(UsageError, match="line 2"):
        parse_csv(f)
    with pytest.raises(UsageError):
        parse_csv(f, label_column="z")


def test_label_rules():
    np.testing.assert_array_equal(LabelRule("2-vs-rest")([1, 2, 3, 2]), [0, 1, 0, 1])
    np.testing.assert_array_equal(LabelRule("le-4")([0, 4, 5, 9]), [1, 1, 0, 0])
    np.testing.assert_array_equal(LabelRule("binary")([-1, 1, 1]), [0, 1, 1])
    with pytest.raises(UsageError):
        LabelRule("binary")([1, 2, 3])
    with pytest.raises(UsageError):
        LabelRule("odd")


def test_scaling_uses_train_range_only():
    train = np.array([[0.0, 5.0], [2.0, 5.0]])
    test = np.array([[4.0, 7.0]])
    lo, hi, (a, b) = min_max_scale(train, test)
    np.testing.assert_array_equal(a, [[0, 0], [1, 0]])
    np.testing.assert_array_equal(b, [[2, 2]])


def test_load_benchmark_split(tmp_path):
    f = tmp_path / "c.libsvm"
    rng = np.random.default_rng(0)
    lines = [f"{rng.integers(1, 4)} 1:{rng.random():.3f} 3:{rng.random():.3f}" for _ in range(100)]
    f.write_text("\n".join(lines) + "\n")
    bench = load_benchmark(f, label_rule="2-vs-rest", seed=1)
    assert len(bench.train) == 80 and len(bench.test) == 20
    assert bench.train.X.min() == 0 and bench.train.X.max() <= 1
    assert len(load_benchmark(f, label_rule="2-vs-rest", subsample=50).train) == 40
    with pytest.raises(UsageError):
        load_benchmark(tmp_path / "missing.libsvm")


def test_holdout_error_examples():
    L, Q = LossModel.logistic(), LossModel.quadratic()
    X = np.array([[1.0], [-1.0], [2.0], [-3.0]])
    y = np.array([1.0, 0.0, 1.0, 0.0])
    assert holdout_error(L, [1.0], Dataset(X, y)) == 0
    assert holdout_error(L, [-1.0], Dataset(X, y)) == 1
    rng = np.random.default_rng(0)
    yb = rng.integers(0, 2, 2000).astype(float)
    Xc = np.column_stack([np.ones(2000), rng.standard_normal(2000)])
    assert 0.4 <= holdout_error(L, [1.0, 0.0], Dataset(Xc, yb)) <= 0.6
    star = np.array([1.0, -2.0])
    assert holdout_error(Q, star, Dataset(Xc, Xc @ star)) == pytest.approx(0, abs=1e-20)


# --- manifest -----------------------------------------------------------------

def test_manifest_round_trip(tmp_path):
    m = RunManifest("diagnose", {"gamma": 0.1}, 3, outputs=["trace.csv"])
    path = m.write(tmp_path)
    back = RunManifest.read(path)
    assert back.config == {"gamma": 0.1} and back.outputs == ["trace.csv"]
    assert [p.name for p in tmp_path.iterdir()] == ["manifest.json"]


def test_atomic_write_leaves_old_file_on_failure(tmp_path):
    path = tmp_path / "x.json"
    atomic_write_text(path, json.dumps({"a": 1}))

    class Boom:
        def __str__(self):
            raise RuntimeError

    with pytest.raises(TypeError):
        atomic_write_text(path, Boom())
    assert json.loads(path.read_text()) == {"a": 1}
    assert [p.name for p in tmp_path.iterdir()] == ["x.json"]
