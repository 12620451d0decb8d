import numpy as np
import pytest

from sgdconv.model import LossModel

# loss value oracles, l(y, u) = -y u + f(u)
LOSS = {
    "quadratic": lambda y, u: 0.5 * (y - u) ** 2,
    "logistic": lambda y, u: -y * u + np.logaddexp(0.0, u),
    "poisson": lambda y, u: -y * u + np.exp(u),
}


def poisson_model():
    return LossModel.custom(np.exp, np.exp)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance reporting ------------------------------------------------
# Tests tagged @pytest.mark.acceptance(k) feed one PASS/FAIL line per criterion.

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(k): test belongs to acceptance criterion k")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or (report.when != "call" and report.passed):
        return
    key = mark.args[0]
    _ACCEPTANCE[key] = _ACCEPTANCE.get(key, True) and report.passed


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: (int(str(k).rstrip("ab")), str(k))):
        terminalreporter.write_line(f"ACCEPTANCE {key}: {'PASS' if _ACCEPTANCE[key] else 'FAIL'}")
