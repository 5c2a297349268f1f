import numpy as np
import pytest

from marketstates import experiment, kmeans


def assert_inertia_non_increasing(model):
    h = np.asarray(model.history)
    assert len(h) >= 2
    assert np.all(np.diff(h) <= 1e-9 * np.maximum(h[:-1], 1.0)), h


@pytest.fixture(autouse=True)
def _check_every_kmeans_fit(monkeypatch):
    """Every K-Means fit made anywhere in the suite must have non-increasing inertia."""
    original = kmeans.fit

    def checked(*args, **kwargs):
        model = original(*args, **kwargs)
        assert_inertia_non_increasing(model)
        return model

    monkeypatch.setattr(kmeans, "fit", checked)


@pytest.fixture(scope="session")
def two_regime_prices():
    return experiment.gen_markov_switching(experiment.two_regime(seed=11))


@pytest.fixture(scope="session")
def three_regime_prices():
    return experiment.gen_markov_switching(experiment.three_regime(seed=5, n_days=3000))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# ---------------------------------------------------------------------------
# Acceptance summary: one PASS/FAIL line per test marked ``criterion``
# ---------------------------------------------------------------------------

_verdicts: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    details = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if report.skipped:
        _verdicts[number] = f"SKIP criterion {number}: {title}"
    elif report.when == "call" or report.failed:
        status = "PASS" if report.passed else "FAIL"
        if number in _verdicts and _verdicts[number].startswith("FAIL"):
            return
        _verdicts[number] = f"{status} criterion {number}: {title}" + (f" ({details})" if details else "")


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(_verdicts):
            terminalreporter.write_line(_verdicts[number])
