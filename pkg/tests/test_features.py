import math
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from marketstates.errors import FeatureError
from marketstates.features import (
    FeatureMatrix,
    StandardizationParams,
    apply_standardizer,
    build_features,
    fit_standardizer,
    invert_standardizer,
    momentum,
    risk,
)
from marketstates.marketdata import PriceSeries, ReturnSeries, log_returns

HORIZONS = (5, 10, 20, 30, 40, 50)


def _rs(values):
    dates = tuple(date(2020, 1, 1) + timedelta(days=i) for i in range(len(values)))
    return ReturnSeries(dates, np.asarray(values, dtype=float))


def _two_pass_std(window):
    n = len(window)
    mean = sum(window) / n
    return math.sqrt(sum((v - mean) ** 2 for v in window) / n)


def test_momentum_sum_of_last_two():
    assert momentum([0.01, 0.02, 0.03], 2, 2) == pytest.approx(0.05, abs=1e-15)


def test_momentum_zero_returns():
    assert momentum(np.zeros(30), 20, 29) == 0.0


def test_momentum_matches_price_ratio(rng):
    prices = rng.uniform(50, 150, 61)
    dates = tuple(date(2020, 1, 1) + timedelta(days=i) for i in range(61))
    r = log_returns(PriceSeries(dates, prices))
    for at in range(19, 60):
        # return index `at` ends at price index at+1
        expected = math.log(prices[at + 1] / prices[at + 1 - 20])
        assert abs(momentum(r, 20, at) - expected) < 1e-12


def test_momentum_insufficient_history():
    with pytest.raises(FeatureError, match="insufficient history"):
        momentum([0.1, 0.2], 3, 1)
    with pytest.raises(FeatureError):
        risk([0.1, 0.2], 3, 1)


def test_risk_constant_and_alternating():
    assert risk([0.003] * 10, 5, 9) == pytest.approx(0.0, abs=1e-18)
    assert risk([0.02, -0.02, 0.02, -0.02], 2, 3) == pytest.approx(0.02, abs=1e-15)


def test_risk_matches_two_pass_oracle(rng):
    r = rng.normal(0, 0.01, 60)
    for at in range(9, 60):
        assert abs(risk(r, 10, at) - _two_pass_std(list(r[at - 9 : at + 1]))) < 1e-12


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, 80, elements=st.floats(-0.1, 0.1)),
    st.integers(1, 30),
    st.integers(1, 30),
    st.integers(0, 19),
)
def test_momentum_additive_over_adjacent_windows(r, t1, t2, offset):
    at = 79 - offset
    assert momentum(r, t1 + t2, at) == pytest.approx(
        momentum(r, t1, at) + momentum(r, t2, at - t1), abs=1e-12
    )


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 40, elements=st.floats(-0.1, 0.1)), st.floats(-0.05, 0.05), st.integers(2, 40))
def test_risk_shift_invariant(r, c, h):
    assert risk(r + c, h, 39) == pytest.approx(risk(r, h, 39), abs=1e-12)


def test_build_features_shape():
    m = build_features(_rs(np.random.default_rng(0).normal(0, 0.01, 60)), HORIZONS)
    assert m.values.shape == (11, 12)
    assert m.columns == ["Mom_5", "Risk_5", "Mom_10", "Risk_10", "Mom_20", "Risk_20",
                         "Mom_30", "Risk_30", "Mom_40", "Risk_40", "Mom_50", "Risk_50"]


def test_build_features_constant_price():
    m = build_features(_rs(np.zeros(20)), (5,))
    assert np.all(m.values == 0.0)
    assert len(m) == 16


def test_build_features_per_cell(rng):
    r = _rs(rng.normal(0, 0.015, 120))
    m = build_features(r, HORIZONS)
    assert len(m) == 120 - 50 + 1
    assert m.dates == r.dates[49:]
    for row, at in enumerate(range(49, 120)):
        for j, h in enumerate(HORIZONS):
            assert abs(m.values[row, 2 * j] - momentum(r, h, at)) < 1e-12
            assert abs(m.values[row, 2 * j + 1] - risk(r, h, at)) < 1e-12
    assert np.all(m.risk_columns() >= 0)


def test_build_features_rejects_bad_input():
    with pytest.raises(FeatureError):
        build_features(_rs(np.zeros(50)), HORIZONS)
    with pytest.raises(FeatureError):
        build_features(_rs(np.zeros(100)), (10, 5))


def test_features_csv_layout(tmp_path, rng):
    m = build_features(_rs(rng.normal(0, 0.01, 55)), HORIZONS)
    m.to_csv(tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "date,Mom_5,Risk_5,Mom_10,Risk_10,Mom_20,Risk_20,Mom_30,Risk_30,Mom_40,Risk_40,Mom_50,Risk_50"
    assert len(lines) == 1 + len(m)


def _fm(values):
    values = np.asarray(values, dtype=float)
    dates = tuple(date(2020, 1, 1) + timedelta(days=i) for i in range(len(values)))
    return FeatureMatrix(dates, values, tuple(range(1, values.shape[1] // 2 + 1)))


def test_fit_standardizer_simple():
    p = fit_standardizer(_fm([[0.0, 5.0], [2.0, 7.0]]))
    np.testing.assert_array_equal(p.means, [1.0, 6.0])
    np.testing.assert_array_equal(p.stds, [1.0, 1.0])


def test_zero_variance_column_reported():
    with pytest.raises(FeatureError, match="zero-variance column Risk_1"):
        fit_standardizer(_fm([[0.0, 3.0], [2.0, 3.0]]))


def test_standardize_moments(rng):
    m = _fm(rng.normal(3.0, 2.0, (200, 6)))
    z = apply_standardizer(fit_standardizer(m), m).values
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-10)


def test_identity_params():
    m = _fm([[1.0, 2.0], [3.0, 4.0]])
    z = apply_standardizer(StandardizationParams(np.zeros(2), np.ones(2)), m)
    np.testing.assert_array_equal(z.values, m.values)
    assert z.dates == m.dates


def test_train_params_on_test_round_trip(rng):
    train = _fm(rng.normal(0.0, 0.02, (100, 4)))
    test = _fm(rng.normal(0.01, 0.03, (40, 4)))
    p = fit_standardizer(train)
    back = invert_standardizer(p, apply_standardizer(p, test))
    np.testing.assert_allclose(back.values, test.values, rtol=0, atol=1e-12)


def test_dimension_mismatch():
    p = StandardizationParams(np.zeros(4), np.ones(4))
    with pytest.raises(FeatureError, match="dimension mismatch"):
        apply_standardizer(p, _fm([[1.0, 2.0], [3.0, 4.0]]))
    with pytest.raises(FeatureError):
        StandardizationParams(np.zeros(2), np.array([1.0, 0.0]))
