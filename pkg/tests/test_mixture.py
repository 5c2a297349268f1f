import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marketstates import mixture, regime
from marketstates.errors import MarketStatesError

from oracles import moment_standard_errors


def _spec(w, mu, sd):
    return mixture.MixtureSpec(np.array(w, float), np.array(mu, float), np.array(sd, float))


def test_single_component_mean():
    x = mixture.sample(_spec([1.0], [0.0], [1.0]), 100_000, seed=4)
    assert abs(x.mean()) < 0.013


def test_degenerate_component():
    x = mixture.sample(_spec([1.0, 0.0], [5.0, -5.0], [0.0, 0.0]), 1000, seed=1)
    assert np.all(x == 5.0)


def test_two_component_empirical_vs_analytic():
    spec = _spec([0.5, 0.5], [-1.0, 1.0], [0.1, 0.1])
    n = 200_000
    x = mixture.sample(spec, n, seed=8)
    mean = x.mean()
    dev = x - mean
    m2 = np.mean(dev**2)
    emp = (mean, np.sqrt(m2), np.mean(dev**3) / m2**1.5, np.mean(dev**4) / m2**2 - 3)
    ana = mixture.analytic_moments(spec)
    se = moment_standard_errors(spec.weights, spec.mus, spec.sigmas, n)
    for e, a, s in zip(emp, ana, se):
        assert abs(e - a) <= 3 * s


def test_sampling_deterministic():
    spec = _spec([0.3, 0.7], [0.0, 0.01], [0.01, 0.02])
    assert mixture.sample(spec, 5000, 3).tobytes() == mixture.sample(spec, 5000, 3).tobytes()
    assert mixture.sample(spec, 5000, 3).tobytes() != mixture.sample(spec, 5000, 4).tobytes()


def test_two_point_moments():
    mean, std, skew, kurt = mixture.analytic_moments(_spec([0.5, 0.5], [-1.0, 1.0], [0.0, 0.0]))
    assert (mean, std, skew) == (0.0, 1.0, 0.0)
    assert kurt == pytest.approx(-2.0, abs=1e-15)


def test_gaussian_moments():
    _, std, skew, kurt = mixture.analytic_moments(_spec([1.0], [0.3], [2.0]))
    assert (std, skew, kurt) == (2.0, 0.0, 0.0)


def test_scale_mixture_is_leptokurtic():
    w, s1, s2 = 0.6, 1.0, 3.0
    _, _, skew, kurt = mixture.analytic_moments(_spec([w, 1 - w], [0.0, 0.0], [s1, s2]))
    direct = 3 * (w * s1**4 + (1 - w) * s2**4) / (w * s1**2 + (1 - w) * s2**2) ** 2 - 3
    assert skew == 0.0
    assert kurt == pytest.approx(direct, rel=1e-12) and kurt > 0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 1), st.floats(-0.05, 0.05), st.floats(0.001, 0.05)),
                min_size=1, max_size=6))
def test_mixture_mean_identity(components):
    w = np.array([c[0] for c in components])
    w = w / w.sum()
    spec = mixture.MixtureSpec(w, [c[1] for c in components], [c[2] for c in components])
    mean = mixture.analytic_moments(spec)[0]
    assert abs(mean - sum(wi * c[1] for wi, c in zip(w, components))) < 1e-12


def test_fit_normal():
    spec = mixture.fit_normal(np.array([0.01, 0.03]))
    assert spec.mus[0] == pytest.approx(0.02, abs=1e-17)
    assert spec.sigmas[0] == pytest.approx(0.01, abs=1e-17)
    with pytest.raises(MarketStatesError, match="constant"):
        mixture.fit_normal(np.full(10, 0.002))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-0.2, 0.2), min_size=2, max_size=300).filter(lambda v: np.ptp(v) > 1e-6))
def test_fit_normal_has_zero_higher_moments(values):
    _, _, skew, kurt = mixture.analytic_moments(mixture.fit_normal(np.array(values)))
    assert skew == 0.0 and kurt == 0.0


def _machine(freq, mu, sigma):
    k = len(freq)
    return regime.StateMachine(np.zeros((k, k), int), np.eye(k), np.array(freq), np.array(mu),
                               np.array(sigma), np.array([10] * k))


def test_from_state_machine():
    sm = _machine([0.25, 0.75], [0.01, -0.002], [0.01, 0.02])
    spec = mixture.from_state_machine(sm)
    assert mixture.analytic_moments(spec)[0] == pytest.approx(0.25 * 0.01 + 0.75 * -0.002, abs=1e-18)
    assert mixture.analytic_moments(spec)[3] > 0


def test_single_state_machine_equals_fit_normal(rng):
    r = rng.normal(0.0004, 0.012, 400)
    mu, sd = regime.state_gaussians(np.zeros(400, dtype=int), r, 1)
    spec = mixture.from_state_machine(_machine([1.0], mu, sd))
    base = mixture.fit_normal(r)
    assert spec.mus[0] == base.mus[0] and spec.sigmas[0] == base.sigmas[0]


@pytest.mark.parametrize("w, mu, sd", [([0.5, 0.6], [0, 0], [1, 1]), ([1.0], [0.0], [0.0]),
                                        ([0.5, 0.5], [1.0, 1.0], [0.0, 0.0]), ([1.0], [0.0], [-1.0])])
def test_invalid_specs(w, mu, sd):
    with pytest.raises(MarketStatesError):
        _spec(w, mu, sd)
