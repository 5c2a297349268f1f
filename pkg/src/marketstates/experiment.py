"""End-to-end scenarios: fit a regime model, score it against held-out returns, sweep K.

Also hosts a Markov-switching price generator with known ground truth, used
for self-contained benchmarks and tests.
"""

from __future__ import annotations

import bisect
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from marketstates import distmetrics, kmeans, mixture, regime
from marketstates.config import (
    DEFAULT_HORIZONS,
    MIN_TEST_DAYS,
    TRAIN_ROWS_PER_STATE,
    KMeansSettings,
    MetricSettings,
)
from marketstates.errors import DataError, MarketStatesError, PipelineError
from marketstates.features import (
    StandardizationParams,
    apply_standardizer,
    build_features,
    fit_standardizer,
)
from marketstates.marketdata import (
    PriceSeries,
    ReturnSeries,
    load_data_dir,
    log_returns,
    split_by_date,
)

logger = logging.getLogger(__name__)

DataSource = Union[str, os.PathLike, Mapping[str, PriceSeries]]


def subseed(seed: int, *keys: int) -> int:
    """Deterministic 32-bit child seed for ``(seed, *keys)``."""
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])


# Sub-seed keys inside one scenario.
_KMEANS, _SM_SAMPLE, _NORMAL_SAMPLE = 0, 1, 2


# ---------------------------------------------------------------------------
# Synthetic Markov-switching prices
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SynthParams:
    trans: np.ndarray
    mus: np.ndarray
    sigmas: np.ndarray
    n_days: int = 3000
    p0: float = 100.0
    seed: int = 0
    asset_id: str = "SYNTH"
    start: date = date(2000, 1, 3)

    def __post_init__(self):
        trans = np.atleast_2d(np.asarray(self.trans, dtype=float))
        mus = np.atleast_1d(np.asarray(self.mus, dtype=float))
        sigmas = np.atleast_1d(np.asarray(self.sigmas, dtype=float))
        k = len(mus)
        if trans.shape != (k, k) or sigmas.shape != (k,):
            raise MarketStatesError("trans must be (k, k) with k mus and sigmas")
        if np.any(trans < 0) or np.any(np.abs(trans.sum(axis=1) - 1.0) > 1e-12):
            raise MarketStatesError("trans must be row-stochastic")
        if np.any(sigmas < 0):
            raise MarketStatesError("sigmas must be non-negative")
        if self.n_days < 2 or not self.p0 > 0:
            raise MarketStatesError("n_days must be >= 2 and p0 > 0")
        object.__setattr__(self, "trans", trans)
        object.__setattr__(self, "mus", mus)
        object.__setattr__(self, "sigmas", sigmas)

    @property
    def n_states(self) -> int:
        return len(self.mus)

    def true_mixture(self) -> mixture.MixtureSpec:
        """Stationary-weighted mixture of the regime return distributions."""
        w = stationary_distribution(self.trans)
        return mixture.MixtureSpec(w, self.mus, self.sigmas)


def two_regime(seed: int = 0, n_days: int = 3000, **kw) -> SynthParams:
    """Calm/crisis benchmark: persistent regimes, crisis volatility six times calm."""
    return SynthParams(
        trans=[[0.98, 0.02], [0.02, 0.98]],
        mus=[0.0005, -0.002],
        sigmas=[0.005, 0.03],
        n_days=n_days,
        seed=seed,
        **kw,
    )


def three_regime(seed: int = 0, n_days: int = 5000, **kw) -> SynthParams:
    """Calm / normal / crisis with a rare, violent crisis state."""
    return SynthParams(
        trans=[[0.985, 0.013, 0.002], [0.02, 0.97, 0.01], [0.01, 0.03, 0.96]],
        mus=[0.0006, 0.0, -0.003],
        sigmas=[0.005, 0.012, 0.035],
        n_days=n_days,
        seed=seed,
        **kw,
    )


def stationary_distribution(trans) -> np.ndarray:
    p = np.asarray(trans, dtype=float)
    k = len(p)
    a = np.vstack([p.T - np.eye(k), np.ones(k)])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    pi = np.linalg.lstsq(a, b, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def simulate_chain(trans, n: int, rng: np.random.Generator, initial: Optional[int] = None) -> np.ndarray:
    """State path of length ``n``; the first state is drawn from the stationary law unless given."""
    p = np.asarray(trans, dtype=float)
    k = len(p)
    cum = np.cumsum(p, axis=1)
    cum[:, -1] = 1.0
    u = rng.random(n)
    states = np.empty(n, dtype=np.int64)
    if initial is None:
        pi_cum = np.cumsum(stationary_distribution(p))
        pi_cum[-1] = 1.0
        initial = int(np.searchsorted(pi_cum, u[0], side="right"))
    s = min(int(initial), k - 1)
    states[0] = s
    for t in range(1, n):
        s = min(int(np.searchsorted(cum[s], u[t], side="right")), k - 1)
        states[t] = s
    return states


def simulate_regimes(p: SynthParams) -> tuple[np.ndarray, np.ndarray]:
    """Hidden states and log-returns for the ``n_days - 1`` daily moves."""
    rng = np.random.default_rng(p.seed)
    n = p.n_days - 1
    states = simulate_chain(p.trans, n, rng)
    returns = p.mus[states] + p.sigmas[states] * rng.standard_normal(n)
    return states, returns


def business_days(start: date, n: int) -> tuple[date, ...]:
    out = []
    d = start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return tuple(out)


def gen_markov_switching(p: SynthParams) -> PriceSeries:
    """Price path ``p0 * exp(cumsum(r))`` on consecutive weekdays."""
    _, returns = simulate_regimes(p)
    growth = np.exp(np.concatenate([[0.0], np.cumsum(returns)]))
    return PriceSeries(business_days(p.start, p.n_days), p.p0 * growth, p.asset_id)


# ---------------------------------------------------------------------------
# Fitted model bundle
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RegimeModel:
    """Everything needed to label new days and generate returns."""

    asset_id: str
    train_start: date
    train_end: date
    horizons: tuple[int, ...]
    standardizer: StandardizationParams
    clusters: kmeans.ClusterModel
    machine: regime.StateMachine
    baseline: mixture.MixtureSpec

    @property
    def k(self) -> int:
        return self.clusters.k

    def state_mixture(self) -> mixture.MixtureSpec:
        return mixture.from_state_machine(self.machine)

    def centroids_original(self) -> np.ndarray:
        return kmeans.destandardize_centroids(self.clusters, self.standardizer)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": int(self.clusters.seed),
            "horizons": list(self.horizons),
            "standardizer": self.standardizer.to_dict(),
            "centroids": self.clusters.centroids.tolist(),
            "inertia": float(self.clusters.inertia),
            "n_iterations": int(self.clusters.n_iterations),
            "asset_id": self.asset_id,
            "train_start": self.train_start.isoformat(),
            "train_end": self.train_end.isoformat(),
            "state_machine": self.machine.to_dict(),
            "baseline": {"mu": float(self.baseline.mus[0]), "sigma": float(self.baseline.sigmas[0])},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RegimeModel":
        clusters = kmeans.ClusterModel(
            np.array(d["centroids"], dtype=float), d["inertia"], d["seed"], d["n_iterations"]
        )
        return cls(
            asset_id=d["asset_id"],
            train_start=date.fromisoformat(d["train_start"]),
            train_end=date.fromisoformat(d["train_end"]),
            horizons=tuple(d["horizons"]),
            standardizer=StandardizationParams.from_dict(d["standardizer"]),
            clusters=clusters,
            machine=regime.StateMachine.from_dict(d["state_machine"]),
            baseline=mixture.MixtureSpec([1.0], [d["baseline"]["mu"]], [d["baseline"]["sigma"]]),
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> "RegimeModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@contextmanager
def _stage(name: str):
    """Re-raise package errors as PipelineError tagged with the stage name."""
    try:
        yield
    except PipelineError:
        raise
    except MarketStatesError as exc:
        raise PipelineError(name, str(exc)) from exc


def fit_on_returns(
    train: ReturnSeries,
    k: int,
    seed: int,
    horizons: Sequence[int] = DEFAULT_HORIZONS,
    kmeans_settings: KMeansSettings = KMeansSettings(),
) -> RegimeModel:
    """Features -> standardize -> K-Means -> state machine on one training slice.

    The normal baseline uses the same post-warm-up returns the machine sees.
    """
    horizons = tuple(horizons)
    with _stage("features"):
        feats = build_features(train, horizons)
        params = fit_standardizer(feats)
        z = apply_standardizer(params, feats)
    aligned = train.slice(horizons[-1] - 1, len(train))
    with _stage("kmeans"):
        clusters = kmeans.fit(z, k, seed, kmeans_settings.restarts, kmeans_settings.max_iter, kmeans_settings.tol)
    with _stage("state_machine"):
        machine = regime.build_state_machine(clusters, z, aligned)
        tags = regime.interpret_states(machine, kmeans.destandardize_centroids(clusters, params), horizons)
        machine = machine.with_labels([row.tag for row in tags])
    with _stage("baseline"):
        baseline = mixture.fit_normal(aligned)
    return RegimeModel(train.asset_id, train.dates[0], train.dates[-1], horizons, params, clusters, machine, baseline)


def fit_regime_model(
    prices: PriceSeries,
    train_start: date,
    train_end: date,
    k: int,
    seed: int,
    horizons: Sequence[int] = DEFAULT_HORIZONS,
    kmeans_settings: KMeansSettings = KMeansSettings(),
    min_test: int = 0,
) -> tuple[RegimeModel, ReturnSeries, ReturnSeries]:
    """Fit on the returns dated in ``[train_start, train_end]``; also return the train/test slices."""
    horizons = tuple(horizons)
    with _stage("data"):
        r = log_returns(prices)
        train, test = _split(r, train_start, train_end, horizons, min_test)
    return fit_on_returns(train, k, seed, horizons, kmeans_settings), train, test


def _split(r, train_start, train_end, horizons, min_test):
    if min_test > 0:
        return split_by_date(r, train_start, train_end, min_train=horizons[-1] + 1, min_test=min_test)
    # fitting alone does not need a test tail
    if not train_start < train_end:
        raise DataError("train_start must precede train_end")
    lo = bisect.bisect_left(r.dates, train_start)
    hi = bisect.bisect_right(r.dates, train_end)
    if hi - lo < horizons[-1] + 1:
        raise DataError(f"training window too short: {hi - lo} rows, need {horizons[-1] + 1}")
    return r.slice(lo, hi), r.slice(hi, len(r))


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


def min_train_rows(horizons: Sequence[int], k: int) -> int:
    return max(horizons) + TRAIN_ROWS_PER_STATE * k


@dataclass(frozen=True)
class ScenarioConfig:
    asset_id: str
    train_start: date
    train_end: date
    k: int
    seed: int
    horizons: tuple[int, ...] = DEFAULT_HORIZONS
    kmeans: KMeansSettings = field(default_factory=KMeansSettings)
    metrics: MetricSettings = field(default_factory=MetricSettings)

    def to_dict(self) -> dict:
        return {
            "asset_id": self.asset_id,
            "train_start": self.train_start.isoformat(),
            "train_end": self.train_end.isoformat(),
            "k": self.k,
            "seed": self.seed,
            "horizons": list(self.horizons),
            "restarts": self.kmeans.restarts,
            "max_iter": self.kmeans.max_iter,
            "tol": self.kmeans.tol,
            "bins": self.metrics.bins,
            "epsilon": self.metrics.epsilon,
            "n_model_min": self.metrics.n_model_min,
            "n_model_factor": self.metrics.n_model_factor,
        }


Moments = tuple[float, float, float, float]


@dataclass(frozen=True)
class ScenarioResult:
    config: ScenarioConfig
    sm_report: distmetrics.DistanceReport
    normal_report: distmetrics.DistanceReport
    sm_moments: Moments
    normal_moments: Moments
    test_moments: Moments

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "sm_report": self.sm_report.to_dict(),
            "normal_report": self.normal_report.to_dict(),
            "sm_moments": list(self.sm_moments),
            "normal_moments": list(self.normal_moments),
            "test_moments": list(self.test_moments),
        }


def check_config(cfg: ScenarioConfig, data: PriceSeries) -> tuple[ReturnSeries, ReturnSeries]:
    """Split the data for ``cfg``, enforcing the scenario length constraints."""
    r = log_returns(data)
    train, test = split_by_date(
        r, cfg.train_start, cfg.train_end,
        min_train=min_train_rows(cfg.horizons, cfg.k), min_test=MIN_TEST_DAYS,
    )
    return train, test


@dataclass(frozen=True)
class _Scored:
    report: distmetrics.DistanceReport
    moments: Moments


def _score(spec: mixture.MixtureSpec, test: np.ndarray, seed: int, metrics: MetricSettings) -> _Scored:
    with _stage("mixture"):
        draws = mixture.sample(spec, metrics.n_model(len(test)), seed)
    with _stage("metrics"):
        report = distmetrics.compare(test, draws, metrics.bins, metrics.epsilon)
        return _Scored(report, distmetrics.moments(draws))


def _baseline_part(cfg: ScenarioConfig, train: ReturnSeries, test: ReturnSeries) -> _Scored:
    aligned = train.slice(max(cfg.horizons) - 1, len(train))
    with _stage("baseline"):
        spec = mixture.fit_normal(aligned)
    return _score(spec, test.returns, subseed(cfg.seed, _NORMAL_SAMPLE), cfg.metrics)


def _machine_part(cfg: ScenarioConfig, train: ReturnSeries, test: ReturnSeries) -> _Scored:
    model = fit_on_returns(train, cfg.k, subseed(cfg.seed, _KMEANS), cfg.horizons, cfg.kmeans)
    return _score(model.state_mixture(), test.returns, subseed(cfg.seed, _SM_SAMPLE), cfg.metrics)


def _split_for(cfg: ScenarioConfig, data: PriceSeries):
    with _stage("data"):
        return check_config(cfg, data)


def _result(cfg, sm: _Scored, normal: _Scored, test: ReturnSeries) -> ScenarioResult:
    with _stage("metrics"):
        test_moments = distmetrics.moments(test.returns)
    return ScenarioResult(cfg, sm.report, normal.report, sm.moments, normal.moments, test_moments)


def run_scenario(cfg: ScenarioConfig, data: PriceSeries) -> ScenarioResult:
    """Train the regime model and the normal baseline on one window and score both.

    Both models are compared against the same raw test returns: everything
    after ``cfg.train_end``.

    Raises:
        PipelineError: tagged with the failing stage.
    """
    train, test = _split_for(cfg, data)
    sm = _machine_part(cfg, train, test)
    normal = _baseline_part(cfg, train, test)
    return _result(cfg, sm, normal, test)


def _load(data: DataSource) -> dict[str, PriceSeries]:
    if isinstance(data, Mapping):
        return dict(sorted(data.items()))
    return load_data_dir(data)


def random_scenarios(
    data_dir: DataSource,
    n: int,
    k: int,
    master_seed: int,
    horizons: Sequence[int] = DEFAULT_HORIZONS,
    kmeans_settings: KMeansSettings = KMeansSettings(),
    metrics: MetricSettings = MetricSettings(),
) -> list[ScenarioConfig]:
    """Draw ``n`` (asset, training window) scenarios.

    The asset is uniform over assets long enough for ``k``; the training
    length is uniform on ``[max(horizons) + 10k, n_returns - 30]`` and the
    start uniform over the positions that still leave the test tail.
    Scenario ``i`` gets seed ``subseed(master_seed, i)``.
    """
    horizons = tuple(horizons)
    assets = _load(data_dir)
    need = min_train_rows(horizons, k)
    lengths = {a: len(p) - 1 for a, p in assets.items()}
    eligible = [a for a in assets if lengths[a] >= need + MIN_TEST_DAYS]
    if not eligible:
        raise DataError(f"no asset has the {need + MIN_TEST_DAYS} returns needed for k={k}")

    rng = np.random.default_rng(master_seed)
    configs = []
    for i in range(n):
        asset = eligible[int(rng.integers(len(eligible)))]
        n_ret = lengths[asset]
        length = int(rng.integers(need, n_ret - MIN_TEST_DAYS, endpoint=True))
        start = int(rng.integers(0, n_ret - MIN_TEST_DAYS - length, endpoint=True))
        dates = assets[asset].dates[1:]
        configs.append(
            ScenarioConfig(asset, dates[start], dates[start + length - 1], k,
                           subseed(master_seed, i), horizons, kmeans_settings, metrics)
        )
    return configs


# ---------------------------------------------------------------------------
# K sweep
# ---------------------------------------------------------------------------


SWEEP_HEADER = (
    "k,n_ok,n_failed,ks_med,ks_iqr,kl_med,kl_iqr,w1_med,w1_iqr,"
    "ks_med_normal,kl_med_normal,w1_med_normal"
)


@dataclass(frozen=True)
class SweepRow:
    k: int
    n_ok: int
    n_failed: int
    ks_med: float
    ks_iqr: float
    kl_med: float
    kl_iqr: float
    w1_med: float
    w1_iqr: float
    ks_med_normal: float
    kl_med_normal: float
    w1_med_normal: float

    def to_csv_row(self) -> str:
        return ",".join(
            str(v) if isinstance(v, int) else repr(float(v))
            for v in (self.k, self.n_ok, self.n_failed, self.ks_med, self.ks_iqr, self.kl_med,
                      self.kl_iqr, self.w1_med, self.w1_iqr, self.ks_med_normal,
                      self.kl_med_normal, self.w1_med_normal)
        )


@dataclass(frozen=True)
class ScenarioOutcome:
    index: int
    k: int
    result: Optional[ScenarioResult] = None
    error: Optional[str] = None

    def to_dict(self) -> dict:
        d = {"index": self.index, "k": self.k, "status": "ok" if self.result else "failed"}
        if self.result is not None:
            d.update(self.result.to_dict())
        else:
            d["error"] = self.error
        return d


@dataclass(frozen=True)
class Sweep:
    rows: list[SweepRow]
    outcomes: list[ScenarioOutcome]

    def to_csv(self) -> str:
        return SWEEP_HEADER + "\n" + "".join(r.to_csv_row() + "\n" for r in self.rows)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(o.to_dict()) + "\n" for o in self.outcomes)


def _median_iqr(x: Sequence[float]) -> tuple[float, float]:
    if len(x) == 0:
        return float("nan"), float("nan")
    q1, med, q3 = np.percentile(np.asarray(x, dtype=float), [25, 50, 75])
    return float(med), float(q3 - q1)


def _baseline_task(args):
    cfg, data = args
    try:
        train, test = _split_for(cfg, data)
        return _baseline_part(cfg, train, test), None
    except MarketStatesError as exc:
        return None, str(exc)


def _machine_task(args):
    cfg, data = args
    try:
        train, test = _split_for(cfg, data)
        return _machine_part(cfg, train, test), None
    except MarketStatesError as exc:
        return None, str(exc)


def _map(fn, tasks, workers: int):
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def k_sweep(
    data_dir: DataSource,
    ks: Sequence[int],
    n_per_k: int,
    master_seed: int,
    horizons: Sequence[int] = DEFAULT_HORIZONS,
    kmeans_settings: KMeansSettings = KMeansSettings(),
    metrics: MetricSettings = MetricSettings(),
    workers: int = 1,
) -> Sweep:
    """Run the same ``n_per_k`` random scenarios for every K and aggregate.

    Windows are drawn once, under the length constraint of the largest K, so
    every K (and the normal baseline, computed once per scenario) sees
    identical training and test data. Failed scenarios are skipped and
    counted, never retried.
    """
    ks = [int(k) for k in ks]
    if not ks:
        raise MarketStatesError("ks must be non-empty")
    assets = _load(data_dir)
    base = random_scenarios(assets, n_per_k, max(ks), master_seed, horizons, kmeans_settings, metrics)

    baseline = _map(_baseline_task, [(cfg, assets[cfg.asset_id]) for cfg in base], workers)
    ok_base = [b for b, _ in baseline if b is not None]
    normal_med = {
        name: _median_iqr([getattr(b.report, attr) for b in ok_base])[0]
        for name, attr in (("ks", "ks"), ("kl", "kl"), ("w1", "wasserstein"))
    }

    rows, outcomes = [], []
    for k in ks:
        cfgs = [replace(cfg, k=k) for cfg in base]
        scored = _map(_machine_task, [(cfg, assets[cfg.asset_id]) for cfg in cfgs], workers)
        ok = []
        for i, (cfg, (sm, err), (nb, nerr)) in enumerate(zip(cfgs, scored, baseline)):
            if sm is None or nb is None:
                outcomes.append(ScenarioOutcome(i, k, error=err or nerr))
                continue
            train, test = check_config(cfg, assets[cfg.asset_id])
            outcomes.append(ScenarioOutcome(i, k, _result(cfg, sm, nb, test)))
            ok.append(sm.report)
        n_failed = len(cfgs) - len(ok)
        if n_failed:
            logger.info("k=%d: %d of %d scenarios failed", k, n_failed, len(cfgs))
        ks_med, ks_iqr = _median_iqr([r.ks for r in ok])
        kl_med, kl_iqr = _median_iqr([r.kl for r in ok])
        w1_med, w1_iqr = _median_iqr([r.wasserstein for r in ok])
        rows.append(SweepRow(k, len(ok), n_failed, ks_med, ks_iqr, kl_med, kl_iqr, w1_med, w1_iqr,
                             normal_med["ks"], normal_med["kl"], normal_med["w1"]))
    return Sweep(rows, outcomes)
