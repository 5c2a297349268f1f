"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 pipeline/data error. Human-readable
summaries go to stdout; machine-readable artifacts only to ``--out`` paths.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import date
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from marketstates import distmetrics, experiment, mixture, regime
from marketstates.config import DEFAULT_HORIZONS, KMeansSettings, MetricSettings
from marketstates.errors import MarketStatesError, PipelineError
from marketstates.features import apply_standardizer, build_features
from marketstates.marketdata import load_prices, log_returns, write_prices

logger = logging.getLogger("marketstates")

EXIT_OK, EXIT_USAGE, EXIT_PIPELINE = 0, 1, 2

FULL_GRID_KS = tuple(range(2, 201))
FULL_GRID_N_PER_K = 500


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in str(text).replace(" ", "").split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in str(text).replace(" ", "").split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _matrix(text: str) -> list[list[float]]:
    """Rows separated by ';', entries by ','."""
    return [list(_float_list(row)) for row in str(text).split(";") if row.strip()]


def _date(text: str) -> date:
    try:
        return date.fromisoformat(str(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an ISO date, got {text!r}")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _k(text: str) -> int:
    v = int(text)
    if v < 2:
        raise argparse.ArgumentTypeError("K must be at least 2")
    return v


def read_config(path: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; keys may use dashes or underscores."""
    out = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{line_no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _add_kmeans(p):
    d = KMeansSettings()
    p.add_argument("--restarts", type=_positive_int, default=d.restarts)
    p.add_argument("--max-iter", type=_positive_int, default=d.max_iter)
    p.add_argument("--tol", type=float, default=d.tol)


def _add_metrics(p):
    d = MetricSettings()
    p.add_argument("--bins", type=int, default=d.bins)
    p.add_argument("--epsilon", type=float, default=d.epsilon)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="marketstates", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key = value file supplying defaults for any flag")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit clusters and the state machine on a training window")
    p.add_argument("prices")
    p.add_argument("--train-start", type=_date)
    p.add_argument("--train-end", type=_date, required=True)
    p.add_argument("--k", type=_k, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizons", type=_int_list, default=DEFAULT_HORIZONS)
    _add_kmeans(p)
    p.add_argument("--features-out", help="optional CSV of the raw training features")
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="regime interpretation table of a fitted model")
    p.add_argument("model")
    p.add_argument("--out")

    p = sub.add_parser("sample", help="draw returns from a fitted model's mixture")
    p.add_argument("model")
    p.add_argument("--n", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normal", action="store_true", help="sample the normal baseline instead")
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="score a model and the normal baseline on held-out returns")
    p.add_argument("model")
    p.add_argument("prices")
    p.add_argument("--n-model", type=_positive_int)
    _add_metrics(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("trace", help="per-day inverse-distance state probabilities")
    p.add_argument("model")
    p.add_argument("prices")
    p.add_argument("--from", dest="date_from", type=_date)
    p.add_argument("--to", dest="date_to", type=_date)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="randomized scenarios over a range of K")
    p.add_argument("data_dir")
    p.add_argument("--ks", type=_int_list, default=(2, 3, 5, 10, 20, 50))
    p.add_argument("--n-per-k", type=_positive_int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--full-grid", action="store_true", help=f"K=2..200 with {FULL_GRID_N_PER_K} scenarios each")
    p.add_argument("--horizons", type=_int_list, default=DEFAULT_HORIZONS)
    _add_kmeans(p)
    _add_metrics(p)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--scenarios-out", help="JSON-lines file with one record per scenario")
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="simulate a Markov-switching price series")
    p.add_argument("--preset", choices=("two-regime", "three-regime"), default="two-regime")
    p.add_argument("--mus", type=_float_list)
    p.add_argument("--sigmas", type=_float_list)
    p.add_argument("--trans", type=_matrix, help="rows separated by ';', e.g. '0.98,0.02;0.02,0.98'")
    p.add_argument("--n-days", type=_positive_int)
    p.add_argument("--p0", type=float, default=100.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--asset-id", default="SYNTH")
    p.add_argument("--out", required=True)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    if not Path(known.config).is_file():
        raise UsageError(f"config file not found: {known.config}")
    values = read_config(known.config)
    for action in parser._subparsers._group_actions:
        for sub in action.choices.values():
            for act in sub._actions:
                keys = [o.lstrip("-").replace("-", "_") for o in act.option_strings] + [act.dest]
                key = next((k for k in keys if k in values), None)
                if key is not None and act.option_strings:
                    raw = values[key]
                    if isinstance(act, argparse._StoreTrueAction):
                        val = raw.lower() in ("1", "true", "yes", "on")
                    else:
                        try:
                            val = act.type(raw) if act.type else raw
                        except (argparse.ArgumentTypeError, ValueError) as exc:
                            raise UsageError(f"config key {act.dest}: {exc}") from None
                    sub.set_defaults(**{act.dest: val})
                    act.required = False


def _require_file(path: str) -> None:
    if not Path(path).is_file():
        raise UsageError(f"input file not found: {path}")


def _write(path: str, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _fmt_row(name: str, values, width: int = 12) -> str:
    return f"{name:>{width}}" + "".join(f"{v:>12.5g}" for v in values)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    _require_file(args.prices)
    prices = load_prices(args.prices, Path(args.prices).stem)
    start = args.train_start or prices.dates[1]
    settings = KMeansSettings(args.restarts, args.max_iter, args.tol)
    model, train, _ = experiment.fit_regime_model(
        prices, start, args.train_end, args.k, args.seed, args.horizons, settings
    )
    _write(args.out, model.to_json())
    if args.features_out:
        build_features(train, model.horizons).to_csv(args.features_out)

    print(f"fitted K={model.k} on {len(train)} training returns "
          f"({model.train_start} .. {model.train_end}), inertia {model.clusters.inertia:.6g}")
    _print_report(model)
    return EXIT_OK


def _regime_rows(model: experiment.RegimeModel):
    return regime.interpret_states(model.machine, model.centroids_original(), model.horizons)


def _print_report(model: experiment.RegimeModel) -> None:
    rows = _regime_rows(model)
    names = [f"Mom_{h}" for h in model.horizons] + [f"Risk_{h}" for h in model.horizons]
    print("\ncluster centroids (original units)")
    print(f"{'cluster':>16}" + "".join(f"{n:>10}" for n in names))
    for r in rows:
        c = np.asarray(r.centroid)
        ordered = list(c[0::2]) + list(c[1::2])
        print(f"{r.state:>3} {r.tag:>12}" + "".join(f"{v:>10.4f}" for v in ordered))
    print("\nstate frequencies")
    for r in rows:
        print(f"{r.state:>3} {r.tag:>12}  freq {r.freq:.4f}  mu {r.mu:+.6f}  sigma {r.sigma:.6f}")
    print("\ntransition probabilities")
    for i, row in enumerate(model.machine.probs):
        print(f"{i:>3} " + " ".join(f"{p:6.3f}" for p in row))


def cmd_report(args) -> int:
    _require_file(args.model)
    model = experiment.RegimeModel.load(args.model)
    _print_report(model)
    if args.out:
        _write(args.out, regime.report_csv(_regime_rows(model), model.horizons))
    return EXIT_OK


def cmd_sample(args) -> int:
    _require_file(args.model)
    model = experiment.RegimeModel.load(args.model)
    spec = model.baseline if args.normal else model.state_mixture()
    draws = mixture.sample(spec, args.n, args.seed)
    _write(args.out, "return\n" + "".join(f"{float(x)!r}\n" for x in draws))
    m = distmetrics.moments(draws) if args.n >= 2 else (float(draws[0]), 0.0, 0.0, 0.0)
    print(f"{args.n} draws: mean {m[0]:.6g} std {m[1]:.6g} skew {m[2]:.4f} excess kurt {m[3]:.4f}")
    return EXIT_OK


def _test_returns(model: experiment.RegimeModel, prices) -> np.ndarray:
    r = log_returns(prices)
    test = np.array([x for d, x in zip(r.dates, r.returns) if d > model.train_end])
    if len(test) == 0:
        raise PipelineError("data", "no test data after the training window")
    return test


def cmd_evaluate(args) -> int:
    _require_file(args.model)
    _require_file(args.prices)
    model = experiment.RegimeModel.load(args.model)
    prices = load_prices(args.prices, Path(args.prices).stem)
    test = _test_returns(model, prices)
    settings = MetricSettings(bins=args.bins, epsilon=args.epsilon)
    n_model = args.n_model or settings.n_model(len(test))

    sm_draws = mixture.sample(model.state_mixture(), n_model, experiment.subseed(args.seed, 1))
    nm_draws = mixture.sample(model.baseline, n_model, experiment.subseed(args.seed, 2))
    sm_rep = distmetrics.compare(test, sm_draws, args.bins, args.epsilon)
    nm_rep = distmetrics.compare(test, nm_draws, args.bins, args.epsilon)
    moments = {
        "test": distmetrics.moments(test) if len(test) >= 2 else None,
        "normal": distmetrics.moments(nm_draws),
        "state_machine": distmetrics.moments(sm_draws),
    }
    out = {
        "asset_id": model.asset_id,
        "train_end": model.train_end.isoformat(),
        "k": model.k,
        "seed": args.seed,
        "n_test": len(test),
        "n_model": n_model,
        "bins": args.bins,
        "epsilon": args.epsilon,
        "state_machine": sm_rep.to_dict(),
        "normal": nm_rep.to_dict(),
        "moments": {
            name: (dict(zip(("mean", "std", "skew", "excess_kurtosis"), m)) if m else None)
            for name, m in moments.items()
        },
    }
    _write(args.out, json.dumps(out, indent=2) + "\n")

    print(f"{'':>14}{'test':>12}{'normal':>12}{'state mach.':>12}")
    for i, name in enumerate(("mean", "std", "skew", "ex. kurt")):
        vals = [m[i] if m else float("nan") for m in moments.values()]
        print(_fmt_row(name, vals, 14))
    print(f"\n{'':>14}{'KS':>12}{'KL':>12}{'W1':>12}")
    print(_fmt_row("normal", (nm_rep.ks, nm_rep.kl, nm_rep.wasserstein), 14))
    print(_fmt_row("state machine", (sm_rep.ks, sm_rep.kl, sm_rep.wasserstein), 14))
    return EXIT_OK


def cmd_trace(args) -> int:
    _require_file(args.model)
    _require_file(args.prices)
    model = experiment.RegimeModel.load(args.model)
    prices = load_prices(args.prices, Path(args.prices).stem)
    try:
        feats = build_features(log_returns(prices), model.horizons)
    except MarketStatesError as exc:
        raise PipelineError("features", str(exc)) from exc
    lo = args.date_from or feats.dates[0]
    hi = args.date_to or feats.dates[-1]
    if lo > hi or lo < feats.dates[0] or hi > feats.dates[-1]:
        raise PipelineError(
            "trace", f"window {lo}..{hi} outside the feature range {feats.dates[0]}..{feats.dates[-1]}"
        )
    window = feats.select([lo <= d <= hi for d in feats.dates])
    z = apply_standardizer(model.standardizer, window)
    trace = regime.state_trace(model.clusters, z)
    tags = [r.tag for r in _regime_rows(model)]
    trace.to_csv(args.out, tags)
    counts = np.bincount(trace.argmax(), minlength=model.k)
    print(f"{len(window)} days traced; days per state: "
          + ", ".join(f"{i}:{c}" for i, c in enumerate(counts)))
    return EXIT_OK


def cmd_sweep(args) -> int:
    if not Path(args.data_dir).is_dir():
        raise UsageError(f"data directory not found: {args.data_dir}")
    ks, n_per_k = args.ks, args.n_per_k
    if args.full_grid:
        ks, n_per_k = FULL_GRID_KS, FULL_GRID_N_PER_K
    if not ks or min(ks) < 2:
        raise UsageError("--ks needs values >= 2")
    sweep = experiment.k_sweep(
        args.data_dir, ks, n_per_k, args.seed, args.horizons,
        KMeansSettings(args.restarts, args.max_iter, args.tol),
        MetricSettings(bins=args.bins, epsilon=args.epsilon),
        workers=args.workers,
    )
    _write(args.out, sweep.to_csv())
    if args.scenarios_out:
        _write(args.scenarios_out, sweep.to_jsonl())
    print(f"{'k':>5}{'ok':>5}{'fail':>5}{'KS med':>10}{'KL med':>10}{'W1 med':>11}")
    for r in sweep.rows:
        print(f"{r.k:>5}{r.n_ok:>5}{r.n_failed:>5}{r.ks_med:>10.4f}{r.kl_med:>10.4f}{r.w1_med:>11.6f}")
    r0 = sweep.rows[0]
    print(f"{'N':>5}{'':>10}{r0.ks_med_normal:>10.4f}{r0.kl_med_normal:>10.4f}{r0.w1_med_normal:>11.6f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    preset = experiment.two_regime() if args.preset == "two-regime" else experiment.three_regime()
    mus = args.mus if args.mus is not None else preset.mus
    sigmas = args.sigmas if args.sigmas is not None else preset.sigmas
    if args.trans is not None:
        trans = args.trans
    elif args.mus is not None and len(args.mus) == 1:
        trans = [[1.0]]
    else:
        trans = preset.trans
    params = experiment.SynthParams(
        trans=trans, mus=mus, sigmas=sigmas,
        n_days=args.n_days or preset.n_days, p0=args.p0, seed=args.seed, asset_id=args.asset_id,
    )
    prices = experiment.gen_markov_switching(params)
    write_prices(prices, args.out)
    print(f"wrote {len(prices)} prices ({prices.dates[0]} .. {prices.dates[-1]}) to {args.out}")
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "report": cmd_report,
    "sample": cmd_sample,
    "evaluate": cmd_evaluate,
    "trace": cmd_trace,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"marketstates: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"marketstates {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineError as exc:
        print(f"marketstates {args.command}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except MarketStatesError as exc:
        print(f"marketstates {args.command}: [{args.command}] {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
