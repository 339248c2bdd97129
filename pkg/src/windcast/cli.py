"""``windcast`` command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings
from pathlib import Path

from . import __version__
from .data import GapPolicy, MackeyGlassParams, SplitSpec, TimeSeries, format_csv, gen_ar1, \
    gen_mackey_glass, gen_noisy_periodic, read_csv, split
from .embed import embed, fit_scaler, scale_dataset
from .errors import ArgumentError, ConvergenceWarning, DataError, SelectionError, WindcastError
from .evaluate import EvalConfig, cross_evaluate, evaluate_model, format_mean_rmse_csv, \
    format_threshold_csv, pool_threshold_curves, save_report
from .forecast import forecast_recursive
from .forest import ForestConfig
from .mi import RULES, default_bins, mi_curve, negligible_threshold, select_lag
from .models import load_model, load_run, save_model, train_model
from .svr import SvrConfig

log = logging.getLogger("windcast")

EXIT_OK = 0
EXIT_ARGUMENT = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

EPILOG = """\
exit codes: 0 success, 2 invalid arguments, 3 unusable input data
(parse errors, gaps, series too short, lag selection failed), 4 internal error.
A --config FILE of key=value lines (keys are option names, e.g. c=10 or
max-delay=120) supplies defaults; explicit flags win.
"""

DEFAULT_SCALER = {"svr": "min_max", "forest": "none"}


# --- helpers -------------------------------------------------------------------

def _effective(args) -> dict:
    """The complete effective configuration, echoed into every artifact.

    Output destinations and logging verbosity are left out; they do not
    change what an artifact contains.
    """
    skip = ("func", "config_file", "output", "out_dir", "verbose")
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _csv_preamble(command: str, args) -> str:
    return f"# windcast {__version__} {command} {json.dumps(_effective(args), sort_keys=True)}\n"


def _emit(text: str, output) -> None:
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(output).write_text(text, encoding="utf-8")


def _policy(args) -> GapPolicy:
    return GapPolicy(mode=args.gap_mode, max_gap=args.max_gap)


def _read(path, args, label=None) -> TimeSeries:
    return read_csv(path, _policy(args), label=label, physical=args.physical)


def _labeled(spec: str):
    if "=" in spec:
        label, path = spec.split("=", 1)
        return label, path
    return Path(spec).stem, spec


def _select_lag_from_mi(series, args):
    curve = mi_curve(series, args.max_delay, args.bins)
    threshold = args.threshold
    if args.rule == "negligible_threshold" and threshold is None:
        threshold = negligible_threshold(series, curve.bin_count, args.shuffles, args.seed)
    sel = select_lag(curve, args.rule, threshold=threshold, lag=getattr(args, "fixed_lag", None))
    return curve, sel


# --- subcommands -----------------------------------------------------------------

def cmd_generate(args):
    if args.kind == "mackey-glass":
        params = MackeyGlassParams(tau=args.tau, dt=args.dt, sample_every=args.sample_every,
                                   discard=args.discard)
        s = gen_mackey_glass(args.n, args.seed, params)
    elif args.kind == "periodic":
        s = gen_noisy_periodic(args.n, args.period, args.noise_sd, args.seed)
    else:
        s = gen_ar1(args.n, args.coef, args.noise_sd, args.seed)
    _emit(format_csv(s), args.output)


def cmd_mi(args):
    series = _read(args.input, args)
    if args.bins is None:
        args.bins = default_bins(max(len(series) - args.max_delay, 1))
    if args.rule == "fixed" and args.fixed_lag is None:
        raise ArgumentError("--rule fixed needs --fixed-lag")
    curve = mi_curve(series, args.max_delay, args.bins)
    threshold = args.threshold
    if args.rule == "negligible_threshold" and threshold is None:
        threshold = negligible_threshold(series, curve.bin_count, args.shuffles, args.seed)
    sel = select_lag(curve, args.rule, threshold=threshold, lag=args.fixed_lag)
    lines = [_csv_preamble("mi", args), "delay,mi_nats\n"]
    lines += [f"{d},{m!r}\n" for d, m in zip(curve.delays.tolist(), curve.mi_values.tolist())]
    summary = (f"# selected_lag={sel.lag} rule={sel.rule} bins={curve.bin_count}"
               + (f" threshold={sel.threshold!r}" if sel.threshold is not None else "") + "\n")
    if args.output in (None, "-"):
        sys.stdout.write("".join(lines) + summary)
    else:
        Path(args.output).write_text("".join(lines), encoding="utf-8")
        sys.stdout.write(summary)


def _model_config(args):
    if args.model == "svr":
        return SvrConfig(c=args.c, epsilon=args.epsilon, gamma=args.gamma, tolerance=args.tolerance,
                         max_passes=args.max_passes, cache_bytes=int(args.cache_mb * 1024 * 1024))
    return ForestConfig(n_trees=args.trees, mtry=args.mtry, min_leaf=args.min_leaf,
                        bootstrap_fraction=args.bootstrap_fraction, bootstrap=not args.no_bootstrap,
                        seed=args.seed)


def cmd_train(args):
    series = _read(args.input, args, label=args.label)
    if args.train_fraction is not None or args.boundary is not None:
        series, _ = split(series, SplitSpec(args.train_fraction, args.boundary))

    lag_info = {"rule": "fixed"}
    if args.lag == "auto":
        _, sel = _select_lag_from_mi(series, args)
        lag = sel.lag
        lag_info = {"rule": sel.rule, "threshold": sel.threshold}
        log.info("selected lag %d by %s", lag, sel.rule)
    else:
        lag = int(args.lag)

    scaler_kind = args.scaler or DEFAULT_SCALER[args.model]
    raw = embed(series, lag)
    params = fit_scaler(raw, scaler_kind)
    if params.degenerate:
        log.warning("degenerate training data: scaler %s fell back to none", scaler_kind)
    ds = scale_dataset(raw, params)

    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        model = train_model(args.model, ds, _model_config(args), workers=args.workers)
    log.info("trained %s on %d rows in %.2fs", args.model, len(ds), time.perf_counter() - t0)
    model_warnings = [str(w.message) for w in caught if issubclass(w.category, ConvergenceWarning)]
    for w in model_warnings:
        log.warning("%s", w)

    run = {
        "windcast_version": __version__,
        "command": "train",
        "effective_config": _effective(args),
        "train_label": series.label,
        "train_length": len(series),
        "lag": lag,
        "lag_selection": lag_info,
        "embedded_rows": len(ds),
        "scaler": params.to_dict(),
        "physical": series.physical,
        "warnings": model_warnings,
    }
    save_model(model, args.output, run=run)


def cmd_forecast(args):
    model = load_model(args.model_file)
    series = _read(args.input, args)
    if args.horizon < 1:
        raise ArgumentError(f"horizon must be >= 1, got {args.horizon}")
    origin = len(series) - 1 + series.start_index if args.origin is None else args.origin
    pos = origin - series.start_index
    if pos < model.lag - 1 or pos >= len(series):
        raise DataError(f"origin {origin} needs {model.lag} observed values ending at it "
                        f"(series covers indices {series.start_index}..{series.start_index + len(series) - 1})")
    window = series.values[pos - model.lag + 1: pos + 1]
    floor = args.floor if args.floor is not None else (0.0 if series.physical else None)
    path = forecast_recursive(model, window, args.horizon, floor=floor, origin_index=origin)
    rows = "".join(f"{h},{v!r}\n" for h, v in enumerate(path.values.tolist(), start=1))
    _emit(_csv_preamble("forecast", args) + "step,predicted_ms\n" + rows, args.output)


def _eval_config(args, lag, physical) -> EvalConfig:
    floor = args.floor if args.floor is not None else (0.0 if physical else None)
    return EvalConfig(lag=lag, horizon=args.horizon, origin_stride=args.stride,
                      thresholds=tuple(args.thresholds), error_mode=args.error_mode, floor=floor)


def _write_eval_outputs(out_dir: Path, reports: dict, pooled, args, command):
    out_dir.mkdir(parents=True, exist_ok=True)
    extra = {"windcast_version": __version__, "command": command, "effective_config": _effective(args)}
    for (tl, sl), rep in reports.items():
        name = "report.json" if len(reports) == 1 else f"report_{tl}__{sl}.json"
        matrix = out_dir / name.replace(".json", "_per_origin.csv") if args.matrix_csv else None
        save_report(rep, out_dir / name, matrix_csv=matrix, extra=extra)
    pre = _csv_preamble(command, args)
    curves = {(sl if command == "evaluate" else f"{tl}->{sl}"): r.mean_rmse_curve
              for (tl, sl), r in reports.items()}
    (out_dir / "mean_rmse.csv").write_text(pre + format_mean_rmse_csv(curves), encoding="utf-8")
    first = next(iter(reports.values()))
    (out_dir / "threshold_pct.csv").write_text(
        pre + format_threshold_csv(pooled, first.config.thresholds), encoding="utf-8")


def cmd_evaluate(args):
    model = load_model(args.model_file)
    label, path = _labeled(args.test)
    test = _read(path, args, label=label)
    train_label = load_run(args.model_file).get("train_label", Path(args.model_file).stem)
    rep = evaluate_model(model, test, _eval_config(args, model.lag, test.physical), train_label, label)
    _write_eval_outputs(Path(args.out_dir), {(train_label, label): rep}, rep.threshold_curves,
                        args, "evaluate")
    log.info("evaluated %d origins; horizon-1 mean RMSE %.6g", rep.n_origins, rep.mean_rmse_curve[0])


def cmd_crosseval(args):
    models = {}
    for spec in args.train_model:
        label, path = _labeled(spec)
        if "=" not in spec:
            label = load_run(path).get("train_label") or label
        if label in models:
            raise ArgumentError(f"duplicate model label {label!r}")
        models[label] = load_model(path)
    tests = {}
    for spec in args.test:
        label, path = _labeled(spec)
        if label in tests:
            raise ArgumentError(f"duplicate test label {label!r}")
        tests[label] = _read(path, args, label=label)
    lags = {m.lag for m in models.values()}
    if len(lags) != 1:
        raise ArgumentError(f"models disagree on lag: {sorted(lags)}")
    physical = all(t.physical for t in tests.values())
    cfg = _eval_config(args, lags.pop(), physical)
    reports = cross_evaluate(models, tests, cfg, workers=args.workers)
    cross = [r for (tl, sl), r in reports.items() if tl != sl]
    pool = cross if args.pool == "cross" and cross else list(reports.values())
    _write_eval_outputs(Path(args.out_dir), reports, pool_threshold_curves(pool), args, "crosseval")
    log.info("wrote %d reports (%d cross-location)", len(reports), len(cross))


# --- parser --------------------------------------------------------------------

def _add_common(p, series_input=True):
    p.add_argument("--config", dest="config_file", metavar="FILE",
                   help="key=value defaults file; explicit flags override it")
    if series_input:
        p.add_argument("--gap-mode", default="reject",
                       choices=["reject", "interpolate_linear", "drop_leading_trailing"],
                       help="missing-sample handling (default: reject)")
        p.add_argument("--max-gap", type=int, default=0,
                       help="longest internal gap interpolate_linear may fill")
        p.add_argument("--physical", action="store_true",
                       help="series is measured wind speed: require >= 0 and clamp forecasts at 0")


def _add_mi_opts(p):
    p.add_argument("--max-delay", type=int, default=120)
    p.add_argument("--bins", type=int, default=None,
                   help="histogram bins (default ceil(sqrt(pairs/5)), at most 64)")
    p.add_argument("--rule", choices=RULES, default="negligible_threshold")
    p.add_argument("--threshold", type=float, default=None,
                   help="negligible-MI level in nats (default: shuffle baseline mean + 2 SD)")
    p.add_argument("--shuffles", type=int, default=200)


def _add_eval_opts(p):
    p.add_argument("--horizon", type=int, default=48)
    p.add_argument("--stride", type=int, default=1, help="step between forecast origins")
    p.add_argument("--thresholds", type=float, nargs="+", default=[1.5, 2.5, 3.5])
    p.add_argument("--error-mode", choices=["window", "step"], default="window",
                   help="window: RMSE over steps 1..h; step: |error| at step h")
    p.add_argument("--floor", type=float, default=None,
                   help="clamp forecasts below this value (default 0 for --physical input)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--matrix-csv", action="store_true",
                   help="write per-origin matrices to CSV instead of inlining them in JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="windcast", description="Wind speed forecasting with SVR and random forests.",
        epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"windcast {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic series as CSV", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p, series_input=False)
    p.add_argument("--kind", choices=["mackey-glass", "periodic", "ar1"], default="mackey-glass")
    p.add_argument("--n", type=int, default=8760)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau", type=float, default=17.0, help="Mackey-Glass delay (default 17)")
    p.add_argument("--dt", type=float, default=0.1, help="Mackey-Glass RK4 step (default 0.1)")
    p.add_argument("--sample-every", type=float, default=1.0,
                   help="Mackey-Glass time between samples (default 1.0)")
    p.add_argument("--discard", type=int, default=500,
                   help="Mackey-Glass transient samples dropped (default 500)")
    p.add_argument("--period", type=int, default=24)
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--coef", type=float, default=0.95, help="AR(1) coefficient")
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("mi", help="mutual information curve and lag selection", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p)
    p.add_argument("--input", required=True)
    _add_mi_opts(p)
    p.add_argument("--fixed-lag", type=int, default=None, help="lag echoed by --rule fixed")
    p.add_argument("--seed", type=int, default=0, help="shuffle-baseline seed")
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=cmd_mi)

    p = sub.add_parser("train", help="train an SVR or random-forest model", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--label", default=None, help="location label (default: file stem)")
    p.add_argument("--model", choices=["svr", "forest"], default="svr")
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--lag", default="72", help="window length, or 'auto' for MI selection")
    _add_mi_opts(p)
    p.add_argument("--train-fraction", type=float, default=None,
                   help="train on this leading fraction only (default: whole input)")
    p.add_argument("--boundary", type=int, default=None, help="train on the first N samples")
    p.add_argument("--scaler", choices=["none", "min_max", "z_score"], default=None,
                   help="default min_max for svr, none for forest")
    g = p.add_argument_group("svr")
    g.add_argument("--c", type=float, default=1.0)
    g.add_argument("--epsilon", type=float, default=0.05, help="tube half-width, scaled units")
    g.add_argument("--gamma", type=float, default=None, help="RBF width (default 1/lag)")
    g.add_argument("--tolerance", type=float, default=1e-3)
    g.add_argument("--max-passes", type=int, default=None, help="SMO iteration bound")
    g.add_argument("--cache-mb", type=float, default=256.0)
    g = p.add_argument_group("forest")
    g.add_argument("--trees", type=int, default=100)
    g.add_argument("--mtry", type=int, default=None, help="features per split (default lag/3)")
    g.add_argument("--min-leaf", type=int, default=5)
    g.add_argument("--bootstrap-fraction", type=float, default=2.0 / 3.0)
    g.add_argument("--no-bootstrap", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("forecast", help="recursive forecast from one origin", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p)
    p.add_argument("--model-file", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--origin", type=int, default=None,
                   help="sample index of the last observed value (default: last row)")
    p.add_argument("--horizon", type=int, default=48)
    p.add_argument("--floor", type=float, default=None)
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("evaluate", help="rolling-origin evaluation on one test series",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p)
    p.add_argument("--model-file", required=True)
    p.add_argument("--test", required=True, help="[LABEL=]PATH")
    _add_eval_opts(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("crosseval", help="every model on every test series", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_common(p)
    p.add_argument("--train-model", action="append", required=True, help="[LABEL=]MODEL_FILE")
    p.add_argument("--test", action="append", required=True, help="[LABEL=]PATH")
    _add_eval_opts(p)
    p.add_argument("--pool", choices=["cross", "all"], default="cross",
                   help="cells pooled into threshold_pct.csv (default: off-diagonal only)")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_crosseval)
    return parser


def read_config_file(path) -> dict:
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ArgumentError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().lstrip("-").replace("-", "_")] = v.strip()
    return out


def _apply_config(subparser: argparse.ArgumentParser, values: dict) -> None:
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None or key in ("help", "config_file"):
            raise ArgumentError(f"unknown config key {key!r}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ArgumentError(f"config key {key!r} expects a boolean")
            defaults[key] = raw.lower() in ("true", "1", "yes")
        elif action.nargs in ("+", "*") or isinstance(action, argparse._AppendAction):
            conv = action.type or str
            defaults[key] = [conv(x.strip()) for x in raw.split(",") if x.strip()]
        else:
            defaults[key] = raw  # argparse applies the option's type to string defaults
    subparser.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="windcast: %(message)s", stream=sys.stderr)
    try:
        if args.config_file:
            subparser = parser._subparsers._group_actions[0].choices[args.command]
            _apply_config(subparser, read_config_file(args.config_file))
            try:
                args = parser.parse_args(argv)
            except SystemExit as exc:
                return int(exc.code or 0)
        args.func(args)
    except ArgumentError as exc:
        print(f"windcast: argument error: {exc}", file=sys.stderr)
        return EXIT_ARGUMENT
    except (DataError, SelectionError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"windcast: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except WindcastError as exc:
        print(f"windcast: error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort handler maps to the internal-error code
        print(f"windcast: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
