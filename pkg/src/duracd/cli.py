"""Command-line interface.

Subcommands: simulate, fit, evaluate, compare, attention, stats.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
A config file (INI sections named after subcommands) supplies defaults;
explicit flags win. Every command validates its inputs before writing
any output file.
"""

import argparse
import configparser
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from duracd import acd as acdmod
from duracd import metrics, models
from duracd.data import (acf, compute_durations, pacf, parse_ticks,
                         save_duration_series, load_duration_series,
                         split_series)
from duracd.errors import DataError, NumericError, ParseError
from duracd.nn import SgdSchedule
from duracd.simulate import SimConfig, simulate_acd

DEFAULT_ALPHAS = (0.1, 0.05, 0.01)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# input loading and small helpers


def _load_input(path, session_open=None, instrument=None):
    """Duration-series file (has a 'duration' column) or tick file."""
    if not os.path.exists(path):
        raise DataError(f"input file not found: {path}")
    name = instrument if instrument is not None else os.path.splitext(os.path.basename(path))[0]
    with open(path) as fh:
        first = fh.readline()
    if "duration" in first:
        series, _ = load_duration_series(path, instrument=name)
        return series
    with open(path) as fh:
        ticks = parse_ticks(fh, session_open=session_open, instrument=name)
    return compute_durations(ticks, merge_same_timestamp=True)


def _parse_ratio(text):
    parts = text.split(":")
    if len(parts) != 2:
        raise UsageError(f"bad ratio {text!r}, expected like 8:2")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise UsageError(f"bad ratio {text!r}, expected like 8:2") from None


def _parse_alor(text):
    try:
        levels = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"bad alpha levels {text!r}") from None
    if not levels or not all(0 < a < 1 for a in levels):
        raise UsageError("alpha levels must lie in (0, 1)")
    return levels


def _config_section(args):
    if not getattr(args, "config", None):
        return {}
    if not os.path.exists(args.config):
        raise UsageError(f"config file not found: {args.config}")
    parser = configparser.ConfigParser()
    parser.read(args.config)
    section = args.command
    return dict(parser[section]) if parser.has_section(section) else {}


def _resolve(args, conf, key, default, cast=str):
    """Flag value if given, else config value, else the default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in conf:
        raw = conf[key]
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    return default


def _unit_factor(units):
    if units not in ("s", "ms"):
        raise UsageError("--units must be 's' or 'ms'")
    return 1000.0 if units == "ms" else 1.0


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args):
    conf = _config_section(args)
    omega = _resolve(args, conf, "omega", None, float)
    if omega is None:
        raise UsageError("--omega is required")
    alphas = args.alpha if args.alpha else [float(v) for v in conf.get("alpha", "").split(",") if v]
    betas = args.beta if args.beta else [float(v) for v in conf.get("beta", "").split(",") if v]
    n = _resolve(args, conf, "n", None, int)
    if n is None:
        raise UsageError("--n is required")
    seed = _resolve(args, conf, "seed", 0, int)
    burn_in = _resolve(args, conf, "burn_in", 1000, int)
    features = bool(args.features) or _resolve(args, conf, "features", False, bool)
    output = _resolve(args, conf, "output", None)
    if output is None:
        raise UsageError("--output is required")

    try:
        params = acdmod.AcdParams(omega=omega, alphas=np.asarray(alphas, dtype=float),
                                  betas=np.asarray(betas, dtype=float))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    config = SimConfig(params=params, n=n, burn_in=burn_in, seed=seed,
                       with_features=features)
    series, mu = simulate_acd(config)
    save_duration_series(output, series, mu=mu)
    print(f"simulate: wrote {n} durations to {output}")
    return 0


# ---------------------------------------------------------------------------
# fit


def _fit_one(payload):
    """Fit a single model; runs in a worker process under --jobs."""
    (name, input_path, session_open, out_dir, seed, test_fraction, ratio,
     p, q, net_kw, train_kw) = payload
    series = _load_input(input_path, session_open)
    splits = split_series(series, test_fraction, ratio)
    extra = {
        "n_obs": len(series),
        "test_start": splits.test.start,
        "test_fraction": repr(test_fraction),
        "ratio": f"{ratio[0]}:{ratio[1]}",
        "seed": seed,
        "instrument": series.instrument,
        "input": os.path.basename(input_path),
    }
    if name == "acd":
        train_dt = series.durations[splits.train.start:splits.train.stop]
        result = acdmod.acd_fit(train_dt, p=p, q=q)
        extra["nll"] = repr(result.nll)
        extra["converged"] = int(result.converged)
        extra["iterations"] = result.iterations
        path = os.path.join(out_dir, "acd.acd")
        acdmod.save_acd_params(path, result.params, presample_mu=float(np.mean(train_dt)),
                               extra=extra)
        return name, [path], result.converged, result.message
    spec = models.HybridModelSpec.from_name(name, **net_kw)
    config = models.TrainConfig(seed=seed, **train_kw)
    trained = models.train(spec, series, splits, config)
    base = os.path.join(out_dir, name)
    models.save_checkpoint(base, trained, extra=extra)
    hist_path = base + ".history.csv"
    with open(hist_path, "w") as fh:
        fh.write("step,train_nll,validation_nll\n")
        for step, tr, va in trained.history:
            fh.write(f"{step},{tr!r},{va!r}\n")
    message = "diverged" if trained.diverged else ""
    return name, [base + ".npz", base + ".meta", hist_path], not trained.diverged, message


def cmd_fit(args):
    conf = _config_section(args)
    input_path = _resolve(args, conf, "input", None)
    out_dir = _resolve(args, conf, "output_dir", None)
    model_arg = _resolve(args, conf, "model", None)
    if input_path is None or out_dir is None or model_arg is None:
        raise UsageError("--input, --output-dir and --model are required")
    names = [m.strip() for m in model_arg.split(",") if m.strip()]
    if names == ["all"]:
        names = list(models.MODEL_NAMES)
    bad = [m for m in names if m not in models.MODEL_NAMES]
    if bad:
        raise UsageError(f"unknown model name(s) {bad}; valid names: "
                         f"{', '.join(models.MODEL_NAMES)}")
    seed = _resolve(args, conf, "seed", 0, int)
    test_fraction = _resolve(args, conf, "test_fraction", 0.3, float)
    ratio = _parse_ratio(_resolve(args, conf, "ratio", "8:2"))
    session_open = _resolve(args, conf, "session_open", None)
    jobs = _resolve(args, conf, "jobs", 1, int)
    p = _resolve(args, conf, "p", 1, int)
    q = _resolve(args, conf, "q", 1, int)
    net_kw = {}
    for key in ("timesteps", "hidden", "dense_hidden"):
        value = _resolve(args, conf, key, None, int)
        if value is not None:
            net_kw[key] = value
    attention_size = _resolve(args, conf, "attention_size", None, int)
    train_kw = {
        "batch_size": _resolve(args, conf, "batch_size", 300, int),
        "eval_every": _resolve(args, conf, "eval_every", 100, int),
        "patience": _resolve(args, conf, "patience", 10, int),
        "max_steps": _resolve(args, conf, "max_steps", 20000, int),
        "schedule": SgdSchedule(
            start_lr=_resolve(args, conf, "start_lr", 0.5, float),
            decay_steps=_resolve(args, conf, "decay_steps", 1000, int),
            decay_rate=_resolve(args, conf, "decay_rate", 0.5, float),
            clip_norm=_resolve(args, conf, "clip_norm", 5.0, float),
        ),
    }

    # validate the input before any output is produced
    series = _load_input(input_path, session_open)
    split_series(series, test_fraction, ratio)
    os.makedirs(out_dir, exist_ok=True)

    payloads = []
    for name in names:
        kw = dict(net_kw)
        if name.startswith("attn") and attention_size is not None:
            kw["attention_size"] = attention_size
        payloads.append((name, input_path, session_open, out_dir, seed,
                         test_fraction, ratio, p, q, kw, train_kw))
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fit_one, payloads))
    else:
        results = [_fit_one(pl) for pl in payloads]
    failed = []
    for name, paths, ok, message in sorted(results, key=lambda r: r[0]):
        status = "ok" if ok else f"WARNING ({message})"
        print(f"fit {name}: {status} -> {', '.join(paths)}")
        if message == "diverged":
            failed.append(name)
    if failed:
        raise NumericError(f"training diverged for: {', '.join(failed)}")
    return 0


# ---------------------------------------------------------------------------
# evaluate


def _normalize_checkpoint(path):
    """Accept <base>, <base>.npz/.meta, or <base>.acd."""
    if path.endswith(".acd"):
        return "acd", path
    for ext in (".npz", ".meta"):
        if path.endswith(ext):
            return "net", path[: -len(ext)]
    if os.path.exists(path + ".acd"):
        return "acd", path + ".acd"
    if os.path.exists(path + ".meta"):
        return "net", path
    raise DataError(f"no checkpoint found at {path}")


def _evaluate_one(payload):
    (ckpt, input_path, session_open, alphas, factor, unit) = payload
    kind, path = _normalize_checkpoint(ckpt)
    series = _load_input(input_path, session_open)
    if kind == "acd":
        params, presample_mu, extra = acdmod.load_acd_params(path)
        name = "acd"
    else:
        model, extra = models.load_checkpoint(path)
        name = model.spec.name
    n_obs = int(extra["n_obs"])
    test_start = int(extra["test_start"])
    if len(series) != n_obs:
        raise DataError(f"{path}: fitted on {n_obs} observations but input has "
                        f"{len(series)}")
    test_idx = np.arange(test_start, n_obs)
    reals = series.durations[test_idx]
    if kind == "acd":
        mu_all = acdmod.acd_recursion(params, series.durations, presample_mu)
        mu_hat = mu_all[test_idx]
    else:
        mu_hat = models.predict_series(model, series, test_idx).mu_hat
    ql = {}
    cov = {}
    for alpha in alphas:
        tars = acdmod.exp_quantile(mu_hat, alpha)
        ql[alpha] = metrics.quantile_loss(reals, tars, alpha) * factor
        cov[alpha] = metrics.coverage(reals, tars)
    lagged = metrics.mae_lagged(mu_hat, series.durations[test_start - 1:n_obs])
    return metrics.EvalReport(
        model=name,
        mae=metrics.mae(mu_hat, reals) * factor,
        mae_lagged=lagged * factor,
        ql=ql, coverage=cov, n=test_idx.shape[0],
        instrument=series.instrument, unit=unit,
    )


def write_report(path, report):
    lines = ["model,metric,value",
             f"{report.model},n,{report.n}",
             f"{report.model},instrument,{report.instrument}",
             f"{report.model},unit,{report.unit}",
             f"{report.model},mae,{report.mae!r}",
             f"{report.model},mae_lagged,{report.mae_lagged!r}",
             f"{report.model},difference,{report.mae_difference!r}"]
    for alpha in sorted(report.ql, reverse=True):
        lines.append(f"{report.model},ql_{alpha},{report.ql[alpha]!r}")
    for alpha in sorted(report.coverage, reverse=True):
        lines.append(f"{report.model},coverage_{alpha},{report.coverage[alpha]!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_report(path):
    fields = {}
    model = instrument = None
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("model,metric,value"):
            raise ParseError(f"{path}: not a report file")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            model, key, value = line.split(",", 2)
            fields[key] = value
    instrument = fields.get("instrument", "")
    ql = {float(k[3:]): float(v) for k, v in fields.items() if k.startswith("ql_")}
    cov = {float(k[9:]): float(v) for k, v in fields.items() if k.startswith("coverage_")}
    return metrics.EvalReport(model=model, mae=float(fields["mae"]),
                              mae_lagged=float(fields["mae_lagged"]),
                              ql=ql, coverage=cov, n=int(fields["n"]),
                              instrument=instrument, unit=fields.get("unit", "s"))


def cmd_evaluate(args):
    conf = _config_section(args)
    input_path = _resolve(args, conf, "input", None)
    out_dir = _resolve(args, conf, "output_dir", None)
    if input_path is None or out_dir is None or not args.checkpoint:
        raise UsageError("--input, --output-dir and --checkpoint are required")
    alphas = _parse_alor(_resolve(args, conf, "alpha_levels", "0.1,0.05,0.01"))
    units = _resolve(args, conf, "units", "s")
    factor = _unit_factor(units)
    session_open = _resolve(args, conf, "session_open", None)
    jobs = _resolve(args, conf, "jobs", 1, int)
    for ckpt in args.checkpoint:
        _normalize_checkpoint(ckpt)  # fail before writing anything
    payloads = [(ckpt, input_path, session_open, alphas, factor, units)
                for ckpt in args.checkpoint]
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_evaluate_one, payloads))
    else:
        reports = [_evaluate_one(pl) for pl in payloads]
    os.makedirs(out_dir, exist_ok=True)
    for report in sorted(reports, key=lambda r: r.model):
        path = os.path.join(out_dir, f"{report.model}.report.csv")
        write_report(path, report)
        print(f"evaluate {report.model}: mae={report.mae!r} -> {path}")
    return 0


# ---------------------------------------------------------------------------
# compare / attention / stats


def cmd_compare(args):
    conf = _config_section(args)
    output = _resolve(args, conf, "output", None)
    if not args.reports or output is None:
        raise UsageError("--reports and --output are required")
    reports = [read_report(path) for path in args.reports]
    result = metrics.compare(reports)
    with open(output, "w") as fh:
        fh.write(result.render())
    print(f"compare: {len(reports)} reports -> {output}")
    return 0


def cmd_attention(args):
    conf = _config_section(args)
    input_path = _resolve(args, conf, "input", None)
    ckpt = _resolve(args, conf, "checkpoint", None)
    output = _resolve(args, conf, "output", None)
    if input_path is None or ckpt is None or output is None:
        raise UsageError("--input, --checkpoint and --output are required")
    kind, path = _normalize_checkpoint(ckpt)
    if kind != "net":
        raise DataError("attention profiles require an attention checkpoint")
    model, extra = models.load_checkpoint(path)
    if not model.spec.uses_attention:
        raise DataError(f"model {model.spec.name} has no attention layer")
    series = _load_input(input_path, _resolve(args, conf, "session_open", None))
    n_obs = int(extra["n_obs"])
    test_start = int(extra["test_start"])
    if len(series) != n_obs:
        raise DataError(f"{path}: fitted on {n_obs} observations but input has "
                        f"{len(series)}")
    pred = models.predict_series(model, series, np.arange(test_start, n_obs))
    profile = metrics.attention_profile(pred)
    with open(output, "w") as fh:
        fh.write("lag,weight\n")
        for lag, weight in zip(profile.lags, profile.weights):
            fh.write(f"{lag},{float(weight)!r}\n")
    print(f"attention: profile over {len(profile.lags)} lags -> {output}")
    return 0


def cmd_stats(args):
    conf = _config_section(args)
    input_path = _resolve(args, conf, "input", None)
    out_dir = _resolve(args, conf, "output_dir", None)
    if input_path is None or out_dir is None:
        raise UsageError("--input and --output-dir are required")
    max_lag = _resolve(args, conf, "max_lag", 50, int)
    factor = _unit_factor(_resolve(args, conf, "units", "s"))
    series = _load_input(input_path, _resolve(args, conf, "session_open", None))
    x = series.durations
    acf_values = acf(x, max_lag)
    pacf_values = pacf(x, max_lag)
    os.makedirs(out_dir, exist_ok=True)
    stats_path = os.path.join(out_dir, "stats.csv")
    with open(stats_path, "w") as fh:
        fh.write("lag,acf,pacf\n")
        for k in range(max_lag + 1):
            fh.write(f"{k},{float(acf_values[k])!r},{float(pacf_values[k])!r}\n")
    summary_path = os.path.join(out_dir, "summary.txt")
    scaled = x * factor
    quartiles = np.quantile(scaled, [0.25, 0.5, 0.75])
    with open(summary_path, "w") as fh:
        fh.write(f"n = {x.shape[0]}\n")
        fh.write(f"mean = {float(np.mean(scaled))!r}\n")
        fh.write(f"std = {float(np.std(scaled))!r}\n")
        fh.write(f"min = {float(np.min(scaled))!r}\n")
        fh.write(f"q25 = {float(quartiles[0])!r}\n")
        fh.write(f"median = {float(quartiles[1])!r}\n")
        fh.write(f"q75 = {float(quartiles[2])!r}\n")
        fh.write(f"max = {float(np.max(scaled))!r}\n")
    print(f"stats: wrote {stats_path} and {summary_path}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="duracd",
        description="Fit, forecast and evaluate transaction-duration models.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI config file; flags override it")
        p.add_argument("--seed", type=int)
        p.add_argument("--units", choices=("s", "ms"))
        p.add_argument("--session-open", dest="session_open",
                       help="drop rows before this time of day (HH:MM[:SS])")

    p = sub.add_parser("simulate", help="simulate a duration process")
    common(p)
    p.add_argument("--omega", type=float)
    p.add_argument("--alpha", type=float, action="append",
                   help="duration-lag coefficient (repeatable)")
    p.add_argument("--beta", type=float, action="append",
                   help="mean-lag coefficient (repeatable)")
    p.add_argument("--n", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--features", action="store_true",
                   help="also synthesize volume and side columns")
    p.add_argument("--output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one or more models")
    common(p)
    p.add_argument("--input")
    p.add_argument("--model", help="comma-separated names or 'all'")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--test-fraction", dest="test_fraction", type=float)
    p.add_argument("--ratio", help="train:validation ratio, e.g. 8:2")
    p.add_argument("--jobs", type=int)
    p.add_argument("--p", type=int, help="ACD duration-lag order")
    p.add_argument("--q", type=int, help="ACD mean-lag order")
    for key in ("timesteps", "hidden", "attention-size", "dense-hidden",
                "batch-size", "eval-every", "patience", "max-steps",
                "decay-steps"):
        p.add_argument(f"--{key}", dest=key.replace("-", "_"), type=int)
    for key in ("start-lr", "decay-rate", "clip-norm"):
        p.add_argument(f"--{key}", dest=key.replace("-", "_"), type=float)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", help="score fitted models on the test split")
    common(p)
    p.add_argument("--input")
    p.add_argument("--checkpoint", nargs="+",
                   help="checkpoint base paths (or .acd/.npz/.meta files)")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--alpha-levels", dest="alpha_levels",
                   help="comma-separated quantile levels")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="tabulate reports side by side")
    common(p)
    p.add_argument("--reports", nargs="+")
    p.add_argument("--output")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("attention", help="per-lag attention profile on the test split")
    common(p)
    p.add_argument("--input")
    p.add_argument("--checkpoint")
    p.add_argument("--output")
    p.set_defaults(func=cmd_attention)

    p = sub.add_parser("stats", help="summary statistics and acf/pacf")
    common(p)
    p.add_argument("--input")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--max-lag", dest="max_lag", type=int)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ParseError, DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
