"""Command-line entry point.

Settings resolve as command-line flag, then ``SMIBDSE_*`` environment
variable, then the config file or preset. Exit status is 0 on success, 2 for
configuration errors, 3 for numerical failures and 1 for file errors.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    apply_overrides,
    config_to_dict,
    env_overrides,
    list_presets,
    load_config,
    load_preset,
)
from .detection import (
    CALIBRATION_QUANTILE,
    CALIBRATION_SAFETY,
    MIN_CALIBRATION_RUNS,
    calibrate_euclid_threshold,
    chi2_threshold_for,
)
from .exceptions import ConfigError, IoError, NumericalError
from .harness import default_workers, run_monte_carlo, run_scenario, simulate
from .io import export_trace, read_trace, write_json, write_yaml
from .plotting import parse_channels, plot_trace

logger = logging.getLogger("smibdse")

DEFAULT_PRESET = "scenario1"
EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _settings(args):
    """Merge flags over environment variables."""
    merged = env_overrides()
    for key in ("config", "preset", "out", "seed", "runs", "filters", "attack",
                "channels", "alpha", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def resolve_config(settings):
    if settings.get("config"):
        cfg = load_config(settings["config"])
    else:
        cfg = load_preset(settings.get("preset") or DEFAULT_PRESET)
    return apply_overrides(cfg, seed=settings.get("seed"), runs=settings.get("runs"),
                           filters=settings.get("filters"), attack=settings.get("attack"),
                           alpha=settings.get("alpha"))


def _out_dir(settings, default):
    out = Path(settings.get("out") or default)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {out}: {exc}") from None
    return out


def _echo_config(cfg, out):
    write_yaml(config_to_dict(cfg), out / "config.yaml",
               comment="effective configuration after flag and environment overrides")


def cmd_run(args):
    settings = _settings(args)
    cfg = resolve_config(settings)
    out = _out_dir(settings, "out")
    _echo_config(cfg, out)
    trace, metrics = run_scenario(cfg)
    trace_path = export_trace(trace, out / f"trace.{args.format}", fmt=args.format)
    write_json(metrics.to_dict(), out / "metrics.json")
    print(f"wrote {trace_path} and {out / 'metrics.json'}")
    for name, m in metrics.filters.items():
        print(f"{name:5s} rmse={np.round(m.rmse, 4).tolist()} mean_g={m.mean_g:.3f}")
    return EXIT_OK


def cmd_batch(args):
    settings = _settings(args)
    cfg = resolve_config(settings)
    out = _out_dir(settings, "out")
    _echo_config(cfg, out)
    workers = int(settings.get("workers") or default_workers())
    summary = run_monte_carlo(cfg, workers=workers)
    write_json(summary.to_dict(), out / "summary.json")
    print(f"{cfg.monte_carlo_runs} runs, wrote {out / 'summary.json'}")
    for name, per in summary.aggregate.items():
        e = per["mean_error_norm"]
        print(f"{name:5s} mean_error_norm={e.mean:.4f} [{e.ci_low:.4f}, {e.ci_high:.4f}]")
    return EXIT_OK


def cmd_calibrate(args):
    settings = _settings(args)
    cfg = resolve_config(settings)
    if cfg.attack.kind != "none":
        raise ConfigError("calibration needs an attack-free configuration "
                          f"(attack kind is {cfg.attack.kind!r})")
    if settings.get("runs") is None:
        cfg = apply_overrides(cfg, runs=max(cfg.monte_carlo_runs, MIN_CALIBRATION_RUNS))
    out = _out_dir(settings, "out")
    d_runs = []
    for i in range(cfg.monte_carlo_runs):
        trace = simulate(cfg.with_seed(cfg.run_seed(i)))
        d_runs += [trace.d[name][1:] for name in trace.filters]
    threshold = calibrate_euclid_threshold(d_runs, min_runs=MIN_CALIBRATION_RUNS)
    detector = {"detector": {"alpha": cfg.alpha,
                             "chi2_threshold": cfg.detector.chi2_threshold,
                             "euclid_threshold": threshold,
                             "euclid_window": cfg.detector.euclid_window}}
    provenance = (f"calibrated from {cfg.name}: {cfg.monte_carlo_runs} attack-free runs, "
                  f"base seed {cfg.seed}, filters {','.join(cfg.filters)}\n"
                  f"threshold = {CALIBRATION_SAFETY} x {CALIBRATION_QUANTILE}th percentile "
                  f"of d, kept above the largest calibration value\n"
                  f"smibdse {__version__}")
    path = write_yaml(detector, out / "detector.yaml", comment=provenance)
    print(f"euclid_threshold={threshold!r}, wrote {path}")
    return EXIT_OK


def cmd_plot(args):
    settings = _settings(args)
    channels = parse_channels(settings.get("channels"))
    trace_path = Path(args.trace)
    trace = read_trace(trace_path)
    chi2_thr, euclid_thr = None, None
    echoed = trace_path.parent / "config.yaml"
    if settings.get("config") or settings.get("preset") or echoed.exists():
        if not settings.get("config") and not settings.get("preset"):
            settings["config"] = str(echoed)
        cfg = resolve_config(settings)
        chi2_thr, euclid_thr = cfg.detector.chi2_threshold, cfg.detector.euclid_threshold
    elif settings.get("alpha") is not None:
        chi2_thr = chi2_threshold_for(1, float(settings["alpha"]))
    out = Path(settings.get("out") or trace_path.with_suffix(".svg"))
    if out.suffix != ".svg":
        out = out / "trace.svg"
    out.parent.mkdir(parents=True, exist_ok=True)
    plot_trace(trace, out, channels, chi2_thr, euclid_thr)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_list_presets(args):
    for name in list_presets():
        print(name)
    return EXIT_OK


def _common(p, runs=True, out_help="output directory"):
    p.add_argument("--config", help="scenario YAML file")
    p.add_argument("--preset", help="shipped scenario name (see list-presets)")
    p.add_argument("--out", help=out_help)
    p.add_argument("--seed", type=int, help="base random seed")
    if runs:
        p.add_argument("--runs", type=int, help="number of Monte-Carlo runs")
    p.add_argument("--filters", help="comma-separated subset of ekf,ckf,sckf")
    p.add_argument("--attack", choices=["none", "random", "dos", "replay", "fdi"],
                   help="replace the configured attack with a stock one")
    p.add_argument("--alpha", type=float, help="chi-square false-alarm level")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="smibdse",
        description="Dynamic state estimation and attack detection for a "
                    "single-machine infinite-bus model.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one seeded run and export its trace")
    _common(p, runs=False)
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="Monte-Carlo batch with confidence intervals")
    _common(p)
    p.add_argument("--workers", type=int, help="worker processes")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("calibrate", help="calibrate the Euclidean detector threshold")
    _common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("plot", help="plot a trace file to SVG")
    p.add_argument("trace", help="trace CSV or JSONL written by 'run'")
    p.add_argument("--channels", help="comma-separated channels: x1..x4, e1..e4, y, g, d")
    _common(p, runs=False, out_help="SVG file or directory")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("list-presets", help="list shipped scenario presets")
    p.set_defaults(func=cmd_list_presets)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
