"""Command-line entry point (``wallk``)."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from datetime import date
from pathlib import Path

from . import __version__
from .fvm import SolverError, ThermographSet
from .harness import (CampaignConfig, Scenario, TruthConfig, build_truth, report_run,
                      run_campaign, worker_count, WORKERS_ENV)
from .inverse import EstimateConfig, estimate_k, preset
from .physics import WallSpec
from .weather import (WeatherDataError, build_env_series, detect_sunrise, export_env_csv,
                      parse_weather_csv, synthetic_records, write_weather_csv)

log = logging.getLogger("wallk")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4


class _HelpFormatter(argparse.HelpFormatter):
    """Appends the default to option help unless there is none to show."""

    def __init__(self, prog):
        super().__init__(prog, width=100, max_help_position=34)

    def _get_help_string(self, action):
        text = action.help or ""
        d = action.default
        hidden = d is None or d is False or d is argparse.SUPPRESS
        if not hidden and action.option_strings and "%(default)" not in text:
            text += " (default: %(default)s)"
        return text


class DataError(Exception):
    """Bad or missing input data; maps to exit code 3."""


def _date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date (YYYY-MM-DD): {text!r}") from None


def _bounds(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MIN,MAX, got {text!r}") from None
    if not 0 < lo < hi:
        raise argparse.ArgumentTypeError(f"need 0 < MIN < MAX, got {text!r}")
    return lo, hi


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _load_records(path: Path):
    try:
        return parse_weather_csv(path)
    except WeatherDataError as exc:
        raise DataError(str(exc)) from None


def _env_for_day(records, day: date):
    try:
        return build_env_series(records, detect_sunrise(records, day))
    except WeatherDataError as exc:
        raise DataError(str(exc)) from None


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_simulate(args) -> int:
    records = _load_records(args.weather)
    scenario = Scenario(args.ic, args.protocol, args.k, args.day)
    truth = TruthConfig(dt=args.dt, n_cells=args.n_cells)
    try:
        data = build_truth(scenario, records, truth, WallSpec(thickness_b=args.thickness))
    except (WeatherDataError, SolverError) as exc:
        raise DataError(str(exc)) from None
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    data.history.to_csv(out / "field.csv")
    data.thermographs.to_csv(out / "thermographs.csv")
    export_env_csv(data.env, out / "env.csv")
    _write_json(out / "simulate.json", {
        "day": args.day.isoformat(), "k": args.k, "ic_mode": scenario.ic_mode,
        "protocol": scenario.protocol, "t0": data.env.t0.isoformat(),
        "initial_profile_mae": data.initial_profile_mae, "dt": args.dt, "n_cells": args.n_cells,
        "thickness": args.thickness, "n_thermographs": len(data.thermographs),
    })
    print(f"wrote {len(data.thermographs)} thermographs to {out / 'thermographs.csv'}")
    return EXIT_OK


def _estimate_config(args) -> EstimateConfig:
    if args.estimate_config is not None:
        try:
            cfg = EstimateConfig.from_dict(json.loads(args.estimate_config.read_text()))
        except (OSError, ValueError, TypeError) as exc:
            raise DataError(f"{args.estimate_config}: {exc}") from None
    else:
        cfg = preset(args.preset)
    over = {"k_min": args.material_bounds[0], "k_max": args.material_bounds[1]}
    if args.seed is not None:
        over["seed"] = args.seed
    return replace(cfg, **over)


def cmd_estimate(args) -> int:
    records = _load_records(args.weather)
    env = _env_for_day(records, args.day)
    try:
        tg = ThermographSet.from_csv(args.thermographs)
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from None
    if tg.times[-1] > env.duration or tg.times[0] < 0:
        raise DataError(f"{args.thermographs}: times must lie within [0, {env.duration:g}] s")
    cfg = _estimate_config(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", cfg.to_dict())

    def progress(n, k, loss, inner):
        log.info("outer %d: k=%.5f loss_tc=%.3e inner_steps=%d", n, k, loss, inner.steps)

    trace = estimate_k(WallSpec(thickness_b=args.thickness), env, tg, cfg, callback=progress)
    trace.write(out / "ktrace.csv", out / "summary.json")
    if args.training_log:
        trace.trainer.write_log(out / "training_log.csv")
    state = "converged" if trace.converged else f"not converged ({trace.failure_reason})"
    print(f"k_hat = {trace.k_hat:.6f} W/(m K), {state}, {trace.outer_steps} outer steps")
    return EXIT_OK


def cmd_campaign(args) -> int:
    try:
        cfg = CampaignConfig.load(args.config)
    except FileNotFoundError:
        raise DataError(f"campaign config not found: {args.config}") from None
    except ValueError as exc:
        raise DataError(f"{args.config}: {exc}") from None
    workers = args.workers if args.workers is not None else worker_count()

    def progress(row):
        s = row.scenario
        print(f"{s.day} k={s.true_k:g} {s.protocol} {s.ic_mode}: k_hat={row.k_hat:.4f} "
              f"{'ok' if row.converged else 'failed'}", flush=True)

    try:
        run_dir, rows = run_campaign(cfg, args.out, workers, args.seed, progress)
    except WeatherDataError as exc:
        raise DataError(str(exc)) from None
    print(f"{len(rows)} scenarios, {sum(not r.converged for r in rows)} failed; report in {run_dir}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        paths = report_run(args.run)
    except (FileNotFoundError, ValueError) as exc:
        raise DataError(str(exc)) from None
    print(f"wrote {paths['results.md']}")
    return EXIT_OK


def cmd_weather_synth(args) -> int:
    records = synthetic_records(args.start, args.days, seed=args.seed)
    write_weather_csv(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def cmd_env_export(args) -> int:
    env = _env_for_day(_load_records(args.weather), args.day)
    export_env_csv(env, args.out)
    print(f"wrote {len(env.times)} samples to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    p = argparse.ArgumentParser(
        prog="wallk", formatter_class=fmt,
        description="Estimate the thermal conductivity of a wall from outer-surface "
                    "temperatures with a physics-informed network.",
        epilog=f"Exit codes: 0 success (including non-converged estimates), 2 usage, 3 data, "
               f"4 internal. {WORKERS_ENV} sets the default campaign worker count.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0,
                   help="more log output (repeat for debug)")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)

    s = sub.add_parser("simulate", formatter_class=fmt, help="finite-volume ground truth and thermographs",
                       description="Solve the wall for one day and write the field and thermographs.")
    s.add_argument("--weather", type=Path, required=True, help="weather CSV (required)")
    s.add_argument("--day", type=_date, required=True, help="day to simulate, YYYY-MM-DD (required)")
    s.add_argument("--k", type=_positive, default=2.0, help="true conductivity [W/(m K)]")
    s.add_argument("--ic", choices=("steady", "spinup"), default="steady",
                   help="dawn profile: steady state or 3-day spin-up")
    s.add_argument("--protocol", choices=("t418", "t15"), default="t418",
                   help="thermograph schedule")
    s.add_argument("--dt", type=_positive, default=10.0, help="time step [s]")
    s.add_argument("--n-cells", type=int, default=240, help="finite-volume cells")
    s.add_argument("--thickness", type=_positive, default=0.3, help="wall thickness [m]")
    s.add_argument("--out", type=Path, default=Path("sim"), help="output directory")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", formatter_class=fmt, help="estimate k from thermographs",
                       description="Alternate network training and conductivity updates until "
                                   "the estimate settles.")
    e.add_argument("--weather", type=Path, required=True, help="weather CSV (required)")
    e.add_argument("--day", type=_date, required=True, help="measurement day, YYYY-MM-DD (required)")
    e.add_argument("--thermographs", type=Path, required=True,
                   help="CSV with time_s,surface_temp_k (required)")
    e.add_argument("--material-bounds", type=_bounds, default=(0.5, 6.0), metavar="MIN,MAX",
                   help="conductivity search range [W/(m K)]")
    e.add_argument("--preset", choices=("desk", "paper"), default="desk",
                   help="network size and training budget")
    e.add_argument("--estimate-config", type=Path, default=None,
                   help="JSON config dump to use instead of the preset")
    e.add_argument("--seed", type=int, default=None, help="seed (default: the preset's, 0)")
    e.add_argument("--thickness", type=_positive, default=0.3, help="wall thickness [m]")
    e.add_argument("--training-log", action="store_true", help="also write training_log.csv")
    e.add_argument("--out", type=Path, default=Path("estimate"), help="output directory")
    e.set_defaults(func=cmd_estimate)

    c = sub.add_parser("campaign", formatter_class=fmt, help="run a scenario matrix",
                       description="Run every scenario of a JSON campaign config; reruns "
                                   "resume in the run directory with the same config hash.")
    c.add_argument("--config", type=Path, required=True, help="campaign JSON file (required)")
    c.add_argument("--out", type=Path, default=Path("runs"), help="root for run directories")
    c.add_argument("--workers", type=int, default=None, help=f"parallel scenarios (default: ${WORKERS_ENV} or 1)")
    c.add_argument("--seed", type=int, default=0, help="master seed")
    c.set_defaults(func=cmd_campaign)

    r = sub.add_parser("report", formatter_class=fmt, help="rebuild report files of a run",
                       description="Regenerate results.csv, results.md, boxstats.csv and "
                                   "kerror_vs_icmae.csv from stored rows.")
    r.add_argument("--run", type=Path, required=True, help="run directory (required)")
    r.set_defaults(func=cmd_report)

    w = sub.add_parser("weather", formatter_class=fmt, help="synthetic weather data")
    wsub = w.add_subparsers(dest="weather_command", metavar="ACTION", required=True)
    ws = wsub.add_parser("synth", formatter_class=fmt, help="write synthetic station records")
    ws.add_argument("--start", type=_date, required=True, help="first day, YYYY-MM-DD (required)")
    ws.add_argument("--days", type=int, default=1, help="number of days")
    ws.add_argument("--seed", type=int, default=0, help="random seed")
    ws.add_argument("--out", type=Path, default=Path("weather.csv"), help="output CSV")
    ws.set_defaults(func=cmd_weather_synth)

    v = sub.add_parser("env", formatter_class=fmt, help="resolved forcing series")
    vsub = v.add_subparsers(dest="env_command", metavar="ACTION", required=True)
    ve = vsub.add_parser("export", formatter_class=fmt, help="write the day window with sol-air and h_out")
    ve.add_argument("--weather", type=Path, required=True, help="weather CSV (required)")
    ve.add_argument("--day", type=_date, required=True, help="day, YYYY-MM-DD (required)")
    ve.add_argument("--out", type=Path, default=Path("env.csv"), help="output CSV")
    ve.set_defaults(func=cmd_env_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        return EXIT_INTERNAL
    except Exception as exc:  # anything unexpected is an internal error
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
