"""Experiment orchestration: scenarios, statistics and report files."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from . import net
from .fvm import (FieldHistory, dawn_steady_profile, extract_thermographs, protocol_schedule,
                  solve_transient, spin_up)
from .inverse import EstimateConfig, estimate_k, preset
from .net import NetParams
from .physics import Scaler, WallSpec
from .weather import (build_env_series, build_spinup_series, detect_sunrise, parse_weather_csv,
                      synthetic_records)

log = logging.getLogger(__name__)

IC_MODES = ("steady", "spin_up_3day")
PROTOCOLS = ("T4_18", "T1_5")
SEASONS = ("Spring", "Summer", "Fall", "Winter")
WORKERS_ENV = "WALLK_WORKERS"
GRID_DX = 0.0005
GRID_DT = 300.0
RESULT_COLUMNS = ("day", "season", "true_k", "protocol", "ic_mode", "seed", "k_hat",
                  "abs_error", "converged", "initial_profile_mae", "runtime_s", "outer_steps",
                  "failure_reason")


def season_of(day: date) -> str:
    """Meteorological season (Dec-Feb winter, Mar-May spring, ...)."""
    return {12: "Winter", 1: "Winter", 2: "Winter", 3: "Spring", 4: "Spring", 5: "Spring",
            6: "Summer", 7: "Summer", 8: "Summer"}.get(day.month, "Fall")


def normalise_protocol(name: str) -> str:
    key = name.upper().replace("-", "_").replace("T418", "T4_18").replace("T15", "T1_5")
    if key not in PROTOCOLS:
        raise ValueError(f"unknown protocol {name!r} (expected T4_18 or T1_5)")
    return key


def normalise_ic_mode(name: str) -> str:
    key = {"steady": "steady", "spinup": "spin_up_3day", "spin_up": "spin_up_3day",
           "spin_up_3day": "spin_up_3day"}.get(name.lower())
    if key is None:
        raise ValueError(f"unknown ic mode {name!r} (expected steady or spin_up_3day)")
    return key


@dataclass(frozen=True)
class Scenario:
    ic_mode: str
    protocol: str
    true_k: float
    day: date
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ic_mode", normalise_ic_mode(self.ic_mode))
        object.__setattr__(self, "protocol", normalise_protocol(self.protocol))
        if not (self.true_k > 0 and math.isfinite(self.true_k)):
            raise ValueError("true_k must be positive and finite")

    @property
    def key(self) -> str:
        return f"{self.day.isoformat()}|{self.true_k!r}|{self.protocol}|{self.ic_mode}|{self.seed}"

    @property
    def season(self) -> str:
        return season_of(self.day)


@dataclass
class ResultRow:
    scenario: Scenario
    k_hat: float
    abs_error: float
    converged: bool
    initial_profile_mae: float | None = None
    runtime_s: float = 0.0
    outer_steps: int = 0
    failure_reason: str | None = None

    def to_dict(self) -> dict:
        s = self.scenario
        return {
            "day": s.day.isoformat(), "season": s.season, "true_k": s.true_k,
            "protocol": s.protocol, "ic_mode": s.ic_mode, "seed": s.seed,
            "k_hat": self.k_hat, "abs_error": self.abs_error, "converged": self.converged,
            "initial_profile_mae": self.initial_profile_mae, "runtime_s": self.runtime_s,
            "outer_steps": self.outer_steps, "failure_reason": self.failure_reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResultRow":
        sc = Scenario(d["ic_mode"], d["protocol"], float(d["true_k"]),
                      date.fromisoformat(d["day"]), int(d["seed"]))
        ipm = d.get("initial_profile_mae")
        return cls(sc, float(d["k_hat"]), float(d["abs_error"]), bool(d["converged"]),
                   None if ipm is None else float(ipm), float(d.get("runtime_s", 0.0)),
                   int(d.get("outer_steps", 0)), d.get("failure_reason"))


@dataclass(frozen=True)
class TruthConfig:
    """Resolution of the finite-volume ground truth."""

    dt: float = 10.0
    n_cells: int = 240
    spinup_hours: float = 72.0
    spinup_dt: float = 60.0


class WeatherSource:
    """Station records for a scenario day, including the preceding spin-up days."""

    def records(self, day: date) -> list:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass
class SyntheticWeather(WeatherSource):
    seed: int = 0
    lead_days: int = 3

    def records(self, day: date) -> list:
        start = day - timedelta(days=self.lead_days)
        # one stream per day, so a day's weather does not depend on the campaign
        return synthetic_records(start, self.lead_days + 1, seed=self.seed * 1_000_003 + day.toordinal())

    def describe(self) -> dict:
        return {"source": "synthetic", "seed": self.seed, "lead_days": self.lead_days}


@dataclass
class FileWeather(WeatherSource):
    path: str
    _cache: list | None = field(default=None, repr=False)

    def records(self, day: date) -> list:
        if self._cache is None:
            self._cache = parse_weather_csv(self.path)
        return self._cache

    def describe(self) -> dict:
        return {"source": "file", "path": str(self.path)}


@dataclass
class TruthData:
    """Everything ``run_scenario`` derives before the estimate."""

    env: object
    history: FieldHistory
    thermographs: object
    initial_profile_mae: float | None
    wall: WallSpec


def profile_mae(a, b, thickness: float, dx: float = GRID_DX) -> float:
    x = np.linspace(0.0, thickness, int(round(thickness / dx)) + 1)
    return float(np.mean(np.abs(np.asarray(a(x)) - np.asarray(b(x)))))


def build_truth(scenario: Scenario, records, truth: TruthConfig | None = None,
                wall: WallSpec | None = None) -> TruthData:
    truth = truth or TruthConfig()
    wall = (wall or WallSpec()).with_k(scenario.true_k)
    t0 = detect_sunrise(records, scenario.day)
    env = build_env_series(records, t0)
    initial, ic_mae = None, None
    if scenario.ic_mode == "spin_up_3day":
        spin_env = build_spinup_series(records, t0, truth.spinup_hours)
        initial = spin_up(wall, spin_env, dt=truth.spinup_dt, n_cells=truth.n_cells,
                          min_hours=truth.spinup_hours)
        ic_mae = profile_mae(initial, dawn_steady_profile(wall, env), wall.thickness_b)
    hist = solve_transient(wall, env, initial_profile=initial, dt=truth.dt, n_cells=truth.n_cells)
    tg = extract_thermographs(hist, protocol_schedule(scenario.protocol, env.duration))
    return TruthData(env, hist, tg, ic_mae, wall)


def run_scenario(scenario: Scenario, records, config: EstimateConfig | None = None,
                 truth: TruthConfig | None = None, wall: WallSpec | None = None,
                 return_trace: bool = False):
    """Ground truth, thermographs and one conductivity estimate for a scenario.

    The estimate always assumes a steady dawn profile, whatever produced the truth.
    """
    started = time.perf_counter()
    config = config or EstimateConfig()
    try:
        data = build_truth(scenario, records, truth, wall)
        trace = estimate_k(data.wall, data.env, data.thermographs, config)
    except Exception as exc:
        try:
            wrapped = type(exc)(f"scenario {scenario.key}: {exc}")
        except TypeError:
            wrapped = RuntimeError(f"scenario {scenario.key}: {exc!r}")
        raise wrapped from exc
    k_hat = trace.k_hat
    row = ResultRow(scenario, k_hat, abs(k_hat - scenario.true_k), trace.converged,
                    data.initial_profile_mae, time.perf_counter() - started, trace.outer_steps,
                    trace.failure_reason)
    return (row, trace, data) if return_trace else row


def _with_seed(config: EstimateConfig, seed: int) -> EstimateConfig:
    return replace(config, seed=seed)


# ---------------------------------------------------------------- statistics

def bootstrap_ci(values, n_resamples: int = 10_000, resample_size: int | None = None,
                 confidence: float = 0.95, seed: int = 0, statistic=None,
                 chunk: int = 1000) -> tuple[float, float]:
    """Percentile bootstrap interval; the default statistic is the mean absolute value."""
    vals = np.asarray(values, dtype=float).ravel()
    if vals.size == 0:
        raise ValueError("bootstrap of an empty sample")
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    m = vals.size if resample_size is None else int(resample_size)
    rng = np.random.default_rng(seed)
    stats = np.empty(n_resamples)
    data = np.abs(vals) if statistic is None else vals
    for start in range(0, n_resamples, chunk):
        stop = min(start + chunk, n_resamples)
        draw = data[rng.integers(0, vals.size, size=(stop - start, m))]
        stats[start:stop] = draw.mean(axis=1) if statistic is None else np.apply_along_axis(statistic, 1, draw)
    alpha = (1.0 - confidence) / 2.0
    lo, hi = np.quantile(stats, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


@dataclass
class GroupSummary:
    protocol: str
    ic_mode: str
    true_k: float
    season: str
    n_total: int
    n_failed: int
    mean: float
    std: float
    median: float
    mae: float
    ci_low: float | None
    ci_high: float | None

    @property
    def n_converged(self) -> int:
        return self.n_total - self.n_failed


@dataclass
class Aggregate:
    groups: list[GroupSummary]
    notes: list[str]


def _group_order(season: str) -> int:
    return 0 if season == "Year" else 1 + SEASONS.index(season)


def aggregate(rows, n_resamples: int = 10_000, resample_size: int | None = None,
              seed: int = 0) -> Aggregate:
    """Per (protocol, ic mode, k, season) statistics over converged rows, plus a Year group.

    Failed rows are excluded from every statistic and only counted.
    """
    buckets: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        s = r.scenario
        for season in ("Year", s.season):
            buckets.setdefault((s.protocol, s.ic_mode, s.true_k, season), []).append(r)
    groups, notes = [], []
    keys = sorted(buckets, key=lambda k: (PROTOCOLS.index(k[0]), IC_MODES.index(k[1]), k[2],
                                          _group_order(k[3])))
    for key in keys:
        members = buckets[key]
        ok = sorted(r.k_hat for r in members if r.converged)
        n_failed = len(members) - len(ok)
        label = f"{key[0]} {key[1]} k={key[2]:g} {key[3]}"
        if not ok:
            notes.append(f"{label}: no converged runs ({n_failed} failed), omitted")
            continue
        est = np.array(ok)
        err = est - key[2]
        ci = (None, None)
        if len(ok) >= 2:
            ci = bootstrap_ci(err, n_resamples, resample_size, seed=seed)
        else:
            notes.append(f"{label}: one converged run, CI unavailable")
        groups.append(GroupSummary(key[0], key[1], key[2], key[3], len(members), n_failed,
                                   float(est.mean()), float(est.std(ddof=1)) if len(ok) > 1 else 0.0,
                                   float(np.median(est)), float(np.mean(np.abs(err))), *ci))
    return Aggregate(groups, notes)


def box_stats(values) -> dict:
    """Quartiles (linear interpolation), 1.5 IQR whiskers and outliers."""
    v = np.sort(np.asarray(values, dtype=float))
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    iqr = q3 - q1
    inside = v[(v >= q1 - 1.5 * iqr) & (v <= q3 + 1.5 * iqr)]
    out = v[(v < q1 - 1.5 * iqr) | (v > q3 + 1.5 * iqr)]
    return {"min": float(v[0]), "q1": float(q1), "median": float(med), "q3": float(q3),
            "max": float(v[-1]), "whisker_low": float(inside.min()),
            "whisker_high": float(inside.max()), "outliers": [float(x) for x in out]}


# ---------------------------------------------------------- forward accuracy

def comparison_grid(t_end: float, thickness: float, dt: float = GRID_DT,
                    dx: float = GRID_DX) -> tuple[np.ndarray, np.ndarray]:
    """Comparison instants (t=0 included) and depths (both faces included)."""
    nt = int(math.floor(t_end / dt + 1e-9))
    nx = int(round(thickness / dx))
    return dt * np.arange(nt + 1), np.linspace(0.0, thickness, nx + 1)


def pinn_predictor(params: NetParams, scaler: Scaler, k: float):
    """T(t, x) on the outer-product grid from a trained network at conductivity k."""
    kappa = float(scaler.kappa(k))

    def predict(t, x):
        tt, xx = np.meshgrid(scaler.tau(np.asarray(t, float)), scaler.xi(np.asarray(x, float)),
                             indexing="ij")
        inp = np.column_stack([tt.ravel(), xx.ravel(), np.full(tt.size, kappa)])
        return scaler.temperature(net.forward(params, inp).astype(float)).reshape(tt.shape)
    return predict


def forward_accuracy(predictor, history: FieldHistory, scaler: Scaler | None = None,
                     k: float | None = None) -> float:
    """MAE in kelvin between a predictor and the FVM field on the 0.5 mm x 5 min grid.

    ``predictor`` is either a callable ``f(t, x)`` or network parameters (then
    ``scaler`` and ``k`` are required).
    """
    if isinstance(predictor, NetParams):
        if scaler is None or k is None:
            raise ValueError("network parameters need a scaler and a conductivity")
        if abs(scaler.t_total - history.times[-1]) > 1e-6 or abs(scaler.b - history.grid.b) > 1e-12:
            raise ValueError("network window does not match the FVM history")
        predictor = pinn_predictor(predictor, scaler, k)
    t, x = comparison_grid(history.times[-1], history.grid.b)
    return float(np.mean(np.abs(predictor(t, x) - history.evaluate(t, x))))


# ------------------------------------------------------------------- reports

def config_hash(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _fmt(v, digits=4) -> str:
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return ""
    return f"{v:.{digits}f}"


def write_rows_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            d = r.to_dict()
            w.writerow(["" if d[c] is None else (repr(d[c]) if isinstance(d[c], float) else d[c])
                        for c in RESULT_COLUMNS])


def read_rows_csv(path) -> list[ResultRow]:
    out = []
    with Path(path).open(newline="") as fh:
        for d in csv.DictReader(fh):
            d = {k: (None if v == "" else v) for k, v in d.items()}
            d["converged"] = d["converged"] == "True"
            out.append(ResultRow.from_dict(d))
    return out


def _sorted_rows(rows):
    return sorted(rows, key=lambda r: (PROTOCOLS.index(r.scenario.protocol),
                                       IC_MODES.index(r.scenario.ic_mode), r.scenario.true_k,
                                       r.scenario.day, r.scenario.seed))


def render_markdown(agg: Aggregate, footer: dict | None = None) -> str:
    lines = []
    header = "| k | Season | mean | median | MAE [W/mK] | 95% CI | failed |"
    rule = "|---|---|---|---|---|---|---|"
    sections = sorted({(g.protocol, g.ic_mode) for g in agg.groups},
                      key=lambda s: (PROTOCOLS.index(s[0]), IC_MODES.index(s[1])))
    if not sections:
        lines += [header, rule]
    for proto, ic in sections:
        lines += [f"## {proto}, {ic} initial profile", "", header, rule]
        for g in agg.groups:
            if (g.protocol, g.ic_mode) != (proto, ic):
                continue
            ci = "n/a" if g.ci_low is None else f"{g.ci_low:.4f} - {g.ci_high:.4f}"
            failed = str(g.n_failed) if g.season == "Year" else "-"
            lines.append(f"| {g.true_k:g} | {g.season} | {g.mean:.4f} ± {g.std:.4f} | "
                         f"{g.median:.4f} | {g.mae:.4f} | {ci} | {failed} |")
        lines.append("")
    if agg.notes:
        lines += ["Notes:", ""] + [f"- {n}" for n in agg.notes] + [""]
    if footer:
        lines += ["---", ""] + [f"- {k}: {footer[k]}" for k in sorted(footer)]
    return "\n".join(lines).rstrip("\n") + "\n"


def emit_report(rows, out_dir, footer: dict | None = None, n_resamples: int = 10_000,
                resample_size: int | None = None, seed: int = 0) -> dict[str, Path]:
    """Write results.csv, results.md, boxstats.csv and kerror_vs_icmae.csv under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = _sorted_rows(rows)
    agg = aggregate(rows, n_resamples, resample_size, seed)
    paths = {name: out / name for name in
             ("results.csv", "results.md", "boxstats.csv", "kerror_vs_icmae.csv")}
    write_rows_csv(rows, paths["results.csv"])
    paths["results.md"].write_text(render_markdown(agg, footer))
    with paths["boxstats.csv"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["protocol", "ic_mode", "true_k", "n", "min", "q1", "median", "q3", "max",
                    "whisker_low", "whisker_high", "outliers"])
        groups: dict[tuple, list[float]] = {}
        for r in rows:
            if r.converged:
                s = r.scenario
                groups.setdefault((s.protocol, s.ic_mode, s.true_k), []).append(r.k_hat)
        for key, vals in groups.items():
            b = box_stats(vals)
            w.writerow([*key, len(vals), *(repr(b[c]) for c in
                                          ("min", "q1", "median", "q3", "max", "whisker_low",
                                           "whisker_high")),
                        ";".join(repr(v) for v in b["outliers"])])
    with paths["kerror_vs_icmae.csv"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day", "true_k", "protocol", "initial_profile_mae", "abs_error", "converged"])
        for r in rows:
            if r.initial_profile_mae is not None:
                s = r.scenario
                w.writerow([s.day.isoformat(), s.true_k, s.protocol, repr(r.initial_profile_mae),
                            repr(r.abs_error), r.converged])
    return paths


# ------------------------------------------------------------------ campaign

@dataclass(frozen=True)
class CampaignConfig:
    days: tuple
    k_values: tuple
    protocols: tuple = ("T4_18",)
    ic_modes: tuple = ("steady",)
    seeds: tuple = (0,)
    preset: str = "desk"
    k_bounds: tuple = (0.5, 6.0)
    weather: dict = field(default_factory=lambda: {"source": "synthetic", "seed": 0})
    truth: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    bootstrap: dict = field(default_factory=dict)

    FIELDS = ("days", "k_values", "protocols", "ic_modes", "seeds", "preset", "k_bounds",
              "weather", "truth", "overrides", "bootstrap")

    @classmethod
    def from_dict(cls, doc: dict) -> "CampaignConfig":
        if not isinstance(doc, dict):
            raise ValueError("campaign config must be a JSON object")
        unknown = sorted(set(doc) - set(cls.FIELDS))
        if unknown:
            raise ValueError(f"unknown field(s): {', '.join(unknown)}")
        for req in ("days", "k_values"):
            if req not in doc:
                raise ValueError(f"missing required field: {req}")

        def as_list(name, conv):
            v = doc.get(name)
            if v is None:
                return None
            if not isinstance(v, list) or not v:
                raise ValueError(f"field {name}: expected a non-empty list")
            try:
                return tuple(conv(x) for x in v)
            except (TypeError, ValueError) as exc:
                raise ValueError(f"field {name}: {exc}") from None

        def positive(x):
            x = float(x)
            if not x > 0:
                raise ValueError(f"{x} is not positive")
            return x

        kw = {"days": as_list("days", date.fromisoformat),
              "k_values": as_list("k_values", positive)}
        for name, conv in (("protocols", normalise_protocol), ("ic_modes", normalise_ic_mode),
                           ("seeds", int)):
            v = as_list(name, conv)
            if v is not None:
                kw[name] = v
        if "preset" in doc:
            if doc["preset"] not in ("desk", "paper"):
                raise ValueError("field preset: expected desk or paper")
            kw["preset"] = doc["preset"]
        if "k_bounds" in doc:
            kb = as_list("k_bounds", positive)
            if len(kb) != 2 or kb[0] >= kb[1]:
                raise ValueError("field k_bounds: expected [min, max] with min < max")
            kw["k_bounds"] = kb
        for name in ("weather", "truth", "overrides", "bootstrap"):
            if name in doc:
                if not isinstance(doc[name], dict):
                    raise ValueError(f"field {name}: expected an object")
                kw[name] = dict(doc[name])
        w = kw.get("weather")
        if w is not None and w.get("source", "synthetic") != "synthetic" and "path" not in w:
            raise ValueError("field weather: file source needs a path")
        if "truth" in kw:
            bad = sorted(set(kw["truth"]) - set(TruthConfig.__dataclass_fields__))
            if bad:
                raise ValueError(f"field truth: unknown key(s) {', '.join(bad)}")
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "CampaignConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {"days": [d.isoformat() for d in self.days], "k_values": list(self.k_values),
                "protocols": list(self.protocols), "ic_modes": list(self.ic_modes),
                "seeds": list(self.seeds), "preset": self.preset,
                "k_bounds": list(self.k_bounds), "weather": self.weather, "truth": self.truth,
                "overrides": self.overrides, "bootstrap": self.bootstrap}

    def scenarios(self) -> list[Scenario]:
        return [Scenario(ic, proto, k, day, seed) for ic in self.ic_modes
                for proto in self.protocols for k in self.k_values for day in self.days
                for seed in self.seeds]

    def estimate_config(self) -> EstimateConfig:
        over = dict(self.overrides)
        return preset(self.preset, k_min=self.k_bounds[0], k_max=self.k_bounds[1], **over)

    def truth_config(self) -> TruthConfig:
        return TruthConfig(**self.truth)

    def weather_source(self) -> WeatherSource:
        w = self.weather
        if w.get("source", "synthetic") == "synthetic":
            return SyntheticWeather(int(w.get("seed", 0)))
        return FileWeather(w["path"])

    def resolved(self) -> dict:
        """Everything that determines the results, used for the config hash."""
        return {"campaign": self.to_dict(), "estimate": self.estimate_config().to_dict(),
                "truth": asdict(self.truth_config())}

    @property
    def hash(self) -> str:
        return config_hash(self.resolved())


def scenario_seed(master: int, scenario: Scenario) -> int:
    """Independent seed per scenario derived from the master seed and the scenario identity."""
    words = [int(b) for b in hashlib.sha256(scenario.key.encode()).digest()[:8]]
    return int(np.random.SeedSequence([master, *words]).generate_state(1)[0])


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def find_run_dir(root, chash: str) -> Path | None:
    root = Path(root)
    if not root.is_dir():
        return None
    hits = sorted(p for p in root.iterdir() if p.is_dir() and p.name.endswith("-" + chash))
    return hits[-1] if hits else None


def new_run_dir(root, chash: str, now: datetime | None = None) -> Path:
    stamp = (now or datetime.now(timezone.utc)).strftime("%Y%m%dT%H%M%S")
    return Path(root) / f"{stamp}-{chash}"


ROWS_FILE = "rows.jsonl"


def load_rows(run_dir) -> list[ResultRow]:
    path = Path(run_dir) / ROWS_FILE
    if not path.is_file():
        return []
    return [ResultRow.from_dict(json.loads(line)) for line in path.read_text().splitlines() if line]


def _run_one(args):
    scenario, weather, est, truth = args
    return run_scenario(scenario, weather.records(scenario.day), est, truth)


def run_campaign(config: CampaignConfig, root, workers: int | None = None,
                 master_seed: int = 0, progress=None) -> tuple[Path, list[ResultRow]]:
    """Run (or resume) every scenario of ``config`` and write the report.

    A run directory whose name ends in the config hash is reused; scenarios
    already recorded there are skipped.
    """
    chash = config.hash
    run_dir = find_run_dir(root, chash) or new_run_dir(root, chash)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(json.dumps(config.resolved(), indent=2, sort_keys=True) + "\n")
    done = {r.scenario.key: r for r in load_rows(run_dir)}
    todo = [s for s in config.scenarios() if s.key not in done]
    est, truth, weather = config.estimate_config(), config.truth_config(), config.weather_source()
    jobs = [(s, weather, _with_seed(est, scenario_seed(master_seed, s)), truth) for s in todo]
    workers = worker_count() if workers is None else workers
    rows_path = run_dir / ROWS_FILE

    def record(row):
        with rows_path.open("a") as fh:
            fh.write(json.dumps(row.to_dict(), sort_keys=True) + "\n")
        done[row.scenario.key] = row
        if progress:
            progress(row)

    if workers <= 1 or len(jobs) <= 1:
        for job in jobs:
            record(_run_one(job))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for row in pool.map(_run_one, jobs):
                record(row)
    rows = [done[s.key] for s in config.scenarios()]
    write_report(run_dir, rows, config)
    return run_dir, rows


def write_report(run_dir, rows, config: CampaignConfig) -> dict[str, Path]:
    boot = config.bootstrap
    footer = {"config_hash": config.hash, "seeds": ",".join(str(s) for s in config.seeds),
              "days": ",".join(d.isoformat() for d in config.days),
              "scenarios": len(rows), "converged": sum(r.converged for r in rows),
              "failed": sum(not r.converged for r in rows)}
    return emit_report(rows, run_dir, footer, int(boot.get("n_resamples", 10_000)),
                       boot.get("resample_size"), int(boot.get("seed", 0)))


def report_run(run_dir) -> dict[str, Path]:
    """Regenerate the report files of a finished run from its stored rows."""
    run_dir = Path(run_dir)
    cfg_path = run_dir / "config.json"
    if not cfg_path.is_file():
        raise FileNotFoundError(f"{run_dir}: no config.json, not a run directory")
    config = CampaignConfig.from_dict(json.loads(cfg_path.read_text())["campaign"])
    done = {r.scenario.key: r for r in load_rows(run_dir)}
    rows = [done[s.key] for s in config.scenarios() if s.key in done]
    return write_report(run_dir, rows, config)
