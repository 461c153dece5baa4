"""Weather-station ingestion and the forcing series shared by the FVM oracle and the PINN.

Input files follow a fixed schema::

    timestamp_iso8601,temp_out_c,wind_speed_ms,wind_dir_deg,global_irradiance_wm2

comma separated, UTF-8, LF line endings, one row per station sample (nominal
10-minute cadence). Timestamps must carry a UTC offset.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .physics import V_MIN_CLAMP, IndoorConditions, h_out, sol_air

log = logging.getLogger(__name__)

WEATHER_COLUMNS = (
    "timestamp_iso8601",
    "temp_out_c",
    "wind_speed_ms",
    "wind_dir_deg",
    "global_irradiance_wm2",
)
ENV_COLUMNS = (
    "time_s",
    "temp_out_k",
    "wind_speed_ms",
    "q_direct_wm2",
    "q_diffuse_wm2",
    "solair_k",
    "h_out_wm2k",
)
KELVIN = 273.15
CADENCE_S = 600.0
MAX_GAP_S = 1800.0
DEFAULT_DURATION_S = 16200.0


class WeatherDataError(ValueError):
    """Raised for malformed, incomplete or inconsistent weather data."""


@dataclass(frozen=True)
class RawWeatherRecord:
    timestamp: datetime
    temp_out_c: float
    wind_speed: float
    wind_dir: float
    global_irradiance: float


@dataclass(frozen=True)
class EnvSample:
    time_s: float
    temp_out: float
    wind_speed: float
    q_direct: float
    q_diffuse: float


def parse_weather_csv(path) -> list[RawWeatherRecord]:
    path = Path(path)
    if not path.is_file():
        raise WeatherDataError(f"weather file not found: {path}")
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise WeatherDataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        missing = [c for c in WEATHER_COLUMNS if c not in header]
        if missing:
            raise WeatherDataError(f"{path}: missing column(s) {', '.join(missing)}")
        idx = {c: header.index(c) for c in WEATHER_COLUMNS}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                ts = datetime.fromisoformat(row[idx["timestamp_iso8601"]].strip())
                rec = RawWeatherRecord(
                    timestamp=ts,
                    temp_out_c=float(row[idx["temp_out_c"]]),
                    wind_speed=float(row[idx["wind_speed_ms"]]),
                    wind_dir=float(row[idx["wind_dir_deg"]]),
                    global_irradiance=float(row[idx["global_irradiance_wm2"]]),
                )
            except (ValueError, IndexError) as exc:
                raise WeatherDataError(f"{path}:{lineno}: malformed row ({exc})") from None
            if ts.tzinfo is None:
                raise WeatherDataError(f"{path}:{lineno}: timestamp lacks a UTC offset")
            values = (rec.temp_out_c, rec.wind_speed, rec.global_irradiance)
            if not all(math.isfinite(v) for v in values):
                raise WeatherDataError(f"{path}:{lineno}: non-finite value")
            if rec.wind_speed < 0 or rec.global_irradiance < 0:
                raise WeatherDataError(f"{path}:{lineno}: negative wind speed or irradiance")
            records.append((lineno, rec))
    records.sort(key=lambda item: item[1].timestamp)
    for (_, prev), (lineno, cur) in zip(records, records[1:]):
        if cur.timestamp == prev.timestamp:
            raise WeatherDataError(f"{path}:{lineno}: duplicate timestamp {cur.timestamp.isoformat()}")
    return [rec for _, rec in records]


def write_weather_csv(records, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(WEATHER_COLUMNS)
        for r in records:
            writer.writerow([
                r.timestamp.isoformat(),
                repr(r.temp_out_c),
                repr(r.wind_speed),
                repr(r.wind_dir),
                repr(r.global_irradiance),
            ])


def detect_sunrise(records, day: date, irradiance_threshold: float = 1.0) -> datetime:
    """First timestamp on ``day`` whose global irradiance exceeds the threshold."""
    todays = [r for r in records if r.timestamp.date() == day]
    if not todays:
        raise WeatherDataError(f"no weather records for {day.isoformat()}")
    for i, r in enumerate(todays):
        if r.global_irradiance > irradiance_threshold:
            if i == 0:
                log.warning("irradiance above threshold at the first sample of %s; "
                            "using it as sunrise", day.isoformat())
            return r.timestamp
    raise WeatherDataError(
        f"irradiance never exceeds {irradiance_threshold} W/m2 on {day.isoformat()}")


@dataclass(frozen=True)
class EnvSeries:
    """Outdoor forcing on a regular grid of times relative to ``t0`` [s]."""

    t0: datetime
    duration: float
    times: np.ndarray
    temp_out: np.ndarray
    wind_speed: np.ndarray
    q_direct: np.ndarray
    q_diffuse: np.ndarray
    indoor: IndoorConditions = field(default_factory=IndoorConditions)
    albedo: float = 1.0
    v_min_clamp: float = V_MIN_CLAMP

    def __post_init__(self):
        n = len(self.times)
        if n < 2:
            raise WeatherDataError("an environment series needs at least two samples")
        for name in ("temp_out", "wind_speed", "q_direct", "q_diffuse"):
            if len(getattr(self, name)) != n:
                raise WeatherDataError(f"{name} length does not match times")
        if np.any(np.diff(self.times) <= 0):
            raise WeatherDataError("sample times must be strictly increasing")
        if self.times[0] > 0 or self.times[-1] < self.duration:
            raise WeatherDataError(
                f"samples span [{self.times[0]}, {self.times[-1]}] s, "
                f"not covering [0, {self.duration}] s")

    @property
    def samples(self) -> list[EnvSample]:
        return [EnvSample(*row) for row in zip(
            self.times.tolist(), self.temp_out.tolist(), self.wind_speed.tolist(),
            self.q_direct.tolist(), self.q_diffuse.tolist())]

    def covers(self, t_end: float) -> bool:
        return self.times[0] <= 0 and self.times[-1] >= t_end

    def raw(self, t):
        """Linearly interpolated raw fields (temp_out, wind, q_direct, q_diffuse) at ``t``."""
        t = np.asarray(t, dtype=float)
        lo, hi = self.times[0], self.times[-1]
        if np.any(t < lo - 1e-9) or np.any(t > hi + 1e-9):
            bad = t[(t < lo - 1e-9) | (t > hi + 1e-9)].ravel()[0]
            raise WeatherDataError(f"t={bad} s outside the forcing series [{lo}, {hi}] s")
        return tuple(np.interp(t, self.times, arr)
                     for arr in (self.temp_out, self.wind_speed, self.q_direct, self.q_diffuse))

    def sample(self, t):
        """Interpolate raw fields at ``t`` then return (solair_temp, h_out, temp_out)."""
        temp, wind, qdir, qdiff = self.raw(t)
        h = h_out(wind, self.v_min_clamp)
        return sol_air(temp, qdir, qdiff, self.albedo, h), h, temp

    def solair_series(self) -> np.ndarray:
        return self.sample(self.times)[0]

    @classmethod
    def constant(cls, temp_out: float, wind_speed: float = 2.0, q_diffuse: float = 0.0,
                 duration: float = DEFAULT_DURATION_S, indoor: IndoorConditions | None = None,
                 q_direct: float = 0.0, albedo: float = 1.0,
                 t0: datetime | None = None) -> "EnvSeries":
        times = np.array([0.0, duration])
        ones = np.ones(2)
        return cls(
            t0=t0 or datetime(2000, 1, 1, tzinfo=timezone.utc),
            duration=duration, times=times,
            temp_out=temp_out * ones, wind_speed=wind_speed * ones,
            q_direct=q_direct * ones, q_diffuse=q_diffuse * ones,
            indoor=indoor or IndoorConditions(), albedo=albedo,
        )

    def window(self, start: float, duration: float) -> "EnvSeries":
        """Sub-series re-based so that ``start`` becomes time zero."""
        grid = _regular_grid(duration, CADENCE_S) + start
        temp, wind, qdir, qdiff = self.raw(grid)
        return EnvSeries(self.t0 + timedelta(seconds=start), duration, grid - start,
                         temp, wind, qdir, qdiff, self.indoor, self.albedo, self.v_min_clamp)


def _regular_grid(duration: float, step: float) -> np.ndarray:
    n = int(math.floor(duration / step + 1e-9))
    grid = np.arange(n + 1) * step
    if grid[-1] < duration - 1e-9:
        grid = np.append(grid, duration)
    return grid


def build_env_series(records, t0: datetime, duration: float = DEFAULT_DURATION_S,
                     indoor: IndoorConditions | None = None, diffuse_fraction: float = 1.0,
                     albedo: float = 1.0, v_min_clamp: float = V_MIN_CLAMP,
                     cadence: float = CADENCE_S) -> EnvSeries:
    """Resample station records onto a regular grid over ``[t0, t0 + duration]``.

    Global irradiance is split into direct and diffuse parts by
    ``diffuse_fraction``. Gaps up to 30 minutes are filled linearly; longer
    gaps inside the window are rejected.
    """
    if not 0.0 <= diffuse_fraction <= 1.0:
        raise ValueError("diffuse_fraction must lie in [0, 1]")
    if duration <= 0:
        raise ValueError("duration must be positive")
    rel = np.array([(r.timestamp - t0).total_seconds() for r in records])
    if rel.size == 0 or rel[0] > 0 or rel[-1] < duration:
        raise WeatherDataError(
            f"weather records do not cover {t0.isoformat()} + {duration:.0f} s")
    first = int(np.searchsorted(rel, 0.0, side="right")) - 1
    last = int(np.searchsorted(rel, duration, side="left"))
    span = rel[first:last + 1]
    gaps = np.diff(span)
    if gaps.size and gaps.max() > MAX_GAP_S + 1e-9:
        j = int(np.argmax(gaps))
        at = t0 + timedelta(seconds=float(span[j]))
        raise WeatherDataError(
            f"gap of {gaps[j] / 60:.0f} min after {at.isoformat()} exceeds 30 min")
    sel = records[first:last + 1]
    temp_k = np.array([r.temp_out_c for r in sel]) + KELVIN
    wind = np.array([r.wind_speed for r in sel])
    glob = np.array([r.global_irradiance for r in sel])
    grid = _regular_grid(duration, cadence)
    g = np.interp(grid, span, glob)
    return EnvSeries(
        t0=t0, duration=float(duration), times=grid,
        temp_out=np.interp(grid, span, temp_k),
        wind_speed=np.interp(grid, span, wind),
        q_direct=(1.0 - diffuse_fraction) * g,
        q_diffuse=diffuse_fraction * g,
        indoor=indoor or IndoorConditions(), albedo=albedo, v_min_clamp=v_min_clamp,
    )


def build_spinup_series(records, t0: datetime, spinup_hours: float = 72.0, **kwargs) -> EnvSeries:
    """Forcing for the ``spinup_hours`` preceding ``t0`` (ends exactly at ``t0``)."""
    start = t0 - timedelta(hours=spinup_hours)
    return build_env_series(records, start, spinup_hours * 3600.0, **kwargs)


def sample_env(env: EnvSeries, t):
    return env.sample(t)


def export_env_csv(env: EnvSeries, path) -> None:
    """Write the resolved series, including sol-air and h_out, with a metadata preamble."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    solair, h, _ = env.sample(env.times)
    meta = {
        "t0": env.t0.isoformat(), "duration": repr(env.duration), "albedo": repr(env.albedo),
        "v_min_clamp": repr(env.v_min_clamp), "temp_in": repr(env.indoor.temp_in),
        "h_in": repr(env.indoor.h_in),
    }
    with path.open("w", newline="", encoding="utf-8") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ENV_COLUMNS)
        for row in zip(env.times, env.temp_out, env.wind_speed, env.q_direct,
                       env.q_diffuse, np.atleast_1d(solair), np.atleast_1d(h)):
            writer.writerow([repr(float(v)) for v in row])


def read_env_csv(path) -> EnvSeries:
    path = Path(path)
    meta, rows = {}, []
    with path.open(newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        elif line:
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    if tuple(header) != ENV_COLUMNS:
        raise WeatherDataError(f"{path}: unexpected header {header}")
    for row in reader:
        rows.append([float(v) for v in row])
    data = np.array(rows)
    return EnvSeries(
        t0=datetime.fromisoformat(meta["t0"]), duration=float(meta["duration"]),
        times=data[:, 0], temp_out=data[:, 1], wind_speed=data[:, 2],
        q_direct=data[:, 3], q_diffuse=data[:, 4],
        indoor=IndoorConditions(float(meta["temp_in"]), float(meta["h_in"])),
        albedo=float(meta["albedo"]), v_min_clamp=float(meta["v_min_clamp"]),
    )


# Monthly climatology for synthetic station data, loosely shaped on a
# mid-latitude lakeside site: (mean air temp C, diurnal amplitude K,
# clear-sky noon irradiance W/m2, sunrise hour, day length h, mean wind m/s).
_CLIMATE = {
    1: (1.0, 3.0, 300.0, 8.1, 8.8, 2.4),
    2: (2.5, 4.0, 420.0, 7.5, 10.2, 2.4),
    3: (6.5, 5.0, 560.0, 6.6, 11.8, 2.6),
    4: (10.5, 5.5, 680.0, 6.6, 13.4, 2.6),
    5: (14.5, 6.0, 760.0, 5.9, 14.8, 2.3),
    6: (18.5, 6.0, 800.0, 5.6, 15.6, 2.1),
    7: (20.5, 6.5, 790.0, 5.8, 15.3, 2.0),
    8: (20.0, 6.0, 720.0, 6.4, 14.1, 2.0),
    9: (16.0, 5.0, 600.0, 7.2, 12.5, 2.1),
    10: (11.5, 4.0, 450.0, 7.9, 10.9, 2.3),
    11: (5.5, 3.0, 330.0, 7.6, 9.4, 2.5),
    12: (2.0, 2.5, 270.0, 8.1, 8.6, 2.6),
}


def synthetic_records(start_day: date, n_days: int = 1, seed: int = 0,
                      tz: timezone = timezone(timedelta(hours=1)),
                      cadence_min: int = 10) -> list[RawWeatherRecord]:
    """Plausible station records for ``n_days`` consecutive days starting at midnight.

    Air temperature follows a piecewise cosine with its minimum at sunrise;
    irradiance is a clear-sky arch damped by smoothed random cloudiness; wind
    is a smoothed positive random walk around the monthly mean.
    """
    rng = np.random.default_rng(seed)
    n = n_days * 24 * 60 // cadence_min
    stamps = [datetime(start_day.year, start_day.month, start_day.day, tzinfo=tz)
              + timedelta(minutes=cadence_min * i) for i in range(n)]
    hours = np.array([(s - stamps[0]).total_seconds() / 3600.0 for s in stamps])

    def smooth_noise(scale, width):
        raw = rng.normal(0.0, 1.0, hours.size + 4 * width)
        kernel = np.exp(-0.5 * (np.arange(-2 * width, 2 * width + 1) / width) ** 2)
        sm = np.convolve(raw, kernel / np.sqrt((kernel**2).sum()), mode="same")
        return scale * sm[2 * width:2 * width + hours.size]

    temps, winds, irrs = [], [], []
    for i, s in enumerate(stamps):
        mean_t, amp, g_peak, sunrise, day_len, wind_mean = _CLIMATE[s.month]
        hod = hours[i] % 24.0
        rise = 0.65 * day_len
        since = (hod - sunrise) % 24.0
        if since <= rise:
            temps.append(mean_t - amp * math.cos(math.pi * since / rise))
        else:
            temps.append(mean_t + amp * math.cos(math.pi * (since - rise) / (24.0 - rise)))
        frac = (hod - sunrise) / day_len
        irrs.append(g_peak * math.sin(math.pi * frac) ** 1.3 if 0.0 < frac < 1.0 else 0.0)
        winds.append(wind_mean)
    temps = np.array(temps) + smooth_noise(0.6, 12)
    cloud = np.clip(1.0 - np.abs(smooth_noise(0.25, 9)), 0.35, 1.0)
    irrs = np.array(irrs) * cloud
    winds = np.clip(np.array(winds) * np.exp(smooth_noise(0.25, 6)), 0.2, None)
    dirs = (200.0 + smooth_noise(40.0, 12)) % 360.0
    return [RawWeatherRecord(s, round(float(t), 3), round(float(w), 3), round(float(d), 1),
                             round(float(g), 2))
            for s, t, w, d, g in zip(stamps, temps, winds, dirs, irrs)]
