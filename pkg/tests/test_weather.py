import logging
from datetime import date, datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wallk.physics import IndoorConditions, h_out, sol_air
from wallk.weather import (
    WEATHER_COLUMNS, EnvSeries, RawWeatherRecord, WeatherDataError, build_env_series,
    build_spinup_series, detect_sunrise, export_env_csv, parse_weather_csv, read_env_csv,
    sample_env, synthetic_records, write_weather_csv,
)

TZ = timezone(timedelta(hours=1))


def day_records(day=date(2023, 5, 1), irr=None, temp=10.0, wind=2.0, step_min=10):
    start = datetime(day.year, day.month, day.day, tzinfo=TZ)
    n = 24 * 60 // step_min
    out = []
    for i in range(n):
        g = irr(i) if irr else 0.0
        out.append(RawWeatherRecord(start + timedelta(minutes=step_min * i), temp, wind, 180.0, g))
    return out


def test_synthetic_day_has_144_records_and_roundtrips(tmp_path):
    recs = synthetic_records(date(2023, 3, 1), 1, seed=1)
    assert len(recs) == 144
    p = tmp_path / "w.csv"
    write_weather_csv(recs, p)
    back = parse_weather_csv(p)
    assert back == recs
    assert p.read_text().splitlines()[0] == ",".join(WEATHER_COLUMNS)


def test_missing_column_is_named(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("timestamp_iso8601,temp_out_c,wind_speed_ms,wind_dir_deg\n")
    with pytest.raises(WeatherDataError, match="global_irradiance_wm2"):
        parse_weather_csv(p)


def test_malformed_row_reports_line(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text(",".join(WEATHER_COLUMNS) + "\n"
                 "2023-01-01T00:00:00+01:00,1,2,3,0\n"
                 "2023-01-01T00:10:00+01:00,abc,2,3,0\n")
    with pytest.raises(WeatherDataError, match=":3:"):
        parse_weather_csv(p)


def test_duplicate_timestamp_rejected(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text(",".join(WEATHER_COLUMNS) + "\n"
                 "2023-01-01T00:00:00+01:00,1,2,3,0\n"
                 "2023-01-01T00:00:00+01:00,1,2,3,0\n")
    with pytest.raises(WeatherDataError, match="duplicate"):
        parse_weather_csv(p)


def test_naive_timestamp_rejected(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text(",".join(WEATHER_COLUMNS) + "\n2023-01-01T00:00:00,1,2,3,0\n")
    with pytest.raises(WeatherDataError, match="offset"):
        parse_weather_csv(p)


def test_missing_file_names_path(tmp_path):
    with pytest.raises(WeatherDataError, match="nope.csv"):
        parse_weather_csv(tmp_path / "nope.csv")


def test_sunrise_is_first_sample_over_threshold():
    recs = day_records(irr=lambda i: 15.0 if i >= 38 else 0.0)  # 38 * 10 min = 06:20
    sr = detect_sunrise(recs, date(2023, 5, 1))
    assert (sr.hour, sr.minute) == (6, 20)


def test_sunrise_threshold_above_max_errors():
    recs = day_records(irr=lambda i: 15.0 if 38 <= i < 100 else 0.0)
    with pytest.raises(WeatherDataError):
        detect_sunrise(recs, date(2023, 5, 1), irradiance_threshold=100.0)


def test_sunrise_all_day_positive_warns(caplog):
    recs = day_records(irr=lambda i: 5.0)
    with caplog.at_level(logging.WARNING):
        sr = detect_sunrise(recs, date(2023, 5, 1))
    assert sr == recs[0].timestamp
    assert "first sample" in caplog.text


def test_sunrise_missing_day_errors():
    with pytest.raises(WeatherDataError):
        detect_sunrise(day_records(), date(2023, 6, 1))


def test_build_env_defaults_all_diffuse():
    recs = synthetic_records(date(2023, 6, 1), 1, seed=2)
    t0 = detect_sunrise(recs, date(2023, 6, 1))
    env = build_env_series(recs, t0)
    assert np.all(env.q_direct == 0.0)
    assert env.times[-1] >= 16200
    assert env.indoor == IndoorConditions(298.15, 2.0)
    assert np.max(env.q_diffuse) > 0


def test_diffuse_split():
    recs = day_records(irr=lambda i: 100.0)
    env = build_env_series(recs, recs[30].timestamp, diffuse_fraction=0.25)
    assert np.allclose(env.q_direct, 75.0) and np.allclose(env.q_diffuse, 25.0)


def test_gap_of_20_min_is_filled():
    recs = day_records(irr=lambda i: float(i))
    del recs[40]
    env = build_env_series(recs, recs[30].timestamp)
    # linear field, so the filled value is exact
    i = int(np.searchsorted(env.times, 10 * 600.0))
    assert env.q_diffuse[i] == pytest.approx(40.0)


def test_gap_over_30_min_rejected():
    recs = day_records()
    del recs[40:44]
    with pytest.raises(WeatherDataError, match="gap"):
        build_env_series(recs, recs[30].timestamp)


def test_insufficient_coverage():
    recs = day_records()
    with pytest.raises(WeatherDataError, match="cover"):
        build_env_series(recs, recs[-5].timestamp)


def test_spinup_window_ends_at_t0():
    recs = synthetic_records(date(2023, 4, 1), 4, seed=3)
    t0 = detect_sunrise(recs, date(2023, 4, 4))
    spin = build_spinup_series(recs, t0)
    assert spin.duration == 72 * 3600
    assert spin.t0 + timedelta(seconds=spin.duration) == t0
    assert spin.times[-1] == spin.duration


def test_sample_on_grid_matches_direct_computation(summer_env):
    env = summer_env
    i = 7
    sa, h, temp = sample_env(env, env.times[i])
    ho = h_out(env.wind_speed[i])
    assert h == pytest.approx(ho)
    assert temp == pytest.approx(env.temp_out[i])
    assert sa == pytest.approx(sol_air(env.temp_out[i], env.q_direct[i], env.q_diffuse[i], 1.0, ho))


def test_midpoint_blends_raw_fields_then_transforms(summer_env):
    env = summer_env
    tm = 0.5 * (env.times[3] + env.times[4])
    temp, wind, qdir, qdiff = env.raw(tm)
    assert wind == pytest.approx(0.5 * (env.wind_speed[3] + env.wind_speed[4]))
    sa, h, _ = env.sample(tm)
    assert h == pytest.approx(h_out(wind))
    assert sa == pytest.approx(sol_air(temp, qdir, qdiff, env.albedo, h_out(wind)))


def test_flat_series_is_constant():
    env = EnvSeries.constant(283.15, 3.0, 50.0)
    sa, h, temp = env.sample(np.linspace(0, env.duration, 17))
    assert np.ptp(sa) == 0 and np.ptp(h) == 0 and np.ptp(temp) == 0


def test_sample_out_of_range(summer_env):
    with pytest.raises(ValueError):
        summer_env.sample(-1.0)
    with pytest.raises(ValueError):
        summer_env.sample(summer_env.duration + 1.0)


@settings(max_examples=50, deadline=None)
@given(t=st.floats(0.0, 16199.0))
def test_sample_is_continuous(summer_env, t):
    a = np.array(summer_env.sample(t))
    b = np.array(summer_env.sample(t + 1e-3))
    assert np.all(np.abs(a - b) < 1e-2)


def test_build_is_deterministic():
    recs = synthetic_records(date(2023, 9, 1), 1, seed=4)
    t0 = detect_sunrise(recs, date(2023, 9, 1))
    a, b = build_env_series(recs, t0), build_env_series(recs, t0)
    for name in ("times", "temp_out", "wind_speed", "q_direct", "q_diffuse"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_env_export_roundtrip(tmp_path, summer_env):
    p = tmp_path / "env.csv"
    export_env_csv(summer_env, p)
    back = read_env_csv(p)
    assert back.t0 == summer_env.t0 and back.duration == summer_env.duration
    for name in ("times", "temp_out", "wind_speed", "q_direct", "q_diffuse"):
        assert np.array_equal(getattr(back, name), getattr(summer_env, name))
    ts = np.linspace(0, summer_env.duration, 33)
    assert np.array_equal(np.array(back.sample(ts)), np.array(summer_env.sample(ts)))


def test_synthetic_weather_plausible():
    for month in (1, 7):
        recs = synthetic_records(date(2023, month, 1), 1, seed=month)
        temps = np.array([r.temp_out_c for r in recs])
        irr = np.array([r.global_irradiance for r in recs])
        assert -15 < temps.min() < temps.max() < 40
        assert irr.min() == 0.0 and 50 < irr.max() < 1100
        assert all(r.wind_speed >= 0 for r in recs)
