import json
from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wallk import harness
from wallk.fvm import solve_transient
from wallk.harness import (
    CampaignConfig, ResultRow, Scenario, SyntheticWeather, TruthConfig, aggregate, bootstrap_ci,
    box_stats, build_truth, comparison_grid, emit_report, forward_accuracy, load_rows,
    report_run, run_campaign, scenario_seed, season_of,
)
from wallk.physics import WallSpec

# a configuration small enough to run a whole campaign in seconds
TINY = {
    "width": 4, "hidden_layers": 1, "warmup_steps": 5, "max_outer_steps": 3,
    "train": {"n_pde": 16, "n_bc": 4, "n_ic": 3, "max_inner_steps": 5, "check_every": 5},
}
TINY_TRUTH = {"dt": 600.0, "n_cells": 20}


def row(k_hat, true_k=2.0, converged=True, day=date(2023, 7, 1), protocol="T4_18",
        ic="steady", ipm=None):
    sc = Scenario(ic, protocol, true_k, day)
    return ResultRow(sc, k_hat, abs(k_hat - true_k), converged, ipm)


def test_seasons():
    assert [season_of(date(2023, m, 1)) for m in (1, 3, 6, 9, 12)] == \
        ["Winter", "Spring", "Summer", "Fall", "Winter"]


def test_scenario_normalises_names():
    s = Scenario("spinup", "t15", 2.0, date(2023, 1, 1))
    assert (s.ic_mode, s.protocol) == ("spin_up_3day", "T1_5")
    with pytest.raises(ValueError):
        Scenario("steady", "T2_9", 2.0, date(2023, 1, 1))
    with pytest.raises(ValueError):
        Scenario("steady", "T4_18", -1.0, date(2023, 1, 1))


def test_bootstrap_constant_and_deterministic():
    assert bootstrap_ci([0.3] * 10) == pytest.approx((0.3, 0.3), abs=1e-15)
    vals = np.random.default_rng(1).normal(size=30)
    assert bootstrap_ci(vals, seed=4) == bootstrap_ci(vals, seed=4)
    lo, hi = bootstrap_ci(vals, seed=4)
    assert lo < np.mean(np.abs(vals)) < hi


def test_bootstrap_resample_size_narrows_interval():
    vals = np.random.default_rng(2).exponential(size=24)
    lo1, hi1 = bootstrap_ci(vals, n_resamples=2000, seed=0)
    lo2, hi2 = bootstrap_ci(vals, n_resamples=2000, resample_size=1000, seed=0)
    assert hi2 - lo2 < hi1 - lo1


def test_bootstrap_empty_rejected():
    with pytest.raises(ValueError):
        bootstrap_ci([])


def test_bootstrap_coverage_small():
    rng = np.random.default_rng(123)
    hits = 0
    for rep in range(60):
        data = rng.binomial(1, 0.3, size=200).astype(float)
        lo, hi = bootstrap_ci(data, n_resamples=2000, seed=rep)
        hits += lo <= 0.3 <= hi
    assert hits >= 52  # about 95 % nominal; loose bound for 60 repetitions


def test_aggregate_identical_values():
    rows = [row(2.1, day=date(2023, 7, d)) for d in (1, 2, 3)]
    agg = aggregate(rows, n_resamples=500)
    year = agg.groups[0]
    assert year.season == "Year" and year.mae == pytest.approx(0.1)
    assert year.ci_low == pytest.approx(0.1) and year.ci_high == pytest.approx(0.1)
    assert year.mean == pytest.approx(2.1) and year.median == pytest.approx(2.1)


def test_aggregate_excludes_and_counts_failures():
    rows = [row(2.1), row(1.9, day=date(2023, 7, 2)), row(5.9, converged=False, day=date(2023, 7, 3))]
    g = aggregate(rows, n_resamples=200).groups[0]
    assert g.n_failed == 1 and g.n_total == 3 and g.n_converged == 2
    assert g.mean == pytest.approx(2.0) and g.mae == pytest.approx(0.1)


def test_aggregate_single_row_ci_unavailable():
    agg = aggregate([row(2.2)], n_resamples=200)
    assert agg.groups[0].ci_low is None
    assert any("CI unavailable" in n for n in agg.notes)


def test_aggregate_all_failed_group_omitted():
    agg = aggregate([row(2.2, converged=False)], n_resamples=200)
    assert agg.groups == [] and "omitted" in agg.notes[0]


@settings(max_examples=15, deadline=None)
@given(st.permutations(list(range(6))))
def test_aggregate_permutation_invariant(order):
    base = [row(2 + 0.05 * i, day=date(2023, 1 + 2 * i, 1)) for i in range(6)]
    a = aggregate(base, n_resamples=300)
    b = aggregate([base[i] for i in order], n_resamples=300)
    assert a == b


def test_box_stats_hand_computed():
    b = box_stats([1.0, 2.0, 3.0, 4.0, 100.0])
    assert (b["min"], b["q1"], b["median"], b["q3"], b["max"]) == (1.0, 2.0, 3.0, 4.0, 100.0)
    assert b["outliers"] == [100.0] and b["whisker_high"] == 4.0 and b["whisker_low"] == 1.0


def test_emit_report_empty(tmp_path):
    paths = emit_report([], tmp_path)
    assert paths["results.md"].read_text().startswith("| k | Season | mean | median | MAE [W/mK] | 95% CI | failed |")
    assert paths["results.csv"].read_text().strip() == ",".join(harness.RESULT_COLUMNS)


def test_emit_report_one_group(tmp_path):
    rows = [row(v, day=date(2023, 7, i + 1)) for i, v in enumerate([1.0, 2.0, 3.0, 4.0, 100.0])]
    paths = emit_report(rows, tmp_path, n_resamples=200)
    md = paths["results.md"].read_text()
    body = [l for l in md.splitlines() if l.startswith("| 2 ")]
    assert len(body) == 2  # Year and Summer
    assert body[0].startswith("| 2 | Year |") and body[0].endswith("| 0 |")
    box = paths["boxstats.csv"].read_text().splitlines()
    assert len(box) == 2 and box[1].endswith(",100.0")
    back = harness.read_rows_csv(paths["results.csv"])
    assert [r.to_dict() for r in back] == [r.to_dict() for r in rows]


def test_kerror_file_only_spinup(tmp_path):
    rows = [row(2.1), row(2.5, ic="spin_up_3day", ipm=0.7)]
    lines = emit_report(rows, tmp_path, n_resamples=100)["kerror_vs_icmae.csv"].read_text().splitlines()
    assert len(lines) == 2 and "0.7" in lines[1]


def test_comparison_grid():
    t, x = comparison_grid(16200.0, 0.3)
    assert len(t) == 55 and t[0] == 0 and t[-1] == 16200
    assert len(x) == 601 and x[-1] == pytest.approx(0.3)


def test_forward_accuracy_on_fvm_interpolant(summer_env):
    hist = solve_transient(WallSpec(), summer_env, dt=120.0, n_cells=30)
    assert forward_accuracy(hist.evaluate, hist) == 0.0
    shifted = lambda t, x: hist.evaluate(t, x) + 0.25
    assert forward_accuracy(shifted, hist) == pytest.approx(0.25)


def test_forward_accuracy_needs_scaler_for_params(summer_env):
    from wallk import net
    hist = solve_transient(WallSpec(), summer_env, dt=600.0, n_cells=10)
    with pytest.raises(ValueError):
        forward_accuracy(net.init([3, 4, 1]), hist)


def test_build_truth_spinup_records_profile_mae():
    day = date(2023, 4, 1)
    recs = SyntheticWeather(0).records(day)
    sc = Scenario("spin_up_3day", "T1_5", 2.0, day)
    data = build_truth(sc, recs, TruthConfig(dt=300.0, n_cells=30))
    assert data.initial_profile_mae is not None and data.initial_profile_mae > 0
    assert len(data.thermographs) == 5
    steady = build_truth(Scenario("steady", "T4_18", 2.0, day), recs, TruthConfig(dt=300.0, n_cells=30))
    assert steady.initial_profile_mae is None and len(steady.thermographs) == 18


def test_synthetic_weather_independent_of_campaign():
    a = SyntheticWeather(3).records(date(2023, 5, 1))
    b = SyntheticWeather(3).records(date(2023, 5, 1))
    assert a == b and len(a) == 4 * 144


def test_scenario_seed_stable_and_distinct():
    s1 = Scenario("steady", "T4_18", 2.0, date(2023, 1, 1))
    s2 = Scenario("steady", "T1_5", 2.0, date(2023, 1, 1))
    assert scenario_seed(0, s1) == scenario_seed(0, s1)
    assert len({scenario_seed(0, s1), scenario_seed(0, s2), scenario_seed(1, s1)}) == 3


def campaign_doc(**kw):
    doc = {"days": ["2023-07-01", "2023-10-01"], "k_values": [2.0], "protocols": ["T4_18", "T1_5"],
           "overrides": TINY, "truth": TINY_TRUTH, "bootstrap": {"n_resamples": 200}}
    doc.update(kw)
    return doc


def test_campaign_config_validation_names_fields():
    with pytest.raises(ValueError, match="k_values"):
        CampaignConfig.from_dict({"days": ["2023-01-01"]})
    with pytest.raises(ValueError, match="days"):
        CampaignConfig.from_dict({"days": ["2023-13-01"], "k_values": [2]})
    with pytest.raises(ValueError, match="frobnicate"):
        CampaignConfig.from_dict({"days": ["2023-01-01"], "k_values": [2], "frobnicate": 1})
    with pytest.raises(ValueError, match="protocols"):
        CampaignConfig.from_dict({"days": ["2023-01-01"], "k_values": [2], "protocols": ["X"]})
    with pytest.raises(ValueError, match="k_bounds"):
        CampaignConfig.from_dict({"days": ["2023-01-01"], "k_values": [2], "k_bounds": [6, 1]})


def test_campaign_cardinality_and_roundtrip():
    cfg = CampaignConfig.from_dict(campaign_doc())
    assert len(cfg.scenarios()) == 4
    assert CampaignConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.hash == CampaignConfig.from_dict(cfg.to_dict()).hash
    assert cfg.estimate_config().width == 4


def test_campaign_run_resume_and_report(tmp_path):
    cfg = CampaignConfig.from_dict(campaign_doc())
    seen = []
    run_dir, rows = run_campaign(cfg, tmp_path, workers=1, progress=seen.append)
    assert len(rows) == 4 and len(seen) == 4
    assert sum(r.converged for r in rows) + sum(not r.converged for r in rows) == 4
    assert run_dir.name.endswith(cfg.hash)
    md = (run_dir / "results.md").read_bytes()
    assert cfg.hash in md.decode()
    again = []
    run_dir2, rows2 = run_campaign(cfg, tmp_path, workers=1, progress=again.append)
    assert run_dir2 == run_dir and again == [] and len(load_rows(run_dir)) == 4
    (run_dir / "results.md").unlink()
    report_run(run_dir)
    assert (run_dir / "results.md").read_bytes() == md


def test_worker_env(monkeypatch):
    monkeypatch.setenv(harness.WORKERS_ENV, "3")
    assert harness.worker_count() == 3
    monkeypatch.setenv(harness.WORKERS_ENV, "many")
    with pytest.raises(ValueError):
        harness.worker_count()
