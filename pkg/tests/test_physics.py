import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wallk.physics import (IndoorConditions, Scaler, WallSpec, h_out, sol_air,
                           steady_profile, temperature_bounds)


@pytest.mark.parametrize("v, expected", [
    (1.0, 18.6),
    (0.0, 18.6 * 0.1**0.605),
    (2.0, 18.6 * 2**0.605),
])
def test_h_out_examples(v, expected):
    assert h_out(v, 0.1) == pytest.approx(expected, rel=1e-12)


def test_h_out_reference_magnitudes():
    assert h_out(0.0) == pytest.approx(4.6186, abs=5e-4)
    assert h_out(2.0) == pytest.approx(28.290, abs=5e-3)


def test_h_out_vectorised_and_monotone():
    v = np.linspace(0.1, 10, 50)
    h = h_out(v)
    assert np.all(np.diff(h) > 0)
    assert np.all(h > 0)


@pytest.mark.parametrize("args, expected", [
    ((280.0, 0.0, 0.0, 0.5, 20.0), 280.0),
    ((280.0, 500.0, 0.0, 1.0, 20.0), 280.0),
    ((280.0, 0.0, 100.0, 1.0, 20.0), 285.0),
])
def test_sol_air_examples(args, expected):
    assert sol_air(*args) == pytest.approx(expected)


def test_sol_air_rejects_nonpositive_h():
    with pytest.raises(ValueError):
        sol_air(280.0, 0.0, 0.0, 0.5, 0.0)


@given(q=st.floats(0, 1000), dq=st.floats(0.1, 100), alb=st.floats(0, 0.9), qdir=st.floats(1, 800))
def test_sol_air_monotone(q, dq, alb, qdir):
    assert sol_air(280, qdir, q + dq, alb, 15.0) > sol_air(280, qdir, q, alb, 15.0)
    assert sol_air(280, qdir, q, alb + 0.1, 15.0) < sol_air(280, qdir, q, alb, 15.0)


def test_steady_profile_equal_ambients_is_flat():
    prof = steady_profile(WallSpec(), 290.0, 290.0, 18.6, 2.0)
    assert prof.surface_out == pytest.approx(290.0)
    assert prof.surface_in == pytest.approx(290.0)
    assert prof(0.15) == pytest.approx(290.0)


def test_steady_profile_hand_calculation():
    # series resistances: 1/18.6 + 0.3/2 + 1/2, total flux from inside to outside
    r_total = 1 / 18.6 + 0.15 + 0.5
    q = (298.15 - 278.15) / r_total
    out_expected = 278.15 + q / 18.6
    in_expected = 298.15 - q / 2.0
    prof = steady_profile(WallSpec(0.3, 2.0), 278.15, 298.15, 18.6, 2.0)
    assert prof.surface_out == pytest.approx(out_expected, rel=1e-12)
    assert prof.surface_in == pytest.approx(in_expected, rel=1e-12)
    assert prof(0.0) == pytest.approx(prof.surface_out)
    assert prof(0.3) == pytest.approx(prof.surface_in)
    assert prof.surface_out == pytest.approx(279.677884, abs=1e-6)
    assert prof.surface_in == pytest.approx(283.940680, abs=1e-6)


def test_steady_profile_dirichlet_limit():
    prof = steady_profile(WallSpec(), 278.15, 298.15, 18.6, 1e9)
    assert abs(prof.surface_in - 298.15) < 1e-3


@settings(max_examples=200)
@given(b=st.floats(0.05, 1.0), k=st.floats(0.1, 10), ho=st.floats(1, 60), hi=st.floats(0.5, 20),
       to=st.floats(250, 320), ti=st.floats(270, 310))
def test_steady_profile_satisfies_both_boundary_balances(b, k, ho, hi, to, ti):
    p = steady_profile(WallSpec(b, k), to, ti, ho, hi)
    cond = k * (p.surface_in - p.surface_out) / b
    scale = (k / b + ho + hi) * max(to, ti)  # roundoff scale of the flux terms
    assert math.isclose(cond, ho * (p.surface_out - to), rel_tol=1e-9, abs_tol=1e-12 * scale)
    assert math.isclose(cond, hi * (ti - p.surface_in), rel_tol=1e-9, abs_tol=1e-12 * scale)


def test_wallspec_validation():
    with pytest.raises(ValueError):
        WallSpec(thickness_b=0)
    with pytest.raises(ValueError):
        WallSpec(albedo=1.5)
    with pytest.raises(ValueError):
        IndoorConditions(h_in=0)


def test_scaler_examples():
    s = Scaler(16200, 0.3, 270, 310, 0.5, 6.0)
    assert s.theta(270) == 0
    assert s.xi(0.3) == 1
    assert s.kappa(3.25) == pytest.approx(0.5)


@given(v=st.floats(-1e3, 1e3))
def test_scaler_round_trip(v):
    s = Scaler(16200, 0.3, 268.4, 311.9, 0.5, 6.0)
    for fwd, inv in ((s.tau, s.time), (s.xi, s.position), (s.theta, s.temperature),
                     (s.kappa, s.conductivity)):
        assert inv(fwd(v)) == pytest.approx(v, rel=1e-12, abs=1e-12)


def test_scaler_rejects_bad_bounds():
    with pytest.raises(ValueError):
        Scaler(16200, 0.3, 300, 290)


def test_temperature_bounds_margin():
    assert temperature_bounds([[280, 290], [300]], 5.0) == (275.0, 305.0)
