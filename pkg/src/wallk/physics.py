"""Closed-form wall physics: convection coefficients, sol-air temperature,
steady-state profile and the dimensionless scaling used by the network."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

V_MIN_CLAMP = 0.1
"""Default wind-speed floor [m/s]; keeps the outdoor coefficient strictly positive."""


@dataclass(frozen=True)
class WallSpec:
    """Homogeneous single-leaf wall."""

    thickness_b: float = 0.3
    conductivity_k: float = 2.0
    heat_capacity_cp: float = 750.0
    density_rho: float = 2300.0
    albedo: float = 1.0

    def __post_init__(self):
        for name in ("thickness_b", "conductivity_k", "heat_capacity_cp", "density_rho"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.albedo <= 1.0:
            raise ValueError(f"albedo must lie in [0, 1], got {self.albedo}")

    @property
    def volumetric_heat_capacity(self) -> float:
        return self.heat_capacity_cp * self.density_rho

    def with_k(self, k: float) -> "WallSpec":
        return WallSpec(self.thickness_b, k, self.heat_capacity_cp, self.density_rho, self.albedo)


@dataclass(frozen=True)
class IndoorConditions:
    temp_in: float = 298.15
    h_in: float = 2.0

    def __post_init__(self):
        if not self.temp_in > 0:
            raise ValueError(f"temp_in must be positive kelvin, got {self.temp_in}")
        if not self.h_in > 0:
            raise ValueError(f"h_in must be positive, got {self.h_in}")


def h_out(wind_speed, v_min_clamp: float = V_MIN_CLAMP):
    """Outdoor forced-convection coefficient [W/(m^2 K)] from wind speed [m/s].

    ``h = 18.6 * v**0.605`` with ``v`` floored at ``v_min_clamp``. Accepts
    scalars or arrays.
    """
    if v_min_clamp <= 0:
        raise ValueError("v_min_clamp must be positive")
    v = np.maximum(np.asarray(wind_speed, dtype=float), v_min_clamp)
    out = 18.6 * v**0.605
    return float(out) if out.ndim == 0 else out


def sol_air(temp_out, q_direct, q_diffuse, albedo, h_out_value):
    """Sol-air temperature [K]: air temperature plus absorbed irradiance over h_out."""
    h = np.asarray(h_out_value, dtype=float)
    if np.any(h <= 0):
        raise ValueError("h_out must be strictly positive")
    absorbed = (1.0 - albedo) * np.asarray(q_direct, dtype=float) + np.asarray(q_diffuse, dtype=float)
    out = np.asarray(temp_out, dtype=float) + absorbed / h
    return float(out) if out.ndim == 0 else out


def h_in_constant(temp_in: float, surface_temp: float, value: float = 2.0) -> float:
    """Indoor natural-convection coefficient. Constant; signature leaves room for a correlation."""
    return value


@dataclass(frozen=True)
class SteadyProfile:
    """Linear steady-state temperature profile across the wall."""

    surface_out: float
    surface_in: float
    thickness_b: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self.surface_out + (self.surface_in - self.surface_out) * x / self.thickness_b
        return float(out) if out.ndim == 0 else out


def steady_surfaces(b, k, temp_out_inf, temp_in_inf, h_out_value, h_in_value):
    """Outer and inner surface temperatures of the steady linear profile (vectorised)."""
    ho, hi = h_out_value, h_in_value
    denom = b * ho * hi + k * (ho + hi)
    surface_in = (b * ho * hi * temp_in_inf + ho * k * temp_out_inf + hi * k * temp_in_inf) / denom
    surface_out = (b * ho * hi * temp_out_inf + ho * k * temp_out_inf + hi * k * temp_in_inf) / denom
    return surface_out, surface_in


def steady_profile(wall: WallSpec, temp_out_inf: float, temp_in_inf: float,
                   h_out_value: float, h_in_value: float) -> SteadyProfile:
    """Steady conduction through the wall between two convective ambients."""
    if h_out_value <= 0 or h_in_value <= 0:
        raise ValueError("heat-transfer coefficients must be positive")
    s_out, s_in = steady_surfaces(wall.thickness_b, wall.conductivity_k, temp_out_inf,
                                  temp_in_inf, h_out_value, h_in_value)
    return SteadyProfile(float(s_out), float(s_in), wall.thickness_b)


@dataclass(frozen=True)
class Scaler:
    """Affine maps between physical and dimensionless variables."""

    t_total: float
    b: float
    t_min_temp: float
    t_max_temp: float
    k_min: float = 0.5
    k_max: float = 6.0

    def __post_init__(self):
        if not self.t_total > 0:
            raise ValueError("t_total must be positive")
        if not self.b > 0:
            raise ValueError("b must be positive")
        if not self.t_max_temp > self.t_min_temp:
            raise ValueError("t_max_temp must exceed t_min_temp")
        if not self.k_max > self.k_min:
            raise ValueError("k_max must exceed k_min")

    @property
    def temp_span(self) -> float:
        return self.t_max_temp - self.t_min_temp

    @property
    def k_span(self) -> float:
        return self.k_max - self.k_min

    def tau(self, t):
        return np.asarray(t, dtype=float) / self.t_total

    def xi(self, x):
        return np.asarray(x, dtype=float) / self.b

    def theta(self, temp):
        return (np.asarray(temp, dtype=float) - self.t_min_temp) / self.temp_span

    def kappa(self, k):
        return (np.asarray(k, dtype=float) - self.k_min) / self.k_span

    def time(self, tau):
        return np.asarray(tau, dtype=float) * self.t_total

    def position(self, xi):
        return np.asarray(xi, dtype=float) * self.b

    def temperature(self, theta):
        return np.asarray(theta, dtype=float) * self.temp_span + self.t_min_temp

    def conductivity(self, kappa):
        return np.asarray(kappa, dtype=float) * self.k_span + self.k_min

    def to_dict(self) -> dict:
        return {
            "t_total": self.t_total, "b": self.b,
            "t_min_temp": self.t_min_temp, "t_max_temp": self.t_max_temp,
            "k_min": self.k_min, "k_max": self.k_max,
        }


def temperature_bounds(temps, margin: float = 5.0) -> tuple[float, float]:
    """Min/max over all supplied temperatures, widened by ``margin`` kelvin."""
    flat = np.concatenate([np.ravel(np.asarray(t, dtype=float)) for t in temps])
    return float(flat.min() - margin), float(flat.max() + margin)
