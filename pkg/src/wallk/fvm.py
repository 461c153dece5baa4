"""Implicit 1D finite-volume solver for transient wall conduction.

Cell-centred grid, backward-Euler in time, convective (Robin) exchange at both
faces through a half-cell conduction resistance. Used as the ground-truth
oracle and as the source of synthetic thermographs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded

from .physics import IndoorConditions, SteadyProfile, WallSpec, steady_profile
from .weather import EnvSeries

T4_18 = tuple(900.0 * i for i in range(1, 19))
T1_5 = tuple(12600.0 + 900.0 * i for i in range(5))


class SolverError(ValueError):
    pass


@dataclass(frozen=True)
class Grid1D:
    n_cells: int
    b: float

    def __post_init__(self):
        if self.n_cells < 3:
            raise ValueError("n_cells must be at least 3")

    @property
    def cell_width(self) -> float:
        return self.b / self.n_cells

    @property
    def cell_centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.cell_width

    @property
    def nodes(self) -> np.ndarray:
        """Interpolation nodes: outer face, cell centres, inner face."""
        return np.concatenate([[0.0], self.cell_centers, [self.b]])


@dataclass(frozen=True)
class CellProfile:
    """Temperature state of the wall at one instant, callable as T(x)."""

    grid: Grid1D
    cells: np.ndarray
    surface_out: float
    surface_in: float

    def __call__(self, x):
        vals = np.concatenate([[self.surface_out], self.cells, [self.surface_in]])
        out = np.interp(np.asarray(x, dtype=float), self.grid.nodes, vals)
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class FieldHistory:
    """Cell temperatures (one row per recorded time) plus both face temperatures."""

    grid: Grid1D
    times: np.ndarray
    profiles: np.ndarray
    surface_out: np.ndarray
    surface_in: np.ndarray

    def node_values(self) -> np.ndarray:
        return np.column_stack([self.surface_out, self.profiles, self.surface_in])

    def at_time(self, t: float) -> CellProfile:
        i = int(np.searchsorted(self.times, t))
        if i < len(self.times) and math.isclose(self.times[i], t, abs_tol=1e-9):
            return CellProfile(self.grid, self.profiles[i].copy(),
                               float(self.surface_out[i]), float(self.surface_in[i]))
        vals = self._interp_time(np.array([t]))[0]
        return CellProfile(self.grid, vals[1:-1], float(vals[0]), float(vals[-1]))

    def _interp_time(self, t: np.ndarray) -> np.ndarray:
        lo, hi = self.times[0], self.times[-1]
        bad = (t < lo - 1e-9) | (t > hi + 1e-9)
        if np.any(bad):
            raise SolverError(f"t={float(t[bad][0])} s outside history [{lo}, {hi}] s")
        nodes = self.node_values()
        j = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        w = ((t - self.times[j]) / (self.times[j + 1] - self.times[j]))[:, None]
        return (1.0 - w) * nodes[j] + w * nodes[j + 1]

    def evaluate(self, t, x) -> np.ndarray:
        """Temperatures on the outer product grid ``t`` x ``x`` (piecewise linear in both)."""
        rows = self._interp_time(np.atleast_1d(np.asarray(t, dtype=float)))
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        return np.stack([np.interp(xs, self.grid.nodes, r) for r in rows])

    def to_csv(self, path) -> None:
        """Long format dump: ``time_s,x_m,temp_K`` over faces and cell centres."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        nodes = self.grid.nodes
        vals = self.node_values()
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_s", "x_m", "temp_K"])
            for t, row in zip(self.times, vals):
                for x, v in zip(nodes, row):
                    w.writerow([repr(float(t)), repr(float(x)), repr(float(v))])


def _boundary_conductance(h: float, k: float, dx: float) -> float:
    return 1.0 / (1.0 / h + 0.5 * dx / k)


def _face_temperature(cell: float, ambient: float, h: float, k: float, dx: float) -> float:
    g = 2.0 * k / dx
    return (h * ambient + g * cell) / (h + g)


def dawn_steady_profile(wall: WallSpec, env: EnvSeries) -> SteadyProfile:
    """Steady profile under the first forcing sample (air temperature and wind at t=0)."""
    _, h0, temp0 = env.sample(0.0)
    return steady_profile(wall, float(temp0), env.indoor.temp_in, float(h0), env.indoor.h_in)


def solve_transient(wall: WallSpec, env: EnvSeries, indoor: IndoorConditions | None = None,
                    initial_profile=None, dt: float = 60.0, t_end: float | None = None,
                    n_cells: int = 60, check_energy: bool = False) -> FieldHistory:
    """Integrate the wall from ``initial_profile`` to ``t_end``.

    Forcing is evaluated at each step midpoint. ``indoor`` defaults to the
    conditions attached to ``env``; ``initial_profile`` to the dawn steady
    state. With ``check_energy`` every step asserts that the change in stored
    heat equals the net boundary inflow.
    """
    indoor = indoor or env.indoor
    t_end = env.duration if t_end is None else float(t_end)
    if dt <= 0:
        raise SolverError("dt must be positive")
    if t_end < dt:
        raise SolverError("t_end must be at least one time step")
    if not env.covers(t_end):
        raise SolverError(f"forcing series covers [{env.times[0]}, {env.times[-1]}] s, "
                          f"not [0, {t_end}] s")
    if initial_profile is None:
        initial_profile = dawn_steady_profile(wall, env)
    grid = Grid1D(n_cells, wall.thickness_b)
    dx, k = grid.cell_width, wall.conductivity_k
    cap = wall.volumetric_heat_capacity * dx
    temp = np.asarray(initial_profile(grid.cell_centers), dtype=float).copy()
    if temp.shape != (n_cells,) or not np.all(np.isfinite(temp)):
        raise SolverError("initial profile must be finite at every cell centre")

    n_full = int(math.floor(t_end / dt + 1e-9))
    steps = [dt] * n_full
    if t_end - n_full * dt > 1e-9:
        steps.append(t_end - n_full * dt)
    n_rec = len(steps) + 1
    times = np.empty(n_rec)
    profiles = np.empty((n_rec, n_cells))
    s_out = np.empty(n_rec)
    s_in = np.empty(n_rec)

    g_in = _boundary_conductance(indoor.h_in, k, dx)
    cond = k / dx

    def faces(t, cells):
        solair, h, _ = env.sample(t)
        return (_face_temperature(cells[0], float(solair), float(h), k, dx),
                _face_temperature(cells[-1], indoor.temp_in, indoor.h_in, k, dx))

    times[0] = 0.0
    profiles[0] = temp
    s_out[0], s_in[0] = faces(0.0, temp)

    ab = np.zeros((3, n_cells))
    t = 0.0
    for n, step in enumerate(steps, start=1):
        solair, h, _ = env.sample(t + 0.5 * step)
        g_out = _boundary_conductance(float(h), k, dx)
        r = cap / step
        diag = np.full(n_cells, r + 2.0 * cond)
        diag[0] = r + cond + g_out
        diag[-1] = r + cond + g_in
        ab[0, 1:] = -cond
        ab[1] = diag
        ab[2, :-1] = -cond
        rhs = r * temp
        rhs[0] += g_out * float(solair)
        rhs[-1] += g_in * indoor.temp_in
        new = solve_banded((1, 1), ab, rhs)
        if check_energy:
            stored = cap * float(np.sum(new - temp))
            inflow = step * (g_out * (float(solair) - new[0]) + g_in * (indoor.temp_in - new[-1]))
            scale = max(abs(stored), abs(inflow), cap * 1e-6)
            assert abs(stored - inflow) <= 1e-6 * scale, (stored, inflow)
        temp = new
        t += step
        times[n] = t
        profiles[n] = temp
        s_out[n], s_in[n] = faces(min(t, env.times[-1]), temp)
    times[-1] = t_end
    return FieldHistory(grid, times, profiles, s_out, s_in)


def spin_up(wall: WallSpec, env_spin: EnvSeries, indoor: IndoorConditions | None = None,
            dt: float = 60.0, n_cells: int = 60, min_hours: float = 72.0) -> CellProfile:
    """Integrate from the steady state of the first sample over the whole spin-up series.

    Returns the final state, used as the t=0 profile of the following day.
    """
    if env_spin.duration < min_hours * 3600.0 - 1e-6:
        raise SolverError(f"spin-up series spans {env_spin.duration / 3600:.1f} h, "
                          f"needs at least {min_hours} h")
    hist = solve_transient(wall, env_spin, indoor, None, dt, env_spin.duration, n_cells)
    return hist.at_time(hist.times[-1])


@dataclass(frozen=True)
class Thermograph:
    time_s: float
    surface_temp: float


@dataclass(frozen=True)
class ThermographSet:
    """Outer-surface temperature measurements, strictly increasing in time."""

    times: np.ndarray
    temps: np.ndarray
    source: str = "synthetic"

    def __post_init__(self):
        if len(self.times) == 0:
            raise ValueError("a thermograph set cannot be empty")
        if len(self.times) != len(self.temps):
            raise ValueError("times and temps differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("thermograph times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    @property
    def entries(self) -> list[Thermograph]:
        return [Thermograph(float(t), float(v)) for t, v in zip(self.times, self.temps)]

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_s", "surface_temp_k"])
            for t, v in zip(self.times, self.temps):
                w.writerow([repr(float(t)), repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "ThermographSet":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"thermograph file not found: {path}")
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["time_s", "surface_temp_k"]:
                raise ValueError(f"{path}: expected header time_s,surface_temp_k, got {header}")
            rows = [(float(a), float(b)) for a, b in reader if a.strip()]
        if not rows:
            raise ValueError(f"{path}: no thermographs")
        arr = np.array(rows)
        return cls(arr[:, 0], arr[:, 1], source="file")


def protocol_schedule(name: str, t_total: float = 16200.0, every: float = 900.0) -> np.ndarray:
    """Capture times for the long (``T4_18``) or final-hour (``T1_5``) protocol."""
    key = name.upper().replace("-", "_").replace("T418", "T4_18").replace("T15", "T1_5")
    n = int(math.floor(t_total / every + 1e-9))
    if key == "T4_18":
        return every * np.arange(1, n + 1)
    if key == "T1_5":
        return t_total - every * np.arange(int(round(3600.0 / every)), -1, -1)
    raise ValueError(f"unknown protocol {name!r} (expected T4_18 or T1_5)")


def extract_thermographs(history: FieldHistory, schedule) -> ThermographSet:
    schedule = np.asarray(schedule, dtype=float)
    lo, hi = history.times[0], history.times[-1]
    for t in schedule:
        if t < lo - 1e-9 or t > hi + 1e-9:
            raise SolverError(f"thermograph time {t} s outside history [{lo}, {hi}] s")
    temps = np.interp(schedule, history.times, history.surface_out)
    return ThermographSet(schedule, temps, source="synthetic")
