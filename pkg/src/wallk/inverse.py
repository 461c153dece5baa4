"""Alternating estimation of the wall conductivity.

The network is trained on the forward problem around the current guess,
then the guess takes one Adam step on the thermograph misfit with the
network frozen; repeat until the guess stops moving.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import net
from .fvm import ThermographSet
from .net import AdamState, NetParams
from .physics import Scaler, WallSpec
from .pinn import PinnProblem, TrainConfig, Trainer, make_scaler
from .weather import EnvSeries

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EstimateConfig:
    k_min: float = 0.5
    k_max: float = 6.0
    hidden_layers: int = 4
    width: int = 64
    dtype: str = "float64"
    seed: int = 0
    k_lr: float = 0.01
    k_decay_rate: float = 1.0
    k_decay_steps: float = 1000.0
    max_outer_steps: int = 200
    conv_tol: float = 1e-3
    conv_window: int = 10
    grad_floor: float = 1e-12
    warmup_steps: int | None = None
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not self.k_max > self.k_min > 0:
            raise ValueError("need 0 < k_min < k_max")
        if self.max_outer_steps < 1 or self.conv_window < 1:
            raise ValueError("max_outer_steps and conv_window must be positive")

    @property
    def layer_sizes(self) -> list[int]:
        return [3] + [self.width] * self.hidden_layers + [1]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "EstimateConfig":
        doc = dict(doc)
        train = TrainConfig(**doc.pop("train", {}))
        return cls(train=train, **doc)


@dataclass
class KTrace:
    iterates: list[tuple[int, float, float]] = field(default_factory=list)
    converged: bool = False
    failure_reason: str | None = None
    inner_steps: list[int] = field(default_factory=list)
    inner_unconverged: int = 0
    runtime_s: float = 0.0

    @property
    def k_hat(self) -> float:
        return self.iterates[-1][1]

    @property
    def outer_steps(self) -> int:
        return len(self.iterates) - 1

    def summary(self) -> dict:
        return {
            "k_hat_final": self.k_hat,
            "converged": self.converged,
            "outer_steps": self.outer_steps,
            "failure_reason": self.failure_reason,
            "inner_steps_total": int(sum(self.inner_steps)),
            "inner_unconverged": self.inner_unconverged,
        }

    def write(self, csv_path, json_path=None) -> None:
        csv_path = Path(csv_path)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        with csv_path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["outer_step", "k_hat", "loss_tc"])
            for step, k, loss in self.iterates:
                w.writerow([step, repr(float(k)), repr(float(loss))])
        if json_path is not None:
            Path(json_path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read_csv(cls, path) -> "KTrace":
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls([(int(r["outer_step"]), float(r["k_hat"]), float(r["loss_tc"])) for r in rows])


def _thermograph_inputs(thermographs: ThermographSet, scaler: Scaler):
    tau = scaler.tau(thermographs.times)
    if np.any(tau < -1e-12) or np.any(tau > 1 + 1e-12):
        raise ValueError("thermograph times must lie within [0, t_total]")
    return tau, scaler.theta(thermographs.temps)


def loss_tc(params: NetParams, thermographs: ThermographSet, scaler: Scaler, k_hat: float) -> float:
    """Mean squared misfit between predicted outer-surface Theta and the thermographs.

    ``k_hat`` is dimensionless.
    """
    if len(thermographs) == 0:
        raise ValueError("no thermographs")
    tau, target = _thermograph_inputs(thermographs, scaler)
    x = np.column_stack([tau, np.zeros_like(tau), np.full_like(tau, k_hat)])
    return float(np.mean((net.forward(params, x) - target) ** 2))


def loss_tc_and_grad(params, thermographs, scaler, k_hat) -> tuple[float, float]:
    tau, target = _thermograph_inputs(thermographs, scaler)
    return net.grad_input_k(params, tau, 0.0, k_hat, target)


def step_k(params: NetParams, thermographs: ThermographSet, scaler: Scaler, k_hat: float,
           k_opt: AdamState, grad_floor: float = 0.0) -> tuple[float, AdamState, float]:
    """One projected Adam step on the dimensionless conductivity.

    Returns the new guess, the optimiser state and dL/dK at the old guess.
    Gradients with magnitude at or below ``grad_floor`` count as zero, so
    rounding noise at an exact fit is not amplified by Adam's normalisation.
    """
    _, grad = loss_tc_and_grad(params, thermographs, scaler, k_hat)
    if not math.isfinite(grad):
        raise FloatingPointError(f"non-finite dL/dK at K={k_hat}")
    if abs(grad) <= grad_floor:
        grad = 0.0
    (new,), k_opt = net.adam_update([np.array([k_hat])], [np.array([grad])], k_opt)
    return float(np.clip(new[0], 0.0, 1.0)), k_opt, grad


def _converged(ks: list[float], tol: float, window: int) -> bool:
    if len(ks) < window + 1:
        return False
    recent = ks[-(window + 1):]
    return all(abs(b - a) <= tol * abs(a) for a, b in zip(recent, recent[1:]))


def estimate_k(wall: WallSpec, env: EnvSeries, thermographs: ThermographSet,
               config: EstimateConfig | None = None, scaler: Scaler | None = None,
               trainer: Trainer | None = None, callback=None) -> KTrace:
    """Run the alternating scheme and return the full iterate history.

    ``wall.conductivity_k`` is ignored. Non-convergence is reported in the
    trace, never raised.
    """
    config = config or EstimateConfig()
    started = time.perf_counter()
    scaler = scaler or make_scaler(wall, env, config.k_min, config.k_max)
    if trainer is None:
        params = net.init(config.layer_sizes, config.seed, dtype=np.dtype(config.dtype))
        trainer = Trainer(params, PinnProblem(wall, env, scaler), config.train, seed=config.seed)
    k_opt = AdamState.for_arrays([np.zeros(1)], base_lr=config.k_lr,
                                 decay_rate=config.k_decay_rate, decay_steps=config.k_decay_steps)
    trace = KTrace()
    k_hat = 0.5
    ks_dim = []
    try:
        for n in range(config.max_outer_steps + 1):
            budget = config.warmup_steps if (n == 0 and config.warmup_steps) else None
            inner = trainer.train_inner(k_hat, budget)
            trace.inner_steps.append(inner.steps)
            if not inner.converged:
                trace.inner_unconverged += 1
            loss, _ = loss_tc_and_grad(trainer.params, thermographs, scaler, k_hat)
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite thermograph loss at outer step {n}")
            k_dim = float(scaler.conductivity(k_hat))
            trace.iterates.append((n, k_dim, loss))
            ks_dim.append(k_dim)
            if callback is not None:
                callback(n, k_dim, loss, inner)
            log.debug("outer %d: k=%.5f loss=%.3e inner=%d", n, k_dim, loss, inner.steps)
            if _converged(ks_dim, config.conv_tol, config.conv_window):
                pinned = k_hat <= 0.0 or k_hat >= 1.0
                trace.converged = not pinned
                if pinned:
                    bound = "k_min" if k_hat <= 0.0 else "k_max"
                    trace.failure_reason = f"estimate pinned at {bound} ({k_dim:g} W/mK)"
                break
            if n == config.max_outer_steps:
                trace.failure_reason = (f"no convergence within {config.max_outer_steps} "
                                        "outer steps")
                break
            k_hat, k_opt, _ = step_k(trainer.params, thermographs, scaler, k_hat, k_opt,
                                     config.grad_floor)
            trainer.reset_optimizer()
    except FloatingPointError as exc:
        trace.converged = False
        trace.failure_reason = f"non-finite value: {exc}"
        if not trace.iterates:
            trace.iterates.append((0, float(scaler.conductivity(k_hat)), float("nan")))
    if trace.inner_unconverged and trace.failure_reason is None and not trace.converged:
        trace.failure_reason = "inner training exhausted its step budget"
    trace.runtime_s = time.perf_counter() - started
    trace.trainer = trainer
    return trace


def preset(name: str, **overrides) -> EstimateConfig:
    """Named configurations: ``desk`` for laptop-scale runs, ``paper`` for the full network."""
    if name == "desk":
        train = TrainConfig(n_pde=1024, n_bc=256, n_ic=51, t_pde=1e-4, t_bc_out=1e-4,
                            t_bc_in=3e-4, t_ic=1e-4, max_inner_steps=2000, check_every=50,
                            decay_steps=400.0, min_lr=1e-5)
        cfg = EstimateConfig(width=64, dtype="float32", k_lr=0.01, warmup_steps=6000, train=train)
    elif name == "paper":
        cfg = EstimateConfig(width=256, dtype="float64", k_lr=1e-3, train=TrainConfig())
    else:
        raise ValueError(f"unknown preset {name!r} (expected desk or paper)")
    train_over = overrides.pop("train", None)
    if train_over:
        cfg = replace(cfg, train=replace(cfg.train, **train_over))
    return replace(cfg, **overrides) if overrides else cfg
