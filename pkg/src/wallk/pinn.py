"""Residual losses, collocation sampling, loss balancing and the forward training loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from . import net
from .net import AdamState, Jet2, NetParams
from .physics import Scaler, WallSpec, steady_surfaces, temperature_bounds
from .weather import EnvSeries

log = logging.getLogger(__name__)

LOSS_NAMES = ("pde", "bc_out", "bc_in", "ic")
LOG_COLUMNS = ("step", "loss_pde", "loss_bc_out", "loss_bc_in", "loss_ic",
               "lambda_pde", "lambda_bc_out", "lambda_bc_in", "lambda_ic", "lr")


@dataclass(frozen=True)
class TrainConfig:
    n_pde: int = 2048
    n_bc: int = 256
    n_ic: int = 101
    k_sample_std: float = 0.01
    weight_update_interval: int = 1000
    weight_momentum: float = 0.9
    t_pde: float = 1e-4
    t_bc_out: float = 1e-4
    t_bc_in: float = 1e-4
    t_ic: float = 1e-4
    max_inner_steps: int = 20000
    check_every: int = 100
    lr: float = 1e-3
    decay_rate: float = 0.9
    decay_steps: float = 2000.0
    min_lr: float = 0.0
    keep_lr_schedule: bool = True

    def __post_init__(self):
        for name in ("n_pde", "n_bc", "n_ic", "check_every", "weight_update_interval"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.max_inner_steps < 0:
            raise ValueError("max_inner_steps must be non-negative")
        for name in ("t_pde", "t_bc_out", "t_bc_in", "t_ic"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def thresholds(self) -> dict[str, float]:
        return {"pde": self.t_pde, "bc_out": self.t_bc_out, "bc_in": self.t_bc_in, "ic": self.t_ic}


@dataclass(frozen=True)
class LossWeights:
    pde: float = 1.0
    bc_out: float = 1.0
    bc_in: float = 1.0
    ic: float = 1.0

    def __post_init__(self):
        for name in LOSS_NAMES:
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"loss weight {name} must be positive and finite, got {v}")

    def as_dict(self) -> dict[str, float]:
        return {n: getattr(self, n) for n in LOSS_NAMES}


@dataclass(frozen=True)
class PinnProblem:
    """Everything the residuals need apart from the network and the collocation points."""

    wall: WallSpec
    env: EnvSeries
    scaler: Scaler

    @property
    def t_total(self) -> float:
        return self.scaler.t_total

    def k_dim(self, kappa):
        return self.scaler.conductivity(kappa)

    def diffusion_coef(self, kappa):
        w = self.wall
        return self.k_dim(kappa) * self.scaler.t_total / (
            w.heat_capacity_cp * w.density_rho * w.thickness_b**2)

    def outdoor(self, tau):
        """Dimensionless sol-air temperature and h_out at dimensionless times."""
        solair, h, _ = self.env.sample(self.scaler.time(tau))
        return self.scaler.theta(solair), np.asarray(h, dtype=float)

    @property
    def theta_in(self) -> float:
        return float(self.scaler.theta(self.env.indoor.temp_in))

    def initial_theta(self, xi, kappa):
        """Dimensionless dawn steady-state profile; depends on K through the wall resistance."""
        _, h0, temp0 = self.env.sample(0.0)
        s_out, s_in = steady_surfaces(self.wall.thickness_b, self.k_dim(kappa), float(temp0),
                                      self.env.indoor.temp_in, float(h0), self.env.indoor.h_in)
        th_out, th_in = self.scaler.theta(s_out), self.scaler.theta(s_in)
        return th_out + (th_in - th_out) * np.asarray(xi, dtype=float)


def make_scaler(wall: WallSpec, env: EnvSeries, k_min: float = 0.5, k_max: float = 6.0,
                t_total: float | None = None, margin: float = 5.0) -> Scaler:
    """Temperature bounds from the sol-air series, indoor air and steady endpoints over [k_min, k_max]."""
    _, h0, temp0 = env.sample(0.0)
    temps = [env.solair_series(), [env.indoor.temp_in]]
    for k in (k_min, k_max):
        temps.append(steady_surfaces(wall.thickness_b, k, float(temp0), env.indoor.temp_in,
                                     float(h0), env.indoor.h_in))
    lo, hi = temperature_bounds(temps, margin)
    return Scaler(t_total or env.duration, wall.thickness_b, lo, hi, k_min, k_max)


def truncated_normal(rng: np.random.Generator, mean: float, std: float, size: int,
                     low: float = 0.0, high: float = 1.0, max_rounds: int = 8) -> np.ndarray:
    """Normal(mean, std) restricted to [low, high].

    Rejection sampling when most of the mass lies inside the interval,
    otherwise (or if rejection keeps failing) inverse-CDF sampling.
    """
    a, b = (low - mean) / std, (high - mean) / std
    mass = float(ndtr(b) - ndtr(a))
    if mass > 0.5:
        out = np.empty(0)
        for _ in range(max_rounds):
            draw = rng.normal(mean, std, size=int(1.2 * (size - out.size) / mass) + 8)
            out = np.concatenate([out, draw[(draw >= low) & (draw <= high)]])
            if out.size >= size:
                return out[:size]
    u = rng.uniform(ndtr(a), ndtr(b), size=size)
    return np.clip(mean + std * ndtri(u), low, high)


@dataclass(frozen=True)
class CollocationBatch:
    pde_points: np.ndarray   # (N, 3): tau, xi, K
    bc_points: np.ndarray    # (M, 2): tau, K  (applied at xi = 0 and xi = 1)
    ic_points: np.ndarray    # (L, 2): xi, K   (at tau = 0)

    def bc_inputs(self, xi_face: float) -> np.ndarray:
        m = len(self.bc_points)
        return np.column_stack([self.bc_points[:, 0], np.full(m, xi_face), self.bc_points[:, 1]])

    def ic_inputs(self) -> np.ndarray:
        return np.column_stack([np.zeros(len(self.ic_points)), self.ic_points])


def ic_k_values(k_hat: float) -> np.ndarray:
    return np.clip(np.array([0.95 * k_hat, k_hat, 1.05 * k_hat]), 0.0, 1.0)


def sample_collocation(config: TrainConfig, k_hat: float, rng: np.random.Generator) -> CollocationBatch:
    if not 0.0 <= k_hat <= 1.0:
        raise ValueError(f"k_hat must be dimensionless in [0, 1], got {k_hat}")
    std = config.k_sample_std
    pde = np.column_stack([
        rng.uniform(0.0, 1.0, config.n_pde),
        rng.uniform(0.0, 1.0, config.n_pde),
        truncated_normal(rng, k_hat, std, config.n_pde),
    ])
    bc = np.column_stack([rng.uniform(0.0, 1.0, config.n_bc),
                          truncated_normal(rng, k_hat, std, config.n_bc)])
    xi = np.linspace(0.0, 1.0, config.n_ic)
    ks = ic_k_values(k_hat)
    ic = np.column_stack([np.tile(xi, len(ks)), np.repeat(ks, len(xi))])
    return CollocationBatch(pde, bc, ic)


def pde_residual(jet: Jet2, kappa, problem: PinnProblem) -> np.ndarray:
    return jet.d_tau - problem.diffusion_coef(kappa) * jet.d_xi_xi


def bc_out_residual(jet: Jet2, tau, kappa, problem: PinnProblem) -> np.ndarray:
    th_sa, h = problem.outdoor(tau)
    beta = problem.k_dim(kappa) / (problem.scaler.b * h)
    return (jet.value - th_sa) - beta * jet.d_xi


def bc_in_residual(jet: Jet2, kappa, problem: PinnProblem) -> np.ndarray:
    beta = problem.k_dim(kappa) / (problem.scaler.b * problem.env.indoor.h_in)
    return (problem.theta_in - jet.value) - beta * jet.d_xi


# Each term returns (loss, grads or None). Gradients are w.r.t. network weights.

def _pde_term(params, x, problem, grad):
    jet, tape = net.jet_forward(params, x, d_tau=True, d_xi_xi=True)
    r = pde_residual(jet, x[:, 2], problem)
    loss = float(np.mean(r * r))
    if not grad:
        return loss, None
    c = problem.diffusion_coef(x[:, 2])
    s = 2.0 * r / len(r)
    return loss, net.jet_backward(params, tape, Jet2(None, s, None, -c * s))[0]


def _bc_out_term(params, x, problem, grad):
    jet, tape = net.jet_forward(params, x, d_tau=False, d_xi=True, d_xi_xi=False)
    r = bc_out_residual(jet, x[:, 0], x[:, 2], problem)
    loss = float(np.mean(r * r))
    if not grad:
        return loss, None
    _, h = problem.outdoor(x[:, 0])
    beta = problem.k_dim(x[:, 2]) / (problem.scaler.b * h)
    s = 2.0 * r / len(r)
    return loss, net.jet_backward(params, tape, Jet2(s, None, -beta * s, None))[0]


def _bc_in_term(params, x, problem, grad):
    jet, tape = net.jet_forward(params, x, d_tau=False, d_xi=True, d_xi_xi=False)
    r = bc_in_residual(jet, x[:, 2], problem)
    loss = float(np.mean(r * r))
    if not grad:
        return loss, None
    beta = problem.k_dim(x[:, 2]) / (problem.scaler.b * problem.env.indoor.h_in)
    s = 2.0 * r / len(r)
    return loss, net.jet_backward(params, tape, Jet2(-s, None, -beta * s, None))[0]


def _ic_term(params, x, problem, grad, initial_theta=None):
    target = (initial_theta or problem.initial_theta)(x[:, 1], x[:, 2])
    if grad:
        jet, tape = net.jet_forward(params, x, d_tau=False, d_xi=False, d_xi_xi=False)
        value = jet.value
    else:
        value = net.forward(params, x)
    r = target - value
    loss = float(np.mean(r * r))
    if not grad:
        return loss, None
    return loss, net.jet_backward(params, tape, Jet2(-2.0 * r / len(r)))[0]


def loss_pde(params: NetParams, batch: CollocationBatch, problem: PinnProblem) -> float:
    return _pde_term(params, batch.pde_points, problem, False)[0]


def loss_bc_out(params: NetParams, batch: CollocationBatch, problem: PinnProblem) -> float:
    return _bc_out_term(params, batch.bc_inputs(0.0), problem, False)[0]


def loss_bc_in(params: NetParams, batch: CollocationBatch, problem: PinnProblem) -> float:
    return _bc_in_term(params, batch.bc_inputs(1.0), problem, False)[0]


def loss_ic(params: NetParams, ic_points: np.ndarray, initial_theta) -> float:
    """Mean squared IC misfit; ``initial_theta(xi, K)`` gives the target profile."""
    x = np.column_stack([np.zeros(len(ic_points)), ic_points])
    return _ic_term(params, x, None, False, initial_theta)[0]


def all_losses(params: NetParams, batch: CollocationBatch, problem: PinnProblem,
               grad: bool = False):
    """Four component losses (and per-loss weight gradients when ``grad``)."""
    terms = {
        "pde": _pde_term(params, batch.pde_points, problem, grad),
        "bc_out": _bc_out_term(params, batch.bc_inputs(0.0), problem, grad),
        "bc_in": _bc_in_term(params, batch.bc_inputs(1.0), problem, grad),
        "ic": _ic_term(params, batch.ic_inputs(), problem, grad),
    }
    losses = {k: v[0] for k, v in terms.items()}
    if not grad:
        return losses
    return losses, {k: v[1] for k, v in terms.items()}


def total_loss(losses: dict[str, float], weights: LossWeights) -> float:
    w = weights.as_dict()
    return sum(w[n] * losses[n] for n in LOSS_NAMES)


def balance_weights(grad_norms: dict[str, float], current: LossWeights,
                    momentum: float = 0.9) -> LossWeights:
    """Gradient-norm balancing: raw weight_i = sum_j |g_j| / |g_i|, smoothed by an EMA.

    A loss whose gradient norm is zero (or non-finite) keeps its current weight.
    """
    total = sum(v for v in grad_norms.values() if math.isfinite(v))
    cur = current.as_dict()
    new = {}
    for name in LOSS_NAMES:
        g = grad_norms[name]
        if g > 0 and math.isfinite(g) and total > 0:
            new[name] = momentum * cur[name] + (1.0 - momentum) * (total / g)
        else:
            new[name] = cur[name]
    return LossWeights(**new)


def _norm(g: NetParams) -> float:
    return math.sqrt(sum(float(np.sum(a * a)) for a in g.arrays()))


def update_loss_weights(params: NetParams, batch: CollocationBatch, problem: PinnProblem,
                        current: LossWeights, momentum: float = 0.9) -> LossWeights:
    _, grads = all_losses(params, batch, problem, grad=True)
    return balance_weights({n: _norm(g) for n, g in grads.items()}, current, momentum)


@dataclass
class InnerResult:
    converged: bool
    steps: int
    losses: dict[str, float]


@dataclass
class Trainer:
    """Owns the network, its optimiser, the loss weights and the RNG streams."""

    params: NetParams
    problem: PinnProblem
    config: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    global_step: int = 0
    log_rows: list = field(default_factory=list)
    log_every: int = 100

    def __post_init__(self):
        train_ss, val_ss = np.random.SeedSequence(self.seed).spawn(2)
        self.rng = np.random.default_rng(train_ss)
        self.val_rng = np.random.default_rng(val_ss)
        self.opt = self._fresh_optimizer()

    def _fresh_optimizer(self) -> AdamState:
        c = self.config
        return AdamState.for_params(self.params, base_lr=c.lr, decay_rate=c.decay_rate,
                                    decay_steps=c.decay_steps, min_lr=c.min_lr)

    def reset_optimizer(self) -> None:
        """Zero the Adam moments. With ``keep_lr_schedule`` the decayed learning rate carries over."""
        self.opt = self.opt.reset(keep_schedule=self.config.keep_lr_schedule)

    def validate(self, k_hat: float) -> dict[str, float]:
        batch = sample_collocation(self.config, k_hat, self.val_rng)
        return all_losses(self.params, batch, self.problem)

    def below_thresholds(self, losses: dict[str, float]) -> bool:
        th = self.config.thresholds
        return all(losses[n] < th[n] for n in LOSS_NAMES)

    def step(self, k_hat: float) -> dict[str, float]:
        batch = sample_collocation(self.config, k_hat, self.rng)
        losses, grads = all_losses(self.params, batch, self.problem, grad=True)
        if not all(math.isfinite(v) for v in losses.values()):
            raise FloatingPointError(f"non-finite PINN loss at step {self.global_step}: {losses}")
        if self.global_step > 0 and self.global_step % self.config.weight_update_interval == 0:
            norms = {n: _norm(g) for n, g in grads.items()}
            self.weights = balance_weights(norms, self.weights, self.config.weight_momentum)
        w = self.weights.as_dict()
        arrays = [sum(w[n] * ga for n, ga in zip(LOSS_NAMES, parts))
                  for parts in zip(*(grads[n].arrays() for n in LOSS_NAMES))]
        lr = self.opt.lr()
        new, self.opt = net.adam_update(self.params.arrays(), arrays, self.opt)
        self.params = NetParams.from_arrays(new)
        if self.global_step % self.log_every == 0:
            self.log_rows.append((self.global_step, *(losses[n] for n in LOSS_NAMES),
                                  *(w[n] for n in LOSS_NAMES), lr))
        self.global_step += 1
        return losses

    def train_inner(self, k_hat: float, max_steps: int | None = None) -> InnerResult:
        """Train until all four validation losses are under threshold or the budget runs out.

        The check runs before the first step, so an already adequate network is
        left untouched.
        """
        budget = self.config.max_inner_steps if max_steps is None else max_steps
        steps = 0
        losses = self.validate(k_hat)
        while not self.below_thresholds(losses):
            if steps >= budget:
                return InnerResult(False, steps, losses)
            n = min(self.config.check_every, budget - steps)
            for _ in range(n):
                self.step(k_hat)
            steps += n
            losses = self.validate(k_hat)
        return InnerResult(True, steps, losses)

    def write_log(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for row in self.log_rows:
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def train_inner(trainer: Trainer, k_hat: float, max_steps: int | None = None) -> InnerResult:
    return trainer.train_inner(k_hat, max_steps)
