"""Dense tanh MLP ``(tau, xi, K) -> Theta`` with exact derivatives.

Input derivatives are propagated forward as a truncated Taylor jet
(first order in tau, second order in xi). Weight gradients come from a
hand-written reverse pass through that extended computation, so losses may
reference any jet channel. Also provides Adam with exponential decay.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_FORMAT = "wallk-mlp-v1"


@dataclass
class NetParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def dtype(self):
        return self.weights[0].dtype

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def from_arrays(cls, arrays) -> "NetParams":
        arrays = list(arrays)
        return cls(arrays[0::2], arrays[1::2])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec: np.ndarray) -> "NetParams":
        out, i = [], 0
        for a in self.arrays():
            out.append(np.asarray(vec[i:i + a.size], dtype=a.dtype).reshape(a.shape))
            i += a.size
        return NetParams.from_arrays(out)

    def copy(self) -> "NetParams":
        return NetParams.from_arrays([a.copy() for a in self.arrays()])

    def zeros_like(self) -> "NetParams":
        return NetParams.from_arrays([np.zeros_like(a) for a in self.arrays()])

    def __post_init__(self):
        sizes = [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]
        if sizes[0] != 3 or sizes[-1] != 1:
            raise ValueError(f"network must map 3 inputs to 1 output, got {sizes}")
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[1],):
                raise ValueError("bias shape does not match weight matrix")

    def save(self, path) -> None:
        """JSON checkpoint: format tag, layer sizes, dtype and flat weight/bias lists."""
        doc = {
            "format": CHECKPOINT_FORMAT,
            "layer_sizes": self.layer_sizes,
            "dtype": str(self.dtype),
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path) -> "NetParams":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
        sizes, dtype = doc["layer_sizes"], np.dtype(doc["dtype"])
        ws = [np.array(w, dtype=dtype).reshape(a, b)
              for w, a, b in zip(doc["weights"], sizes[:-1], sizes[1:])]
        bs = [np.array(b, dtype=dtype) for b in doc["biases"]]
        return cls(ws, bs)


def init(layer_sizes, seed: int = 0, dtype=np.float64) -> NetParams:
    """Glorot-uniform weights and zero biases."""
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        lim = math.sqrt(6.0 / (n_in + n_out))
        ws.append(rng.uniform(-lim, lim, size=(n_in, n_out)).astype(dtype))
        bs.append(np.zeros(n_out, dtype=dtype))
    return NetParams(ws, bs)


def n_params_for(layer_sizes) -> int:
    return sum((a + 1) * b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))


def _inputs(params, tau, xi, kappa):
    n = np.broadcast(tau, xi, kappa).size
    x = np.empty((n, 3), dtype=params.dtype)
    x[:, 0] = np.broadcast_to(tau, (n,)) if np.ndim(tau) else tau
    x[:, 1] = np.broadcast_to(xi, (n,)) if np.ndim(xi) else xi
    x[:, 2] = np.broadcast_to(kappa, (n,)) if np.ndim(kappa) else kappa
    return x


def forward(params: NetParams, x: np.ndarray) -> np.ndarray:
    """Plain forward pass on an (N, 3) input array; returns shape (N,)."""
    h = np.asarray(x, dtype=params.dtype)
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.tanh(h)
    return h[:, 0]


@dataclass
class Jet2:
    """Network output and its input derivatives at a batch of points."""

    value: np.ndarray
    d_tau: np.ndarray | None = None
    d_xi: np.ndarray | None = None
    d_xi_xi: np.ndarray | None = None


@dataclass
class _Layer:
    h: np.ndarray          # layer input channels
    ht: np.ndarray | None
    hs: np.ndarray | None
    hq: np.ndarray | None
    zt: np.ndarray | None = None   # pre-activation tangents (hidden layers)
    zs: np.ndarray | None = None
    zq: np.ndarray | None = None
    a: np.ndarray | None = None
    d1: np.ndarray | None = None
    d2: np.ndarray | None = None


@dataclass
class JetTape:
    x: np.ndarray
    layers: list[_Layer] = field(default_factory=list)
    want: tuple[bool, bool, bool] = (True, True, True)


def jet_forward(params: NetParams, x: np.ndarray, d_tau: bool = True, d_xi: bool = True,
                d_xi_xi: bool = True) -> tuple[Jet2, JetTape]:
    """Propagate value plus the requested derivative channels; keep a tape for the reverse pass.

    ``d_xi_xi`` implies ``d_xi``. Channels that are not requested are None.
    """
    d_xi = d_xi or d_xi_xi
    x = np.asarray(x, dtype=params.dtype)
    tape = JetTape(x, want=(d_tau, d_xi, d_xi_xi))
    last = len(params.weights) - 1
    h, ht, hs, hq = x, None, None, None
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        layer = _Layer(h, ht, hs, hq)
        z = h @ w + b
        if i == 0:
            # input tangents are unit vectors: the first map reduces to weight rows
            zt = w[0][None, :] if d_tau else None
            zs = w[1][None, :] if d_xi else None
            zq = None
        else:
            zt = ht @ w if d_tau else None
            zs = hs @ w if d_xi else None
            zq = hq @ w if (d_xi_xi and hq is not None) else None
        if i == last:
            tape.layers.append(layer)
            out = Jet2(z[:, 0],
                       None if zt is None else np.broadcast_to(zt, z.shape)[:, 0],
                       None if zs is None else np.broadcast_to(zs, z.shape)[:, 0],
                       (np.zeros(len(z), dtype=z.dtype) if zq is None else zq[:, 0])
                       if d_xi_xi else None)
            return out, tape
        a = np.tanh(z)
        d1 = 1.0 - a * a
        d2 = -2.0 * a * d1
        layer.zt, layer.zs, layer.zq, layer.a, layer.d1, layer.d2 = zt, zs, zq, a, d1, d2
        tape.layers.append(layer)
        h = a
        ht = d1 * zt if d_tau else None
        hs = d1 * zs if d_xi else None
        if d_xi_xi:
            hq = d2 * zs * zs
            if zq is not None:
                hq += d1 * zq
        else:
            hq = None
    raise AssertionError("unreachable")


def jet_backward(params: NetParams, tape: JetTape, seed: Jet2,
                 want_input: bool = False) -> tuple[NetParams, np.ndarray | None]:
    """Reverse pass: seed holds dL/d(channel) per point (None for unused channels).

    Returns the gradient with respect to every weight and bias and, when
    ``want_input``, dL/dx for the (N, 3) input values.
    """
    n = tape.x.shape[0]

    def col(v):
        return None if v is None else np.asarray(v, dtype=params.dtype).reshape(n, 1)

    g, gt, gs, gq = col(seed.value), col(seed.d_tau), col(seed.d_xi), col(seed.d_xi_xi)
    if g is None:
        g = np.zeros((n, 1), dtype=params.dtype)
    gws, gbs = [None] * len(params.weights), [None] * len(params.weights)
    last = len(params.weights) - 1
    for i in range(last, -1, -1):
        w = params.weights[i]
        layer = tape.layers[i]
        if i < last:
            # gradients arrive w.r.t. the tanh outputs; map them to pre-activations
            a, d1, d2 = layer_out.a, layer_out.d1, layer_out.d2
            gz = d1 * g
            if gt is not None:
                gz += d2 * layer_out.zt * gt
                gt = d1 * gt
            if gq is not None:
                d3 = d1 * (4.0 * a * a - 2.0 * d1)
                zs = layer_out.zs
                gz += d3 * zs * zs * gq
                if layer_out.zq is not None:
                    gz += d2 * layer_out.zq * gq
                gs_extra = 2.0 * d2 * zs * gq
                gq = d1 * gq
            else:
                gs_extra = None
            if gs is not None:
                gz += d2 * layer_out.zs * gs
                gs = d1 * gs
                if gs_extra is not None:
                    gs += gs_extra
            elif gs_extra is not None:
                gs = gs_extra
            g = gz
        gw = layer.h.T @ g
        if i == 0:
            if gt is not None:
                gw[0] += gt.sum(axis=0)
            if gs is not None:
                gw[1] += gs.sum(axis=0)
        else:
            if gt is not None:
                gw += layer.ht.T @ gt
            if gs is not None:
                gw += layer.hs.T @ gs
            if gq is not None and layer.hq is not None:
                gw += layer.hq.T @ gq
        gws[i] = gw
        gbs[i] = g.sum(axis=0)
        if i > 0:
            wt = w.T
            g = g @ wt
            gt = None if gt is None else gt @ wt
            gs = None if gs is None else gs @ wt
            gq = None if (gq is None or layer.hq is None) else gq @ wt
            layer_out = tape.layers[i - 1]
    gx = g @ params.weights[0].T if want_input else None
    return NetParams(gws, gbs), gx


def forward_jet(params: NetParams, tau, xi, kappa) -> Jet2:
    """Value, dTheta/dtau, dTheta/dxi and d2Theta/dxi2 at the given points."""
    jet, _ = jet_forward(params, _inputs(params, tau, xi, kappa))
    return jet


def grad_weights(params: NetParams, tau, xi, kappa, loss_fn) -> tuple[float, NetParams]:
    """Exact gradient of a scalar loss built from jet channels.

    ``loss_fn(jet)`` returns ``(loss, cotangent)`` where ``cotangent`` is a
    :class:`Jet2` of dL/d(channel) arrays (None where the loss does not use a
    channel).
    """
    jet, tape = jet_forward(params, _inputs(params, tau, xi, kappa))
    loss, cot = loss_fn(jet)
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss}")
    grads, _ = jet_backward(params, tape, cot)
    return float(loss), grads


def value_and_input_grad(params: NetParams, x: np.ndarray, seed: np.ndarray):
    """Network values and d(sum seed*value)/dx for an (N, 3) input batch."""
    jet, tape = jet_forward(params, x, d_tau=False, d_xi=False, d_xi_xi=False)
    _, gx = jet_backward(params, tape, Jet2(seed), want_input=True)
    return jet.value, gx


def grad_input_k(params: NetParams, tau, xi, kappa: float, target) -> tuple[float, float]:
    """Mean squared surface misfit at a shared K and its derivative dL/dK (weights frozen)."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    x = _inputs(params, tau, xi, kappa)
    value = forward(params, x)
    resid = value - np.asarray(target, dtype=float)
    n = len(tau)
    _, gx = value_and_input_grad(params, x, 2.0 * resid / n)
    return float(np.mean(resid**2)), float(gx[:, 2].sum())


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step_count: int = 0
    base_lr: float = 1e-3
    decay_rate: float = 0.9
    decay_steps: float = 2000.0
    min_lr: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule_offset: int = 0

    @classmethod
    def for_arrays(cls, arrays, **kw) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], **kw)

    @classmethod
    def for_params(cls, params: NetParams, **kw) -> "AdamState":
        return cls.for_arrays(params.arrays(), **kw)

    def lr(self, step: int | None = None) -> float:
        s = self.schedule_offset + self.step_count if step is None else step
        return max(self.base_lr * self.decay_rate ** (s / self.decay_steps), self.min_lr)

    def reset(self, keep_schedule: bool = False) -> "AdamState":
        """Zeroed moments; ``keep_schedule`` keeps the decay position but restarts bias correction."""
        st = AdamState.for_arrays(self.m, base_lr=self.base_lr, decay_rate=self.decay_rate,
                                  decay_steps=self.decay_steps, min_lr=self.min_lr,
                                  beta1=self.beta1, beta2=self.beta2, eps=self.eps)
        if keep_schedule:
            st.schedule_offset = self.schedule_offset + self.step_count
        return st


def adam_update(arrays, grads, state: AdamState) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam step on a list of arrays (updated copies are returned)."""
    if len(arrays) != len(grads) or len(arrays) != len(state.m):
        raise ValueError("parameter, gradient and state lists differ in length")
    lr = state.lr()
    t = state.step_count + 1
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(arrays, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {m.shape}")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        new_p.append(p - (lr / c1) * m / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    st = AdamState(new_m, new_v, t, state.base_lr, state.decay_rate, state.decay_steps,
                   state.min_lr, state.beta1, state.beta2, state.eps, state.schedule_offset)
    return new_p, st


def adam_step(params: NetParams, grads: NetParams, state: AdamState) -> tuple[NetParams, AdamState]:
    arrays, st = adam_update(params.arrays(), grads.arrays(), state)
    return NetParams.from_arrays(arrays), st
