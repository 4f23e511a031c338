"""Conditional Real NVP over log (iops, latency), written directly in numpy.

Every coupling layer keeps one target coordinate and moves the other by an
affine map whose log-scale ``s`` and shift ``t`` come from two small tanh
networks fed with ``(kept coordinate, condition)``::

    z_t = y_t * exp(s) + t,   s = B * tanh(net_s(y_p, x)),   t = net_t(y_p, x)

Gradients of the negative log-likelihood are computed by a hand-written
backward pass.  All parameters live in one flat vector; the per-layer weight
arrays are views into it, which keeps the Adam update a handful of array
operations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .domain import LoadGroup, encode_features, feature_matrix
from .errors import DimensionMismatch, NonFiniteValue

FORMAT = "perftwin-flow"
VERSION = 1
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class FlowTrainConfig:
    epochs: int = 80
    batch_size: int = 200
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 42
    n_layers: int = 16
    hidden: int = 10
    scale_bound: float = 2.0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1 or self.learning_rate <= 0 or self.n_layers < 1 or self.hidden < 1:
            raise ValueError("batch_size, learning_rate, n_layers and hidden must be positive")
        if self.scale_bound <= 0:
            raise ValueError("scale_bound must be positive")


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteValue("non-finite value in flow input")


class CouplingLayer:
    """One affine coupling step.  ``keep`` is the pass-through coordinate."""

    def __init__(self, keep: int, params: dict, scale_bound: float):
        self.keep = keep
        self.move = 1 - keep
        self.p = params  # views into the owning flow's parameter vector
        self.scale_bound = scale_bound

    def _nets(self, h_keep, c):
        p = self.p
        a = np.concatenate([h_keep[:, None], c], axis=1)
        gs = np.tanh(a @ p["W1s"] + p["b1s"])
        rs = gs @ p["W2s"] + p["b2s"][0]
        trs = np.tanh(rs)
        s = self.scale_bound * trs
        gt = np.tanh(a @ p["W1t"] + p["b1t"])
        t = gt @ p["W2t"] + p["b2t"][0]
        return s, t, (a, gs, trs, gt)

    def forward(self, y, c, cache: bool = False):
        s, t, saved = self._nets(y[:, self.keep], c)
        z = y.copy()
        z[:, self.move] = y[:, self.move] * np.exp(s) + t
        if cache:
            return z, s, (y, s) + saved
        return z, s

    def inverse(self, z, c):
        s, t, _ = self._nets(z[:, self.keep], c)
        y = z.copy()
        y[:, self.move] = (z[:, self.move] - t) * np.exp(-s)
        return y

    def backward(self, dz, ds, saved, grad: dict):
        """Given dL/dz and dL/ds (direct), write parameter grads; return dL/dy."""
        y, s, a, gs, trs, gt = saved
        p, B = self.p, self.scale_bound
        dz_move = dz[:, self.move]
        es = np.exp(s)

        dy = dz.copy()
        dy[:, self.move] = dz_move * es
        ds_total = dz_move * y[:, self.move] * es + ds
        dt = dz_move

        drs = ds_total * B * (1.0 - trs * trs)
        grad["W2s"][...] = gs.T @ drs
        grad["b2s"][0] = drs.sum()
        dus = np.outer(drs, p["W2s"]) * (1.0 - gs * gs)
        grad["W1s"][...] = a.T @ dus
        grad["b1s"][...] = dus.sum(axis=0)

        grad["W2t"][...] = gt.T @ dt
        grad["b2t"][0] = dt.sum()
        dut = np.outer(dt, p["W2t"]) * (1.0 - gt * gt)
        grad["W1t"][...] = a.T @ dut
        grad["b1t"][...] = dut.sum(axis=0)

        dy[:, self.keep] += dus @ p["W1s"][0] + dut @ p["W1t"][0]
        return dy


def _layout(cond_dim: int, hidden: int):
    d = 1 + cond_dim
    return (
        ("W1s", (d, hidden)), ("b1s", (hidden,)), ("W2s", (hidden,)), ("b2s", (1,)),
        ("W1t", (d, hidden)), ("b1t", (hidden,)), ("W2t", (hidden,)), ("b2t", (1,)),
    )


def _views(flat: np.ndarray, n_layers: int, cond_dim: int, hidden: int) -> list:
    out, offset = [], 0
    for _ in range(n_layers):
        views = {}
        for name, shape in _layout(cond_dim, hidden):
            size = int(np.prod(shape))
            views[name] = flat[offset:offset + size].reshape(shape)
            offset += size
        out.append(views)
    assert offset == len(flat)
    return out


def n_parameters(n_layers: int, cond_dim: int, hidden: int) -> int:
    return n_layers * sum(int(np.prod(s)) for _, s in _layout(cond_dim, hidden))


class RealNVP:
    """Stack of coupling layers with alternating kept coordinate."""

    def __init__(self, cond_dim: int, n_layers: int = 16, hidden: int = 10,
                 scale_bound: float = 2.0, theta: Optional[np.ndarray] = None, seed=0):
        self.cond_dim, self.n_layers, self.hidden, self.scale_bound = cond_dim, n_layers, hidden, scale_bound
        size = n_parameters(n_layers, cond_dim, hidden)
        if theta is None:
            theta = np.zeros(size)
            rng = np.random.default_rng(seed)
            for v in _views(theta, n_layers, cond_dim, hidden):
                # output weights stay zero: the flow starts as the identity
                v["W1s"][...] = rng.normal(0.0, 1.0 / math.sqrt(1 + cond_dim), v["W1s"].shape)
                v["W1t"][...] = rng.normal(0.0, 1.0 / math.sqrt(1 + cond_dim), v["W1t"].shape)
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (size,):
            raise DimensionMismatch(f"expected {size} parameters, got {theta.shape}")
        self.theta = theta
        self.layers = [
            CouplingLayer(i % 2, v, scale_bound) for i, v in enumerate(_views(theta, n_layers, cond_dim, hidden))
        ]

    def _cond(self, c, n):
        c = np.asarray(c, dtype=float)
        if c.ndim == 1:
            c = np.broadcast_to(c, (n, len(c)))
        if c.shape != (n, self.cond_dim):
            raise DimensionMismatch(f"condition must have {self.cond_dim} columns, got shape {c.shape}")
        return c

    def forward(self, y, c):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        c = self._cond(c, len(y))
        _check_finite(y, c)
        logdet = np.zeros(len(y))
        for layer in self.layers:
            y, s = layer.forward(y, c)
            logdet += s
        return y, logdet

    def inverse(self, z, c):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        c = self._cond(c, len(z))
        _check_finite(z, c)
        for layer in reversed(self.layers):
            z = layer.inverse(z, c)
        return z

    def log_prob(self, y, c) -> np.ndarray:
        z, logdet = self.forward(y, c)
        return -0.5 * np.sum(z * z, axis=1) - LOG_2PI + logdet

    def nll(self, y, c) -> float:
        return float(-np.mean(self.log_prob(y, c)))

    def nll_and_grad(self, y, c):
        """Mean negative log-likelihood and its gradient w.r.t. ``theta``."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        c = self._cond(c, len(y))
        _check_finite(y, c)
        n = len(y)
        saved, logdet = [], np.zeros(n)
        h = y
        for layer in self.layers:
            h, s, cache = layer.forward(h, c, cache=True)
            saved.append(cache)
            logdet += s
        loss = float(np.mean(0.5 * np.sum(h * h, axis=1) + LOG_2PI - logdet))

        grad = np.zeros_like(self.theta)
        gviews = _views(grad, self.n_layers, self.cond_dim, self.hidden)
        dh = h / n
        ds = np.full(n, -1.0 / n)
        for layer, cache, g in zip(reversed(self.layers), reversed(saved), reversed(gviews)):
            dh = layer.backward(dh, ds, cache, g)
        return loss, grad


def coupling_forward(layer: CouplingLayer, y, x):
    """Single-point forward step: ``(z, logdet)``."""
    y = np.asarray(y, dtype=float).reshape(1, 2)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    _check_finite(y, x)
    z, s = layer.forward(y, x)
    return z[0], float(s[0])


def coupling_inverse(layer: CouplingLayer, z, x):
    z = np.asarray(z, dtype=float).reshape(1, 2)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    _check_finite(z, x)
    return layer.inverse(z, x)[0]


class Adam:
    def __init__(self, size: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m *= self.beta1
        self.m += (1 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _standardizer(a: np.ndarray):
    shift = a.mean(axis=0)
    scale = a.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return shift, scale


@dataclass(eq=False)
class FlowModel:
    """Trained flow plus the affine standardisation of targets and conditions.

    Targets are ``ln(iops), ln(latency)``; densities from :meth:`log_prob_log`
    are with respect to those log coordinates.
    """

    net: RealNVP
    target_shift: np.ndarray
    target_scale: np.ndarray
    cond_shift: np.ndarray
    cond_scale: np.ndarray
    loss_history: tuple = ()
    kind: str = ""

    @property
    def n_features(self) -> int:
        return self.net.cond_dim

    def _c(self, x, n):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.net.cond_dim:
            raise DimensionMismatch(f"expected {self.net.cond_dim} features, got {x.shape[-1]}")
        c = (x - self.cond_shift) / self.cond_scale
        return np.broadcast_to(c, (n, self.net.cond_dim)) if c.ndim == 1 else c

    def log_prob_log(self, z, x) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        u = (z - self.target_shift) / self.target_scale
        return self.net.log_prob(u, self._c(x, len(z))) - np.sum(np.log(self.target_scale))

    def log_prob(self, y, x) -> np.ndarray:
        """Density of raw (iops, latency) values."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        z = np.log(y)
        return self.log_prob_log(z, x) - z.sum(axis=1)

    def sample_log(self, x, n: int, seed=None) -> np.ndarray:
        if n == 0:
            return np.empty((0, 2))
        rng = np.random.default_rng(seed)
        e = rng.standard_normal((n, 2))
        u = self.net.inverse(e, self._c(x, n))
        return u * self.target_scale + self.target_shift

    def sample(self, x, n: int, seed=None) -> np.ndarray:
        return np.exp(self.sample_log(x, n, seed))

    def to_dict(self) -> dict:
        net = self.net
        return {
            "format": FORMAT,
            "version": VERSION,
            "kind": self.kind,
            "cond_dim": net.cond_dim,
            "n_layers": net.n_layers,
            "hidden": net.hidden,
            "scale_bound": net.scale_bound,
            "theta": net.theta.tolist(),
            "target_shift": self.target_shift.tolist(),
            "target_scale": self.target_scale.tolist(),
            "cond_shift": self.cond_shift.tolist(),
            "cond_scale": self.cond_scale.tolist(),
            "loss_history": list(self.loss_history),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FlowModel":
        if d.get("format") != FORMAT or d.get("version") != VERSION:
            raise ValueError("not a supported flow model document")
        net = RealNVP(d["cond_dim"], d["n_layers"], d["hidden"], d["scale_bound"], theta=np.array(d["theta"]))
        return cls(net, np.array(d["target_shift"]), np.array(d["target_scale"]),
                   np.array(d["cond_shift"]), np.array(d["cond_scale"]),
                   tuple(d["loss_history"]), d.get("kind", ""))

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "FlowModel":
        return cls.from_dict(json.loads(text))


def fit_flow_arrays(Z, X, cfg: FlowTrainConfig = FlowTrainConfig(), kind: str = "", callback=None) -> FlowModel:
    """Fit on log-space targets ``Z`` (n, 2) with conditions ``X`` (n, d)."""
    Z = np.asarray(Z, dtype=float)
    X = np.asarray(X, dtype=float)
    if len(Z) < 2 or len(Z) != len(X):
        raise ValueError("need at least 2 rows with matching targets and conditions")
    _check_finite(Z, X)
    t_shift, t_scale = _standardizer(Z)
    c_shift, c_scale = _standardizer(X)
    U = (Z - t_shift) / t_scale
    C = (X - c_shift) / c_scale

    net = RealNVP(X.shape[1], cfg.n_layers, cfg.hidden, cfg.scale_bound, seed=cfg.seed)
    opt = Adam(len(net.theta), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    rng = np.random.default_rng(cfg.seed)
    log_scale = float(np.sum(np.log(t_scale)))
    history = [net.nll(U, C) + log_scale]
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(U))
        for start in range(0, len(U), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, grad = net.nll_and_grad(U[idx], C[idx])
            opt.step(net.theta, grad)
        history.append(net.nll(U, C) + log_scale)
        if callback is not None:
            callback(epoch, history[-1])
    return FlowModel(net, t_shift, t_scale, c_shift, c_scale, tuple(history), kind)


def fit_flow(train: Sequence[LoadGroup], cfg: FlowTrainConfig = FlowTrainConfig(), kind: str = "",
             callback=None) -> FlowModel:
    """Flatten groups to per-measurement rows and fit in log space."""
    Z = np.concatenate([np.log(g.points) for g in train])
    X = np.repeat(feature_matrix(train), [g.k for g in train], axis=0)
    return fit_flow_arrays(Z, X, cfg, kind, callback)


def flow_logdensity(model: FlowModel, y, x) -> np.ndarray:
    return model.log_prob(y, x)


def sample_flow(model: FlowModel, x, n: int, seed=None) -> np.ndarray:
    if hasattr(x, "io_type"):
        x = encode_features(x)
    return model.sample(x, n, seed)
