"""Geodesics as neural-ODE paths trained through a fixed-step RK4 integrator.

A small network f(t, y) defines dy/dt. Starting from ``start`` it is integrated
with classical RK4; the loss is ``lam * |y(b) - target|^2`` plus the Riemannian
length of the path under a pluggable metric. Gradients flow backwards through
every RK4 stage (discretize-then-differentiate).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .fim import fim_batch
from .nn import AdamWState, Mlp, _backward, _forward_cache, adamw_update, init_mlp


# ---------------------------------------------------------------------------
# metrics

class MetricProvider:
    """g(x): symmetric PSD d x d matrix field. Subclasses implement ``metric_batch``."""

    dim: int
    fd_step: float = 1e-5

    def metric_batch(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def metric(self, x) -> np.ndarray:
        return self.metric_batch(np.asarray(x, dtype=float)[None, :])[0]

    __call__ = metric

    def metric_grad_batch(self, X: np.ndarray) -> np.ndarray:
        """dg/dx_k at each row of X as (n, d, d, k); central differences unless overridden."""
        X = np.asarray(X, dtype=float)
        n, d = X.shape
        h = self.fd_step
        shifted = np.concatenate([X[:, None, :] + h * np.eye(d), X[:, None, :] - h * np.eye(d)], axis=1)
        G = self.metric_batch(shifted.reshape(-1, d)).reshape(n, 2 * d, d, d)
        return np.moveaxis((G[:, :d] - G[:, d:]) / (2.0 * h), 1, -1)


class EuclideanMetric(MetricProvider):
    def __init__(self, dim: int):
        self.dim = dim

    def metric_batch(self, X):
        return np.broadcast_to(np.eye(self.dim), (len(X), self.dim, self.dim)).copy()

    def metric_grad_batch(self, X):
        return np.zeros((len(X), self.dim, self.dim, self.dim))


class SphereMetric(MetricProvider):
    """Unit sphere on the (colatitude, longitude) chart: ds^2 = dtheta^2 + sin^2(theta) dpsi^2."""

    dim = 2

    def metric_batch(self, X):
        X = np.asarray(X, dtype=float)
        G = np.zeros((len(X), 2, 2))
        G[:, 0, 0] = 1.0
        G[:, 1, 1] = np.sin(X[:, 0]) ** 2
        return G

    def metric_grad_batch(self, X):
        X = np.asarray(X, dtype=float)
        dG = np.zeros((len(X), 2, 2, 2))
        dG[:, 1, 1, 0] = np.sin(2.0 * X[:, 0])
        return dG


class LearnedFimMetric(MetricProvider):
    """FIM of a trained simplex network, evaluated at input-space points."""

    def __init__(self, mlp: Mlp, mode: str = "standard", fd_step: float = 1e-5):
        self.mlp = mlp
        self.mode = mode
        self.dim = mlp.in_dim
        self.fd_step = fd_step

    def metric_batch(self, X):
        return fim_batch(self.mlp, X, self.mode)


class ChartMetric(MetricProvider):
    """Pull-back of an ambient metric through a chart: g(c) = J(c)^T G(x(c)) J(c).

    ``chart`` maps (n, k) chart coordinates to (n, D) ambient points and
    ``jacobian`` returns the (n, D, k) derivative.
    """

    def __init__(self, ambient: MetricProvider, chart: Callable, jacobian: Callable, dim: int,
                 fd_step: float = 1e-5):
        self.ambient = ambient
        self.chart = chart
        self.jacobian = jacobian
        self.dim = dim
        self.fd_step = fd_step

    def metric_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        J = self.jacobian(X)
        G = self.ambient.metric_batch(self.chart(X))
        g = np.einsum("nai,nab,nbj->nij", J, G, J)
        return 0.5 * (g + np.swapaxes(g, 1, 2))


# ---------------------------------------------------------------------------
# vector field and integration

class OdeField:
    """dy/dt = f(t, y) given by an MLP on the concatenation [t, y]."""

    def __init__(self, mlp: Mlp):
        if mlp.output_mode != "linear" or mlp.in_dim != mlp.out_dim + 1:
            raise ValueError("ODE field needs a linear-output network mapping 1 + d inputs to d outputs")
        self.mlp = mlp

    @classmethod
    def create(cls, dim: int, hidden: Sequence[int] = (64, 64, 64), seed: int = 0,
               activation: str = "selu") -> "OdeField":
        return cls(init_mlp([dim + 1, *hidden, dim], activation, "linear", seed))

    @property
    def dim(self) -> int:
        return self.mlp.out_dim

    def __call__(self, t: float, y) -> np.ndarray:
        z = np.concatenate([[t], np.asarray(y, dtype=float)])
        return _forward_cache(self.mlp, z[None, :]).out[0]


def rk4_integrate(field: Callable, start, a: float, b: float, n_steps: int) -> np.ndarray:
    """Classical fixed-step RK4; returns all ``n_steps + 1`` states."""
    if n_steps < 1 or not b > a:
        raise ValueError("need n_steps >= 1 and b > a")
    y = np.atleast_1d(np.asarray(start, dtype=float)).copy()
    h = (b - a) / n_steps
    path = np.empty((n_steps + 1, y.size))
    path[0] = y
    for i in range(n_steps):
        t = a + i * h
        k1 = np.atleast_1d(field(t, y))
        k2 = np.atleast_1d(field(t + h / 2, y + h / 2 * k1))
        k3 = np.atleast_1d(field(t + h / 2, y + h / 2 * k2))
        k4 = np.atleast_1d(field(t + h, y + h * k3))
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(f"non-finite state at step {i + 1}")
        path[i + 1] = y
    return path


def path_length(path, velocities, metric: MetricProvider, a: float, b: float) -> float:
    """Left-endpoint sum of sqrt(v^T g(y) v) * h over the steps of ``path``."""
    path = np.asarray(path, dtype=float)
    n = path.shape[0] - 1
    V = np.asarray(velocities, dtype=float)[:n]
    if V.shape != (n, path.shape[1]):
        raise ValueError("velocities must give one vector per step")
    h = (b - a) / n
    G = metric.metric_batch(path[:n])
    rad = np.einsum("ni,nij,nj->n", V, G, V)
    return float(h * np.sum(np.sqrt(np.clip(rad, 0.0, None))))


def sphere_great_circle(p1, p2) -> float:
    """Great-circle distance between two (colatitude, longitude) points on the unit sphere."""

    def embed(p):
        th, ps = p
        return np.array([np.sin(th) * np.cos(ps), np.sin(th) * np.sin(ps), np.cos(th)])

    return float(np.arccos(np.clip(embed(p1) @ embed(p2), -1.0, 1.0)))


def swiss_roll_geodesic(pc, i: int, j: int) -> float:
    """Exact geodesic between two swiss-roll samples: distance in unrolled coordinates."""
    if pc.intrinsic is None:
        raise ValueError("point cloud carries no intrinsic coordinates")
    return float(np.linalg.norm(pc.intrinsic[i] - pc.intrinsic[j]))


# ---------------------------------------------------------------------------
# training

@dataclass
class GeodesicConfig:
    lam: float = 100.0
    n_steps: int = 20
    epochs: int = 5000
    learning_rate: float = 1e-2
    weight_decay: float = 0.0
    seed: int = 0
    a: float = 0.0
    b: float = 1.0
    hidden: Sequence[int] = (64, 64, 64)
    length_term: bool = True
    schedule: str = "cosine"        # or "constant"; cosine anneals to learning_rate * final_lr_ratio
    final_lr_ratio: float = 1e-3

    def __post_init__(self):
        if not self.lam > 0 or self.n_steps < 1 or self.epochs < 0 or not self.learning_rate > 0:
            raise ValueError("invalid geodesic configuration")
        if not self.b > self.a:
            raise ValueError("integration interval must satisfy b > a")
        if self.schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown learning-rate schedule {self.schedule!r}")

    def lr_at(self, epoch: int) -> float:
        if self.schedule == "constant" or self.epochs <= 1:
            return self.learning_rate
        lo = self.learning_rate * self.final_lr_ratio
        frac = epoch / (self.epochs - 1)
        return lo + 0.5 * (self.learning_rate - lo) * (1.0 + np.cos(np.pi * frac))


@dataclass
class GeodesicResult:
    path: np.ndarray
    length: float
    endpoint_error: float
    loss_history: List[float]
    velocities: np.ndarray
    times: np.ndarray
    field: Optional[OdeField] = field(default=None, repr=False)


_STAGES = ((0.0, None), (0.5, 0), (0.5, 1), (1.0, 2))  # (time offset / h, stage feeding the input)
_WEIGHTS = np.array([1.0, 2.0, 2.0, 1.0]) / 6.0


def _integrate_taped(mlp: Mlp, start: np.ndarray, a: float, h: float, n: int):
    d = start.size
    y = start.copy()
    path = np.empty((n + 1, d))
    path[0] = y
    stage_x = np.empty((n, 4, d))
    stage_k = np.empty((n, 4, d))
    caches = []
    for i in range(n):
        t = a + i * h
        step = []
        for j, (c, src) in enumerate(_STAGES):
            arg = y if src is None else y + c * h * stage_k[i, src]
            cache = _forward_cache(mlp, np.concatenate([[t + c * h], arg])[None, :])
            step.append(cache)
            stage_x[i, j] = arg
            stage_k[i, j] = cache.out[0]
        y = y + h * (_WEIGHTS @ stage_k[i])
        path[i + 1] = y
        caches.append(step)
    return path, stage_x, stage_k, caches


def _stage_speeds(metric: MetricProvider, stage_x, stage_k):
    n, _, d = stage_x.shape
    G = metric.metric_batch(stage_x.reshape(-1, d)).reshape(n, 4, d, d)
    Gk = np.einsum("nsij,nsj->nsi", G, stage_k)
    speed = np.sqrt(np.clip(np.einsum("nsi,nsi->ns", stage_k, Gk), 0.0, None))
    return speed, Gk


def rk4_length(metric: MetricProvider, stage_x, stage_k, h: float) -> float:
    """Length integral advanced alongside the path with the same RK4 stages and weights."""
    speed, _ = _stage_speeds(metric, stage_x, stage_k)
    return float(h * np.sum(speed @ _WEIGHTS))


def _loss_and_grad(mlp: Mlp, metric: MetricProvider, start, target, cfg: GeodesicConfig):
    n = cfg.n_steps
    h = (cfg.b - cfg.a) / n
    path, stage_x, stage_k, caches = _integrate_taped(mlp, start, cfg.a, h, n)
    if not np.all(np.isfinite(path)):
        return np.inf, None
    miss = path[-1] - target
    loss = cfg.lam * float(miss @ miss)

    kbar_len = np.zeros_like(stage_k)
    xbar_len = np.zeros_like(stage_x)
    if cfg.length_term:
        d = start.size
        speed, Gk = _stage_speeds(metric, stage_x, stage_k)
        loss += h * float(np.sum(speed @ _WEIGHTS))
        dG = metric.metric_grad_batch(stage_x.reshape(-1, d)).reshape(n, 4, d, d, d)
        quad = np.einsum("nsi,nsijk,nsj->nsk", stage_k, dG, stage_k)
        live = speed > 1e-12
        w = h * _WEIGHTS[None, :] * np.where(live, 1.0 / np.where(live, speed, 1.0), 0.0)
        kbar_len = w[..., None] * Gk
        xbar_len = 0.5 * w[..., None] * quad

    grads = [np.zeros_like(p) for p in mlp.params()]

    def back(cache, gk):
        g_params, g_in = _backward(mlp, cache, gk[None, :])
        for acc, gp in zip(grads, g_params):
            acc += gp
        return g_in[0, 1:]

    ybar = 2.0 * cfg.lam * miss
    for i in range(n - 1, -1, -1):
        kbar = h * _WEIGHTS[:, None] * ybar[None, :] + kbar_len[i]
        y_acc = ybar.copy()
        for j in (3, 2, 1, 0):
            xb = back(caches[i][j], kbar[j]) + xbar_len[i, j]
            y_acc += xb
            c, src = _STAGES[j]
            if src is not None:
                kbar[src] += c * h * xb
        ybar = y_acc
    return loss, grads


def train_geodesic(metric: MetricProvider, start, target, config: GeodesicConfig = GeodesicConfig(),
                   field: Optional[OdeField] = None) -> GeodesicResult:
    start = np.atleast_1d(np.asarray(start, dtype=float))
    target = np.atleast_1d(np.asarray(target, dtype=float))
    if start.shape != target.shape or start.size != metric.dim:
        raise ValueError("start, target and metric dimension disagree")
    ode = field or OdeField.create(start.size, config.hidden, config.seed)
    mlp = ode.mlp
    params = mlp.params()
    state = AdamWState.zeros_like(params)
    history = []
    for epoch in range(config.epochs):
        loss, grads = _loss_and_grad(mlp, metric, start, target, config)
        if not np.isfinite(loss):
            raise FloatingPointError(f"geodesic loss diverged at epoch {epoch}")
        history.append(loss)
        adamw_update(params, grads, state, config.lr_at(epoch), config.weight_decay)

    h = (config.b - config.a) / config.n_steps
    path, stage_x, stage_k, _ = _integrate_taped(mlp, start, config.a, h, config.n_steps)
    if not np.all(np.isfinite(path)):
        raise FloatingPointError("final geodesic path is not finite")
    times = config.a + h * np.arange(config.n_steps + 1)
    return GeodesicResult(
        path=path,
        length=rk4_length(metric, stage_x, stage_k, h),
        endpoint_error=float(np.linalg.norm(path[-1] - target)),
        loss_history=history,
        velocities=stage_k[:, 0].copy(),
        times=times,
        field=ode,
    )
