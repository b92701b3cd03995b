"""Feed-forward networks in NumPy with hand-written backpropagation.

Layers compute ``z = x @ W.T + b``; every layer but the last is followed by the
hidden activation. In ``simplex`` mode a softmax turns the last layer into a pmf.
"""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

SELU_SCALE = 1.0507009873554804934193349852946
SELU_ALPHA = 1.6732632423543772848170429916717

ACTIVATIONS = ("relu", "selu")
OUTPUT_MODES = ("simplex", "linear")
CHECKPOINT_VERSION = 1


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return SELU_SCALE * np.where(z > 0, z, SELU_ALPHA * np.expm1(np.minimum(z, 0.0)))


def _act_grad(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0).astype(float)
    return SELU_SCALE * np.where(z > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(z, 0.0)))


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class Mlp:
    layer_dims: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    hidden_activation: str = "relu"
    output_mode: str = "simplex"

    def __post_init__(self):
        if self.hidden_activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.hidden_activation!r}")
        if self.output_mode not in OUTPUT_MODES:
            raise ValueError(f"unknown output mode {self.output_mode!r}")
        dims = list(self.layer_dims)
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("need one weight matrix and bias per layer")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (dims[l + 1], dims[l]) or b.shape != (dims[l + 1],):
                raise ValueError(f"layer {l} has shapes {W.shape}, {b.shape}; expected dims {dims[l]}->{dims[l + 1]}")

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    def params(self) -> List[np.ndarray]:
        """Parameter arrays in the order W0, b0, W1, b1, ... (live references)."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp(list(self.layer_dims), [W.copy() for W in self.weights],
                   [b.copy() for b in self.biases], self.hidden_activation, self.output_mode)

    def __call__(self, x):
        return forward(self, x)


def init_mlp(layer_dims: Sequence[int], hidden_activation: str = "relu",
             output_mode: str = "simplex", seed: int = 0) -> Mlp:
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or min(dims) < 1:
        raise ValueError(f"layer_dims needs at least two positive sizes, got {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        s = np.sqrt(1.0 / fan_in)
        weights.append(rng.uniform(-s, s, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(dims, weights, biases, hidden_activation, output_mode)


@dataclass
class _Cache:
    inputs: List[np.ndarray]   # input to each layer
    pre: List[np.ndarray]      # pre-activations of each layer
    out: np.ndarray


def _forward_cache(mlp: Mlp, X: np.ndarray) -> _Cache:
    inputs, pre = [], []
    h = X
    last = len(mlp.weights) - 1
    for l, (W, b) in enumerate(zip(mlp.weights, mlp.biases)):
        inputs.append(h)
        z = h @ W.T + b
        pre.append(z)
        h = _act(z, mlp.hidden_activation) if l < last else z
    if mlp.output_mode == "simplex":
        h = softmax(h)
    return _Cache(inputs, pre, h)


def _as_batch(mlp: Mlp, x) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[-1] != mlp.in_dim:
        raise ValueError(f"input has {X.shape[-1]} features, network expects {mlp.in_dim}")
    return X, single


def forward(mlp: Mlp, x) -> np.ndarray:
    """Network output for a vector ``x`` (length d) or a batch (n x d)."""
    X, single = _as_batch(mlp, x)
    out = _forward_cache(mlp, X).out
    return out[0] if single else out


def _backward(mlp: Mlp, cache: _Cache, grad_out: np.ndarray, need_params: bool = True):
    """Reverse pass: gradients of sum(grad_out * output) w.r.t. parameters and inputs."""
    g = grad_out
    if mlp.output_mode == "simplex":
        p = cache.out
        g = p * (g - np.sum(g * p, axis=-1, keepdims=True))
    last = len(mlp.weights) - 1
    gW: List[Optional[np.ndarray]] = [None] * len(mlp.weights)
    gb: List[Optional[np.ndarray]] = [None] * len(mlp.weights)
    for l in range(last, -1, -1):
        if l < last:
            g = g * _act_grad(cache.pre[l], mlp.hidden_activation)
        if need_params:
            gW[l] = g.T @ cache.inputs[l]
            gb[l] = g.sum(axis=0)
        g = g @ mlp.weights[l]
    grads = []
    if need_params:
        for a, b in zip(gW, gb):
            grads += [a, b]
    return grads, g


def jacobian_input(mlp: Mlp, x) -> np.ndarray:
    """Exact Jacobian d output / d input: (m, d) for a vector, (n, m, d) for a batch."""
    X, single = _as_batch(mlp, x)
    cache = _forward_cache(mlp, X)
    n = X.shape[0]
    J = np.broadcast_to(mlp.weights[0], (n,) + mlp.weights[0].shape)
    for l in range(1, len(mlp.weights)):
        J = _act_grad(cache.pre[l - 1], mlp.hidden_activation)[:, :, None] * J
        J = np.einsum("ij,njk->nik", mlp.weights[l], J)
    if mlp.output_mode == "simplex":
        p = cache.out
        J = p[:, :, None] * (J - np.einsum("nj,njk->nk", p, J)[:, None, :])
    J = np.array(J)
    return J[0] if single else J


# ---------------------------------------------------------------------------
# losses

def loss_match_rows(mlp: Mlp, X, rows, return_grad: bool = False):
    """Mean L2 distance between network outputs and diffusion rows."""
    X, _ = _as_batch(mlp, X)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if mlp.output_mode != "simplex":
        raise ValueError("row matching needs a simplex-output network")
    if rows.shape != (X.shape[0], mlp.out_dim):
        raise ValueError(f"rows have shape {rows.shape}, expected {(X.shape[0], mlp.out_dim)}")
    cache = _forward_cache(mlp, X)
    diff = cache.out - rows
    norms = np.linalg.norm(diff, axis=1)
    loss = float(norms.mean())
    if not return_grad:
        return loss
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(norms[:, None] > 0, diff / norms[:, None], 0.0) / X.shape[0]
    grads, _ = _backward(mlp, cache, g)
    return loss, grads


def _js_rows(p: np.ndarray, q: np.ndarray):
    s = p + q
    # keep log1p finite when one side has underflowed to ~0
    r = np.clip((p - q) / s, -1.0 + 1e-15, 1.0 - 1e-15)
    lp, lq = np.log1p(r), np.log1p(-r)
    val = 0.5 * np.sum(p * lp + q * lq, axis=1)
    # d js / dp = 1/2 log(2p / (p + q)), symmetrically for q
    return np.clip(val, 0.0, None), 0.5 * lp, 0.5 * lq


JSD_GRAD_FLOOR = 1e-12


def loss_jsd_phate(mlp: Mlp, x, y, target_x, target_y, return_grad: bool = False):
    """Mean over pairs of (JSD(phi(x), phi(y)) - ||target_x - target_y||)^2."""
    if mlp.output_mode != "simplex":
        raise ValueError("JS loss needs a simplex-output network")
    X, _ = _as_batch(mlp, x)
    Yp, _ = _as_batch(mlp, y)
    tx = np.atleast_2d(np.asarray(target_x, dtype=float))
    ty = np.atleast_2d(np.asarray(target_y, dtype=float))
    n = X.shape[0]
    if Yp.shape[0] != n or tx.shape[0] != n or ty.shape[0] != n or tx.shape != ty.shape:
        raise ValueError("pairs and target rows are misaligned")
    both = _forward_cache(mlp, np.vstack([X, Yp]))
    p = np.maximum(both.out[:n], 1e-300)
    q = np.maximum(both.out[n:], 1e-300)
    jsv, dp, dq = _js_rows(p, q)
    s = np.sqrt(jsv)
    target = np.linalg.norm(tx - ty, axis=1)
    resid = s - target
    loss = float(np.mean(resid ** 2))
    if not return_grad:
        return loss
    coef = (resid / np.maximum(s, JSD_GRAD_FLOOR)) / n  # d loss / d js
    g_out = np.vstack([coef[:, None] * dp, coef[:, None] * dq])
    grads, _ = _backward(mlp, both, g_out)
    return loss, grads


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class AdamWState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray], **kw) -> "AdamWState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adamw_update(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamWState,
                 lr: float, weight_decay: float = 0.0) -> None:
    """In-place AdamW step on a list of arrays (decoupled weight decay)."""
    if len(grads) != len(params):
        raise ValueError("gradient list length differs from parameter list")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if weight_decay:
            p -= lr * weight_decay * p
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 150
    batch_size: int = 32
    weight_decay: float = 0.0
    seed: int = 0
    pairs_per_batch: int = 128

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 2 or self.pairs_per_batch < 1:
            raise ValueError("epochs >= 0, batch_size >= 2 and pairs_per_batch >= 1 required")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")


def adamw_step(mlp: Mlp, grads, state: Optional[AdamWState], config: TrainConfig):
    """One AdamW step on ``mlp`` (updated in place); returns ``(mlp, state)``."""
    params = mlp.params()
    if state is None:
        state = AdamWState.zeros_like(params)
    adamw_update(params, grads, state, config.learning_rate, config.weight_decay)
    return mlp, state


def train(pc, targets, arch: Sequence[int], config: TrainConfig = TrainConfig(),
          hidden_activation: str = "relu"):
    """Fit a simplex network so JS distances of its outputs match target distances.

    ``arch`` lists layer sizes after the input (hidden..., output). Returns the
    trained network and the mean batch loss of every epoch.
    """
    X = pc.points if hasattr(pc, "points") else np.asarray(pc, dtype=float)
    Y = targets.Y if hasattr(targets, "Y") else np.asarray(targets, dtype=float)
    n = X.shape[0]
    if Y.shape[0] != n:
        raise ValueError(f"targets have {Y.shape[0]} rows for {n} points")
    mlp = init_mlp([X.shape[1]] + list(arch), hidden_activation, "simplex", config.seed)
    rng = np.random.default_rng(config.seed + 1)
    state = AdamWState.zeros_like(mlp.params())
    history = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            if batch.size < 2:
                continue
            a = rng.integers(0, batch.size, config.pairs_per_batch)
            b = (a + rng.integers(1, batch.size, config.pairs_per_batch)) % batch.size
            i, j = batch[a], batch[b]
            loss, grads = loss_jsd_phate(mlp, X[i], X[j], Y[i], Y[j], return_grad=True)
            if not np.isfinite(loss):
                raise FloatingPointError("non-finite training loss")
            adamw_step(mlp, grads, state, config)
            losses.append(loss)
        history.append(float(np.mean(losses)))
    return mlp, history


# ---------------------------------------------------------------------------
# checkpoints: JSON text, arrays as base64 of little-endian float64 bytes

def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(d: dict) -> np.ndarray:
    return np.frombuffer(base64.b64decode(d["data"]), dtype="<f8").reshape(d["shape"]).astype(float)


def save_mlp(mlp: Mlp, path) -> None:
    doc = {
        "format": "fimkit-mlp",
        "version": CHECKPOINT_VERSION,
        "layer_dims": list(mlp.layer_dims),
        "hidden_activation": mlp.hidden_activation,
        "output_mode": mlp.output_mode,
        "weights": [_encode(W) for W in mlp.weights],
        "biases": [_encode(b) for b in mlp.biases],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_mlp(path) -> Mlp:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "fimkit-mlp":
        raise ValueError(f"{path} is not a network checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    return Mlp(doc["layer_dims"], [_decode(w) for w in doc["weights"]],
               [_decode(b) for b in doc["biases"]], doc["hidden_activation"], doc["output_mode"])
