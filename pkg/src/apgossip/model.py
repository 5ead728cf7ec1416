"""Bounded scoring models with exact hand-written gradients.

Two model kinds: a linear model and a one-hidden-layer relu MLP, both
followed by a sigmoid so scores stay in (0, 1). Parameters live in one
flat vector; layouts:

    linear: [w (d), bias]
    mlp:    [W1 row-major (h*d), b1 (h), W2 (h), b2 (1)]

Gradients are computed by backprop through the sigmoid (and relu);
relu'(0) is taken as 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ParseError
from .rng import KIND_INIT, keyed_stream

# Keeps scores strictly inside (0, 1) for any finite logit.
_SCORE_LO = 1e-308
_SCORE_HI = 1.0 - 1e-16


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    hidden_dim: int = 0

    def __post_init__(self):
        if self.kind not in ("linear", "mlp"):
            raise ContractError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1:
            raise ContractError("input_dim must be >= 1")
        if self.kind == "mlp" and self.hidden_dim < 1:
            raise ContractError("mlp requires hidden_dim >= 1")

    @property
    def n_params(self) -> int:
        d, h = self.input_dim, self.hidden_dim
        if self.kind == "linear":
            return d + 1
        return h * d + h + h + 1


@dataclass(frozen=True)
class ModelParams:
    spec: ModelSpec
    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64).reshape(-1)
        if theta.shape[0] != self.spec.n_params:
            raise ContractError(
                f"theta has {theta.shape[0]} entries, spec needs {self.spec.n_params}"
            )
        object.__setattr__(self, "theta", theta)


def init_params(spec: ModelSpec, seed: int) -> ModelParams:
    """Xavier-normal weights (variance 2 / (fan_in + fan_out)), zero biases."""
    rng = keyed_stream(seed, 0, 0, KIND_INIT)
    d, h = spec.input_dim, spec.hidden_dim
    if spec.kind == "linear":
        w = rng.normal(0.0, np.sqrt(2.0 / (d + 1)), size=d)
        theta = np.concatenate([w, [0.0]])
    else:
        w1 = rng.normal(0.0, np.sqrt(2.0 / (d + h)), size=h * d)
        w2 = rng.normal(0.0, np.sqrt(2.0 / (h + 1)), size=h)
        theta = np.concatenate([w1, np.zeros(h), w2, [0.0]])
    return ModelParams(spec, theta)


def _unpack_mlp(params: ModelParams):
    d, h = params.spec.input_dim, params.spec.hidden_dim
    t = params.theta
    w1 = t[: h * d].reshape(h, d)
    b1 = t[h * d : h * d + h]
    w2 = t[h * d + h : h * d + 2 * h]
    b2 = t[-1]
    return w1, b1, w2, b2


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return np.clip(out, _SCORE_LO, _SCORE_HI)


def _check_inputs(params: ModelParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.spec.input_dim:
        raise ContractError(
            f"input has dim {x.shape[-1]}, model expects {params.spec.input_dim}"
        )
    return x


def _forward(params: ModelParams, x: np.ndarray):
    """Logits plus the activations the backward pass needs."""
    if params.spec.kind == "linear":
        logits = x @ params.theta[:-1] + params.theta[-1]
        return logits, None
    w1, b1, w2, b2 = _unpack_mlp(params)
    pre = x @ w1.T + b1
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ w2 + b2
    return logits, (pre, hidden, w2)


def scores(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Sigmoid scores for a batch of inputs, shape (n,)."""
    x = _check_inputs(params, x)
    logits, _ = _forward(params, np.atleast_2d(x))
    return _sigmoid(logits)


def score(params: ModelParams, z: np.ndarray) -> float:
    return float(scores(params, np.asarray(z).reshape(1, -1))[0])


def logit_weighted_sum(params: ModelParams, x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_i weights[i] * d(logit_i)/d(theta), without an (n, p) Jacobian."""
    x = _check_inputs(params, np.atleast_2d(x))
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != x.shape[0]:
        raise ContractError("weights must have one entry per input row")
    if params.spec.kind == "linear":
        return np.concatenate([x.T @ w, [w.sum()]])
    w1, b1, w2, _ = _unpack_mlp(params)
    pre = x @ w1.T + b1
    hidden = np.maximum(pre, 0.0)
    gate = (pre > 0.0) * w2  # (n, h): relu'(0) := 0
    a = gate * w[:, None]
    d_w1 = a.T @ x
    d_b1 = a.sum(axis=0)
    d_w2 = hidden.T @ w
    d_b2 = w.sum()
    return np.concatenate([d_w1.reshape(-1), d_b1, d_w2, [d_b2]])


def grad_weighted_sum(params: ModelParams, x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_i weights[i] * d(score_i)/d(theta)."""
    x = _check_inputs(params, np.atleast_2d(x))
    h = scores(params, x)
    return logit_weighted_sum(params, x, np.asarray(weights, dtype=np.float64) * h * (1.0 - h))


def score_grads(params: ModelParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scores (n,) and per-sample score gradients (n, p)."""
    x = _check_inputs(params, np.atleast_2d(x))
    h = scores(params, x)
    n = x.shape[0]
    grads = np.empty((n, params.spec.n_params))
    sig = h * (1.0 - h)
    if params.spec.kind == "linear":
        grads[:, :-1] = sig[:, None] * x
        grads[:, -1] = sig
        return h, grads
    w1, b1, w2, _ = _unpack_mlp(params)
    pre = x @ w1.T + b1
    hidden = np.maximum(pre, 0.0)
    gate = (pre > 0.0) * w2
    hd = params.spec.hidden_dim * params.spec.input_dim
    grads[:, :hd] = (gate[:, :, None] * x[:, None, :]).reshape(n, hd) * sig[:, None]
    grads[:, hd : hd + params.spec.hidden_dim] = gate * sig[:, None]
    grads[:, hd + params.spec.hidden_dim : -1] = hidden * sig[:, None]
    grads[:, -1] = sig
    return h, grads


def score_and_grad(params: ModelParams, z: np.ndarray) -> tuple[float, np.ndarray]:
    h, grads = score_grads(params, np.asarray(z).reshape(1, -1))
    return float(h[0]), grads[0]


def save_params(params: ModelParams, path: str) -> None:
    """Text format: spec header line, then theta as repr'd decimals."""
    spec = params.spec
    header = f"{spec.kind} {spec.input_dim}"
    if spec.kind == "mlp":
        header += f" {spec.hidden_dim}"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        fh.write(" ".join(repr(v) for v in params.theta.tolist()) + "\n")


def load_params(path: str) -> ModelParams:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        body = fh.read().split()
    try:
        if header and header[0] == "linear" and len(header) == 2:
            spec = ModelSpec("linear", int(header[1]))
        elif header and header[0] == "mlp" and len(header) == 3:
            spec = ModelSpec("mlp", int(header[1]), int(header[2]))
        else:
            raise ParseError(f"{path}: bad model header {' '.join(header)!r}")
        theta = np.array([float(v) for v in body], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if theta.size != spec.n_params:
        raise ParseError(f"{path}: expected {spec.n_params} parameters, found {theta.size}")
    return ModelParams(spec, theta)
