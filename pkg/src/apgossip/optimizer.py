"""Round-step functions for the decentralized optimizers.

Three algorithms over the same barrier-synchronous loop:

  * slate: each node draws a positive anchor batch and an inner batch,
    forms the biased surrogate gradient u, optionally maintains a
    gossiped tracker v, and takes a mixed descent step.
  * slate_m: same, with momentum variance reduction on u. The update
    reuses one batch at both the current and previous iterate, so it
    needs the previous parameters; a large initial batch seeds u.
  * dpsgd: baseline; local SGD on binary cross-entropy, then gossip.

All functions are pure: they return fresh NodeStates and never mutate
their inputs. Per-node work may fan out to a thread pool; results are
bitwise independent of scheduling because every draw comes from a
counter-based stream keyed by (seed, node, round, kind).

The consensus step of the matrix form W(x - eta*v) is computed as
W x - eta * (W v); the two are algebraically identical, and the split
form makes the momentum algorithm with alpha=1 and a matched initial
batch reproduce the plain algorithm bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model, surrogate
from .data import Dataset
from .errors import ContractError
from .model import ModelParams, ModelSpec
from .rng import KIND_INNER, KIND_POS, KIND_SGD, RngStreams
from .surrogate import SurrogateConfig
from .topology import MixingMatrix, mix


@dataclass(frozen=True)
class NodeState:
    params: ModelParams
    u: np.ndarray
    v: np.ndarray
    u_prev: np.ndarray
    prev_theta: np.ndarray | None = None


@dataclass(frozen=True)
class SlateConfig:
    eta: float
    b: int
    m: int
    surrogate: SurrogateConfig
    gradient_tracking: bool = False
    seed: int = 0
    # "uniform": inner batch of m shard samples. "stratified": the b
    # anchors plus m - b negatives, guaranteeing positive pairs in every
    # inner estimate even on heavily imbalanced shards.
    inner_mode: str = "uniform"

    def __post_init__(self):
        if self.eta <= 0.0:
            raise ContractError("eta must be > 0")
        if self.b < 1 or self.m < 1:
            raise ContractError("batch sizes must be >= 1")
        if self.inner_mode not in ("uniform", "stratified"):
            raise ContractError(f"unknown inner_mode {self.inner_mode!r}")
        if self.inner_mode == "stratified" and self.m <= self.b:
            raise ContractError("stratified mode needs m > b")


@dataclass(frozen=True)
class SlateMConfig(SlateConfig):
    alpha: float = 0.1
    init_batch: int = 1

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 < self.alpha <= 1.0:
            raise ContractError("alpha must be in (0, 1]")
        if self.init_batch < 1:
            raise ContractError("init_batch must be >= 1")


@dataclass(frozen=True)
class RoundSample:
    pos: np.ndarray
    inner: np.ndarray


def draw_batches(
    shard: Dataset,
    b: int,
    m: int,
    rng_pos: np.random.Generator,
    rng_inner: np.random.Generator,
    inner_mode: str = "uniform",
) -> RoundSample:
    """Draw b anchor indices from the shard positives plus an inner batch.

    "uniform" draws the m inner indices from the whole shard;
    "stratified" composes them as the anchors plus m - b negatives (the
    shard itself when it has no negatives). Draws switch to
    with-replacement when a batch exceeds its pool.
    """
    pool = shard.positive_indices
    if pool.size == 0:
        raise ContractError("shard has no positive samples")
    pos = rng_pos.choice(pool, size=b, replace=b > pool.size)
    if inner_mode == "uniform":
        inner = rng_inner.choice(shard.n, size=m, replace=m > shard.n)
    else:
        neg_pool = np.flatnonzero(shard.labels == -1)
        if neg_pool.size == 0:
            neg_pool = np.arange(shard.n)
        k = max(m - b, 0)  # b may exceed m at warm start
        rest = rng_inner.choice(neg_pool, size=k, replace=k > neg_pool.size)
        inner = np.concatenate([pos, rest])
    return RoundSample(pos, inner)


def _map(pool, fn, items):
    return list(pool.map(fn, items)) if pool is not None else [fn(i) for i in items]


def _theta_stack(states) -> np.ndarray:
    return np.stack([s.params.theta for s in states])


def stack_params(states) -> np.ndarray:
    """Node parameter vectors stacked (N, p); feeds consensus_error."""
    return _theta_stack(states)


def mean_params(states) -> ModelParams:
    if not states:
        raise ContractError("no node states")
    return ModelParams(states[0].params.spec, _theta_stack(states).mean(axis=0))


def slate_init(spec: ModelSpec, n_nodes: int, cfg: SlateConfig) -> list[NodeState]:
    """All nodes start from one shared Xavier draw; u = v = 0."""
    if n_nodes < 1:
        raise ContractError("n_nodes must be >= 1")
    params = model.init_params(spec, cfg.seed)
    zero = np.zeros(spec.n_params)
    return [
        NodeState(ModelParams(spec, params.theta.copy()), zero.copy(), zero.copy(), zero.copy())
        for _ in range(n_nodes)
    ]


def _consensus_step(states, w_t: MixingMatrix, eta: float, u_new, v_new):
    mixed_x = mix(w_t, _theta_stack(states))
    mixed_v = mix(w_t, np.stack(v_new))
    x_next = mixed_x - eta * mixed_v
    spec = states[0].params.spec
    return [
        NodeState(
            ModelParams(spec, x_next[n]),
            u_new[n],
            v_new[n],
            states[n].u,
            states[n].params.theta,
        )
        for n in range(len(states))
    ]


def _tracked(states, w_t: MixingMatrix, cfg: SlateConfig, u_new):
    if not cfg.gradient_tracking:
        return list(u_new)
    stacked = np.stack([states[n].v + u_new[n] - states[n].u for n in range(len(states))])
    return list(mix(w_t, stacked))


def slate_round(
    states, shards, w_t: MixingMatrix, cfg: SlateConfig, streams: RngStreams, t: int, pool=None
) -> list[NodeState]:
    _check_round_args(states, shards, w_t)

    def local(n: int) -> np.ndarray:
        rs = draw_batches(
            shards[n],
            cfg.b,
            cfg.m,
            streams.stream(n, t, KIND_POS),
            streams.stream(n, t, KIND_INNER),
            cfg.inner_mode,
        )
        return surrogate.biased_grad(
            states[n].params, shards[n].take(rs.pos), shards[n].take(rs.inner), cfg.surrogate
        )

    u_new = _map(pool, local, range(len(states)))
    v_new = _tracked(states, w_t, cfg, u_new)
    return _consensus_step(states, w_t, cfg.eta, u_new, v_new)


def slatem_init(
    spec: ModelSpec,
    n_nodes: int,
    shards,
    w: MixingMatrix,
    cfg: SlateMConfig,
    streams: RngStreams,
    pool=None,
) -> list[NodeState]:
    """Momentum warm start: u0 averages init_batch anchor gradients over
    one shared inner batch (round-0 draws), v0 gossips u0, and the first
    parameter update is applied immediately."""
    states = slate_init(spec, n_nodes, cfg)
    _check_round_args(states, shards, w)

    def local(n: int) -> np.ndarray:
        rs = draw_batches(
            shards[n],
            cfg.init_batch,
            cfg.m,
            streams.stream(n, 0, KIND_POS),
            streams.stream(n, 0, KIND_INNER),
            cfg.inner_mode,
        )
        return surrogate.biased_grad(
            states[n].params, shards[n].take(rs.pos), shards[n].take(rs.inner), cfg.surrogate
        )

    u0 = _map(pool, local, range(n_nodes))
    v0 = list(mix(w, np.stack(u0)))
    x1 = mix(w, _theta_stack(states)) - cfg.eta * np.stack(v0)
    return [
        NodeState(ModelParams(spec, x1[n]), u0[n], v0[n], u0[n], states[n].params.theta)
        for n in range(n_nodes)
    ]


def slatem_round(
    states, shards, w_t: MixingMatrix, cfg: SlateMConfig, streams: RngStreams, t: int, pool=None
) -> list[NodeState]:
    _check_round_args(states, shards, w_t)

    def local(n: int) -> np.ndarray:
        rs = draw_batches(
            shards[n],
            cfg.b,
            cfg.m,
            streams.stream(n, t, KIND_POS),
            streams.stream(n, t, KIND_INNER),
            cfg.inner_mode,
        )
        pos, inner = shards[n].take(rs.pos), shards[n].take(rs.inner)
        g_now = surrogate.biased_grad(states[n].params, pos, inner, cfg.surrogate)
        if cfg.alpha == 1.0:
            # Momentum term vanishes exactly; skip the stale-gradient pass.
            return g_now
        if states[n].prev_theta is None:
            raise ContractError("momentum round requires the previous iterate")
        prev = ModelParams(states[n].params.spec, states[n].prev_theta)
        g_old = surrogate.biased_grad(prev, pos, inner, cfg.surrogate)
        return g_now + (1.0 - cfg.alpha) * (states[n].u - g_old)

    u_new = _map(pool, local, range(len(states)))
    v_new = _tracked(states, w_t, cfg, u_new)
    return _consensus_step(states, w_t, cfg.eta, u_new, v_new)


def dpsgd_round(
    states,
    shards,
    w_t: MixingMatrix,
    step_size: float,
    batch_size: int,
    streams: RngStreams,
    t: int,
    pool=None,
) -> list[NodeState]:
    """One local SGD step on sigmoid binary cross-entropy, then gossip."""
    _check_round_args(states, shards, w_t)
    if batch_size < 1:
        raise ContractError("batch_size must be >= 1")

    def local(n: int) -> np.ndarray:
        rng = streams.stream(n, t, KIND_SGD)
        sel = rng.choice(shards[n].n, size=batch_size, replace=batch_size > shards[n].n)
        x_b = shards[n].features[sel]
        targets = (shards[n].labels[sel] + 1) / 2.0
        h = model.scores(states[n].params, x_b)
        grad = model.logit_weighted_sum(states[n].params, x_b, (h - targets) / batch_size)
        return states[n].params.theta - step_size * grad

    stepped = np.stack(_map(pool, local, range(len(states))))
    x_next = mix(w_t, stepped)
    spec = states[0].params.spec
    return [
        NodeState(
            ModelParams(spec, x_next[n]),
            states[n].u,
            states[n].v,
            states[n].u_prev,
            states[n].params.theta,
        )
        for n in range(len(states))
    ]


def _check_round_args(states, shards, w_t: MixingMatrix) -> None:
    if not (len(states) == len(shards) == w_t.n):
        raise ContractError(
            f"states ({len(states)}), shards ({len(shards)}), and matrix ({w_t.n}) disagree"
        )
