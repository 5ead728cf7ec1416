"""Ranking surrogate for average precision and its stochastic gradient.

For a positive anchor xi and a comparison sample xi', the squared hinge

    loss(xi, xi') = max(margin - h(z) + h(z'), 0)^2

stands in for the indicator that xi' outranks xi. Averaging the loss
over an inner batch gives two running estimates: g1 (positives only)
and g2 (all samples). The per-anchor objective is -g1/g2, so minimizing
it pushes the positive-rank ratio toward one, and the batch objective is
the anchor average. Because g1, g2 are finite-batch averages inside a
ratio, the natural minibatch gradient is biased; the estimator here is
the exact gradient of the finite-batch objective, whose bias against
the population gradient shrinks as the inner batch grows.

By default the anchor itself is prepended to the inner batch, which
bounds g2 >= margin^2 / batch and keeps the ratio well defined; a
config floor on g2 is a second guard, and clamp activations are counted
on an optional thread-safe counter.
"""

from __future__ import annotations

import dataclasses
import threading
from dataclasses import dataclass, field

import numpy as np

from . import model
from .data import Dataset, Sample
from .errors import ContractError
from .model import ModelParams


class ClampCounter:
    """Thread-safe tally of g2 floor activations."""

    def __init__(self):
        self._total = 0
        self._lock = threading.Lock()

    def add(self, k: int) -> None:
        if k:
            with self._lock:
                self._total += k

    @property
    def total(self) -> int:
        return self._total


@dataclass(frozen=True)
class SurrogateConfig:
    margin: float = 0.1
    g2_floor: float = 1e-12
    include_anchor: bool = True
    clamp_counter: ClampCounter | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.margin <= 0.0:
            raise ContractError("margin must be > 0")
        if not 0.0 < self.g2_floor <= self.margin**2:
            raise ContractError("g2_floor must be in (0, margin^2]")


@dataclass(frozen=True)
class InnerEstimate:
    g1: float
    g2: float
    clamped: bool = False


def pair_loss(h_anchor: float, h_other: float, margin: float) -> float:
    return max(margin - h_anchor + h_other, 0.0) ** 2


def surrogate_value(est: InnerEstimate) -> float:
    return -est.g1 / est.g2


def _pair_matrices(params: ModelParams, pos: Dataset, inner: Dataset, cfg: SurrogateConfig):
    """Hinge and loss matrices over (anchor, inner) pairs, plus g1/g2.

    Shapes: hinge and loss are (b, m) over the drawn inner batch only;
    the optional anchor self-pair enters g1/g2 as a constant margin^2
    term (its loss gradient is identically zero, so it never appears in
    the gradient sums).
    """
    h_pos = model.scores(params, pos.features)
    h_inn = model.scores(params, inner.features)
    hinge = np.maximum(cfg.margin - h_pos[:, None] + h_inn[None, :], 0.0)
    loss = hinge**2
    ipos = (inner.labels == 1).astype(np.float64)
    m_eff = inner.n + (1 if cfg.include_anchor else 0)
    self_term = cfg.margin**2 if cfg.include_anchor else 0.0
    g1 = (loss @ ipos + self_term) / m_eff
    g2_raw = (loss.sum(axis=1) + self_term) / m_eff
    g2 = np.maximum(g2_raw, cfg.g2_floor)
    n_clamped = int(np.count_nonzero(g2_raw < cfg.g2_floor))
    if cfg.clamp_counter is not None:
        cfg.clamp_counter.add(n_clamped)
    return hinge, ipos, m_eff, g1, g2, n_clamped


def _as_positive_batch(pos: Dataset) -> Dataset:
    if pos.n == 0:
        raise ContractError("anchor batch is empty")
    if not np.all(pos.labels == 1):
        raise ContractError("anchor batch contains non-positive samples")
    return pos


def inner_estimates(
    params: ModelParams, anchor: Sample, inner: Dataset, cfg: SurrogateConfig
) -> InnerEstimate:
    """g1/g2 for one anchor over an inner batch (anchor prepended when
    cfg.include_anchor)."""
    if anchor.label != 1:
        raise ContractError("anchor must be a positive sample")
    if inner.n == 0:
        raise ContractError("inner batch is empty")
    pos = Dataset(anchor.features.reshape(1, -1), np.array([1]))
    _, _, _, g1, g2, n_clamped = _pair_matrices(params, pos, inner, cfg)
    return InnerEstimate(float(g1[0]), float(g2[0]), clamped=n_clamped > 0)


def batch_objective(
    params: ModelParams, pos: Dataset, inner: Dataset, cfg: SurrogateConfig
) -> float:
    """Mean over anchors of -g1/g2; always in [-1, 0]."""
    pos = _as_positive_batch(pos)
    if inner.n == 0:
        raise ContractError("inner batch is empty")
    _, _, _, g1, g2, _ = _pair_matrices(params, pos, inner, cfg)
    return float(np.mean(-g1 / g2))


def biased_grad(
    params: ModelParams, pos: Dataset, inner: Dataset, cfg: SurrogateConfig
) -> np.ndarray:
    """Gradient of batch_objective at params (exact while the g2 floor
    is inactive).

    Each (anchor i, inner j) pair contributes

        (g1_i - g2_i * I[y_j = +1]) / g2_i^2 * dloss_ij / dtheta

    scaled by 1 / (b * m_eff), with dloss = 2 * hinge * (dh_j - dh_i).
    The double sum collapses into two weighted score-gradient sums, one
    over the inner batch and one over the anchors.
    """
    pos = _as_positive_batch(pos)
    if inner.n == 0:
        raise ContractError("inner batch is empty")
    hinge, ipos, m_eff, g1, g2, _ = _pair_matrices(params, pos, inner, cfg)
    coeff = (g1[:, None] - g2[:, None] * ipos[None, :]) / g2[:, None] ** 2
    c = coeff * (2.0 * hinge) / (pos.n * m_eff)
    w_inner = c.sum(axis=0)
    w_anchor = -c.sum(axis=1)
    return model.grad_weighted_sum(params, inner.features, w_inner) + model.grad_weighted_sum(
        params, pos.features, w_anchor
    )


def full_grad(params: ModelParams, ds: Dataset, cfg: SurrogateConfig) -> np.ndarray:
    """Gradient of the finite-sum objective: every positive is an anchor
    and the inner batch is the whole dataset (the anchor is already a
    member, so no extra anchor injection)."""
    if ds.n_pos == 0:
        raise ContractError("dataset has no positives")
    finite_cfg = dataclasses.replace(cfg, include_anchor=False)
    return biased_grad(params, ds.take(ds.positive_indices), ds, finite_cfg)


def full_objective(params: ModelParams, ds: Dataset, cfg: SurrogateConfig) -> float:
    """Finite-sum objective matching full_grad."""
    if ds.n_pos == 0:
        raise ContractError("dataset has no positives")
    finite_cfg = dataclasses.replace(cfg, include_anchor=False)
    return batch_objective(params, ds.take(ds.positive_indices), ds, finite_cfg)
