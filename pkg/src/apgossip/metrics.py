"""Ranking metrics (exact average precision, PR curves) and consensus
diagnostics.

Average precision is the mean over positive samples of r+/r, where r
counts the samples scoring no less than the anchor (itself included)
and r+ counts the positives among them. Ties are handled exactly by
that >= rule, so scores with duplicates are well defined; this estimator
coincides with step-interpolated AP when scores are distinct.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ContractError
from .model import ModelParams, scores


@dataclass(frozen=True)
class ScoredSet:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        y = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if s.shape[0] != y.shape[0] or s.shape[0] == 0:
            raise ContractError("scores and labels must be equal-length and nonempty")
        if not np.all(np.isin(y, (-1, 1))):
            raise ContractError("labels must be -1 or +1")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.scores.shape[0]


def _rank_counts(ss: ScoredSet):
    """Per-sample (r, r+) under the >= tie rule, in descending-score order."""
    order = np.argsort(-ss.scores, kind="stable")
    s_sorted = ss.scores[order]
    pos_sorted = ss.labels[order] == 1
    n = ss.n
    is_group_end = np.empty(n, dtype=bool)
    is_group_end[:-1] = s_sorted[:-1] != s_sorted[1:]
    is_group_end[-1] = True
    ends = np.flatnonzero(is_group_end)
    cum_pos = np.cumsum(pos_sorted)
    group_of = np.searchsorted(ends, np.arange(n))
    r_all = ends[group_of] + 1
    rp_all = cum_pos[ends[group_of]]
    return pos_sorted, r_all, rp_all, ends, cum_pos


def average_precision(ss: ScoredSet) -> float:
    pos_sorted, r_all, rp_all, _, _ = _rank_counts(ss)
    if not pos_sorted.any():
        raise ContractError("average precision needs at least one positive")
    ratios = rp_all[pos_sorted] / r_all[pos_sorted]
    # fsum: the mean is then exactly rounded and independent of the order
    # the positives were visited in.
    return math.fsum(ratios) / ratios.size


def pr_curve(ss: ScoredSet) -> np.ndarray:
    """(recall, precision) rows, one per distinct threshold, recall increasing."""
    pos_sorted, _, _, ends, cum_pos = _rank_counts(ss)
    n_pos = int(pos_sorted.sum())
    if n_pos == 0:
        raise ContractError("pr_curve needs at least one positive")
    tp = cum_pos[ends].astype(np.float64)
    predicted = (ends + 1).astype(np.float64)
    return np.column_stack([tp / n_pos, tp / predicted])


def pr_curve_csv(curve: np.ndarray) -> str:
    """Two-column CSV rendering of a pr_curve result."""
    lines = ["recall,precision"]
    lines += [f"{float(r)!r},{float(p)!r}" for r, p in curve]
    return "\n".join(lines) + "\n"


def consensus_error(param_vectors) -> float:
    """Sum over nodes of the squared distance to the node average."""
    stack = np.asarray(param_vectors, dtype=np.float64)
    if stack.ndim != 2 or stack.shape[0] < 1:
        raise ContractError("expected a nonempty stack of parameter vectors")
    # Shift by the first node before centering: translation-invariant,
    # and exactly zero when all nodes agree bitwise.
    shifted = stack - stack[0]
    centered = shifted - shifted.mean(axis=0)
    return float(np.sum(centered**2))


def evaluate(params: ModelParams, test: Dataset) -> dict:
    """Score a test set and report its average precision."""
    if test.n_pos == 0:
        raise ContractError("test set has no positives")
    ss = ScoredSet(scores(params, test.features), test.labels)
    return {"ap": average_precision(ss), "n_pos": test.n_pos, "n": test.n}
