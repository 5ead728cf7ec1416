"""Dataset handling: LIBSVM parsing, synthetic generation, imbalancing,
feature scaling, and partitioning across worker nodes.

Datasets are dense: rows are float64 feature vectors with labels in
{-1, +1}. Sparse LIBSVM input is densified on load; everything in scope
is small enough that dense storage keeps the gradient code simple.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ConfigError, ContractError, ParseError


class Sample(NamedTuple):
    features: np.ndarray
    label: int


@dataclass(frozen=True)
class Dataset:
    """Labeled feature vectors; ``features`` is (n, dim), ``labels`` is (n,)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        features = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if features.ndim != 2:
            raise ContractError("features must be a 2-D array")
        if features.shape[0] != labels.shape[0]:
            raise ContractError("features and labels disagree on sample count")
        if labels.size and not np.all(np.isin(labels, (-1, 1))):
            raise ContractError("labels must be -1 or +1")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @cached_property
    def positive_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 1)

    @property
    def n_pos(self) -> int:
        return int(self.positive_indices.size)

    def sample(self, i: int) -> Sample:
        return Sample(self.features[i], int(self.labels[i]))

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx])

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class Partition:
    """Disjoint shards of sample indices covering a parent dataset."""

    shards: list = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return len(self.shards)


def parse_libsvm(text: str | Iterable[str]) -> Dataset:
    """Parse LIBSVM-format text into a dense Dataset.

    Each nonempty line is ``<label> <idx>:<val> ...`` with 1-based,
    strictly ascending indices. Labels 0 map to -1. The dataset dim is
    the largest index seen; unlisted coordinates are 0.
    """
    lines = text.splitlines() if isinstance(text, str) else text
    rows: list[list[tuple[int, float]]] = []
    labels: list[int] = []
    max_index = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        try:
            label_value = float(parts[0])
        except ValueError:
            raise ParseError(f"line {lineno}: label {parts[0]!r} is not numeric") from None
        if label_value not in (1.0, -1.0, 0.0):
            raise ParseError(f"line {lineno}: label must be +1, 1, -1, or 0")
        row: list[tuple[int, float]] = []
        prev_index = 0
        for token in parts[1:]:
            idx_str, sep, val_str = token.partition(":")
            if not sep:
                raise ParseError(f"line {lineno}: malformed feature {token!r}")
            try:
                idx = int(idx_str)
                val = float(val_str)
            except ValueError:
                raise ParseError(f"line {lineno}: malformed feature {token!r}") from None
            if idx < 1:
                raise ParseError(f"line {lineno}: feature index {idx} is not 1-based")
            if idx <= prev_index:
                raise ParseError(f"line {lineno}: feature indices must be ascending")
            prev_index = idx
            row.append((idx, val))
        max_index = max(max_index, prev_index)
        labels.append(1 if label_value == 1.0 else -1)
        rows.append(row)
    features = np.zeros((len(rows), max_index), dtype=np.float64)
    for i, row in enumerate(rows):
        for idx, val in row:
            features[i, idx - 1] = val
    return Dataset(features, np.asarray(labels, dtype=np.int64))


def load_libsvm(path: str) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_libsvm(fh)


def serialize_libsvm(ds: Dataset) -> str:
    """Render a Dataset back to LIBSVM text; zeros are omitted.

    Values use repr so that parse_libsvm(serialize_libsvm(ds)) restores
    the exact floats.
    """
    out = []
    for i in range(ds.n):
        row = ds.features[i]
        nz = np.flatnonzero(row)
        fields = ["+1" if ds.labels[i] == 1 else "-1"]
        fields.extend(f"{j + 1}:{float(row[j])!r}" for j in nz)
        out.append(" ".join(fields))
    return "\n".join(out) + ("\n" if out else "")


def gen_synthetic(n: int, dim: int, pos_frac: float, separation: float, seed: int) -> Dataset:
    """Two isotropic Gaussians at +/- separation/sqrt(dim) per coordinate.

    The positive count is round(n * pos_frac) clamped to [1, n-1].
    Positives come first, then negatives; callers that need a shuffled
    order shuffle downstream.
    """
    if n < 2:
        raise ContractError("n must be >= 2")
    if dim < 1:
        raise ContractError("dim must be >= 1")
    if not 0.0 < pos_frac < 1.0:
        raise ContractError("pos_frac must be in (0, 1)")
    if separation < 0.0:
        raise ContractError("separation must be >= 0")
    n_pos = int(round(n * pos_frac))
    n_pos = min(max(n_pos, 1), n - 1)
    shift = separation / np.sqrt(dim)
    rng = np.random.default_rng(seed)
    pos = rng.standard_normal((n_pos, dim)) + shift
    neg = rng.standard_normal((n - n_pos, dim)) - shift
    features = np.concatenate([pos, neg], axis=0)
    labels = np.concatenate([np.ones(n_pos, dtype=np.int64), -np.ones(n - n_pos, dtype=np.int64)])
    return Dataset(features, labels)


def drop_positives(ds: Dataset, drop_frac: float, seed: int) -> Dataset:
    """Uniformly remove round(drop_frac * P) positives, always keeping >= 1."""
    if not 0.0 <= drop_frac < 1.0:
        raise ContractError("drop_frac must be in [0, 1)")
    pos = ds.positive_indices
    if pos.size == 0:
        raise ContractError("dataset has no positives")
    n_drop = int(round(drop_frac * pos.size))
    n_drop = min(n_drop, pos.size - 1)
    if n_drop == 0:
        return ds
    rng = np.random.default_rng(seed)
    dropped = rng.choice(pos, size=n_drop, replace=False)
    keep = np.ones(ds.n, dtype=bool)
    keep[dropped] = False
    return Dataset(ds.features[keep], ds.labels[keep])


def fit_minmax(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate (min, span) of a nonempty dataset."""
    if ds.n == 0:
        raise ContractError("cannot fit a scaler on an empty dataset")
    lo = ds.features.min(axis=0)
    span = ds.features.max(axis=0) - lo
    return lo, span


def apply_minmax(ds: Dataset, lo: np.ndarray, span: np.ndarray) -> Dataset:
    """Apply a fitted min-max transform; constant coordinates map to 0."""
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (ds.features - lo) / safe, 0.0)
    return Dataset(scaled, ds.labels)


def scale_features(ds: Dataset) -> Dataset:
    """Min-max scale each coordinate to [0, 1]; constant columns become 0."""
    lo, span = fit_minmax(ds)
    return apply_minmax(ds, lo, span)


def partition(ds: Dataset, n_nodes: int, scheme: str, seed: int) -> Partition:
    """Split a dataset into per-node shards of sample indices.

    ``iid``: global shuffle then round-robin. ``label_skew``: sort by
    label (positives first) and split contiguously. Either way, a repair
    pass moves one random positive into any shard left without one, so
    every node can draw positive anchors.
    """
    if n_nodes < 1:
        raise ConfigError("n_nodes must be >= 1")
    if scheme not in ("iid", "label_skew"):
        raise ConfigError(f"unknown partition scheme {scheme!r}")
    if ds.n_pos < n_nodes:
        raise ConfigError(
            f"need at least one positive per node: {ds.n_pos} positives for {n_nodes} nodes"
        )
    rng = np.random.default_rng(seed)
    if scheme == "iid":
        perm = rng.permutation(ds.n)
        shards = [perm[i::n_nodes].copy() for i in range(n_nodes)]
    else:
        order = np.argsort(-ds.labels, kind="stable")
        base, rem = divmod(ds.n, n_nodes)
        shards = []
        start = 0
        for i in range(n_nodes):
            size = base + (1 if i < rem else 0)
            shards.append(order[start : start + size].copy())
            start += size
    _repair_positives(ds, shards, rng)
    return Partition(shards)


def _repair_positives(ds: Dataset, shards: list, rng: np.random.Generator) -> None:
    pos_mask = ds.labels == 1
    counts = [int(pos_mask[s].sum()) for s in shards]
    for i, count in enumerate(counts):
        if count > 0:
            continue
        donors = [j for j, c in enumerate(counts) if c >= 2]
        # Feasible whenever total positives >= n_nodes.
        donor = donors[int(rng.integers(len(donors)))]
        donor_pos = shards[donor][pos_mask[shards[donor]]]
        moved = int(donor_pos[int(rng.integers(donor_pos.size))])
        shards[donor] = shards[donor][shards[donor] != moved]
        shards[i] = np.append(shards[i], moved)
        counts[donor] -= 1
        counts[i] += 1


def dataset_stats(ds: Dataset) -> dict:
    n_pos = ds.n_pos
    return {
        "n": ds.n,
        "dim": ds.dim,
        "positives": n_pos,
        "pos_frac": (n_pos / ds.n) if ds.n else 0.0,
    }
