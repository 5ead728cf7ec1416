"""Doubly stochastic mixing matrices, schedules, and the gossip operator.

A mixing matrix encodes which nodes average with which neighbors each
round: symmetric, nonnegative, rows (hence columns) summing to one. The
contraction factor of a matrix is the spectral norm of W - J, where J
is the exact-averaging matrix; smaller means faster consensus. Swapping
the matrix converts the same round loop between decentralized (ring),
distributed (complete), and federated (periodic averaging) training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericalError, ParseError, ValidationError


@dataclass(frozen=True)
class MixingMatrix:
    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValidationError("mixing matrix must be square")
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    def validate(self, tol: float = 1e-9) -> None:
        w = self.w
        for i in range(self.n):
            if np.any(w[i] < -tol):
                raise ValidationError(f"row {i}: negative entry")
            if abs(w[i].sum() - 1.0) > tol:
                raise ValidationError(f"row {i}: sums to {w[i].sum()!r}, not 1")
            bad = np.flatnonzero(np.abs(w[i] - w[:, i]) > tol)
            if bad.size:
                raise ValidationError(f"row {i}: asymmetric at column {bad[0]}")


def complete(n: int) -> MixingMatrix:
    if n < 1:
        raise ContractError("n must be >= 1")
    return MixingMatrix(np.full((n, n), 1.0 / n))


def identity(n: int) -> MixingMatrix:
    if n < 1:
        raise ContractError("n must be >= 1")
    return MixingMatrix(np.eye(n))


def ring(n: int) -> MixingMatrix:
    """Circulant with 1/3 on the diagonal and both neighbors; n of 1 or 2
    falls back to complete(n)."""
    if n < 1:
        raise ContractError("n must be >= 1")
    if n < 3:
        return complete(n)
    w = np.zeros((n, n))
    for i in range(n):
        w[i, i] += 1.0 / 3.0
        w[i, (i + 1) % n] += 1.0 / 3.0
        w[i, (i - 1) % n] += 1.0 / 3.0
    return MixingMatrix(w)


def from_file(path: str) -> MixingMatrix:
    """Load n rows of n decimals and validate at tolerance 1e-9."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                rows.append([float(v) for v in line.split()])
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: non-numeric entry") from None
    if not rows:
        raise ParseError(f"{path}: empty matrix file")
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise ParseError(f"{path}: expected {n} columns per row")
    mat = MixingMatrix(np.array(rows))
    mat.validate(tol=1e-9)
    return mat


def save_matrix(mat: MixingMatrix, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in mat.w:
            fh.write(" ".join(repr(v) for v in row.tolist()) + "\n")


@dataclass(frozen=True)
class TopologySchedule:
    """Static matrix, or a federated schedule: averaging every q rounds,
    identity otherwise."""

    kind: str
    matrix: MixingMatrix | None = None
    n: int = 0
    period: int = 1

    def __post_init__(self):
        if self.kind not in ("static", "federated"):
            raise ContractError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "static" and self.matrix is None:
            raise ContractError("static schedule needs a matrix")
        if self.kind == "federated":
            if self.n < 1:
                raise ContractError("federated schedule needs n >= 1")
            if self.period < 1:
                raise ContractError("period must be >= 1")

    @property
    def n_nodes(self) -> int:
        return self.matrix.n if self.kind == "static" else self.n


def static_schedule(mat: MixingMatrix) -> TopologySchedule:
    return TopologySchedule("static", matrix=mat)


def federated_schedule(n: int, period_q: int) -> TopologySchedule:
    return TopologySchedule("federated", n=n, period=period_q)


def schedule_at(schedule: TopologySchedule, t: int) -> MixingMatrix:
    if t < 0:
        raise ContractError("round index must be >= 0")
    if schedule.kind == "static":
        return schedule.matrix
    if (t + 1) % schedule.period == 0:
        return complete(schedule.n)
    return identity(schedule.n)


def spectral_gap(mat: MixingMatrix, rel_tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Spectral norm of W - J by power iteration on (W - J)^T (W - J)."""
    n = mat.n
    a = mat.w - 1.0 / n
    b = a.T @ a
    rng = np.random.default_rng(0x5EED)
    y = rng.standard_normal(n)
    norm = np.linalg.norm(y)
    y /= norm
    prev = np.inf
    for _ in range(max_iter):
        z = b @ y
        norm = np.linalg.norm(z)
        if norm == 0.0:
            return 0.0
        y = z / norm
        if abs(norm - prev) <= rel_tol * max(norm, 1e-300):
            return min(float(np.sqrt(norm)), 1.0)
        prev = norm
    raise NumericalError(
        f"power iteration did not converge in {max_iter} iterations; last iterate {np.sqrt(norm)!r}"
    )


def mix(mat: MixingMatrix, vectors: np.ndarray) -> np.ndarray:
    """Gossip step: output_i = sum_r w[i, r] * vectors[r]."""
    v = np.asarray(vectors, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] != mat.n:
        raise ContractError(f"expected {mat.n} stacked vectors, got shape {v.shape}")
    return mat.w @ v
