"""Shared helpers: finite-difference oracle and small dataset builders."""

from __future__ import annotations

import numpy as np
import pytest

from apgossip.data import Dataset
from apgossip.model import ModelParams, ModelSpec


def fd_gradient(objective, spec: ModelSpec, theta: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar objective over theta."""
    grad = np.zeros_like(theta)
    for k in range(theta.size):
        hi = theta.copy()
        lo = theta.copy()
        hi[k] += step
        lo[k] -= step
        grad[k] = (objective(ModelParams(spec, hi)) - objective(ModelParams(spec, lo))) / (2 * step)
    return grad


def rel_err(estimate: np.ndarray, reference: np.ndarray) -> float:
    ref_norm = np.linalg.norm(reference)
    return float(np.linalg.norm(estimate - reference) / max(ref_norm, 1e-12))


def mixed_dataset(rng: np.random.Generator, n: int, dim: int, pos_frac: float = 0.3) -> Dataset:
    """Random features with shuffled labels; both classes present."""
    n_pos = max(1, min(n - 1, int(round(n * pos_frac))))
    labels = np.array([1] * n_pos + [-1] * (n - n_pos))
    rng.shuffle(labels)
    return Dataset(rng.standard_normal((n, dim)), labels)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)
