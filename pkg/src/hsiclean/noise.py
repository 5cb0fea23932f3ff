"""Symmetric label-noise injection and flip counting.

A sample keeps its label with probability 1 - rho; with probability rho it is
relabeled with a class drawn uniformly from the other C - 1 classes (never its
own). One generator is seeded per call and consumed in row order, so output is
fully determined by (labels, rho, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class NoiseSpec:
    rho: float
    seed: int

    def __post_init__(self):
        if not (0.0 <= self.rho <= 1.0):
            raise DataError("noise level rho must lie in [0, 1]")


def apply_label_noise(label_matrix: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Flip each row's label with probability rho; uniform over other classes."""
    y = np.asarray(label_matrix)
    if y.ndim != 2:
        raise DataError("label matrix must be 2-d")
    n, c = y.shape
    row_sums = y.sum(axis=1)
    if not np.all(row_sums == 1):
        raise DataError("every row must carry exactly one label")
    if c < 2 and spec.rho > 0.0:
        raise DataError("need at least two classes to flip labels")

    rng = np.random.default_rng(spec.seed)
    u = rng.random(n)
    flip = u < spec.rho
    out = y.copy()
    if not flip.any():
        return out
    orig = np.argmax(y[flip], axis=1)
    # draw in 0..C-2, then shift past the true class: uniform over the others
    draws = rng.integers(0, c - 1, size=int(flip.sum()))
    targets = draws + (draws >= orig)
    out[flip] = 0
    out[np.flatnonzero(flip), targets] = 1
    return out


def count_flips(label_matrix: np.ndarray, other: np.ndarray) -> int:
    """Number of rows whose argmax class differs between the two matrices."""
    a = np.asarray(label_matrix)
    b = np.asarray(other)
    if a.shape != b.shape:
        raise DataError("label matrices must share a shape")
    return int(np.sum(np.argmax(a, axis=1) != np.argmax(b, axis=1)))
