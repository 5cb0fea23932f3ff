"""Brute-force reference implementations for the test suite.

Everything here favors the most literal formulation available — dense
matrices, explicit double loops, no factorization reuse — so the production
paths can be checked against genuinely independent code. Nothing in the
package imports this module; only tests do. Instance sizes are expected to
stay small (n <= a few hundred).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DataError


def dense_fixed_point(transition: np.ndarray, label_matrix: np.ndarray,
                      alpha: float, iters: int) -> np.ndarray:
    """Iterate ``F <- alpha*T@F + (1-alpha)*Y`` from F = Y, ``iters`` times."""
    t = np.asarray(transition, dtype=np.float64)
    y = np.asarray(label_matrix, dtype=np.float64)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise DataError("transition must be square")
    if y.ndim != 2 or y.shape[0] != t.shape[0]:
        raise DataError("label matrix rows must match the transition size")
    if iters < 1:
        raise DataError("iters must be >= 1")
    anchor = (1.0 - alpha) * y
    scores = y.copy()
    product = np.empty_like(scores)
    for _ in range(iters):
        np.matmul(t, scores, out=product)
        np.multiply(product, alpha, out=product)
        np.add(product, anchor, out=scores)
    return scores


def brute_affinity(spectra: np.ndarray, indices: np.ndarray, segmap) -> np.ndarray:
    """Dense double-loop affinity with the same per-pair float expressions as
    the production builder (lexicographic accumulation order is mandated)."""
    spectra = np.asarray(spectra, dtype=np.float64)
    indices = np.asarray(indices, dtype=np.int64)
    n = spectra.shape[0]
    segment_of = segmap.flat()[indices]

    sigmas = {}
    for segment in np.unique(segment_of):
        members = np.flatnonzero(segment_of == segment)
        total = 0.0
        for i in members:
            for j in members:
                d = float(np.linalg.norm(spectra[i] - spectra[j]))
                total += d * d
        sigma = math.sqrt(total / members.size)
        if sigma <= 1e-12:
            sigma = 1e-12
        sigmas[int(segment)] = sigma

    weights = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if segment_of[i] != segment_of[j]:
                continue
            sigma = sigmas[int(segment_of[i])]
            d = float(np.linalg.norm(spectra[i] - spectra[j]))
            weights[i, j] = math.exp(-(d * d) / (2.0 * sigma * sigma))
    return weights


def mc_flip_stats(n_classes: int, rho: float, trials: int, seed: int):
    """Monte Carlo flip statistics for one true class (class 1, by symmetry).

    Draws the flip decision and target with a permutation of the class list
    minus the true class — a different mechanism than the production
    generator — and returns (empirical flip rate, per-class frequency vector
    indexed 1..C; entry 1, the true class, stays 0).
    """
    if trials < 1:
        raise DataError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    hits = np.zeros(n_classes + 1, dtype=np.int64)
    flips = 0
    for _ in range(trials):
        if rng.random() < rho:
            others = [c for c in rng.permutation(n_classes) + 1 if c != 1]
            hits[others[0]] += 1
            flips += 1
    freq = hits / trials
    return flips / trials, freq
