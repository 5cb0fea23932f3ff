"""Label propagation on block transition matrices and the cleansing ensemble.

Diffusion update: ``F <- alpha * T @ F + (1 - alpha) * Y`` with the noisy
one-hot labels as the anchor term. For alpha < 1 the iteration contracts at
rate alpha, and its fixed point ``F* = (1 - alpha) * (I - alpha*T)^-1 @ Y`` is
computed exactly block by block; each superpixel block is factorized once and
reused across solves.

``rlpa_cleanse`` runs the full ensemble: in each round a random eta-fraction of
samples keeps its (noisy) label and the rest are zeroed, labels diffuse to the
fixed point, and each sample records the argmax class. The per-sample majority
over all rounds, anchored on the original label for ties, is the cleansed
label. Rounds use seeds spawned from the master seed, so results are identical
for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .datacube import argmax_labels
from .errors import DataError
from .graph import TransitionMatrix

RESIDUAL_TOL = 1e-10

_FALLBACKS = ("keep-original", "lowest-class")


@dataclass(frozen=True)
class RlpaConfig:
    """Knobs for the cleansing ensemble.

    eta is the fraction of samples kept as labeled seeds per round, alpha the
    diffusion retention weight, rounds the ensemble size. ``fallback`` picks
    the label for samples that receive no mass in a round (their block held no
    seeds): keep the sample's original label, or fall back to class 1.
    """

    eta: float = 0.7
    alpha: float = 0.9
    rounds: int = 100
    seed: int = 0
    fallback: str = "keep-original"

    def __post_init__(self):
        if not (0.0 < self.eta <= 1.0):
            raise DataError("eta must lie in (0, 1]")
        if not (0.0 < self.alpha < 1.0):
            raise DataError("alpha must lie strictly between 0 and 1")
        if self.rounds < 1:
            raise DataError("rounds must be >= 1")
        if self.fallback not in _FALLBACKS:
            raise DataError(f"fallback must be one of {_FALLBACKS}")


class BlockSolver:
    """Prefactored per-block solver for (I - alpha*T) F = (1 - alpha) Y."""

    def __init__(self, transition: TransitionMatrix, alpha: float):
        if not (0.0 <= alpha < 1.0):
            raise ValueError("alpha must lie in [0, 1)")
        self.transition = transition
        self.alpha = alpha
        self._factors = []
        for block in transition.blocks:
            system = np.eye(block.nodes.size) - alpha * block.matrix
            self._factors.append((block.nodes, block.matrix, lu_factor(system)))

    def solve(self, label_matrix: np.ndarray) -> np.ndarray:
        y = np.asarray(label_matrix, dtype=np.float64)
        if y.ndim != 2 or y.shape[0] != self.transition.n_nodes:
            raise DataError("label matrix rows must match the graph nodes")
        scores = np.zeros_like(y)
        anchor = (1.0 - self.alpha) * y
        for nodes, matrix, factor in self._factors:
            rhs = anchor[nodes]
            block_scores = lu_solve(factor, rhs)
            residual = np.abs(self.alpha * (matrix @ block_scores) + rhs - block_scores)
            if residual.size and residual.max() > RESIDUAL_TOL:
                raise ArithmeticError(
                    f"propagation solve residual {residual.max():.3e} exceeds {RESIDUAL_TOL:.0e}")
            block_scores[block_scores < 0.0] = 0.0  # round-off only; exact result is >= 0
            scores[nodes] = block_scores
        return scores


def propagate_closed(transition: TransitionMatrix, label_matrix: np.ndarray,
                     alpha: float) -> np.ndarray:
    """Fixed point of the diffusion update, solved exactly per block."""
    return BlockSolver(transition, alpha).solve(label_matrix)


def propagate_iterative(transition: TransitionMatrix, label_matrix: np.ndarray,
                        alpha: float, tol: float = 1e-12,
                        max_iters: int = 10000) -> tuple[np.ndarray, bool]:
    """Diffuse until the max-norm step falls below ``tol``.

    Returns the final scores and a convergence flag; with alpha < 1 the flag
    can only be False when max_iters is too small.
    """
    if not (0.0 <= alpha < 1.0):
        raise ValueError("alpha must lie in [0, 1)")
    y = np.asarray(label_matrix, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] != transition.n_nodes:
        raise DataError("label matrix rows must match the graph nodes")
    scores = y.copy()
    anchor = (1.0 - alpha) * y
    for _ in range(max_iters):
        delta = 0.0
        for block in transition.blocks:
            updated = alpha * (block.matrix @ scores[block.nodes]) + anchor[block.nodes]
            step = np.abs(updated - scores[block.nodes])
            if step.size:
                delta = max(delta, float(step.max()))
            scores[block.nodes] = updated
        if delta <= tol:
            return scores, True
    return scores, False


def assign_labels(scores: np.ndarray, fallback_labels: np.ndarray | None = None) -> np.ndarray:
    """Per-row argmax class (1-based).

    Rows that tie resolve toward the row's fallback label when it attains the
    maximum, otherwise toward the lowest class. All-zero rows (no mass reached
    the sample) take the fallback label, or class 1 when none is given.
    """
    scores = np.asarray(scores)
    if scores.ndim != 2:
        raise DataError("score matrix must be 2-d")
    n = scores.shape[0]
    top = scores.max(axis=1)
    is_mode = scores == top[:, None]
    labels = np.argmax(is_mode, axis=1) + 1
    if fallback_labels is not None:
        fallback_labels = np.asarray(fallback_labels, dtype=np.int64)
        if fallback_labels.shape != (n,):
            raise DataError("fallback labels must hold one class per row")
        if fallback_labels.min() < 1 or fallback_labels.max() > scores.shape[1]:
            raise DataError("fallback labels must lie in 1..n_classes")
        anchored = is_mode[np.arange(n), fallback_labels - 1]
        labels = np.where(anchored, fallback_labels, labels)
    return labels


def majority_vote(votes, original: int) -> int:
    """Most frequent label; ties resolve to ``original`` when it is a mode,
    otherwise to the lowest class."""
    votes = np.asarray(votes, dtype=np.int64)
    if votes.size == 0:
        raise DataError("majority_vote needs at least one vote")
    counts = np.bincount(votes)
    top = counts.max()
    if original < counts.size and counts[original] == top:
        return int(original)
    return int(np.argmax(counts == top))


def _fuse_votes(counts: np.ndarray, original: np.ndarray) -> np.ndarray:
    top = counts.max(axis=1)
    is_mode = counts == top[:, None]
    anchored = is_mode[np.arange(counts.shape[0]), original - 1]
    lowest = np.argmax(is_mode, axis=1) + 1
    return np.where(anchored, original, lowest)


@dataclass
class CleanseDiagnostics:
    """Noisy-label counts per round against a clean reference, when given.

    ``per_round_noisy[s]`` counts disagreements of round s's labels with the
    reference; ``cumulative_noisy[s]`` counts them for the majority vote over
    rounds 1..s. Both stay None without a reference.
    """

    rounds: int
    per_round_noisy: list[int] | None = None
    cumulative_noisy: list[int] | None = None
    round_labels: np.ndarray | None = field(default=None, repr=False)

    def to_csv(self) -> str:
        if self.per_round_noisy is None or self.cumulative_noisy is None:
            raise DataError("diagnostics were collected without a clean reference")
        lines = ["round,noisy_cumulative,noisy_round"]
        for s in range(self.rounds):
            lines.append(f"{s + 1},{self.cumulative_noisy[s]},{self.per_round_noisy[s]}")
        return "\n".join(lines) + "\n"


def rlpa_cleanse(noisy_labels: np.ndarray, transition: TransitionMatrix,
                 config: RlpaConfig, clean_labels: np.ndarray | None = None,
                 workers: int = 1) -> tuple[np.ndarray, CleanseDiagnostics]:
    """Ensemble label cleansing over a block transition matrix.

    Parameters
    ----------
    noisy_labels : (n, C) one-hot matrix
        The observed training labels; every row must be labeled.
    transition : TransitionMatrix
        Built over exactly these n samples.
    config : RlpaConfig
    clean_labels : optional (n,) class ids
        When given, diagnostics record per-round and cumulative-vote noisy
        counts against this reference.
    workers : int
        Rounds run in a thread pool of this size; the output is identical for
        any value.

    Returns
    -------
    (labels, diagnostics) : cleansed class ids (1-based) and round diagnostics.
    """
    y = np.asarray(noisy_labels, dtype=np.float64)
    if y.ndim != 2:
        raise DataError("noisy labels must form a 2-d one-hot matrix")
    n, n_classes = y.shape
    if transition.n_nodes != n:
        raise DataError("transition matrix was built over a different sample set")
    if not np.all(y.sum(axis=1) == 1):
        raise DataError("every training sample must carry a label")
    n_seed = int(np.floor(n * config.eta + 0.5))
    if n_seed == 0:
        raise DataError("eta keeps zero samples labeled; increase eta or n")
    n_seed = min(n_seed, n)

    original = argmax_labels(y)
    fallback = original if config.fallback == "keep-original" else None
    solver = BlockSolver(transition, config.alpha)
    seeds = np.random.SeedSequence(config.seed).spawn(config.rounds)

    def run_round(s: int) -> np.ndarray:
        rng = np.random.default_rng(seeds[s])
        keep = rng.permutation(n)[:n_seed]
        round_y = np.zeros_like(y)
        round_y[keep] = y[keep]
        scores = solver.solve(round_y)
        return assign_labels(scores, fallback)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            round_labels = list(pool.map(run_round, range(config.rounds)))
    else:
        round_labels = [run_round(s) for s in range(config.rounds)]

    counts = np.zeros((n, n_classes), dtype=np.int64)
    diagnostics = CleanseDiagnostics(config.rounds)
    if clean_labels is not None:
        clean_labels = np.asarray(clean_labels, dtype=np.int64)
        if clean_labels.shape != (n,):
            raise DataError("clean reference must hold one class per sample")
        diagnostics.per_round_noisy = []
        diagnostics.cumulative_noisy = []
    for labels in round_labels:
        counts[np.arange(n), labels - 1] += 1
        if clean_labels is not None:
            diagnostics.per_round_noisy.append(int(np.sum(labels != clean_labels)))
            fused = _fuse_votes(counts, original)
            diagnostics.cumulative_noisy.append(int(np.sum(fused != clean_labels)))
    diagnostics.round_labels = np.stack(round_labels)
    return _fuse_votes(counts, original), diagnostics
