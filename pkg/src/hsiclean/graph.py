"""Superpixel-constrained affinity graphs and column-stochastic transition matrices.

Graph nodes are the training samples. Two samples are connected only when they
fall in the same superpixel; the edge weight is a Gaussian of their spectral
distance with a region-adaptive bandwidth, so the graph is block-diagonal under
the superpixel grouping and label mass can never cross a segment boundary. The
spectral-only variant drops the spatial constraint and connects mutual
k-nearest neighbors instead; it is kept for ablation comparisons.

Per-pair weights are accumulated with plain scalar arithmetic in a fixed
lexicographic order so an independent dense reimplementation can reproduce
them bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataError
from .segmentation import SuperpixelMap

SIGMA_FLOOR = 1e-12
COLUMN_SUM_TOL = 1e-12


@dataclass(frozen=True)
class GraphBlock:
    """One superpixel block: global node ids plus their dense weight matrix."""

    segment: int
    nodes: np.ndarray
    matrix: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.int64)
        matrix = np.asarray(self.matrix, dtype=np.float64)
        if matrix.shape != (nodes.size, nodes.size):
            raise DataError("block matrix shape must match its node count")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "matrix", matrix)


@dataclass(frozen=True)
class SparseAffinity:
    """Symmetric affinity weights grouped by superpixel block."""

    n_nodes: int
    blocks: tuple[GraphBlock, ...]

    def __post_init__(self):
        seen = np.concatenate([b.nodes for b in self.blocks]) if self.blocks else np.array([], dtype=np.int64)
        if seen.size != self.n_nodes or np.unique(seen).size != self.n_nodes:
            raise DataError("blocks must partition the node set")
        for block in self.blocks:
            m = block.matrix
            if not np.all(np.diag(m) == 1.0):
                raise DataError("affinity diagonal entries must equal 1")
            nz = m[m != 0.0]
            if nz.size and (nz.min() <= 0.0 or nz.max() > 1.0):
                raise DataError("affinity weights must lie in (0, 1]")

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_nodes, self.n_nodes))
        for block in self.blocks:
            out[np.ix_(block.nodes, block.nodes)] = block.matrix
        return out


@dataclass(frozen=True)
class TransitionMatrix:
    """Column-stochastic jump probabilities with the affinity's block structure."""

    n_nodes: int
    blocks: tuple[GraphBlock, ...]

    def __post_init__(self):
        seen = np.concatenate([b.nodes for b in self.blocks]) if self.blocks else np.array([], dtype=np.int64)
        if seen.size != self.n_nodes or np.unique(seen).size != self.n_nodes:
            raise DataError("blocks must partition the node set")
        for block in self.blocks:
            m = block.matrix
            if m.size and m.min() < 0.0:
                raise DataError("transition entries must be non-negative")
            dev = np.abs(m.sum(axis=0) - 1.0)
            if m.size and dev.max() > COLUMN_SUM_TOL:
                raise DataError("transition columns must sum to 1")

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_nodes, self.n_nodes))
        for block in self.blocks:
            out[np.ix_(block.nodes, block.nodes)] = block.matrix
        return out


def spectral_distance(a, b) -> float:
    """Euclidean distance between two spectra."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError("spectra must share a length")
    return float(np.linalg.norm(a - b))


def region_sigma(spectra) -> float:
    """Region-adaptive Gaussian bandwidth for one segment's sample spectra.

    Square root of the squared pairwise distances summed over all ordered
    pairs (the i = j terms contribute zero) divided by the sample count,
    floored at SIGMA_FLOOR so zero-variance segments stay well-defined.
    """
    spectra = np.asarray(spectra, dtype=np.float64)
    if spectra.ndim != 2 or spectra.shape[0] == 0:
        raise DataError("region_sigma needs a non-empty (m, bands) array")
    m = spectra.shape[0]
    total = 0.0
    for i in range(m):
        for j in range(m):
            d = float(np.linalg.norm(spectra[i] - spectra[j]))
            total += d * d
    sigma = math.sqrt(total / m)
    return sigma if sigma > SIGMA_FLOOR else SIGMA_FLOOR


def build_affinity(spectra, indices, segmap: SuperpixelMap) -> SparseAffinity:
    """Superpixel-constrained Gaussian affinity over the given samples.

    Parameters
    ----------
    spectra : (n, bands) array
        Sample spectra, one row per graph node.
    indices : (n,) int array
        Flat pixel index of each sample inside ``segmap``.
    segmap : SuperpixelMap
        Segmentation of the full image; samples sharing a segment form a block.
    """
    spectra = np.asarray(spectra, dtype=np.float64)
    indices = np.asarray(indices, dtype=np.int64)
    if spectra.ndim != 2 or spectra.shape[0] != indices.size:
        raise DataError("spectra and indices must describe the same samples")
    n_pixels = segmap.height * segmap.width
    if indices.size and (indices.min() < 0 or indices.max() >= n_pixels):
        raise DataError("sample index outside the segmented image")

    segment_of = segmap.flat()[indices]
    blocks = []
    for segment in np.unique(segment_of):
        nodes = np.flatnonzero(segment_of == segment)
        block_spectra = spectra[nodes]
        sigma = region_sigma(block_spectra)
        m = nodes.size
        weights = np.empty((m, m))
        for i in range(m):
            weights[i, i] = 1.0
            for j in range(i + 1, m):
                d = float(np.linalg.norm(block_spectra[i] - block_spectra[j]))
                w = math.exp(-(d * d) / (2.0 * sigma * sigma))
                weights[i, j] = w
                weights[j, i] = w
        blocks.append(GraphBlock(int(segment), nodes, weights))
    return SparseAffinity(indices.size, tuple(blocks))


def build_affinity_spectral_only(spectra, k_neighbors: int) -> SparseAffinity:
    """Spectral-only baseline graph: union-symmetrized k-nearest neighbors.

    No spatial constraint; the whole sample set forms a single block. The
    Gaussian bandwidth is the mean of all selected neighbor distances.
    """
    spectra = np.asarray(spectra, dtype=np.float64)
    if spectra.ndim != 2 or spectra.shape[0] < 2:
        raise DataError("need at least two samples")
    n = spectra.shape[0]
    if not 1 <= k_neighbors < n:
        raise DataError("k_neighbors must lie in 1..n-1")
    dist = cdist(spectra, spectra)
    order = np.argsort(dist, axis=1, kind="stable")
    adjacency = np.zeros((n, n), dtype=bool)
    picked = []
    for i in range(n):
        neighbors = [j for j in order[i] if j != i][:k_neighbors]
        adjacency[i, neighbors] = True
        picked.extend(dist[i, j] for j in neighbors)
    adjacency |= adjacency.T
    sigma = float(np.mean(picked))
    if sigma <= SIGMA_FLOOR:
        sigma = SIGMA_FLOOR
    weights = np.where(adjacency, np.exp(-(dist * dist) / (2.0 * sigma * sigma)), 0.0)
    np.fill_diagonal(weights, 1.0)
    block = GraphBlock(0, np.arange(n, dtype=np.int64), weights)
    return SparseAffinity(n, (block,))


def build_transition(affinity: SparseAffinity) -> TransitionMatrix:
    """Column-normalize an affinity graph into jump probabilities."""
    blocks = []
    for block in affinity.blocks:
        sums = block.matrix.sum(axis=0)
        if np.any(sums <= 0.0):
            raise DataError("affinity column with non-positive sum")
        blocks.append(GraphBlock(block.segment, block.nodes, block.matrix / sums))
    return TransitionMatrix(affinity.n_nodes, tuple(blocks))


def transition_to_text(matrix: TransitionMatrix) -> str:
    """Serialize as ``n nnz`` then ``row col value`` triplets sorted by (col, row)."""
    triplets = []
    for block in matrix.blocks:
        rows, cols = np.nonzero(block.matrix)
        for r, c in zip(rows, cols):
            triplets.append((int(block.nodes[c]), int(block.nodes[r]),
                             float(block.matrix[r, c])))
    triplets.sort()
    lines = [f"{matrix.n_nodes} {len(triplets)}"]
    lines.extend(f"{row} {col} {value:.17g}" for col, row, value in triplets)
    return "\n".join(lines) + "\n"


def save_transition(matrix: TransitionMatrix, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(transition_to_text(matrix))


def dense_from_text(text: str) -> np.ndarray:
    """Parse the triplet format back into a dense array (round-trip checks)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError("empty transition text")
    n, nnz = (int(v) for v in lines[0].split())
    if len(lines) - 1 != nnz:
        raise DataError("transition text triplet count mismatch")
    out = np.zeros((n, n))
    for ln in lines[1:]:
        r, c, v = ln.split()
        out[int(r), int(c)] = float(v)
    return out
