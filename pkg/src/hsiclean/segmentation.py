"""Homogeneous-region segmentation of spectral cubes.

The pipeline projects the cube onto its first principal component, measures
edge density with a Laplacian-of-Gaussian operator to budget the number of
superpixels, then runs a deterministic SLIC-style clustering on
(intensity, x, y). Assignment processes cluster centers in ascending id with a
strict-improvement update, so distance ties always resolve to the lower id and
the result is independent of any parallel schedule. A final connectivity pass
relabels stray 4-connected fragments into their largest adjacent segment, so
every output segment is 4-connected and every id is non-empty.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .datacube import SpectralCube
from .errors import DataError

MIN_SUPERPIXELS = 16


@dataclass(frozen=True)
class PCImage:
    """Per-pixel projection on the leading principal axis of the band space."""

    values: np.ndarray
    zero_variance: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError("principal-component image must be 2-d")
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SuperpixelMap:
    """Partition of the image grid into segments labeled 0..n_segments-1."""

    segments: np.ndarray
    n_segments: int

    def __post_init__(self):
        seg = np.asarray(self.segments)
        if seg.ndim != 2:
            raise DataError("segment map must be 2-d")
        if not np.issubdtype(seg.dtype, np.integer):
            seg = seg.astype(np.int64)
        counts = np.bincount(seg.ravel(), minlength=max(self.n_segments, 1))
        if seg.min() < 0 or seg.max() >= self.n_segments:
            raise DataError("segment ids must lie in 0..n_segments-1")
        if np.any(counts[: self.n_segments] == 0):
            raise DataError("every segment id must be non-empty")
        object.__setattr__(self, "segments", seg)

    @property
    def height(self) -> int:
        return self.segments.shape[0]

    @property
    def width(self) -> int:
        return self.segments.shape[1]

    def flat(self) -> np.ndarray:
        return self.segments.ravel()


def first_principal_component(cube: SpectralCube) -> PCImage:
    """Project every pixel spectrum onto the leading band-covariance eigenvector.

    Spectra are centered on the mean spectrum first. The eigenvector sign is
    fixed by making its first nonzero component positive. A cube with zero
    total variance yields an all-zero image flagged ``zero_variance``.
    """
    if cube.n_pixels < 2:
        raise DataError("principal component needs at least 2 pixels")
    spectra = cube.spectra().astype(np.float64)
    centered = spectra - spectra.mean(axis=0)
    cov = (centered.T @ centered) / spectra.shape[0]
    if np.trace(cov) == 0.0:
        return PCImage(np.zeros((cube.height, cube.width)), zero_variance=True)
    _, vectors = np.linalg.eigh(cov)
    axis = vectors[:, -1]
    nonzero = np.flatnonzero(axis)
    if nonzero.size and axis[nonzero[0]] < 0:
        axis = -axis
    projection = centered @ axis
    return PCImage(projection.reshape(cube.height, cube.width))


def _log_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    xx, yy = np.meshgrid(ax, ax)
    r2 = xx * xx + yy * yy
    kernel = (r2 - 2.0 * sigma * sigma) / sigma ** 4 * np.exp(-r2 / (2.0 * sigma * sigma))
    return kernel - kernel.mean()  # zero net response on constant regions


def log_response(image: PCImage, kernel_sigma: float = 2.0) -> np.ndarray:
    if kernel_sigma <= 0:
        raise ValueError("kernel_sigma must be positive")
    return ndimage.convolve(image.values, _log_kernel(kernel_sigma), mode="reflect")


def log_edge_stats(image: PCImage, kernel_sigma: float = 2.0,
                   threshold: float | None = None) -> tuple[int, int]:
    """Edge-pixel and total-pixel counts from the LoG zero-crossing image.

    A pixel is an edge pixel when its LoG response changes sign against a
    4-neighbor and its own response magnitude exceeds ``threshold``. The
    default threshold is 1e-4 times the response range, which suppresses
    numerical ripple on flat images.
    """
    response = log_response(image, kernel_sigma)
    if threshold is None:
        threshold = 1e-4 * float(response.max() - response.min())
    pos = response > 0
    neg = response < 0
    crossing = np.zeros(response.shape, dtype=bool)
    crossing[1:, :] |= (pos[1:, :] & neg[:-1, :]) | (neg[1:, :] & pos[:-1, :])
    crossing[:-1, :] |= (pos[:-1, :] & neg[1:, :]) | (neg[:-1, :] & pos[1:, :])
    crossing[:, 1:] |= (pos[:, 1:] & neg[:, :-1]) | (neg[:, 1:] & pos[:, :-1])
    crossing[:, :-1] |= (pos[:, :-1] & neg[:, 1:]) | (neg[:, :-1] & pos[:, 1:])
    edges = crossing & (np.abs(response) > threshold)
    return int(edges.sum()), int(response.size)


def superpixel_count(n_edges: int, n_pixels: int, t_base: int) -> int:
    """Texture-adaptive superpixel budget, clamped to a workable range."""
    if n_pixels <= 0:
        raise ValueError("n_pixels must be positive")
    raw = int(math.floor(t_base * n_edges / n_pixels + 0.5))
    lo = min(MIN_SUPERPIXELS, n_pixels)
    return max(lo, min(raw, n_pixels))


def _seed_grid(height: int, width: int, n_segments: int) -> tuple[np.ndarray, np.ndarray, int, int]:
    ny = max(1, round(math.sqrt(n_segments * height / width)))
    ny = min(ny, height, n_segments)
    nx = max(1, round(n_segments / ny))
    nx = min(nx, width)
    cy = (np.arange(ny, dtype=np.float64) + 0.5) * height / ny
    cx = (np.arange(nx, dtype=np.float64) + 0.5) * width / nx
    yy, xx = np.meshgrid(cy, cx, indexing="ij")
    return yy.ravel(), xx.ravel(), ny, nx


def segment_superpixels(image: PCImage, n_segments: int, compactness: float = 10.0,
                        max_iters: int = 10) -> SuperpixelMap:
    """Deterministic SLIC-style superpixel segmentation of an intensity image.

    Centers are seeded on a regular grid (no random perturbation). The
    per-pixel distance is ``(dI)^2 + (compactness/S)^2 * (dy^2 + dx^2)`` with
    S the nominal cell size, matching the usual SLIC trade-off between
    intensity fidelity and spatial regularity.
    """
    values = image.values
    height, width = values.shape
    n_pixels = values.size
    if not 1 <= n_segments <= n_pixels:
        raise DataError("superpixel count must lie in 1..n_pixels")
    if compactness <= 0:
        raise ValueError("compactness must be positive")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")

    c_y, c_x, ny, nx = _seed_grid(height, width, n_segments)
    k = c_y.size
    iy = np.clip(np.floor(c_y).astype(int), 0, height - 1)
    ix = np.clip(np.floor(c_x).astype(int), 0, width - 1)
    c_val = values[iy, ix].astype(np.float64)

    cell = math.sqrt(n_pixels / k)
    spatial_scale = (compactness / cell) ** 2
    # window half-extents: one full grid cell in each direction
    half_y = max(1, int(math.ceil(height / ny)))
    half_x = max(1, int(math.ceil(width / nx)))

    ys = np.arange(height, dtype=np.float64)
    xs = np.arange(width, dtype=np.float64)
    labels = np.zeros((height, width), dtype=np.int64)

    for _ in range(max_iters):
        dist = np.full((height, width), np.inf)
        labels.fill(-1)
        for c in range(k):
            y0 = max(0, int(c_y[c]) - half_y)
            y1 = min(height, int(c_y[c]) + half_y + 1)
            x0 = max(0, int(c_x[c]) - half_x)
            x1 = min(width, int(c_x[c]) + half_x + 1)
            dv = values[y0:y1, x0:x1] - c_val[c]
            dy = ys[y0:y1, None] - c_y[c]
            dx = xs[None, x0:x1] - c_x[c]
            d2 = dv * dv + spatial_scale * (dy * dy + dx * dx)
            window = dist[y0:y1, x0:x1]
            better = d2 < window  # strict: ties keep the lower center id
            window[better] = d2[better]
            labels[y0:y1, x0:x1][better] = c

        stray = labels < 0
        if stray.any():
            sy, sx = np.nonzero(stray)
            best = np.full(sy.size, np.inf)
            pick = np.zeros(sy.size, dtype=np.int64)
            for c in range(k):
                dv = values[sy, sx] - c_val[c]
                d2 = dv * dv + spatial_scale * ((sy - c_y[c]) ** 2 + (sx - c_x[c]) ** 2)
                better = d2 < best
                best[better] = d2[better]
                pick[better] = c
            labels[sy, sx] = pick

        flat = labels.ravel()
        counts = np.bincount(flat, minlength=k).astype(np.float64)
        occupied = counts > 0
        sum_val = np.bincount(flat, weights=values.ravel(), minlength=k)
        sum_y = np.bincount(flat, weights=np.repeat(ys, width), minlength=k)
        sum_x = np.bincount(flat, weights=np.tile(xs, height), minlength=k)
        c_val[occupied] = sum_val[occupied] / counts[occupied]
        c_y[occupied] = sum_y[occupied] / counts[occupied]
        c_x[occupied] = sum_x[occupied] / counts[occupied]

    merged, count = _enforce_connectivity(labels)
    return SuperpixelMap(merged, count)


def _enforce_connectivity(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """Split disconnected segments; merge fragments into the largest neighbor.

    Components are discovered in row-major scan order. For each original
    label the largest component (ties to the earliest discovered) keeps its
    identity; every other fragment is absorbed by the adjacent segment with
    the most pixels at merge time, processed in discovery order.
    """
    height, width = labels.shape
    comp = np.full((height, width), -1, dtype=np.int64)
    comp_label, comp_size, comp_pixels = [], [], []
    for y in range(height):
        for x in range(width):
            if comp[y, x] >= 0:
                continue
            cid = len(comp_label)
            lab = labels[y, x]
            queue = deque([(y, x)])
            comp[y, x] = cid
            pixels = [(y, x)]
            while queue:
                py, px = queue.popleft()
                for qy, qx in ((py - 1, px), (py + 1, px), (py, px - 1), (py, px + 1)):
                    if 0 <= qy < height and 0 <= qx < width \
                            and comp[qy, qx] < 0 and labels[qy, qx] == lab:
                        comp[qy, qx] = cid
                        queue.append((qy, qx))
                        pixels.append((qy, qx))
            comp_label.append(lab)
            comp_size.append(len(pixels))
            comp_pixels.append(pixels)

    n_comp = len(comp_label)
    main_of_label: dict[int, int] = {}
    for cid in range(n_comp):
        lab = comp_label[cid]
        best = main_of_label.get(lab)
        if best is None or comp_size[cid] > comp_size[best]:
            main_of_label[lab] = cid

    final_id = np.full(n_comp, -1, dtype=np.int64)
    next_id = 0
    for cid in range(n_comp):
        if main_of_label[comp_label[cid]] == cid:
            final_id[cid] = next_id
            next_id += 1
    seg_size = np.zeros(next_id, dtype=np.int64)
    for cid in range(n_comp):
        if final_id[cid] >= 0:
            seg_size[final_id[cid]] += comp_size[cid]

    pending = [cid for cid in range(n_comp) if final_id[cid] < 0]
    while pending:
        remaining = []
        progressed = False
        for cid in pending:
            candidates = set()
            for py, px in comp_pixels[cid]:
                for qy, qx in ((py - 1, px), (py + 1, px), (py, px - 1), (py, px + 1)):
                    if 0 <= qy < height and 0 <= qx < width:
                        nb = comp[qy, qx]
                        if nb != cid and final_id[nb] >= 0:
                            candidates.add(int(final_id[nb]))
            if not candidates:
                remaining.append(cid)
                continue
            target = max(candidates, key=lambda s: (seg_size[s], -s))
            final_id[cid] = target
            seg_size[target] += comp_size[cid]
            progressed = True
        if not progressed:
            # isolated fragment ring; promote the first to a fresh segment
            cid = remaining.pop(0)
            final_id[cid] = next_id
            seg_size = np.append(seg_size, comp_size[cid])
            next_id += 1
        pending = remaining

    return final_id[comp], next_id


def segment_cube(cube: SpectralCube, n_segments: int | None = None,
                 t_base: int = 2000, compactness: float = 10.0,
                 max_iters: int = 10, log_sigma: float = 2.0,
                 log_threshold: float | None = None) -> SuperpixelMap:
    """Full segmentation pipeline: PC1 projection, edge budgeting, superpixels.

    ``n_segments`` overrides the texture-adaptive budget when given.
    """
    image = first_principal_component(cube)
    if n_segments is None:
        n_edges, n_pixels = log_edge_stats(image, log_sigma, log_threshold)
        n_segments = superpixel_count(n_edges, n_pixels, t_base)
    return segment_superpixels(image, n_segments, compactness, max_iters)
