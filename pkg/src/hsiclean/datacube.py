"""Spectral cubes, label grids, sample splits, and synthetic scenes.

Flat pixel indices are row-major throughout: ``index = y * width + x``.
Class labels are integers in ``1..C``; 0 marks unlabeled background pixels.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class SpectralCube:
    """H x W x D reflectance cube, bands contiguous per pixel."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise DataError("cube data must be a (height, width, bands) array")
        if data.size == 0:
            raise DataError("cube has no pixels")
        if not np.all(np.isfinite(data)):
            raise DataError("cube contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    @property
    def n_pixels(self) -> int:
        return self.data.shape[0] * self.data.shape[1]

    def spectra(self) -> np.ndarray:
        """All pixel spectra as an (H*W, D) array in flat-index order."""
        return self.data.reshape(-1, self.data.shape[2])

    def pixel(self, y: int, x: int) -> np.ndarray:
        return self.data[y, x]


@dataclass(frozen=True)
class LabelField:
    """Per-pixel class ids on the image grid; 0 means unlabeled background."""

    labels: np.ndarray
    n_classes: int = -1  # -1: infer as max label present

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise DataError("label grid must be two-dimensional")
        if not np.issubdtype(labels.dtype, np.integer):
            labels = labels.astype(np.int64)
        if labels.size == 0:
            raise DataError("label grid is empty")
        if labels.min() < 0:
            raise DataError("labels must be non-negative")
        c = self.n_classes
        if c < 0:
            c = int(labels.max())
        elif int(labels.max()) > c:
            raise DataError("label grid contains a class above n_classes")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "n_classes", c)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def flat(self) -> np.ndarray:
        return self.labels.ravel()

    def labeled_indices(self) -> np.ndarray:
        """Flat indices of all non-background pixels, ascending."""
        return np.flatnonzero(self.labels.ravel() > 0)


@dataclass(frozen=True)
class SampleSplit:
    """Disjoint train/test flat-index sets over the labeled pixels."""

    train_indices: np.ndarray
    test_indices: np.ndarray
    per_class_counts: dict[int, int]

    def __post_init__(self):
        train = np.asarray(self.train_indices, dtype=np.int64)
        test = np.asarray(self.test_indices, dtype=np.int64)
        if np.intersect1d(train, test).size:
            raise DataError("train and test sets overlap")
        object.__setattr__(self, "train_indices", train)
        object.__setattr__(self, "test_indices", test)


@dataclass(frozen=True)
class SynthSpec:
    """Synthetic scene: a grid of rectangular class regions with Gaussian spectra.

    ``region_classes`` is an (R, S) array of class ids in 1..n_classes; region
    (r, s) covers rows [r*H/R, (r+1)*H/R) and the analogous column slab, so the
    regions tile the image exactly. Pixels of class c draw their spectrum from
    ``class_means[c-1] + N(0, sigma^2)`` per band.
    """

    height: int
    width: int
    bands: int
    n_classes: int
    region_classes: np.ndarray
    class_means: np.ndarray
    sigma: float = 0.0

    def __post_init__(self):
        if min(self.height, self.width, self.bands, self.n_classes) < 1:
            raise DataError("synthetic dimensions must be positive")
        regions = np.asarray(self.region_classes, dtype=np.int64)
        means = np.asarray(self.class_means, dtype=np.float64)
        if regions.ndim != 2:
            raise DataError("region_classes must be a 2-d grid")
        if regions.min() < 1 or regions.max() > self.n_classes:
            raise DataError("region classes must lie in 1..n_classes")
        if set(np.unique(regions)) != set(range(1, self.n_classes + 1)):
            raise DataError("every class must appear in at least one region")
        if means.shape != (self.n_classes, self.bands):
            raise DataError("class_means must have shape (n_classes, bands)")
        if not (self.sigma >= 0.0):
            raise DataError("sigma must be >= 0")
        object.__setattr__(self, "region_classes", regions)
        object.__setattr__(self, "class_means", means)


def grid_synth_spec(height, width, bands, n_classes, grid_rows, grid_cols,
                    spacing=10.0, sigma=0.0) -> SynthSpec:
    """Convenience builder: classes cycle over the region grid, means are
    spaced ``spacing`` apart in every band."""
    if grid_rows * grid_cols < n_classes:
        raise DataError("region grid too small to show every class")
    regions = (np.arange(grid_rows * grid_cols) % n_classes + 1).reshape(grid_rows, grid_cols)
    means = np.outer(np.arange(1, n_classes + 1, dtype=np.float64) * spacing,
                     np.ones(bands))
    return SynthSpec(height, width, bands, n_classes, regions, means, sigma)


def synth_labels(spec: SynthSpec) -> LabelField:
    """Label grid realizing the region tiling of a synthetic spec."""
    rows, cols = spec.region_classes.shape
    y_edges = [round(r * spec.height / rows) for r in range(rows + 1)]
    x_edges = [round(s * spec.width / cols) for s in range(cols + 1)]
    labels = np.zeros((spec.height, spec.width), dtype=np.int64)
    for r in range(rows):
        for s in range(cols):
            labels[y_edges[r]:y_edges[r + 1], x_edges[s]:x_edges[s + 1]] = spec.region_classes[r, s]
    return LabelField(labels, spec.n_classes)


def synth_cube(spec: SynthSpec, seed: int) -> tuple[SpectralCube, LabelField]:
    """Generate a cube and its clean label field; deterministic per seed."""
    field = synth_labels(spec)
    data = spec.class_means[field.labels - 1].astype(np.float64)
    if spec.sigma > 0.0:
        rng = np.random.default_rng(seed)
        data = data + rng.normal(0.0, spec.sigma, size=data.shape)
    return SpectralCube(data), field


def to_onehot(field: LabelField, indices) -> np.ndarray:
    """One-hot label matrix for the given flat pixel indices.

    Every index must point at a labeled (non-background) pixel; row i carries
    a single 1 in the column of that pixel's class.
    """
    if field.n_classes == 0:
        raise DataError("label field has no supervised classes")
    indices = np.asarray(indices, dtype=np.int64)
    labels = field.flat()[indices]
    if np.any(labels == 0):
        raise DataError("one-hot encoding requested for background pixels")
    out = np.zeros((indices.size, field.n_classes), dtype=np.float64)
    out[np.arange(indices.size), labels - 1] = 1.0
    return out


def argmax_labels(label_matrix: np.ndarray) -> np.ndarray:
    """Class ids (1..C) per row; all-zero rows map to 0."""
    m = np.asarray(label_matrix)
    out = np.argmax(m, axis=1) + 1
    out[~m.any(axis=1)] = 0
    return out


def train_test_split(field: LabelField, *, fraction: float | None = None,
                     per_class: int | None = None, seed: int = 0) -> SampleSplit:
    """Per-class random split of the labeled pixels.

    Exactly one scheme must be given. ``fraction=p`` takes round(p * class
    size) training pixels per class, at least 1. ``per_class=n`` takes
    min(n, class size - 1) so each class keeps at least one test pixel, and
    rejects classes with fewer than 2 pixels. Deterministic for a fixed seed.
    """
    if (fraction is None) == (per_class is None):
        raise ValueError("specify exactly one of fraction= or per_class=")
    if field.n_classes < 1:
        raise DataError("label field has no supervised classes")
    if fraction is not None and not (0.0 < fraction <= 1.0):
        raise ValueError("fraction must lie in (0, 1]")
    if per_class is not None and per_class < 1:
        raise ValueError("per_class must be >= 1")

    flat = field.flat()
    rng = np.random.default_rng(seed)
    train_parts, test_parts, counts = [], [], {}
    for cls in range(1, field.n_classes + 1):
        members = np.flatnonzero(flat == cls)
        if members.size == 0:
            raise DataError(f"class {cls} has no samples")
        if per_class is not None:
            if members.size < 2:
                raise DataError(f"class {cls} has fewer than 2 samples")
            n_train = min(per_class, members.size - 1)
        else:
            n_train = max(1, int(np.floor(fraction * members.size + 0.5)))
            n_train = min(n_train, members.size)
        order = rng.permutation(members.size)
        train_parts.append(members[order[:n_train]])
        test_parts.append(members[order[n_train:]])
        counts[cls] = n_train
    train = np.sort(np.concatenate(train_parts))
    test = np.sort(np.concatenate(test_parts))
    return SampleSplit(train, test, counts)


# ---------------------------------------------------------------------------
# File formats
#
# raw-f32 cube: ASCII header line "H W D\n" followed by H*W*D little-endian
# 32-bit floats, bands contiguous per pixel.
# csv cube: header line "H W D", then one line per pixel (row-major) holding
# D comma-separated values.
# labels: plain-text grid, one row of space-separated integers per image row.
# ---------------------------------------------------------------------------

def _parse_cube_header(line: str) -> tuple[int, int, int]:
    parts = line.split()
    if len(parts) != 3:
        raise DataError("cube header must hold exactly three integers: H W D")
    try:
        h, w, d = (int(p) for p in parts)
    except ValueError as exc:
        raise DataError(f"malformed cube header {line!r}") from exc
    if min(h, w, d) <= 0:
        raise DataError("cube header dimensions must be positive")
    return h, w, d


def save_cube_raw(cube: SpectralCube, path) -> None:
    payload = np.ascontiguousarray(cube.data, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(f"{cube.height} {cube.width} {cube.bands}\n".encode("ascii"))
        fh.write(payload)


def save_cube_csv(cube: SpectralCube, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{cube.height} {cube.width} {cube.bands}\n")
        for row in cube.spectra():
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_cube(path, fmt: str = "raw-f32") -> SpectralCube:
    """Read a cube in the ``raw-f32`` or ``csv`` format."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"cube file not found: {path}")
    if fmt == "raw-f32":
        blob = path.read_bytes()
        nl = blob.find(b"\n")
        if nl < 0:
            raise DataError("raw cube is missing its header line")
        try:
            header = blob[:nl].decode("ascii")
        except UnicodeDecodeError as exc:
            raise DataError("raw cube header is not ASCII") from exc
        h, w, d = _parse_cube_header(header)
        payload = blob[nl + 1:]
        expected = h * w * d * 4
        if len(payload) != expected:
            raise DataError(
                f"raw cube payload holds {len(payload)} bytes, header implies {expected}")
        data = np.frombuffer(payload, dtype="<f4").reshape(h, w, d)
        return SpectralCube(data)
    if fmt == "csv":
        lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
        if not lines:
            raise DataError("csv cube file is empty")
        h, w, d = _parse_cube_header(lines[0])
        body = lines[1:]
        if len(body) != h * w:
            raise DataError(f"csv cube has {len(body)} pixel rows, header implies {h * w}")
        try:
            values = np.array([[float(v) for v in ln.split(",")] for ln in body])
        except ValueError as exc:
            raise DataError("csv cube contains a non-numeric value") from exc
        if values.shape != (h * w, d):
            raise DataError("csv cube row length does not match band count")
        return SpectralCube(values.reshape(h, w, d))
    raise ValueError(f"unknown cube format {fmt!r}")


def save_labels(field: LabelField, path) -> None:
    with open(path, "w", newline="\n") as fh:
        for row in field.labels:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")


def load_labels(path) -> LabelField:
    """Read a label grid; the class count is the maximum label present."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"label file not found: {path}")
    rows = []
    for ln in path.read_text().splitlines():
        if not ln.strip():
            continue
        try:
            rows.append([int(v) for v in ln.split()])
        except ValueError as exc:
            raise DataError("label grid contains a non-integer token") from exc
    if not rows:
        raise DataError("label file is empty")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataError("label grid rows have inconsistent lengths")
    grid = np.array(rows, dtype=np.int64)
    if grid.min() < 0:
        raise DataError("label grid contains negative labels")
    return LabelField(grid)
