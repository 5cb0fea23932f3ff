"""Confusion matrices, the OA/AA/Kappa metric trio, and map rendering."""

from __future__ import annotations

import numpy as np

from .datacube import LabelField
from .errors import DataError

# Qualitative 20-color palette; class c uses entry c-1, background is black.
DEFAULT_PALETTE = (
    (31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40),
    (148, 103, 189), (140, 86, 75), (227, 119, 194), (127, 127, 127),
    (188, 189, 34), (23, 190, 207), (174, 199, 232), (255, 187, 120),
    (152, 223, 138), (255, 152, 150), (197, 176, 213), (196, 156, 148),
    (247, 182, 210), (199, 199, 199), (219, 219, 141), (158, 218, 229),
)


def confusion(true_labels, predicted_labels, n_classes: int | None = None) -> np.ndarray:
    """C x C count matrix; rows index the true class, columns the prediction."""
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise DataError("label vectors must be 1-d and equally long")
    if t.size == 0:
        raise DataError("cannot build a confusion matrix from zero samples")
    if n_classes is None:
        n_classes = int(max(t.max(), p.max()))
    if t.min() < 1 or p.min() < 1 or t.max() > n_classes or p.max() > n_classes:
        raise DataError("labels must lie in 1..n_classes")
    out = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(out, (t - 1, p - 1), 1)
    return out


def _check_matrix(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DataError("confusion matrix must be square")
    if m.sum() <= 0:
        raise DataError("confusion matrix holds no samples")
    return m


def oa(matrix) -> float:
    """Overall accuracy: trace over total."""
    m = _check_matrix(matrix)
    return float(np.trace(m) / m.sum())


def aa(matrix) -> float:
    """Average accuracy: mean per-class recall, skipping classes with no samples."""
    m = _check_matrix(matrix)
    row_sums = m.sum(axis=1)
    present = row_sums > 0
    recalls = np.diag(m)[present] / row_sums[present]
    return float(recalls.mean())


def kappa(matrix) -> float:
    """Chance-corrected agreement: (p_o - p_e) / (1 - p_e).

    A single-class perfect matrix has p_e = 1; it scores 1 when agreement is
    perfect and 0 otherwise (chance level).
    """
    m = _check_matrix(matrix)
    total = m.sum()
    p_obs = np.trace(m) / total
    p_exp = float(m.sum(axis=1) @ m.sum(axis=0)) / (total * total)
    if p_exp == 1.0:
        return 1.0 if p_obs == 1.0 else 0.0
    return float((p_obs - p_exp) / (1.0 - p_exp))


def render_map(field: LabelField, palette: dict[int, tuple[int, int, int]] | None = None) -> bytes:
    """Binary PPM (P6) image of a label grid; background label 0 paints black."""
    if palette is None:
        palette = {c + 1: DEFAULT_PALETTE[c % len(DEFAULT_PALETTE)]
                   for c in range(max(field.n_classes, 1))}
    present = np.unique(field.labels)
    for label in present:
        if label != 0 and label not in palette:
            raise DataError(f"palette has no entry for class {label}")
    lookup = np.zeros((int(present.max()) + 1, 3), dtype=np.uint8)
    for label, rgb in palette.items():
        if 0 < label < lookup.shape[0]:
            lookup[label] = rgb
    pixels = lookup[field.labels]
    header = f"P6\n{field.width} {field.height}\n255\n".encode("ascii")
    return header + pixels.tobytes()


def save_map(field: LabelField, path, palette=None) -> None:
    with open(path, "wb") as fh:
        fh.write(render_map(field, palette))
