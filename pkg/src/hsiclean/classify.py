"""Desk-scale classifiers: 1-nearest-neighbor and an extreme learning machine.

Both standardize spectra per band with training statistics before any distance
or activation is computed. Class labels are 1-based; prediction ties resolve
to the lower training index (NN) or the lower class id (ELM).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DataError


def _standardize_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    return mean, std


def _check_training(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError("training spectra must form a non-empty (n, bands) array")
    if y.shape != (x.shape[0],):
        raise DataError("one label per training sample required")
    if y.min() < 1:
        raise DataError("training labels must be 1-based class ids")
    return x, y


@dataclass(frozen=True)
class NnModel:
    train_x: np.ndarray
    train_y: np.ndarray
    mean: np.ndarray
    std: np.ndarray


def nn_fit(x, y) -> NnModel:
    x, y = _check_training(x, y)
    mean, std = _standardize_stats(x)
    return NnModel((x - mean) / std, y, mean, std)


def nn_predict(model: NnModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.train_x.shape[1]:
        raise DataError("query spectra must match the training band count")
    q = (x - model.mean) / model.std
    out = np.empty(q.shape[0], dtype=np.int64)
    train_sq = np.einsum("ij,ij->i", model.train_x, model.train_x)
    for start in range(0, q.shape[0], 2048):
        chunk = q[start:start + 2048]
        d2 = train_sq[None, :] - 2.0 * (chunk @ model.train_x.T) \
            + np.einsum("ij,ij->i", chunk, chunk)[:, None]
        out[start:start + 2048] = model.train_y[np.argmin(d2, axis=1)]
    return out


@dataclass(frozen=True)
class ElmModel:
    hidden_weights: np.ndarray
    hidden_biases: np.ndarray
    output_weights: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n_classes: int


def elm_fit(x, y, hidden: int = 500, ridge: float = 1e-3, seed: int = 0) -> ElmModel:
    """Random sigmoid hidden layer plus a ridge-regularized least-squares readout.

    Hidden weights and biases draw uniform(-1, 1) from the seed; the output
    weights solve (G'G + ridge*I) B = G'Y for the one-hot targets Y.
    """
    x, y = _check_training(x, y)
    if hidden < 1:
        raise DataError("hidden layer needs at least one unit")
    if ridge <= 0.0:
        raise DataError("ridge must be positive")
    mean, std = _standardize_stats(x)
    xs = (x - mean) / std
    n_classes = int(y.max())
    targets = np.zeros((x.shape[0], n_classes))
    targets[np.arange(x.shape[0]), y - 1] = 1.0

    rng = np.random.default_rng(seed)
    weights = rng.uniform(-1.0, 1.0, size=(x.shape[1], hidden))
    biases = rng.uniform(-1.0, 1.0, size=hidden)
    g = expit(xs @ weights + biases)
    gram = g.T @ g + ridge * np.eye(hidden)
    beta = np.linalg.solve(gram, g.T @ targets)
    if not np.all(np.isfinite(beta)):
        raise ArithmeticError("ELM output weights came out non-finite")
    return ElmModel(weights, biases, beta, mean, std, n_classes)


def elm_predict(model: ElmModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.hidden_weights.shape[0]:
        raise DataError("query spectra must match the training band count")
    xs = (x - model.mean) / model.std
    scores = expit(xs @ model.hidden_weights + model.hidden_biases) @ model.output_weights
    return np.argmax(scores, axis=1).astype(np.int64) + 1
