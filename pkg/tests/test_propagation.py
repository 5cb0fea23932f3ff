import numpy as np
import pytest

from conftest import random_segmap
from hsiclean.datacube import argmax_labels, to_onehot, train_test_split
from hsiclean.errors import DataError
from hsiclean.graph import GraphBlock, TransitionMatrix, build_affinity, build_transition
from hsiclean.noise import NoiseSpec, apply_label_noise
from hsiclean.oracle import dense_fixed_point
from hsiclean.propagation import (RlpaConfig, assign_labels, majority_vote,
                                  propagate_closed, propagate_iterative,
                                  rlpa_cleanse)
from hsiclean.segmentation import SuperpixelMap, segment_cube


def _identity_transition(n):
    blocks = tuple(GraphBlock(i, np.array([i]), np.array([[1.0]])) for i in range(n))
    return TransitionMatrix(n, blocks)


def _random_instance(rng, n, n_classes, n_segments):
    spectra = rng.normal(size=(n, 4))
    segmap = random_segmap(rng, n, n_segments)
    transition = build_transition(build_affinity(spectra, np.arange(n), segmap))
    labels = np.zeros((n, n_classes))
    labeled = rng.random(n) < 0.6
    labels[labeled, rng.integers(0, n_classes, size=int(labeled.sum()))] = 1.0
    return transition, labels


def test_closed_alpha_zero_returns_labels():
    rng = np.random.default_rng(0)
    transition, labels = _random_instance(rng, 12, 3, 4)
    scores = propagate_closed(transition, labels, 0.0)
    assert np.array_equal(scores, labels)


def test_closed_single_node_returns_label():
    transition = _identity_transition(1)
    labels = np.array([[0.0, 1.0]])
    scores = propagate_closed(transition, labels, 0.9)
    assert np.allclose(scores, labels, atol=1e-12)


def test_closed_matches_power_iteration_two_nodes():
    # the worked two-sample block from the graph tests
    spectra = np.array([[0.0], [3.0]])
    segmap = SuperpixelMap(np.zeros((1, 2), dtype=np.int64), 1)
    transition = build_transition(build_affinity(spectra, np.arange(2), segmap))
    labels = np.array([[1.0, 0.0], [0.0, 0.0]])
    closed = propagate_closed(transition, labels, 0.9)
    iterated = dense_fixed_point(transition.to_dense(), labels, 0.9, 10_000)
    assert np.abs(closed - iterated).max() <= 1e-8


def test_closed_satisfies_fixed_point_residual():
    rng = np.random.default_rng(3)
    for _ in range(10):
        transition, labels = _random_instance(rng, int(rng.integers(2, 40)), 4, 5)
        for alpha in (0.5, 0.9):
            scores = propagate_closed(transition, labels, alpha)
            dense = transition.to_dense()
            residual = np.abs(alpha * dense @ scores + (1 - alpha) * labels - scores)
            assert residual.max() <= 1e-10
            assert scores.min() >= 0.0


def test_iterative_identity_transition_is_stationary():
    transition = _identity_transition(3)
    labels = np.eye(3)
    scores, converged = propagate_iterative(transition, labels, 0.5, tol=1e-12)
    assert converged
    assert np.allclose(scores, labels, atol=1e-12)


def test_iterative_matches_closed_on_random_graphs():
    rng = np.random.default_rng(7)
    for _ in range(10):
        transition, labels = _random_instance(rng, int(rng.integers(2, 50)), 5, 6)
        closed = propagate_closed(transition, labels, 0.9)
        iterated, converged = propagate_iterative(transition, labels, 0.9, tol=1e-12)
        assert converged
        assert np.abs(closed - iterated).max() <= 1e-8


def test_iterative_flags_non_convergence():
    rng = np.random.default_rng(1)
    transition, labels = _random_instance(rng, 20, 3, 2)
    _, converged = propagate_iterative(transition, labels, 0.9, tol=1e-15, max_iters=2)
    assert not converged


def test_one_step_matches_per_node_update():
    # one iteration from the label matrix, expanded entrywise by hand
    rng = np.random.default_rng(5)
    spectra = rng.normal(size=(3, 4))
    segmap = SuperpixelMap(np.zeros((1, 3), dtype=np.int64), 1)
    transition = build_transition(build_affinity(spectra, np.arange(3), segmap))
    labels = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    alpha = 0.9
    dense = transition.to_dense()
    expected = np.empty_like(labels)
    for i in range(3):
        for c in range(2):
            absorbed = sum(dense[i, j] * labels[j, c] for j in range(3))
            expected[i, c] = alpha * absorbed + (1 - alpha) * labels[i, c]
    one_step, _ = propagate_iterative(transition, labels, alpha, tol=0.0, max_iters=1)
    assert np.allclose(one_step, expected, atol=1e-15)
    assert np.allclose(dense_fixed_point(dense, labels, alpha, 1), expected, atol=1e-15)


def test_block_locality():
    rng = np.random.default_rng(11)
    spectra = rng.normal(size=(14, 3))
    segmap = random_segmap(rng, 14, 4)
    transition = build_transition(build_affinity(spectra, np.arange(14), segmap))
    labels = np.zeros((14, 3))
    labels[np.arange(14), rng.integers(0, 3, 14)] = 1.0
    segment = segmap.flat()
    inside = segment == segment[0]
    zeroed = labels.copy()
    zeroed[~inside] = 0.0
    full = propagate_closed(transition, labels, 0.9)
    partial = propagate_closed(transition, zeroed, 0.9)
    assert np.array_equal(full[inside], partial[inside])


def test_assign_labels_rows():
    scores = np.array([[0.1, 0.7, 0.2]])
    assert assign_labels(scores).tolist() == [2]


def test_assign_labels_zero_row_fallback():
    scores = np.zeros((1, 6))
    assert assign_labels(scores, np.array([5])).tolist() == [5]
    assert assign_labels(scores).tolist() == [1]


def test_assign_labels_tie_rules():
    scores = np.array([[0.5, 0.5], [0.5, 0.5]])
    assert assign_labels(scores, np.array([2, 1])).tolist() == [2, 1]
    assert assign_labels(scores).tolist() == [1, 1]


def test_majority_vote_rules():
    assert majority_vote([2, 2, 3], original=3) == 2
    assert majority_vote([1, 2], original=2) == 2
    assert majority_vote([1, 2], original=3) == 1
    assert majority_vote([7] * 10, original=1) == 7
    with pytest.raises(DataError):
        majority_vote([], original=1)


def test_identity_transition_keeps_noisy_labels():
    rng = np.random.default_rng(2)
    n, n_classes = 30, 4
    labels = np.zeros((n, n_classes))
    labels[np.arange(n), rng.integers(0, n_classes, n)] = 1.0
    cleaned, _ = rlpa_cleanse(labels, _identity_transition(n),
                              RlpaConfig(eta=0.7, alpha=0.9, rounds=10, seed=3))
    assert np.array_equal(cleaned, argmax_labels(labels))


def test_clean_labels_pass_through_unchanged(flat_scene):
    cube, field = flat_scene
    segmap = segment_cube(cube, n_segments=36)
    spectra = cube.spectra().astype(np.float64)
    split = train_test_split(field, per_class=100, seed=1)
    transition = build_transition(
        build_affinity(spectra[split.train_indices], split.train_indices, segmap))
    clean = to_onehot(field, split.train_indices)
    for seed in (1, 2, 3):
        cleaned, _ = rlpa_cleanse(clean, transition,
                                  RlpaConfig(eta=0.7, alpha=0.9, rounds=10, seed=seed))
        assert np.array_equal(cleaned, argmax_labels(clean))


def test_planted_flip_is_corrected():
    # five near-identical samples in one segment, one flipped label
    corrected = 0
    for master_seed in range(100):
        rng = np.random.default_rng(10_000 + master_seed)
        spectra = rng.normal(scale=0.01, size=(5, 3))
        segmap = SuperpixelMap(np.zeros((1, 5), dtype=np.int64), 1)
        transition = build_transition(build_affinity(spectra, np.arange(5), segmap))
        labels = np.zeros((5, 2))
        labels[:, 0] = 1.0
        labels[2] = [0.0, 1.0]  # the flipped sample
        cleaned, _ = rlpa_cleanse(labels, transition,
                                  RlpaConfig(eta=0.7, alpha=0.9, rounds=100, seed=master_seed))
        if cleaned.tolist() == [1, 1, 1, 1, 1]:
            corrected += 1
    assert corrected >= 99


def test_cleanse_deterministic_across_workers():
    rng = np.random.default_rng(21)
    spectra = rng.normal(size=(40, 4))
    segmap = random_segmap(rng, 40, 6)
    transition = build_transition(build_affinity(spectra, np.arange(40), segmap))
    labels = np.zeros((40, 3))
    labels[np.arange(40), rng.integers(0, 3, 40)] = 1.0
    config = RlpaConfig(eta=0.6, alpha=0.9, rounds=25, seed=9)
    serial, diag_a = rlpa_cleanse(labels, transition, config, workers=1)
    threaded, diag_b = rlpa_cleanse(labels, transition, config, workers=4)
    assert np.array_equal(serial, threaded)
    assert np.array_equal(diag_a.round_labels, diag_b.round_labels)


def test_cleanse_diagnostics_counts(noisy_scene):
    cube, field = noisy_scene
    segmap = segment_cube(cube, n_segments=36)
    spectra = cube.spectra().astype(np.float64)
    split = train_test_split(field, per_class=100, seed=4)
    transition = build_transition(
        build_affinity(spectra[split.train_indices], split.train_indices, segmap))
    clean_matrix = to_onehot(field, split.train_indices)
    noisy = apply_label_noise(clean_matrix, NoiseSpec(0.3, 17))
    clean = argmax_labels(clean_matrix)
    cleaned, diagnostics = rlpa_cleanse(noisy, transition,
                                        RlpaConfig(rounds=40, seed=5),
                                        clean_labels=clean)
    assert len(diagnostics.per_round_noisy) == 40
    assert diagnostics.cumulative_noisy[-1] == int(np.sum(cleaned != clean))
    csv = diagnostics.to_csv()
    assert csv.splitlines()[0] == "round,noisy_cumulative,noisy_round"
    assert len(csv.splitlines()) == 41


def test_cleanse_rejects_eta_rounding_to_zero():
    labels = np.zeros((50, 2))
    labels[:, 0] = 1.0
    with pytest.raises(DataError):
        rlpa_cleanse(labels, _identity_transition(50), RlpaConfig(eta=0.005, rounds=2))


def test_config_validation():
    with pytest.raises(DataError):
        RlpaConfig(alpha=1.0)
    with pytest.raises(DataError):
        RlpaConfig(eta=0.0)
    with pytest.raises(DataError):
        RlpaConfig(rounds=0)
    with pytest.raises(DataError):
        RlpaConfig(fallback="nonsense")
