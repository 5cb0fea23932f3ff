"""Label-noise cleansing for hyperspectral pixel classification.

The package builds a superpixel-constrained affinity graph over the training
samples, turns it into a column-stochastic transition matrix, and repeatedly
propagates a random subset of the (noisy) labels through it; a per-sample
majority vote over the rounds yields the cleansed labels. Classifiers,
metrics, noise injection, synthetic scenes, and an experiment runner round
out the toolkit.
"""

from .classify import ElmModel, NnModel, elm_fit, elm_predict, nn_fit, nn_predict
from .datacube import (LabelField, SampleSplit, SpectralCube, SynthSpec,
                       argmax_labels, grid_synth_spec, load_cube, load_labels,
                       save_cube_raw, save_labels, synth_cube, to_onehot,
                       train_test_split)
from .errors import ConfigError, DataError
from .experiment import (ExperimentConfig, ExperimentReport, load_config,
                         parameter_sweep, parse_config, run_experiment)
from .graph import (SparseAffinity, TransitionMatrix, build_affinity,
                    build_affinity_spectral_only, build_transition,
                    region_sigma, spectral_distance, transition_to_text)
from .metrics import aa, confusion, kappa, oa, render_map, save_map
from .noise import NoiseSpec, apply_label_noise, count_flips
from .propagation import (CleanseDiagnostics, RlpaConfig, assign_labels,
                          majority_vote, propagate_closed, propagate_iterative,
                          rlpa_cleanse)
from .segmentation import (PCImage, SuperpixelMap, first_principal_component,
                           log_edge_stats, segment_cube, segment_superpixels,
                           superpixel_count)

__version__ = "0.1.0"
