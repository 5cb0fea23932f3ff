"""Command-line entry points.

Exit codes: 0 success, 2 configuration/usage error, 3 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import classify
from .datacube import (LabelField, argmax_labels, grid_synth_spec, load_cube,
                       load_labels, save_cube_raw, save_labels, synth_cube,
                       to_onehot)
from .errors import ConfigError, DataError
from .experiment import (load_config, parameter_sweep, run_experiment,
                         sweep_to_csv)
from .graph import build_affinity, build_transition
from .metrics import aa, confusion, kappa, oa, save_map
from .noise import NoiseSpec, apply_label_noise
from .propagation import RlpaConfig, rlpa_cleanse
from .segmentation import segment_cube


def _add_segmentation_args(parser):
    parser.add_argument("--superpixels", type=int, default=None,
                        help="explicit superpixel count (overrides --tbase)")
    parser.add_argument("--tbase", type=int, default=2000)
    parser.add_argument("--compactness", type=float, default=10.0)
    parser.add_argument("--slic-iters", type=int, default=10)
    parser.add_argument("--log-sigma", type=float, default=2.0)
    parser.add_argument("--log-threshold", type=float, default=None)


def _cmd_synth(args) -> int:
    spec = grid_synth_spec(args.height, args.width, args.bands, args.classes,
                           args.grid_rows, args.grid_cols,
                           spacing=args.spacing, sigma=args.noise)
    cube, field = synth_cube(spec, args.seed)
    save_cube_raw(cube, args.out_cube)
    save_labels(field, args.out_labels)
    return 0


def _cmd_noisify(args) -> int:
    field = load_labels(args.labels)
    indices = field.labeled_indices()
    if indices.size == 0:
        raise DataError("label grid holds no labeled pixels")
    onehot = to_onehot(field, indices)
    noisy = apply_label_noise(onehot, NoiseSpec(args.rho, args.seed))
    flat = field.flat().copy()
    flat[indices] = argmax_labels(noisy)
    save_labels(LabelField(flat.reshape(field.labels.shape), field.n_classes), args.out)
    return 0


def _cmd_segment(args) -> int:
    cube = load_cube(args.cube)
    segmap = segment_cube(cube, args.superpixels, args.tbase, args.compactness,
                          args.slic_iters, args.log_sigma, args.log_threshold)
    save_labels(LabelField(segmap.segments, segmap.n_segments), args.out)
    return 0


def _cmd_cleanse(args) -> int:
    if args.diag and not args.clean:
        raise ConfigError("--diag needs --clean to count noisy labels against")
    cube = load_cube(args.cube)
    field = load_labels(args.labels)
    if (field.height, field.width) != (cube.height, cube.width):
        raise DataError("label grid does not match the cube dimensions")
    indices = field.labeled_indices()
    if indices.size == 0:
        raise DataError("label grid holds no labeled pixels")
    segmap = segment_cube(cube, args.superpixels, args.tbase, args.compactness,
                          args.slic_iters, args.log_sigma, args.log_threshold)
    spectra = cube.spectra().astype(np.float64)[indices]
    transition = build_transition(build_affinity(spectra, indices, segmap))
    noisy = to_onehot(field, indices)
    clean_reference = None
    if args.clean:
        clean_field = load_labels(args.clean)
        if clean_field.labels.shape != field.labels.shape:
            raise DataError("clean reference grid does not match the labels grid")
        clean_reference = clean_field.flat()[indices]
        if np.any(clean_reference == 0):
            raise DataError("clean reference is unlabeled at a training pixel")
    config = RlpaConfig(eta=args.eta, alpha=args.alpha, rounds=args.rounds,
                        seed=args.seed, fallback=args.fallback)
    cleaned, diagnostics = rlpa_cleanse(noisy, transition, config,
                                        clean_labels=clean_reference,
                                        workers=args.workers)
    flat = field.flat().copy()
    flat[indices] = cleaned
    save_labels(LabelField(flat.reshape(field.labels.shape), field.n_classes), args.out)
    if args.diag:
        with open(args.diag, "w", newline="\n") as fh:
            fh.write(diagnostics.to_csv())
    return 0


def _load_matrix_csv(path) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read spectra file {path}: {exc}") from exc


def _load_label_list(path) -> np.ndarray:
    try:
        return np.loadtxt(path, dtype=np.int64, ndmin=1)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read label file {path}: {exc}") from exc


def _cmd_classify(args) -> int:
    train_x = _load_matrix_csv(args.train_x)
    train_y = _load_label_list(args.train_y)
    test_x = _load_matrix_csv(args.test_x)
    if args.clf == "nn":
        predicted = classify.nn_predict(classify.nn_fit(train_x, train_y), test_x)
    else:
        model = classify.elm_fit(train_x, train_y, hidden=args.hidden,
                                 ridge=args.ridge, seed=args.seed)
        predicted = classify.elm_predict(model, test_x)
    with open(args.out, "w", newline="\n") as fh:
        fh.writelines(f"{int(label)}\n" for label in predicted)
    return 0


def _cmd_evaluate(args) -> int:
    true_field = load_labels(args.true)
    pred_field = load_labels(args.pred)
    if true_field.labels.shape != pred_field.labels.shape:
        raise DataError("true and predicted grids differ in shape")
    mask = true_field.flat() > 0
    matrix = confusion(true_field.flat()[mask], pred_field.flat()[mask])
    line = f"oa,aa,kappa\n{oa(matrix)!r},{aa(matrix)!r},{kappa(matrix)!r}\n"
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(line)
    else:
        sys.stdout.write(line)
    if args.map:
        save_map(pred_field, args.map)
    return 0


def _cmd_experiment(args) -> int:
    config = load_config(args.config)
    report = run_experiment(config, workers=args.workers, maps_dir=args.maps_dir)
    report.save_csv(args.out)
    return 0


def _parse_grid(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad grid list {text!r}") from exc


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    cells = parameter_sweep(config, _parse_grid(args.etas), _parse_grid(args.alphas),
                            workers=args.workers)
    with open(args.out, "w", newline="\n") as fh:
        fh.write(sweep_to_csv(cells))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsiclean",
        description="Label-noise cleansing for hyperspectral pixel classification.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cube and label grid")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--bands", type=int, default=8)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--grid-rows", type=int, required=True)
    p.add_argument("--grid-cols", type=int, required=True)
    p.add_argument("--spacing", type=float, default=10.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-cube", required=True)
    p.add_argument("--out-labels", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("noisify", help="flip labels with probability rho")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_noisify)

    p = sub.add_parser("segment", help="superpixel-segment a cube")
    p.add_argument("--cube", required=True)
    _add_segmentation_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("cleanse", help="cleanse noisy labels by propagation voting")
    p.add_argument("--cube", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--eta", type=float, default=0.7)
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--rounds", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fallback", choices=("keep-original", "lowest-class"),
                   default="keep-original")
    p.add_argument("--workers", type=int, default=1)
    _add_segmentation_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--diag", default=None, help="write per-round noisy counts (needs --clean)")
    p.add_argument("--clean", default=None, help="clean reference label grid")
    p.set_defaults(func=_cmd_cleanse)

    p = sub.add_parser("classify", help="fit a classifier and predict")
    p.add_argument("--train-x", required=True)
    p.add_argument("--train-y", required=True)
    p.add_argument("--test-x", required=True)
    p.add_argument("--clf", choices=("nn", "elm"), required=True)
    p.add_argument("--hidden", type=int, default=500)
    p.add_argument("--ridge", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("evaluate", help="score predicted labels against truth")
    p.add_argument("--true", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--map", default=None, help="also render the prediction as a P6 PPM")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("experiment", help="run a configured method/noise sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--maps-dir", default=None)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("sweep", help="grid-search eta and alpha")
    p.add_argument("--config", required=True)
    p.add_argument("--etas", required=True, help="comma-separated eta values")
    p.add_argument("--alphas", required=True, help="comma-separated alpha values")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
