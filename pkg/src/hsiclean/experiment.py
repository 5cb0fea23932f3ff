"""Experiment runner: splits, noise sweeps, cleansing, classification, reports.

Config files are plain text, one ``key=value`` per line; ``#`` starts a
comment and repeating a key appends to a list. Recognized keys:

    cube=PATH                  raw-f32 cube (paired with labels=)
    labels=PATH                clean ground-truth label grid
    synth.height= .width= .bands= .classes= .grid=RxC
    synth.spacing= .noise= .seed=     synthetic scene instead of files
    split=per-class:N | fraction:P
    rho=R                      repeatable noise level
    method=nla|rlpa|oracle-clean      repeatable
    classifier=nn|elm          repeatable
    seed=N                     repeatable master seed
    eta= alpha= rounds=        cleansing parameters
    superpixels=N              explicit superpixel count (overrides tbase)
    tbase= compactness= slic-iters= log-sigma= log-threshold=
    elm-hidden= elm-ridge=

Per master seed, stage seeds (split, noise, cleansing, classifier) are spawned
deterministically, so two runs of the same config produce byte-identical CSV
reports regardless of the worker count. Rows are sorted by (method,
classifier, rho, seed) with a ``seed=mean`` aggregate row closing each group.

Methods: ``nla`` trains on the noisy labels as-is; ``rlpa`` cleanses them
first; ``oracle-clean`` discards the samples whose labels were flipped and
trains on the remaining clean subset (an upper-bound reference).
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import classify
from .datacube import (LabelField, SpectralCube, SynthSpec, argmax_labels,
                       grid_synth_spec, load_cube, load_labels, synth_cube,
                       to_onehot, train_test_split)
from .errors import ConfigError, DataError
from .graph import build_affinity, build_transition
from .metrics import aa, confusion, kappa, oa, save_map
from .noise import NoiseSpec, apply_label_noise
from .propagation import RlpaConfig, rlpa_cleanse
from .segmentation import segment_cube

log = logging.getLogger(__name__)

METHODS = ("nla", "rlpa", "oracle-clean")
CLASSIFIERS = ("nn", "elm")

# stage tags for per-seed stream derivation
_STAGE_SPLIT, _STAGE_NOISE, _STAGE_CLEANSE, _STAGE_ELM = range(4)


def derive_seed(master: int, stage: int) -> int:
    return int(np.random.SeedSequence([master, stage]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    cube_path: str | None = None
    labels_path: str | None = None
    synth: SynthSpec | None = None
    synth_seed: int = 0
    split_per_class: int | None = 50
    split_fraction: float | None = None
    rhos: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    methods: tuple[str, ...] = ("nla", "rlpa")
    classifiers: tuple[str, ...] = ("nn", "elm")
    seeds: tuple[int, ...] = (1,)
    eta: float = 0.7
    alpha: float = 0.9
    rounds: int = 100
    superpixels: int | None = None
    t_base: int = 2000
    compactness: float = 10.0
    slic_iters: int = 10
    log_sigma: float = 2.0
    log_threshold: float | None = None
    elm_hidden: int = 500
    elm_ridge: float = 1e-3

    def __post_init__(self):
        if (self.cube_path is None) != (self.labels_path is None):
            raise ConfigError("cube= and labels= must be given together")
        if (self.cube_path is None) == (self.synth is None):
            raise ConfigError("configure either file inputs or a synthetic scene")
        if (self.split_per_class is None) == (self.split_fraction is None):
            raise ConfigError("configure exactly one split scheme")
        if not self.rhos:
            raise ConfigError("at least one rho is required")
        if any(not (0.0 <= r <= 1.0) for r in self.rhos):
            raise ConfigError("rho values must lie in [0, 1]")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}")
        for c in self.classifiers:
            if c not in CLASSIFIERS:
                raise ConfigError(f"unknown classifier {c!r}")
        if not self.methods or not self.classifiers or not self.seeds:
            raise ConfigError("methods, classifiers and seeds must be non-empty")


def _parse_split(value: str):
    kind, _, arg = value.partition(":")
    try:
        if kind == "per-class":
            return int(arg), None
        if kind == "fraction":
            return None, float(arg)
    except ValueError as exc:
        raise ConfigError(f"bad split argument {value!r}") from exc
    raise ConfigError(f"unknown split scheme {value!r}")


def parse_config(text: str) -> ExperimentConfig:
    pairs: list[tuple[str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        pairs.append((key.strip(), value.strip()))

    lists: dict[str, list[str]] = {}
    for key, value in pairs:
        lists.setdefault(key, []).append(value)

    def single(key, cast, default):
        values = lists.pop(key, None)
        if values is None:
            return default
        if len(values) > 1:
            raise ConfigError(f"key {key!r} given more than once")
        try:
            return cast(values[0])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {values[0]!r}") from exc

    def many(key, cast):
        values = lists.pop(key, [])
        try:
            return tuple(cast(v) for v in values)
        except ValueError as exc:
            raise ConfigError(f"bad value in {key!r} list") from exc

    cube_path = single("cube", str, None)
    labels_path = single("labels", str, None)
    synth = None
    synth_keys = [k for k in lists if k.startswith("synth.")]
    if synth_keys:
        height = single("synth.height", int, None)
        width = single("synth.width", int, None)
        bands = single("synth.bands", int, 8)
        classes = single("synth.classes", int, None)
        grid = single("synth.grid", str, None)
        spacing = single("synth.spacing", float, 10.0)
        noise_level = single("synth.noise", float, 0.0)
        if None in (height, width, classes, grid):
            raise ConfigError("synthetic scenes need synth.height/.width/.classes/.grid")
        try:
            rows, cols = (int(v) for v in grid.lower().split("x"))
        except ValueError as exc:
            raise ConfigError(f"bad synth.grid {grid!r}; expected RxC") from exc
        synth = grid_synth_spec(height, width, bands, classes, rows, cols,
                                spacing=spacing, sigma=noise_level)
    synth_seed = single("synth.seed", int, 0)

    split = single("split", str, None)
    per_class, fraction = (50, None) if split is None else _parse_split(split)

    threshold = single("log-threshold", str, None)
    if threshold in (None, "auto"):
        log_threshold = None
    else:
        try:
            log_threshold = float(threshold)
        except ValueError as exc:
            raise ConfigError(f"bad log-threshold {threshold!r}") from exc

    config = ExperimentConfig(
        cube_path=cube_path,
        labels_path=labels_path,
        synth=synth,
        synth_seed=synth_seed,
        split_per_class=per_class,
        split_fraction=fraction,
        rhos=many("rho", float) or (0.1, 0.2, 0.3, 0.4, 0.5),
        methods=many("method", str) or ("nla", "rlpa"),
        classifiers=many("classifier", str) or ("nn", "elm"),
        seeds=many("seed", int) or (1,),
        eta=single("eta", float, 0.7),
        alpha=single("alpha", float, 0.9),
        rounds=single("rounds", int, 100),
        superpixels=single("superpixels", int, None),
        t_base=single("tbase", int, 2000),
        compactness=single("compactness", float, 10.0),
        slic_iters=single("slic-iters", int, 10),
        log_sigma=single("log-sigma", float, 2.0),
        log_threshold=log_threshold,
        elm_hidden=single("elm-hidden", int, 500),
        elm_ridge=single("elm-ridge", float, 1e-3),
    )
    if lists:
        raise ConfigError(f"unknown config keys: {sorted(lists)}")
    return config


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text())


@dataclass(frozen=True)
class CellResult:
    method: str
    classifier: str
    rho: float
    seed: int
    oa: float
    aa: float
    kappa: float


@dataclass
class ExperimentReport:
    rows: list[CellResult]
    timings: dict[str, float] = field(default_factory=dict)

    def mean_over_seeds(self, method: str, classifier: str, rho: float, metric: str = "oa") -> float:
        values = [getattr(r, metric) for r in self.rows
                  if r.method == method and r.classifier == classifier and r.rho == rho]
        return float(np.mean(values))

    def to_csv(self) -> str:
        lines = ["method,classifier,rho,seed,oa,aa,kappa"]
        ordered = sorted(self.rows, key=lambda r: (r.method, r.classifier, r.rho, r.seed))
        groups: dict[tuple, list[CellResult]] = {}
        for row in ordered:
            groups.setdefault((row.method, row.classifier, row.rho), []).append(row)
        for (method, classifier, rho), rows in sorted(groups.items()):
            for row in rows:
                lines.append(f"{method},{classifier},{rho!r},{row.seed},"
                             f"{row.oa!r},{row.aa!r},{row.kappa!r}")
            lines.append(f"{method},{classifier},{rho!r},mean,"
                         f"{float(np.mean([r.oa for r in rows]))!r},"
                         f"{float(np.mean([r.aa for r in rows]))!r},"
                         f"{float(np.mean([r.kappa for r in rows]))!r}")
        return "\n".join(lines) + "\n"

    def save_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_csv())


class _Workspace:
    """Shared per-experiment artifacts: scene, segmentation, per-seed graphs."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        if config.synth is not None:
            self.cube, self.field = synth_cube(config.synth, config.synth_seed)
        else:
            self.cube = load_cube(config.cube_path)
            self.field = load_labels(config.labels_path)
            if (self.field.height, self.field.width) != (self.cube.height, self.cube.width):
                raise DataError("label grid does not match the cube dimensions")
        if self.field.n_classes < 2:
            raise DataError("experiments need at least two labeled classes")
        self.spectra = self.cube.spectra().astype(np.float64)
        t0 = time.perf_counter()
        self.segmap = segment_cube(
            self.cube, config.superpixels, config.t_base, config.compactness,
            config.slic_iters, config.log_sigma, config.log_threshold)
        self.segment_seconds = time.perf_counter() - t0
        self._splits = {}
        self._transitions = {}
        self._noisy = {}

    def split(self, seed: int):
        if seed not in self._splits:
            self._splits[seed] = train_test_split(
                self.field, fraction=self.config.split_fraction,
                per_class=self.config.split_per_class, seed=derive_seed(seed, _STAGE_SPLIT))
        return self._splits[seed]

    def transition(self, seed: int):
        if seed not in self._transitions:
            split = self.split(seed)
            affinity = build_affinity(self.spectra[split.train_indices],
                                      split.train_indices, self.segmap)
            self._transitions[seed] = build_transition(affinity)
        return self._transitions[seed]

    def noisy_labels(self, rho: float, seed: int) -> np.ndarray:
        key = (rho, seed)
        if key not in self._noisy:
            split = self.split(seed)
            clean = to_onehot(self.field, split.train_indices)
            spec = NoiseSpec(rho, derive_seed(seed, _STAGE_NOISE))
            self._noisy[key] = apply_label_noise(clean, spec)
        return self._noisy[key]


def _fit_predict(classifier: str, config: ExperimentConfig, train_x, train_y,
                 test_x, seed: int) -> np.ndarray:
    if classifier == "nn":
        model = classify.nn_fit(train_x, train_y)
        return classify.nn_predict(model, test_x)
    model = classify.elm_fit(train_x, train_y, hidden=config.elm_hidden,
                             ridge=config.elm_ridge, seed=derive_seed(seed, _STAGE_ELM))
    return classify.elm_predict(model, test_x)


def _run_cells(workspace: _Workspace, config: ExperimentConfig, rho: float,
               seed: int, maps_dir=None) -> list[CellResult]:
    split = workspace.split(seed)
    train_x = workspace.spectra[split.train_indices]
    test_x = workspace.spectra[split.test_indices]
    clean_train = workspace.field.flat()[split.train_indices]
    true_test = workspace.field.flat()[split.test_indices]
    noisy = workspace.noisy_labels(rho, seed)
    noisy_train = argmax_labels(noisy)

    labels_by_method = {}
    for method in config.methods:
        if method == "nla":
            labels_by_method[method] = (train_x, noisy_train)
        elif method == "rlpa":
            rlpa_config = RlpaConfig(eta=config.eta, alpha=config.alpha,
                                     rounds=config.rounds,
                                     seed=derive_seed(seed, _STAGE_CLEANSE))
            cleaned, _ = rlpa_cleanse(noisy, workspace.transition(seed), rlpa_config)
            labels_by_method[method] = (train_x, cleaned)
        else:  # oracle-clean: drop the flipped samples, keep the clean remainder
            keep = noisy_train == clean_train
            labels_by_method[method] = (train_x[keep], clean_train[keep])

    results = []
    for method in config.methods:
        fit_x, fit_y = labels_by_method[method]
        for classifier in config.classifiers:
            predicted = _fit_predict(classifier, config, fit_x, fit_y, test_x, seed)
            matrix = confusion(true_test, predicted, workspace.field.n_classes)
            results.append(CellResult(method, classifier, rho, seed,
                                      oa(matrix), aa(matrix), kappa(matrix)))
            if maps_dir is not None:
                full = _fit_predict(classifier, config, fit_x, fit_y,
                                    workspace.spectra[workspace.field.labeled_indices()], seed)
                grid = np.zeros(workspace.field.labels.shape, dtype=np.int64).ravel()
                grid[workspace.field.labeled_indices()] = full
                out = Path(maps_dir) / f"{method}_{classifier}_rho{rho}_seed{seed}.ppm"
                save_map(LabelField(grid.reshape(workspace.field.labels.shape),
                                    workspace.field.n_classes), out)
    return results


def run_experiment(config: ExperimentConfig, workers: int = 1,
                   maps_dir=None) -> ExperimentReport:
    """Full factorial sweep over (method, classifier, rho, seed).

    Jobs over (rho, seed) run in a thread pool; the report is assembled in a
    fixed order so the CSV is identical for any worker count.
    """
    t_start = time.perf_counter()
    workspace = _Workspace(config)
    if maps_dir is not None:
        Path(maps_dir).mkdir(parents=True, exist_ok=True)
    # deterministic warm-up of shared caches before parallel section
    for seed in config.seeds:
        workspace.split(seed)
        if "rlpa" in config.methods:
            workspace.transition(seed)

    jobs = [(rho, seed) for rho in config.rhos for seed in config.seeds]

    def run_job(job):
        rho, seed = job
        return _run_cells(workspace, config, rho, seed, maps_dir)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run_job, jobs))
    else:
        chunks = [run_job(job) for job in jobs]

    rows = [row for chunk in chunks for row in chunk]
    report = ExperimentReport(rows)
    report.timings["segmentation"] = workspace.segment_seconds
    report.timings["total"] = time.perf_counter() - t_start
    log.info("experiment finished: %d cells in %.2fs", len(rows), report.timings["total"])
    return report


@dataclass(frozen=True)
class SweepCell:
    eta: float
    alpha: float
    mean_oa: float


def parameter_sweep(config: ExperimentConfig, etas, alphas,
                    workers: int = 1) -> list[SweepCell]:
    """Mean OA of the cleansing method over a (eta, alpha) grid.

    The scene, segmentation, splits, graphs and noisy labels are shared across
    grid cells; each cell averages the per-seed OA over every configured rho,
    seed, and classifier.
    """
    etas = tuple(etas)
    alphas = tuple(alphas)
    if not etas or not alphas:
        raise ConfigError("both grids must be non-empty")
    if any(not (0.0 < v < 1.0) for v in list(etas) + list(alphas)):
        raise ConfigError("grid values must lie in (0, 1)")
    base = replace(config, methods=("rlpa",))
    workspace = _Workspace(base)
    for seed in base.seeds:
        workspace.transition(seed)

    cells = []
    for eta in etas:
        for alpha in alphas:
            cell_config = replace(base, eta=eta, alpha=alpha)
            jobs = [(rho, seed) for rho in base.rhos for seed in base.seeds]

            def run_job(job):
                rho, seed = job
                return _run_cells(workspace, cell_config, rho, seed)

            if workers > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    chunks = list(pool.map(run_job, jobs))
            else:
                chunks = [run_job(job) for job in jobs]
            values = [row.oa for chunk in chunks for row in chunk]
            cells.append(SweepCell(eta, alpha, float(np.mean(values))))
    return cells


def sweep_to_csv(cells) -> str:
    lines = ["eta,alpha,mean_oa"]
    for cell in sorted(cells, key=lambda c: (c.eta, c.alpha)):
        lines.append(f"{cell.eta!r},{cell.alpha!r},{cell.mean_oa!r}")
    return "\n".join(lines) + "\n"
