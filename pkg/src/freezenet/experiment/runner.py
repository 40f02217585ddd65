"""Deterministic training runs, threshold sweeps and before/after comparisons.

Every random stream of a run is derived from the run seed and a fixed key:
``init`` (weights), ``mask`` (freeze mask), ``shuffle`` (batch order) and
``dropout``. Evaluation draws nothing, so evaluating more often never
changes training. The mask stream is separate from the init stream, so a
run with the freeze mask at t=0 is bit-identical to a plain dense run.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import layers as L
from ..data_io import SynthConfig, generate_synthetic, load_checkpoint, load_trialset, save_checkpoint
from ..errors import ConfigError, FreezeNetError, NumericalError, ShapeError
from ..optim import SGD, AdamW, softmax_cross_entropy
from ..preprocess import align_splits, design_bandpass_fir, euclidean_align, preprocess_split
from ..tensor import Rng, derive_seed
from ..trials import TrialSet
from .config import config_hash, with_classifier
from .metrics import EpochRecord, MetricsReport, smooth_curve, summarize

log = logging.getLogger(__name__)

SHALLOW_PRESET = [
    {"kind": "conv1d", "out_channels": 8, "kernel_len": 25, "stride": 5},
    {"kind": "channel_mix", "out_channels": 8},
    {"kind": "activation", "fn": "square"},
    {"kind": "log_mean_pool", "width": 20, "stride": 20},
    {"kind": "flatten"},
    {"kind": "dropout", "p": 0.5},
]


# --------------------------------------------------------------------------
# Data
# --------------------------------------------------------------------------


@dataclass
class PreparedData:
    train_X: np.ndarray
    train_y: np.ndarray
    test_X: np.ndarray
    test_y: np.ndarray
    n_classes: int
    fs: float
    meta: dict = field(default_factory=dict)


def load_source(source: dict) -> tuple[TrialSet, TrialSet]:
    if "synthetic" in source:
        return generate_synthetic(SynthConfig(**source["synthetic"]))
    return load_trialset(source["train_path"]), load_trialset(source["test_path"])


def _fir_for(cfg, fs):
    band = cfg["preprocess"]["band"]
    if band is None:
        return None
    return design_bandpass_fir(band[0], band[1], fs, cfg["preprocess"]["order"])


def prepare_data(cfg: dict) -> PreparedData:
    """Load the configured data and run filter, epoch, normalize and align on it."""
    pp = cfg["preprocess"]
    train, test = load_source(cfg["data"])
    if train.fs != test.fs or train.n_classes != test.n_classes:
        raise ShapeError("train and test splits disagree on sampling rate or class count")
    fir = _fir_for(cfg, train.fs)
    train = preprocess_split(train, fir, pp["window_seconds"])
    test = preprocess_split(test, fir, pp["window_seconds"])
    train, test = align_splits(train, test, pp["align"])
    train_X, train_y = [train.X()], [train.y()]
    for i, source in enumerate(cfg["pooled_subjects"]):
        extra_train, extra_test = load_source(source)
        extra = TrialSet(extra_train.trials + extra_test.trials, extra_train.fs, extra_train.class_names)
        if extra.fs != train.fs or extra.n_classes != train.n_classes:
            raise ShapeError(f"pooled subject {i} disagrees with the target on sampling rate or class count")
        extra = preprocess_split(extra, _fir_for(cfg, extra.fs), pp["window_seconds"])
        if pp["align"] != "none":
            extra = euclidean_align(extra)
        if extra.X().shape[1:] != train_X[0].shape[1:]:
            raise ShapeError(f"pooled subject {i} trials are {extra.X().shape[1:]}, target trials {train_X[0].shape[1:]}")
        train_X.append(extra.X())
        train_y.append(extra.y())
    return PreparedData(
        train_X=np.concatenate(train_X),
        train_y=np.concatenate(train_y),
        test_X=test.X(),
        test_y=test.y(),
        n_classes=train.n_classes,
        fs=train.fs,
        meta={
            "filter_order": None if fir is None else fir.order,
            "edge_transient_samples": None if fir is None else fir.order // 2,
            "align": pp["align"],
            "pooled_subjects": len(cfg["pooled_subjects"]),
        },
    )


# --------------------------------------------------------------------------
# Model
# --------------------------------------------------------------------------


def build_model(cfg: dict, input_shape, n_classes: int) -> L.Sequential:
    """Feature layers from the config, then the classifier (plain, frozen or sparse)."""
    seed = cfg["seed"]
    init_rng = Rng(derive_seed(seed, "init"))
    dropout_rng = Rng(derive_seed(seed, "dropout"))
    model_cfg = cfg["model"]
    if "preset" in model_cfg:
        specs = SHALLOW_PRESET if model_cfg["preset"] == "shallow" else []
    else:
        specs = model_cfg["layers"]

    layers = []
    probe = np.zeros((1, *input_shape))

    def add(layer):
        nonlocal probe
        layers.append(layer)
        probe = layer.forward(probe)

    for i, layer in enumerate(specs):
        kind = layer["kind"]
        name = f"{i}.{kind}"
        if kind == "conv1d":
            if probe.ndim != 3:
                raise ShapeError(f"layer {name}: conv1d needs N x C x L input")
            add(L.Conv1d(probe.shape[1], layer["out_channels"], layer["kernel_len"], init_rng, layer.get("stride", 1), name))
        elif kind == "channel_mix":
            if probe.ndim != 3:
                raise ShapeError(f"layer {name}: channel_mix needs N x C x L input")
            add(L.ChannelMix(probe.shape[1], layer["out_channels"], init_rng, name))
        elif kind == "activation":
            add(L.Activation(layer["fn"], name))
        elif kind in ("mean_pool", "log_mean_pool"):
            add(L.MeanPool(layer["width"], layer.get("stride"), log=kind == "log_mean_pool", name=name))
        elif kind == "flatten":
            add(L.Flatten(name))
        elif kind == "dropout":
            add(L.Dropout(layer["p"], dropout_rng, name))
        elif kind == "dense":
            if probe.ndim != 2:
                add(L.Flatten(f"{name}.flatten"))
            add(L.Dense(probe.shape[1], layer["out_features"], init_rng, name))
        else:
            raise ShapeError(f"unknown layer kind {kind!r}")
    if probe.ndim != 2:
        add(L.Flatten("flatten"))

    in_features = probe.shape[1]
    clf = cfg["classifier"]
    if clf["mode"] == "none":
        layers.append(L.Dense(in_features, n_classes, init_rng, name="classifier"))
    else:
        mask = L.make_mask(n_classes, in_features, clf["threshold_t"], clf["mode"], derive_seed(seed, "mask", "classifier"))
        layers.append(L.FrozenDense(in_features, n_classes, init_rng, mask, name="classifier"))
    return L.Sequential(layers)


def build_optimizer(cfg: dict, params):
    opt = dict(cfg["optimizer"])
    kind = opt.pop("kind")
    if kind == "sgd":
        return SGD(params, lr=opt["lr"])
    return AdamW(params, **opt)


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------


class Trainer:
    """Owns a model, its optimizer and its random streams for one run."""

    def __init__(self, cfg: dict, data: PreparedData):
        self.cfg = cfg
        self.data = data
        self.model = build_model(cfg, data.train_X.shape[1:], data.n_classes)
        self.params = self.model.params()
        self.optimizer = build_optimizer(cfg, self.params)
        self.shuffle_rng = Rng(derive_seed(cfg["seed"], "shuffle"))
        self.epoch = 0
        self.history: list[EpochRecord] = []

    @property
    def dropout_rngs(self) -> list[Rng]:
        return [layer.rng for layer in self.model.layers if isinstance(layer, L.Dropout)]

    def train_epoch(self) -> float:
        """One pass over the shuffled training set; returns the mean per-trial loss."""
        X, y = self.data.train_X, self.data.train_y
        bs = self.cfg["batch_size"]
        reduction = self.cfg["loss"]["reduction"]
        order = self.shuffle_rng.permutation(len(y))
        total = 0.0
        for b, start in enumerate(range(0, len(y), bs)):
            idx = order[start : start + bs]
            logits = self.model.forward(X[idx], training=True)
            result = softmax_cross_entropy(logits, y[idx], reduction)
            if not np.isfinite(result.loss):
                raise NumericalError("non-finite training loss", self.epoch + 1, b + 1)
            self.model.backward(result.grad_logits)
            self.optimizer.step()
            self.model.check_invariants()
            total += result.loss if reduction == "sum" else result.loss * len(idx)
        return total / len(y)

    def predict(self, X) -> np.ndarray:
        """Class predictions; ties go to the lowest class index."""
        bs = max(self.cfg["batch_size"], 64)
        out = [np.argmax(self.model.forward(X[i : i + bs], training=False), axis=1) for i in range(0, len(X), bs)]
        return np.concatenate(out)

    def evaluate(self) -> float:
        return float(np.mean(self.predict(self.data.test_X) == self.data.test_y))

    def run(self, until_epoch: int, on_epoch=None) -> None:
        while self.epoch < until_epoch:
            loss = self.train_epoch()
            self.epoch += 1
            acc = self.evaluate()
            self.history.append(EpochRecord(self.epoch, loss, acc))
            if on_epoch is not None:
                on_epoch(self)

    # ---- persistence -----------------------------------------------------

    def state_dict(self) -> tuple[dict, dict]:
        arrays = {f"param.{p.name}": p.value for p in self.params}
        arrays.update(self.optimizer.state_arrays())
        clf = self.model.classifier
        mask_meta = None
        if isinstance(clf, L.FrozenDense):
            arrays["mask.keep"] = clf.mask.keep
            arrays["mask.frozen_snapshot"] = clf.frozen_snapshot
            mask_meta = {"threshold_t": clf.mask.threshold_t, "mode": clf.mask.mode, "seed": clf.mask.seed}
        meta = {
            "epoch": self.epoch,
            "config_hash": config_hash(self.cfg),
            "architecture": {p.name: list(p.value.shape) for p in self.params},
            "mask": mask_meta,
            "optimizer": {"kind": self.optimizer.kind, **self.optimizer.state_scalars()},
            "rng": {"shuffle": self.shuffle_rng.get_state(), "dropout": [r.get_state() for r in self.dropout_rngs]},
            "history": [[r.epoch, r.train_loss, r.test_accuracy] for r in self.history],
        }
        return arrays, meta

    def load_state(self, arrays: dict, meta: dict) -> None:
        for p in self.params:
            key = f"param.{p.name}"
            if key not in arrays:
                raise ShapeError(f"checkpoint has no parameter for layer {p.name!r}")
            if arrays[key].shape != p.value.shape:
                raise ShapeError(f"layer {p.name!r}: checkpoint shape {arrays[key].shape}, model shape {p.value.shape}")
        expected = {f"param.{p.name}" for p in self.params}
        extra = sorted(k for k in arrays if k.startswith("param.") and k not in expected)
        if extra:
            raise ShapeError(f"checkpoint has parameters for unknown layers: {extra}")
        if meta["optimizer"]["kind"] != self.optimizer.kind:
            raise ShapeError(f"checkpoint optimizer {meta['optimizer']['kind']!r} != {self.optimizer.kind!r}")
        clf = self.model.classifier
        if isinstance(clf, L.FrozenDense) != (meta["mask"] is not None):
            raise ShapeError("layer 'classifier': checkpoint and model disagree on Weight-Freezing")
        for p in self.params:
            p.value = arrays[f"param.{p.name}"].copy()
        if isinstance(clf, L.FrozenDense):
            if arrays["mask.keep"].shape != clf.mask.keep.shape:
                raise ShapeError(f"layer 'classifier': checkpoint mask {arrays['mask.keep'].shape}")
            clf.mask = L.MaskMatrix(arrays["mask.keep"].copy(), **meta["mask"])
            clf.W.frozen = ~clf.mask.keep
            clf.frozen_snapshot = arrays["mask.frozen_snapshot"].copy()
        self.optimizer.load_state(arrays, meta["optimizer"])
        self.shuffle_rng.set_state(meta["rng"]["shuffle"])
        for rng, state in zip(self.dropout_rngs, meta["rng"]["dropout"], strict=True):
            rng.set_state(state)
        self.epoch = int(meta["epoch"])
        self.history = [EpochRecord(int(e), float(l), float(a)) for e, l, a in meta["history"]]


def _run_info(trainer: Trainer) -> dict:
    clf = trainer.model.classifier
    cfg = trainer.cfg
    info = {
        "classifier_mode": cfg["classifier"]["mode"],
        "threshold_t": cfg["classifier"]["threshold_t"] if cfg["classifier"]["mode"] != "none" else None,
        "frozen_fraction": clf.mask.frozen_fraction if isinstance(clf, L.FrozenDense) else 0.0,
        "frozen_count": int(np.count_nonzero(~clf.mask.keep)) if isinstance(clf, L.FrozenDense) else 0,
        "classifier_weights": int(clf.W.value.size),
        "n_train": int(len(trainer.data.train_y)),
        "n_test": int(len(trainer.data.test_y)),
        "smoothing": "trailing",
        "weight_decay_scope": "trainable entries only",
        "model_selection": "max test accuracy is reported as a statistic only; it never feeds back into training",
        **trainer.data.meta,
    }
    return info


def train_run(cfg: dict, data: PreparedData | None = None, *, resume_from=None, checkpoint_path=None,
              checkpoint_epoch=None, on_epoch=None) -> tuple[MetricsReport, Trainer]:
    """Train for ``cfg["epochs"]`` epochs, evaluating on the test split after each one.

    ``checkpoint_path``/``checkpoint_epoch`` save the full training state when
    that epoch completes; ``resume_from`` continues from such a file.
    Returns the report and the trainer holding the final weights.
    """
    start = time.perf_counter()
    if data is None:
        data = prepare_data(cfg)
    trainer = Trainer(cfg, data)
    if resume_from is not None:
        trainer.load_state(*load_checkpoint(resume_from))
    if checkpoint_path is not None and checkpoint_epoch is not None and trainer.epoch < checkpoint_epoch:
        trainer.run(checkpoint_epoch, on_epoch)
        save_checkpoint(trainer, checkpoint_path)
    trainer.run(cfg["epochs"], on_epoch)
    window = cfg["metrics"]["median_window"]
    report = summarize(trainer.history, window, config_hash(cfg), time.perf_counter() - start, _run_info(trainer))
    return report, trainer


def run_experiment(cfg: dict, data: PreparedData | None = None, **kwargs) -> MetricsReport:
    return train_run(cfg, data, **kwargs)[0]


# --------------------------------------------------------------------------
# Sweeps and comparisons
# --------------------------------------------------------------------------


@dataclass
class SweepRow:
    threshold_t: float
    status: str
    max_test_accuracy: float | None = None
    max_test_epoch: int | None = None
    median_test_accuracy_window: float | None = None
    frozen_fraction: float | None = None
    error: str | None = None
    report: MetricsReport | None = None


def _sweep_cell(cfg, mode, t, data) -> SweepRow:
    try:
        report = run_experiment(with_classifier(cfg, mode, t), data)
    except FreezeNetError as exc:
        log.warning("sweep cell t=%s failed: %s", t, exc)
        return SweepRow(float(t), "failed", error=f"{type(exc).__name__}: {exc}")
    return SweepRow(
        float(t),
        "ok",
        report.max_test_accuracy,
        report.max_test_epoch,
        report.median_test_accuracy_window,
        report.info["frozen_fraction"],
        report=report,
    )


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("FREEZENET_THREADS", "1") or 1)
    return max(1, int(threads))


def threshold_sweep(cfg: dict, thresholds, data: PreparedData | None = None, threads: int | None = None) -> list[SweepRow]:
    """One run per threshold with identical seed and data; rows in ascending t.

    A failing cell is marked ``failed`` and the remaining cells still run.
    """
    thresholds = sorted(float(t) for t in thresholds)
    bad = [t for t in thresholds if not 0.0 <= t <= 1.0]
    if bad:
        raise ConfigError(f"thresholds outside [0, 1]: {bad}")
    mode = cfg["classifier"]["mode"] if cfg["classifier"]["mode"] != "none" else "frozen"
    if data is None:
        data = prepare_data(cfg)
    threads = resolve_threads(threads)
    if threads == 1 or len(thresholds) == 1:
        return [_sweep_cell(cfg, mode, t, data) for t in thresholds]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_sweep_cell, cfg, mode, t, data) for t in thresholds]
        return [f.result() for f in futures]


@dataclass
class Comparison:
    threshold_t: float
    baseline: MetricsReport
    weight_freezing: MetricsReport
    smooth_width: int
    baseline_smoothed: np.ndarray
    weight_freezing_smoothed: np.ndarray

    @property
    def median_difference(self) -> float | None:
        a = self.weight_freezing.median_test_accuracy_window
        b = self.baseline.median_test_accuracy_window
        return None if a is None or b is None else a - b


def compare_before_after(cfg: dict, t: float, data: PreparedData | None = None) -> Comparison:
    """Plain classifier versus Weight-Freezing at ``t``, same seed and data."""
    if data is None:
        data = prepare_data(cfg)
    mode = "sparse" if cfg["classifier"]["mode"] == "sparse" else "frozen"
    base = run_experiment(with_classifier(cfg, "none"), data)
    wf = run_experiment(with_classifier(cfg, mode, t), data)
    width = cfg["metrics"]["smooth_width"]
    return Comparison(float(t), base, wf, width, smooth_curve(base.accuracies, width), smooth_curve(wf.accuracies, width))
