"""Synthetic EEG-like data, the ``.frz`` trial format, checkpoints and CSV import.

``.frz`` layout (little-endian)::

    magic     8 bytes  b"FRZNET01"
    version   u32
    n_trials  u32
    n_chans   u32
    n_samples u32
    fs        f64
    n_classes u32
    payload   f64[n_trials, n_chans, n_samples]
    labels    u16[n_trials]
    meta_len  u32                        (optional trailer)
    meta      utf-8 JSON, meta_len bytes (class names, subject/session ids)

Checkpoints start with ``b"FRZCKP01"``, then u32 version, u32 header length,
a JSON header listing every array (name, shape, byte offset), then the raw
little-endian float64/bool array bytes.
"""

from __future__ import annotations

import csv
import json
import math
import os
import struct
import tempfile
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, FormatError, ParseError, ShapeError
from .tensor import Rng, derive_seed
from .trials import Trial, TrialSet

TRIAL_MAGIC = b"FRZNET01"
TRIAL_VERSION = 1
_HEADER = struct.Struct("<8sIIIIdI")

CHECKPOINT_MAGIC = b"FRZCKP01"
CHECKPOINT_VERSION = 1
_CKPT_PREFIX = struct.Struct("<8sII")

ONSET_SECONDS = 0.5


def atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# Synthetic data
# --------------------------------------------------------------------------


@dataclass
class SynthConfig:
    n_classes: int = 4
    n_channels: int = 22
    trial_seconds: float = 4.0
    fs: float = 250.0
    trials_per_class_train: int = 72
    trials_per_class_test: int = 72
    snr_db: float = 0.0
    seed: int = 0

    def class_frequency(self, k: int) -> float:
        return 8.0 + 3.0 * k

    @property
    def n_samples(self) -> int:
        return int(round(self.trial_seconds * self.fs))

    def validate(self) -> None:
        problems = []
        for name in ("n_classes", "n_channels", "trials_per_class_train", "trials_per_class_test"):
            if getattr(self, name) < 1:
                problems.append(f"synthetic.{name} must be >= 1")
        if self.n_classes < 2:
            problems.append("synthetic.n_classes must be >= 2")
        if self.n_samples < 1:
            problems.append("synthetic.trial_seconds * fs must give at least one sample")
        top = self.class_frequency(self.n_classes - 1)
        if top >= self.fs / 2:
            problems.append(f"synthetic: class frequency {top} Hz is not below fs/2 = {self.fs / 2} Hz")
        if problems:
            raise ConfigError(problems)


def _class_patterns(cfg: SynthConfig) -> np.ndarray:
    rng = Rng(derive_seed(cfg.seed, "synthetic", "patterns"))
    patterns = rng.normal(cfg.n_classes * cfg.n_channels).reshape(cfg.n_classes, cfg.n_channels)
    return patterns / np.linalg.norm(patterns, axis=1, keepdims=True)


def _synthetic_split(cfg: SynthConfig, patterns, split: str, per_class: int) -> TrialSet:
    rng = Rng(derive_seed(cfg.seed, "synthetic", split))
    labels = np.repeat(np.arange(cfg.n_classes), per_class)[rng.permutation(cfg.n_classes * per_class)]
    t = np.arange(cfg.n_samples) / cfg.fs
    onset = np.where(t < ONSET_SECONDS, 0.5 * (1.0 - np.cos(np.pi * t / ONSET_SECONDS)), 1.0)
    noise_scale = 10.0 ** (-cfg.snr_db / 20.0)
    trials = []
    for k in labels:
        phase = 2.0 * math.pi * rng.uniform(1)[0]
        wave = onset * np.sin(2.0 * math.pi * cfg.class_frequency(int(k)) * t + phase)
        signal = np.outer(patterns[k], wave)
        sigma = math.sqrt(float(np.mean(signal * signal))) * noise_scale
        noise = rng.normal(cfg.n_channels * cfg.n_samples).reshape(cfg.n_channels, cfg.n_samples)
        trials.append(Trial(signal + sigma * noise, int(k), "synthetic", split))
    return TrialSet(trials, cfg.fs, [f"class_{k}" for k in range(cfg.n_classes)])


def generate_synthetic(cfg: SynthConfig) -> tuple[TrialSet, TrialSet]:
    """Generate balanced train/test splits of oscillatory, spatially patterned trials.

    Class ``k`` is a unit spatial pattern times a sinusoid at ``8 + 3k`` Hz with
    a random phase and a raised-cosine onset, plus white Gaussian noise whose
    power is set by ``snr_db`` relative to the signal power over all channels.
    The two splits use independent substreams of ``cfg.seed``.
    """
    cfg.validate()
    patterns = _class_patterns(cfg)
    train = _synthetic_split(cfg, patterns, "train", cfg.trials_per_class_train)
    test = _synthetic_split(cfg, patterns, "test", cfg.trials_per_class_test)
    return train, test


# --------------------------------------------------------------------------
# Trial files
# --------------------------------------------------------------------------


def trialset_to_bytes(trial_set: TrialSet) -> bytes:
    if len(trial_set) == 0:
        raise ShapeError("cannot save an empty trial set")
    if trial_set.n_classes > 0xFFFF:
        raise ShapeError("labels are stored as u16")
    x = np.ascontiguousarray(trial_set.X(), dtype="<f8")
    n, c, s = x.shape
    header = _HEADER.pack(TRIAL_MAGIC, TRIAL_VERSION, n, c, s, float(trial_set.fs), trial_set.n_classes)
    meta = json.dumps(
        {
            "class_names": list(trial_set.class_names),
            "subject_ids": [t.subject_id for t in trial_set.trials],
            "session_ids": [t.session_id for t in trial_set.trials],
        },
        sort_keys=True,
    ).encode()
    labels = trial_set.y().astype("<u2")
    return header + x.tobytes() + labels.tobytes() + struct.pack("<I", len(meta)) + meta


def trialset_from_bytes(blob: bytes) -> TrialSet:
    if len(blob) < _HEADER.size:
        raise FormatError(f"file is {len(blob)} bytes, shorter than the {_HEADER.size}-byte header", len(blob))
    magic, version, n, c, s, fs, n_classes = _HEADER.unpack_from(blob, 0)
    if magic != TRIAL_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {TRIAL_MAGIC!r}", 0)
    if version != TRIAL_VERSION:
        raise FormatError(f"unsupported trial file version {version}", 8)
    if n < 1 or c < 1 or s < 1 or n_classes < 1:
        raise FormatError("header declares an empty dimension", 12)
    pos = _HEADER.size
    payload_len = n * c * s * 8
    if len(blob) < pos + payload_len + 2 * n:
        raise FormatError(
            f"truncated: header declares {n} trials x {c} channels x {s} samples "
            f"({pos + payload_len + 2 * n} bytes) but file has {len(blob)} bytes",
            len(blob),
        )
    x = np.frombuffer(blob, dtype="<f8", count=n * c * s, offset=pos).reshape(n, c, s).astype(np.float64)
    pos += payload_len
    labels = np.frombuffer(blob, dtype="<u2", count=n, offset=pos).astype(np.int64)
    pos += 2 * n
    class_names = [f"class_{k}" for k in range(n_classes)]
    subjects = ["S01"] * n
    sessions = ["1"] * n
    if pos != len(blob):
        if len(blob) < pos + 4:
            raise FormatError("truncated metadata length field", pos)
        (meta_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        if len(blob) != pos + meta_len:
            raise FormatError(f"metadata declares {meta_len} bytes, {len(blob) - pos} present", pos)
        try:
            meta = json.loads(blob[pos:].decode())
            class_names = list(meta["class_names"])
            subjects = list(meta["subject_ids"])
            sessions = list(meta["session_ids"])
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"unreadable metadata block: {exc}", pos) from None
        if len(class_names) != n_classes or len(subjects) != n or len(sessions) != n:
            raise FormatError("metadata sizes disagree with the header", pos)
    if np.any(labels >= n_classes):
        raise FormatError(f"label outside [0, {n_classes})", _HEADER.size + payload_len)
    if not np.all(np.isfinite(x)):
        raise FormatError("payload contains NaN or Inf", _HEADER.size)
    trials = [Trial(x[i], int(labels[i]), subjects[i], sessions[i]) for i in range(n)]
    return TrialSet(trials, fs, class_names)


def save_trialset(trial_set: TrialSet, path) -> None:
    atomic_write_bytes(path, trialset_to_bytes(trial_set))


def load_trialset(path) -> TrialSet:
    with open(path, "rb") as fh:
        return trialset_from_bytes(fh.read())


# --------------------------------------------------------------------------
# CSV import
# --------------------------------------------------------------------------


def import_csv_trials(data_path, labels_path, n_channels: int, fs: float, class_names=None) -> TrialSet:
    """Read one trial per CSV row (channel-major flattened) plus one label per line."""
    rows = []
    width = None
    with open(data_path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            values = []
            for col_no, cell in enumerate(row, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ParseError(f"{data_path}: non-numeric cell {cell!r}", line_no, col_no) from None
            if width is None:
                width = len(values)
                if width % n_channels:
                    raise ParseError(f"{data_path}: row of {width} values is not divisible by {n_channels} channels", line_no)
            elif len(values) != width:
                raise ParseError(f"{data_path}: ragged row with {len(values)} values, expected {width}", line_no)
            rows.append(values)
    labels = []
    with open(labels_path) as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                labels.append(int(text))
            except ValueError:
                raise ParseError(f"{labels_path}: label {text!r} is not an integer", line_no, 1) from None
    if len(rows) != len(labels):
        raise ParseError(f"{data_path} has {len(rows)} trials but {labels_path} has {len(labels)} labels")
    if not rows:
        raise ParseError(f"{data_path}: no trials")
    if min(labels) < 0:
        raise ParseError(f"{labels_path}: negative label")
    if class_names is None:
        class_names = [f"class_{k}" for k in range(max(labels) + 1)]
    data = np.array(rows, dtype=np.float64).reshape(len(rows), n_channels, -1)
    return TrialSet([Trial(d, lab) for d, lab in zip(data, labels)], float(fs), list(class_names))


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------


def checkpoint_to_bytes(arrays: dict[str, np.ndarray], meta: dict) -> bytes:
    index = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        dtype = "bool" if arr.dtype == np.bool_ else "<f8"
        raw = np.ascontiguousarray(arr, dtype=dtype).tobytes()
        index.append({"name": name, "dtype": dtype, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"arrays": index, "meta": meta}, sort_keys=True).encode()
    return _CKPT_PREFIX.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(header)) + header + b"".join(chunks)


def checkpoint_from_bytes(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if len(blob) < _CKPT_PREFIX.size:
        raise FormatError("checkpoint shorter than its prefix", len(blob))
    magic, version, header_len = _CKPT_PREFIX.unpack_from(blob, 0)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}", 0)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})", 8)
    start = _CKPT_PREFIX.size
    try:
        header = json.loads(blob[start : start + header_len].decode())
    except ValueError as exc:
        raise FormatError(f"unreadable checkpoint header: {exc}", start) from None
    base = start + header_len
    arrays = {}
    for entry in header["arrays"]:
        lo = base + entry["offset"]
        hi = lo + entry["nbytes"]
        if hi > len(blob):
            raise FormatError(f"checkpoint array {entry['name']!r} is truncated", len(blob))
        arrays[entry["name"]] = np.frombuffer(blob[lo:hi], dtype=entry["dtype"]).reshape(entry["shape"]).copy()
    return arrays, header["meta"]


def save_checkpoint(trainer, path) -> None:
    """Write every parameter, mask, optimizer moment and RNG state of ``trainer``."""
    arrays, meta = trainer.state_dict()
    atomic_write_bytes(path, checkpoint_to_bytes(arrays, meta))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        return checkpoint_from_bytes(fh.read())


def synth_config_dict(cfg: SynthConfig) -> dict:
    return asdict(cfg)
