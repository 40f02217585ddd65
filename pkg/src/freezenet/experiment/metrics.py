"""Accuracy-curve statistics."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DomainError


def smooth_curve(values, width: int = 20) -> np.ndarray:
    """Trailing moving average; output has ``len(values) - width + 1`` points."""
    values = np.asarray(values, dtype=np.float64)
    if width < 1 or values.ndim != 1 or len(values) < width:
        raise DomainError(f"smooth_curve needs a series of length >= width={width}, got {values.shape}")
    windows = np.lib.stride_tricks.sliding_window_view(values, width)
    return windows.sum(axis=1) / width


def median_window(values, lo_epoch: int, hi_epoch: int) -> float:
    """Median over the inclusive 1-based epoch range ``[lo_epoch, hi_epoch]``."""
    values = np.asarray(values, dtype=np.float64)
    if not 1 <= lo_epoch < hi_epoch <= len(values):
        raise DomainError(f"median window [{lo_epoch}, {hi_epoch}] is outside epochs 1..{len(values)}")
    return float(np.median(values[lo_epoch - 1 : hi_epoch]))


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    test_accuracy: float


@dataclass
class MetricsReport:
    per_epoch: list[EpochRecord]
    max_test_accuracy: float
    max_test_epoch: int
    median_test_accuracy_window: float | None
    config_hash: str
    runtime_seconds: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([r.test_accuracy for r in self.per_epoch])

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.train_loss for r in self.per_epoch])

    def metrics_dict(self) -> dict:
        """Everything except wall-clock time, for equality checks."""
        out = asdict(self)
        out.pop("runtime_seconds")
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        d["per_epoch"] = [EpochRecord(**r) for r in d["per_epoch"]]
        return cls(**d)


def summarize(per_epoch: list[EpochRecord], median_range, cfg_hash: str, runtime: float, info: dict) -> MetricsReport:
    acc = np.array([r.test_accuracy for r in per_epoch])
    best = int(np.argmax(acc))
    median = None if median_range is None else median_window(acc, *median_range)
    return MetricsReport(
        per_epoch=per_epoch,
        max_test_accuracy=float(acc[best]),
        max_test_epoch=best + 1,
        median_test_accuracy_window=median,
        config_hash=cfg_hash,
        runtime_seconds=runtime,
        info=info,
    )
