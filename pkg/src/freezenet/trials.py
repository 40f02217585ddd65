"""Labelled trial containers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError


@dataclass
class Trial:
    data: np.ndarray  # channels x samples
    label: int
    subject_id: str = "S01"
    session_id: str = "1"

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[1] < 1:
            raise ShapeError(f"trial data must be channels x samples, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise DomainError("trial data contains NaN or Inf")


@dataclass
class TrialSet:
    trials: list[Trial]
    fs: float
    class_names: list[str]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = {t.data.shape for t in self.trials}
        if len(shapes) > 1:
            raise ShapeError(f"all trials must share one shape, got {sorted(shapes)}")
        n_classes = len(self.class_names)
        for i, t in enumerate(self.trials):
            if not 0 <= t.label < n_classes:
                raise DomainError(f"trial {i}: label {t.label} outside [0, {n_classes})")

    def __len__(self):
        return len(self.trials)

    @property
    def channel_count(self) -> int:
        return self.trials[0].data.shape[0] if self.trials else 0

    @property
    def sample_count(self) -> int:
        return self.trials[0].data.shape[1] if self.trials else 0

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def X(self) -> np.ndarray:
        """Stacked data, ``N x channels x samples``."""
        return np.stack([t.data for t in self.trials])

    def y(self) -> np.ndarray:
        return np.array([t.label for t in self.trials], dtype=np.int64)

    def with_data(self, data, **meta) -> "TrialSet":
        """Copy of this set with new per-trial arrays (same labels and ids)."""
        trials = [
            Trial(d, t.label, t.subject_id, t.session_id) for d, t in zip(data, self.trials, strict=True)
        ]
        return TrialSet(trials, self.fs, list(self.class_names), {**self.meta, **meta})
