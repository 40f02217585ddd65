"""EEG-style preprocessing: FIR bandpass, trial normalization, Euclidean alignment, epoching.

The order applied by :func:`preprocess_split` is filter, epoch, normalize, align.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTrialError, DomainError, InsufficientLengthError, RangeError, ShapeError
from .tensor import sym_inv_sqrt
from .trials import Trial, TrialSet

BLACKMAN = (0.42, 0.5, 0.08)


@dataclass(frozen=True)
class FirFilter:
    taps: np.ndarray
    f_lo: float
    f_hi: float
    fs: float
    window: str = "blackman"

    @property
    def order(self) -> int:
        return len(self.taps) - 1

    def response(self, freqs) -> np.ndarray:
        """Complex frequency response at ``freqs`` (Hz)."""
        n = np.arange(len(self.taps))
        freqs = np.atleast_1d(np.asarray(freqs, dtype=np.float64))
        return np.exp(-2j * np.pi * np.outer(freqs, n) / self.fs) @ self.taps


def blackman_window(order: int) -> np.ndarray:
    a0, a1, a2 = BLACKMAN
    n = np.arange(order + 1)
    return a0 - a1 * np.cos(2 * np.pi * n / order) + a2 * np.cos(4 * np.pi * n / order)


def design_bandpass_fir(f_lo: float, f_hi: float, fs: float, order: int = 200) -> FirFilter:
    """Blackman-windowed sinc bandpass with ``order + 1`` taps.

    The taps are the difference of two ideal lowpass kernels, windowed, then
    scaled to unit gain at ``sqrt(f_lo * f_hi)``. They are built for one half
    and mirrored, so the symmetry is exact.
    """
    if not 0 < f_lo < f_hi < fs / 2:
        raise DomainError(f"band edges must satisfy 0 < f_lo < f_hi < fs/2, got [{f_lo}, {f_hi}] at fs={fs}")
    if order < 2 or order % 2:
        raise DomainError(f"filter order must be even and >= 2, got {order}")
    half = order // 2
    m = np.arange(half + 1) - half  # -half .. 0
    lo, hi = f_lo / fs, f_hi / fs
    ideal = 2 * hi * np.sinc(2 * hi * m) - 2 * lo * np.sinc(2 * lo * m)
    left = ideal * blackman_window(order)[: half + 1]
    taps = np.concatenate([left, left[-2::-1]])
    fir = FirFilter(taps, float(f_lo), float(f_hi), float(fs))
    gain = abs(fir.response(np.sqrt(f_lo * f_hi))[0])
    return FirFilter(taps / gain, float(f_lo), float(f_hi), float(fs))


def filter_signal(x, fir: FirFilter) -> np.ndarray:
    """Causal per-channel filtering, then a left shift of ``order / 2`` samples.

    The first and last ``order / 2`` output samples carry edge transients.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected channels x samples, got {x.shape}")
    length = x.shape[1]
    if length <= fir.order:
        raise InsufficientLengthError(f"signal has {length} samples, filter order is {fir.order}")
    delay = fir.order // 2
    out = np.zeros_like(x)
    for c in range(x.shape[0]):
        causal = np.convolve(x[c], fir.taps)[:length]
        out[c, : length - delay] = causal[delay:]
    return out


def normalize_trial(trial: Trial) -> Trial:
    """Divide by the global max absolute value over all channels and samples."""
    peak = float(np.max(np.abs(trial.data)))
    if peak == 0.0:
        raise DegenerateTrialError("cannot normalize an all-zero trial")
    return Trial(trial.data / peak, trial.label, trial.subject_id, trial.session_id)


def mean_covariance(trials) -> np.ndarray:
    """``(1/N) sum_i x_i x_i^T``, summed in trial order."""
    trials = list(trials)
    if not trials:
        raise DomainError("cannot estimate a covariance from zero trials")
    r = np.zeros((trials[0].shape[0],) * 2)
    for x in trials:
        r += x @ x.T
    return r / len(trials)


def alignment_matrix(trial_set: TrialSet, eps: float = 1e-10) -> np.ndarray:
    if len(trial_set) == 0:
        raise DomainError("euclidean_align needs at least one trial")
    return sym_inv_sqrt(mean_covariance(t.data for t in trial_set.trials), eps)


def apply_alignment(trial_set: TrialSet, matrix) -> TrialSet:
    aligned = [matrix @ t.data for t in trial_set.trials]
    return trial_set.with_data(aligned, alignment_matrix=matrix)


def euclidean_align(trial_set: TrialSet, eps: float = 1e-10) -> TrialSet:
    """Whiten every trial by the inverse square root of the set's mean covariance.

    The matrix used is stored as ``meta["alignment_matrix"]`` so it can be
    reapplied to held-out trials with :func:`apply_alignment`.
    """
    return apply_alignment(trial_set, alignment_matrix(trial_set, eps))


def window_samples(window, fs) -> tuple[int, int]:
    t_start, t_end = window
    if not t_end > t_start:
        raise DomainError(f"epoch window must have t_end > t_start, got {window}")
    return int(round(t_start * fs)), int(round((t_end - t_start) * fs))


def epoch(continuous, cue_samples, window, fs, labels=None, class_names=None, subject_id="S01", session_id="1"):
    """Cut ``[cue + t_start*fs, cue + t_end*fs)`` around every cue into a TrialSet."""
    continuous = np.asarray(continuous, dtype=np.float64)
    if continuous.ndim != 2:
        raise ShapeError(f"expected channels x samples, got {continuous.shape}")
    offset, length = window_samples(window, fs)
    total = continuous.shape[1]
    bad = [i for i, cue in enumerate(cue_samples) if cue + offset < 0 or cue + offset + length > total]
    if bad:
        raise RangeError(f"epoch window {list(window)} s exceeds the recording ({total} samples) for cue index(es) {bad}")
    labels = [0] * len(cue_samples) if labels is None else list(labels)
    if class_names is None:
        class_names = [f"class_{k}" for k in range(max(labels, default=0) + 1)]
    trials = [
        Trial(continuous[:, cue + offset : cue + offset + length].copy(), int(lab), subject_id, session_id)
        for cue, lab in zip(cue_samples, labels, strict=True)
    ]
    return TrialSet(trials, float(fs), list(class_names))


def crop_trials(trial_set: TrialSet, window) -> TrialSet:
    """Epoch each trial of a set, treating its first sample as the cue."""
    if window is None:
        return trial_set
    offset, length = window_samples(window, trial_set.fs)
    if offset < 0 or offset + length > trial_set.sample_count:
        raise RangeError(f"epoch window {list(window)} s exceeds the {trial_set.sample_count}-sample trials")
    return trial_set.with_data([t.data[:, offset : offset + length].copy() for t in trial_set.trials])


def preprocess_split(trial_set: TrialSet, fir: FirFilter | None, window) -> TrialSet:
    """Filter, epoch and normalize one split. Alignment is applied by the caller."""
    data = trial_set
    if fir is not None:
        data = data.with_data([filter_signal(t.data, fir) for t in data.trials], edge_transient_samples=fir.order // 2)
    data = crop_trials(data, window)
    return data.with_data([normalize_trial(t).data for t in data.trials])


def align_splits(train: TrialSet, test: TrialSet, scope: str = "per_split", eps: float = 1e-10):
    """Euclidean-align a train/test pair.

    ``per_split`` estimates the matrix on the training trials only and reuses
    it unchanged for the test trials. ``pooled`` estimates it on both.
    ``none`` skips alignment.
    """
    if scope == "none":
        return train, test
    if scope == "per_split":
        matrix = alignment_matrix(train, eps)
    elif scope == "pooled":
        matrix = sym_inv_sqrt(mean_covariance([t.data for t in train.trials + test.trials]), eps)
    else:
        raise DomainError(f"unknown alignment scope {scope!r}")
    return apply_alignment(train, matrix), apply_alignment(test, matrix)
