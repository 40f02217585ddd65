import sys

import numpy as np
import pytest

from freezenet.experiment import validate

FD_STEP = 1e-5
FD_TOL = 1e-6


def numerical_grad(f, x, h=FD_STEP):
    """Central finite differences of the scalar function ``f`` at ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        g[i] = (up - down) / (2 * h)
    return grad


def max_rel_error(analytic, numeric, floor=1e-3):
    """Largest entrywise ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps entries that are zero analytically from dividing by
    roundoff noise.
    """
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def small_config(**overrides):
    """A quick synthetic experiment: 2 classes, 4 channels, 1 s trials."""
    cfg = {
        "seed": 3,
        "epochs": 6,
        "batch_size": 8,
        "data": {
            "synthetic": {
                "n_classes": 2,
                "n_channels": 4,
                "trial_seconds": 1.0,
                "fs": 128.0,
                "trials_per_class_train": 12,
                "trials_per_class_test": 8,
                "snr_db": 0.0,
                "seed": 11,
            }
        },
        "model": {
            "layers": [
                {"kind": "conv1d", "out_channels": 3, "kernel_len": 9, "stride": 2},
                {"kind": "channel_mix", "out_channels": 3},
                {"kind": "activation", "fn": "square"},
                {"kind": "log_mean_pool", "width": 10, "stride": 10},
                {"kind": "dropout", "p": 0.5},
            ]
        },
        "classifier": {"mode": "frozen", "threshold_t": 0.5},
        "preprocess": {"band": [4.0, 38.0], "order": 32},
        "metrics": {"median_window": [2, 6], "smooth_width": 3},
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key] = {**cfg[key], **value}
        else:
            cfg[key] = value
    return validate(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "GATE_LINES", None)
    if not lines:
        return
    details = getattr(module, "GATE_DETAIL", {})
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])
        if number in details:
            terminalreporter.write_line(f"    {details[number]}")
