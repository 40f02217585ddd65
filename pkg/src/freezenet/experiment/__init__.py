from .config import load_config, validate
from .metrics import MetricsReport, median_window, smooth_curve
from .runner import compare_before_after, prepare_data, run_experiment, threshold_sweep, train_run

__all__ = [
    "MetricsReport",
    "compare_before_after",
    "load_config",
    "median_window",
    "prepare_data",
    "run_experiment",
    "smooth_curve",
    "threshold_sweep",
    "train_run",
    "validate",
]
