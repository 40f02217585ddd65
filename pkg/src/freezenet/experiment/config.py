"""Experiment configuration: JSON schema, defaults and semantic validation.

Unknown keys anywhere in a config are errors. :func:`load_config` reports
every problem it finds at once, before any data is touched.
"""

from __future__ import annotations

import copy
import hashlib
import json

import jsonschema

from ..data_io import SynthConfig
from ..errors import ConfigError

DEFAULT_THRESHOLDS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]

_number = {"type": "number"}
_count = {"type": "integer", "minimum": 1}
_pair = {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}


def _closed(properties, required=()):
    return {"type": "object", "properties": properties, "required": list(required), "additionalProperties": False}


_SYNTHETIC = _closed(
    {
        "n_classes": {"type": "integer", "minimum": 2},
        "n_channels": _count,
        "trial_seconds": {"type": "number", "exclusiveMinimum": 0},
        "fs": {"type": "number", "exclusiveMinimum": 0},
        "trials_per_class_train": _count,
        "trials_per_class_test": _count,
        "snr_db": _number,
        "seed": {"type": "integer", "minimum": 0},
    }
)

_DATA_SOURCE = {
    "oneOf": [
        _closed({"synthetic": _SYNTHETIC}, ["synthetic"]),
        _closed({"train_path": {"type": "string"}, "test_path": {"type": "string"}}, ["train_path", "test_path"]),
    ]
}

_LAYER = {
    "oneOf": [
        _closed(
            {
                "kind": {"const": "conv1d"},
                "out_channels": _count,
                "kernel_len": _count,
                "stride": _count,
            },
            ["kind", "out_channels", "kernel_len"],
        ),
        _closed({"kind": {"const": "channel_mix"}, "out_channels": _count}, ["kind", "out_channels"]),
        _closed({"kind": {"const": "activation"}, "fn": {"enum": ["relu", "elu", "square"]}}, ["kind", "fn"]),
        _closed(
            {"kind": {"enum": ["mean_pool", "log_mean_pool"]}, "width": _count, "stride": _count},
            ["kind", "width"],
        ),
        _closed({"kind": {"const": "flatten"}}, ["kind"]),
        _closed({"kind": {"const": "dropout"}, "p": {"type": "number", "minimum": 0, "exclusiveMaximum": 1}}, ["kind", "p"]),
        _closed({"kind": {"const": "dense"}, "out_features": _count}, ["kind", "out_features"]),
    ]
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "freezenet experiment config",
    **_closed(
        {
            "seed": {"type": "integer", "minimum": 0},
            "epochs": _count,
            "batch_size": _count,
            "model": {
                "oneOf": [
                    _closed({"preset": {"enum": ["shallow", "linear"]}}, ["preset"]),
                    _closed({"layers": {"type": "array", "items": _LAYER}}, ["layers"]),
                ]
            },
            "classifier": _closed(
                {
                    "mode": {"enum": ["none", "frozen", "sparse"]},
                    "threshold_t": {"type": "number", "minimum": 0, "maximum": 1},
                }
            ),
            "optimizer": _closed(
                {
                    "kind": {"enum": ["sgd", "adamw"]},
                    "lr": {"type": "number", "exclusiveMinimum": 0},
                    "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                    "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                    "eps": {"type": "number", "exclusiveMinimum": 0},
                    "weight_decay": {"type": "number", "minimum": 0},
                }
            ),
            "loss": _closed({"reduction": {"enum": ["sum", "mean"]}}),
            "data": _DATA_SOURCE,
            "preprocess": _closed(
                {
                    "band": {"oneOf": [_pair, {"type": "null"}]},
                    "order": {"type": "integer", "minimum": 2},
                    "window_seconds": {"oneOf": [_pair, {"type": "null"}]},
                    "align": {"enum": ["per_split", "pooled", "none"]},
                }
            ),
            "metrics": _closed(
                {
                    "median_window": {"oneOf": [{"type": "array", "items": _count, "minItems": 2, "maxItems": 2}, {"type": "null"}]},
                    "smooth_width": _count,
                }
            ),
            "pooled_subjects": {"type": "array", "items": _DATA_SOURCE},
        },
        ["data"],
    ),
}

DEFAULTS = {
    "seed": 0,
    "epochs": 800,
    "batch_size": 32,
    "model": {"preset": "shallow"},
    "classifier": {"mode": "frozen", "threshold_t": 0.3},
    "optimizer": {"kind": "adamw", "lr": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "weight_decay": 0.01},
    "loss": {"reduction": "sum"},
    "preprocess": {"band": [4.0, 38.0], "order": 200, "window_seconds": None, "align": "per_split"},
    "metrics": {"median_window": [400, 800], "smooth_width": 20},
    "pooled_subjects": [],
}

_SGD_KEYS = {"kind", "lr"}
# either-or blocks: a given value replaces the default instead of merging into it
_REPLACED = {"model"}


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if key not in _REPLACED and isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _schema_problems(raw) -> list[str]:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    problems = []
    for err in sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path))):
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        detail = err.message
        if err.context:
            # oneOf failures: report the branch that got furthest
            best = max(err.context, key=lambda e: len(e.absolute_path))
            detail = f"{detail}; {best.message}"
        problems.append(f"{where}: {detail}")
    return problems


def _source_problems(source, where) -> list[str]:
    if "synthetic" not in source:
        return []
    try:
        SynthConfig(**source["synthetic"]).validate()
    except ConfigError as exc:
        return [f"{where}: {p}" for p in exc.problems]
    return []


def validate(cfg: dict) -> dict:
    """Validate a raw config dict and return it merged with defaults."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    problems = _schema_problems(cfg)
    if problems:
        raise ConfigError(problems)
    merged = _merge(DEFAULTS, cfg)
    if merged["optimizer"]["kind"] == "sgd":
        extra = set(cfg.get("optimizer", {})) - _SGD_KEYS
        if extra:
            problems.append(f"optimizer: sgd takes only 'lr', got {sorted(extra)}")
        merged["optimizer"] = {"kind": "sgd", "lr": merged["optimizer"]["lr"]}
    window = merged["metrics"]["median_window"]
    if window is not None:
        lo, hi = window
        if not lo < hi:
            problems.append(f"metrics/median_window: need lo < hi, got {window}")
        if hi > merged["epochs"]:
            problems.append(
                f"metrics/median_window: end epoch {hi} exceeds epochs={merged['epochs']}; "
                "shorten the window or set it to null"
            )
    if merged["metrics"]["smooth_width"] > merged["epochs"]:
        problems.append(f"metrics/smooth_width {merged['metrics']['smooth_width']} exceeds epochs={merged['epochs']}")
    band = merged["preprocess"]["band"]
    if band is not None and not 0 < band[0] < band[1]:
        problems.append(f"preprocess/band: need 0 < lo < hi, got {band}")
    if merged["preprocess"]["order"] % 2:
        problems.append("preprocess/order must be even")
    ws = merged["preprocess"]["window_seconds"]
    if ws is not None and not ws[1] > ws[0]:
        problems.append(f"preprocess/window_seconds: need start < end, got {ws}")
    problems += _source_problems(merged["data"], "data")
    if band is not None and "synthetic" in merged["data"]:
        fs = SynthConfig(**merged["data"]["synthetic"]).fs
        if band[1] >= fs / 2:
            problems.append(f"preprocess/band: upper edge {band[1]} Hz must be below fs/2 = {fs / 2} Hz")
    for i, src in enumerate(merged["pooled_subjects"]):
        problems += _source_problems(src, f"pooled_subjects/{i}")
    if problems:
        raise ConfigError(problems)
    return merged


def load_config(path, seed: int | None = None) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    if seed is not None and isinstance(raw, dict):
        raw["seed"] = seed
    return validate(raw)


def canonical_json(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def with_classifier(cfg: dict, mode: str, t: float | None = None) -> dict:
    out = copy.deepcopy(cfg)
    out["classifier"]["mode"] = mode
    if t is not None:
        out["classifier"]["threshold_t"] = float(t)
    return validate(out)
