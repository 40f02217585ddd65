"""Softmax cross-entropy and the SGD / AdamW optimizers.

Both optimizers honour ``Param.frozen``: a frozen entry receives no update at
all, including AdamW's decoupled weight decay, and its moment buffers stay
exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError
from .layers import Param


@dataclass
class LossResult:
    loss: float
    grad_logits: np.ndarray


def softmax_cross_entropy(logits, targets, reduction: str = "sum") -> LossResult:
    """Cross-entropy of softmax(logits) against integer targets.

    ``reduction="sum"`` adds the per-sample losses, ``"mean"`` averages them
    (and scales the gradient accordingly).
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets)
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise ShapeError(f"logits must be N x C with C >= 2, got {logits.shape}")
    if targets.shape != (logits.shape[0],):
        raise ShapeError(f"targets shape {targets.shape} does not match logits {logits.shape}")
    n, c = logits.shape
    if np.any(targets < 0) or np.any(targets >= c):
        raise DomainError(f"targets must lie in [0, {c})")
    if reduction not in ("sum", "mean"):
        raise DomainError(f"unknown reduction {reduction!r}")

    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    log_norm = np.log(total)
    rows = np.arange(n)
    per_sample = log_norm[:, 0] - shifted[rows, targets]
    grad = exp / total
    grad[rows, targets] -= 1.0
    loss = float(per_sample.sum())
    if reduction == "mean":
        loss /= n
        grad /= n
    return LossResult(loss=loss, grad_logits=grad)


def _check_pair(p: Param):
    if p.grad is None or p.grad.shape != p.value.shape:
        got = None if p.grad is None else p.grad.shape
        raise ShapeError(f"{p.name}: gradient {got} does not match parameter {p.value.shape}")


def sgd_step(params: list[Param], lr: float) -> None:
    """``p := p - lr * g`` for every parameter (frozen entries untouched)."""
    if not lr > 0:
        raise DomainError(f"learning rate must be positive, got {lr}")
    for p in params:
        _check_pair(p)
        updated = p.value - lr * p.grad
        p.value = updated if p.frozen is None else np.where(p.frozen, p.value, updated)


class SGD:
    kind = "sgd"

    def __init__(self, params: list[Param], lr: float = 1e-3):
        if not lr > 0:
            raise DomainError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = lr

    def step(self) -> None:
        sgd_step(self.params, self.lr)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {}

    def state_scalars(self) -> dict:
        return {"lr": self.lr}

    def load_state(self, arrays, scalars) -> None:
        pass


@dataclass
class AdamWState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step_count: int = 0
    hyper: dict = field(
        default_factory=lambda: {"lr": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "weight_decay": 0.01}
    )

    @classmethod
    def for_params(cls, params: list[Param], **hyper) -> "AdamWState":
        state = cls(m=[np.zeros_like(p.value) for p in params], v=[np.zeros_like(p.value) for p in params])
        unknown = set(hyper) - set(state.hyper)
        if unknown:
            raise DomainError(f"unknown AdamW hyperparameters: {sorted(unknown)}")
        state.hyper.update(hyper)
        if not state.hyper["lr"] > 0:
            raise DomainError(f"learning rate must be positive, got {state.hyper['lr']}")
        return state


def adamw_step(state: AdamWState, params: list[Param]) -> None:
    """One AdamW update with decoupled weight decay on the trainable entries.

    ``p := p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p``
    """
    if len(state.m) != len(params):
        raise ShapeError(f"optimizer state holds {len(state.m)} buffers for {len(params)} parameters")
    h = state.hyper
    lr, beta1, beta2, eps, wd = h["lr"], h["beta1"], h["beta2"], h["eps"], h["weight_decay"]
    state.step_count += 1
    bias1 = 1.0 - beta1**state.step_count
    bias2 = 1.0 - beta2**state.step_count
    for i, p in enumerate(params):
        _check_pair(p)
        if state.m[i].shape != p.value.shape:
            raise ShapeError(f"{p.name}: moment buffer {state.m[i].shape} does not match {p.value.shape}")
        m = beta1 * state.m[i] + (1.0 - beta1) * p.grad
        v = beta2 * state.v[i] + (1.0 - beta2) * (p.grad * p.grad)
        m_hat = m / bias1
        v_hat = v / bias2
        updated = p.value - lr * (m_hat / (np.sqrt(v_hat) + eps)) - lr * wd * p.value
        if p.frozen is not None:
            updated = np.where(p.frozen, p.value, updated)
            m = np.where(p.frozen, 0.0, m)
            v = np.where(p.frozen, 0.0, v)
        state.m[i] = m
        state.v[i] = v
        p.value = updated


class AdamW:
    kind = "adamw"

    def __init__(self, params: list[Param], **hyper):
        self.params = params
        self.state = AdamWState.for_params(params, **hyper)

    def step(self) -> None:
        adamw_step(self.state, self.params)

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {}
        for p, m, v in zip(self.params, self.state.m, self.state.v):
            arrays[f"adamw.m.{p.name}"] = m
            arrays[f"adamw.v.{p.name}"] = v
        return arrays

    def state_scalars(self) -> dict:
        return {"step_count": self.state.step_count, **self.state.hyper}

    def load_state(self, arrays, scalars) -> None:
        for i, p in enumerate(self.params):
            for buf, key in ((self.state.m, "m"), (self.state.v, "v")):
                arr = arrays[f"adamw.{key}.{p.name}"]
                if arr.shape != p.value.shape:
                    raise ShapeError(f"{p.name}: checkpoint moment {arr.shape} does not match {p.value.shape}")
                buf[i] = arr.copy()
        self.state.step_count = int(scalars["step_count"])
