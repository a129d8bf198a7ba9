"""Parameter-update rules: GD, SGD, Adam, and SQNGD with optional weight decay.

Weight decay adds the gradient of lambda * ||theta||^2 (i.e. 2*lambda*theta)
to the loss gradient; at lambda=0 the update path is bit-identical to the
undecayed one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grad import MetricTensor

KINDS = ("gd", "sgd", "adam", "sqngd")


class DivergenceError(FloatingPointError):
    """Raised when a step sees non-finite gradients or metric entries."""


@dataclass
class OptimizerState:
    kind: str = "sgd"
    learning_rate: float = 0.01
    batch_size: int = 4
    weight_decay: float = 0.0
    pinv_cutoff: float = 1e-8
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)
    t: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"optimizer kind must be one of {KINDS}, got {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.pinv_cutoff <= 0:
            raise ValueError("pinv_cutoff must be > 0")


def _effective_grad(theta: np.ndarray, grad: np.ndarray, state: OptimizerState) -> np.ndarray:
    grad = np.asarray(grad, dtype=float)
    if grad.shape != np.shape(theta):
        raise ValueError(f"gradient shape {grad.shape} does not match theta {np.shape(theta)}")
    if not np.all(np.isfinite(grad)):
        raise DivergenceError("non-finite gradient entries; step rejected")
    if state.weight_decay > 0:
        return grad + 2.0 * state.weight_decay * theta
    return grad


def step_gd(theta: np.ndarray, grad: np.ndarray, state: OptimizerState) -> np.ndarray:
    """Steepest-descent update; used for both GD and SGD (batching differs)."""
    theta = np.asarray(theta, dtype=float)
    return theta - state.learning_rate * _effective_grad(theta, grad, state)


def pseudo_inverse(metric: MetricTensor, cutoff: float) -> np.ndarray:
    """Symmetric pseudo-inverse; eigenvalues below cutoff*max are zeroed."""
    if not np.all(np.isfinite(metric.g)):
        raise DivergenceError("non-finite metric entries")
    w, vecs = np.linalg.eigh(metric.g)
    wmax = float(np.max(np.abs(w))) if w.size else 0.0
    inv = np.zeros_like(w)
    keep = w > cutoff * wmax
    inv[keep] = 1.0 / w[keep]
    return (vecs * inv) @ vecs.T


def step_sqngd(
    theta: np.ndarray, grad: np.ndarray, metric: MetricTensor, state: OptimizerState
) -> np.ndarray:
    """Natural-gradient update preconditioned by the metric pseudo-inverse."""
    theta = np.asarray(theta, dtype=float)
    if metric.g.shape != (theta.size, theta.size):
        raise ValueError(f"metric shape {metric.g.shape} does not match theta size {theta.size}")
    eg = _effective_grad(theta, grad, state)
    return theta - state.learning_rate * (pseudo_inverse(metric, state.pinv_cutoff) @ eg)


def step_adam(theta: np.ndarray, grad: np.ndarray, state: OptimizerState) -> np.ndarray:
    """Bias-corrected first/second-moment update."""
    theta = np.asarray(theta, dtype=float)
    eg = _effective_grad(theta, grad, state)
    if state.m is None:
        state.m = np.zeros_like(theta)
        state.v = np.zeros_like(theta)
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * eg
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * eg * eg
    mhat = state.m / (1.0 - state.beta1**state.t)
    vhat = state.v / (1.0 - state.beta2**state.t)
    return theta - state.learning_rate * mhat / (np.sqrt(vhat) + state.eps)


def step(
    theta: np.ndarray,
    grad: np.ndarray,
    state: OptimizerState,
    metric: MetricTensor | None = None,
) -> np.ndarray:
    if state.kind == "adam":
        return step_adam(theta, grad, state)
    if state.kind == "sqngd":
        if metric is None:
            raise ValueError("sqngd requires a metric tensor")
        return step_sqngd(theta, grad, metric, state)
    return step_gd(theta, grad, state)


def make_batches(n: int, batch_size: int, seed) -> list[np.ndarray]:
    """Seeded random permutation of range(n) cut into ceil(n/bs) batches."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if batch_size > n:
        raise ValueError(f"batch_size {batch_size} exceeds set size {n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


def init_params(n_params: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform angles on [0, 2*pi); full period avoids privileging identity."""
    return rng.uniform(0.0, 2.0 * np.pi, n_params)
