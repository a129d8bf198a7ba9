"""Quantum models: QNNN/QENN score heads and the QCNN hybrid.

Binary circuit models read out a single Pauli-Z expectation on qubit 0 and
predict sign(score); the QCNN runs a 4-qubit kernel over 2x2 image patches
per channel and feeds the feature maps to a dense head of 32 and 10 nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuit import (
    ParameterizedCircuit,
    build_qcnn_kernel,
    build_qenn,
    build_qnnn,
)
from .grad import (
    ShiftRuleConfig,
    analytic_gradient_batch,
    circuit_expectation_batch,
    shift_gradient,
)
from .simcore import NoiseSpec, Observable, apply_depolarizing
from .optim import init_params


@dataclass
class QnnModel:
    """Variational classifier: circuit + parameters + readouts + noise."""

    circuit: ParameterizedCircuit
    theta: np.ndarray
    readout: tuple[Observable, ...]
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    arch: str = "qnnn"
    n_layers: int = 1

    @property
    def d_y(self) -> int:
        return len(self.readout)


_QNN_BUILDERS = {"qnnn": build_qnnn, "qenn": build_qenn}


def make_qnn_model(
    arch: str,
    n_qubits: int,
    n_layers: int,
    rng: np.random.Generator,
    noise_p: float = 0.0,
    noise_layers: int | None = None,
) -> QnnModel:
    if arch not in _QNN_BUILDERS:
        raise ValueError(f"unknown quantum architecture {arch!r}")
    circ = _QNN_BUILDERS[arch](n_qubits, n_layers)
    layers = len(circ.layer_boundaries) if noise_layers is None else noise_layers
    return QnnModel(
        circuit=circ,
        theta=init_params(circ.n_params, rng),
        readout=(Observable.z(0),),
        noise=NoiseSpec(noise_p, layers),
        arch=arch,
        n_layers=n_layers,
    )


def qnn_scores(model: QnnModel, X: np.ndarray) -> np.ndarray:
    """Noisy readout expectations, shape (n_examples, d_y)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.circuit.n_features:
        raise ValueError(
            f"feature dimension {X.shape[1]} does not match circuit "
            f"({model.circuit.n_features})"
        )
    cols = []
    for obs in model.readout:
        clean = circuit_expectation_batch(model.circuit, X, model.theta, obs)
        cols.append(
            apply_depolarizing(
                clean, obs.trace(model.circuit.n_qubits), model.circuit.n_qubits, model.noise
            )
        )
    return np.stack(cols, axis=1)


def qnn_forward(model: QnnModel, x: np.ndarray) -> np.ndarray:
    """Score vector for one example."""
    return qnn_scores(model, np.atleast_2d(x))[0]


def qnn_predict(model: QnnModel, X: np.ndarray) -> np.ndarray:
    """Binary prediction sign(score); a score of exactly 0 maps to class 0."""
    if model.d_y != 1:
        raise NotImplementedError("multi-class circuit readout is not instantiated")
    return (qnn_scores(model, X)[:, 0] > 0).astype(int)


def qnn_loss_and_grad(
    model: QnnModel,
    X: np.ndarray,
    y: np.ndarray,
    method: str = "analytic",
    shift_cfg: ShiftRuleConfig | None = None,
) -> tuple[float, np.ndarray]:
    """Mean squared error of the score against labels in {-1, +1}.

    The chain rule routes the loss derivative through the depolarizing factor
    into per-example circuit gradients (analytic sweep by default, the
    parameter-shift rule with ``method='shift'``).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise ValueError("batch is empty")
    if model.d_y != 1:
        raise NotImplementedError("multi-class circuit readout is not instantiated")
    obs = model.readout[0]
    scores = qnn_scores(model, X)[:, 0]
    target = 2.0 * y - 1.0
    resid = scores - target
    loss = float(np.mean(resid**2))
    dloss_dscore = 2.0 * resid / X.shape[0]
    if method == "analytic":
        per_example = analytic_gradient_batch(model.circuit, X, model.theta, obs)
    elif method == "shift":
        per_example = np.stack(
            [shift_gradient(model.circuit, x, model.theta, obs, shift_cfg) for x in X]
        )
    else:
        raise ValueError(f"unknown gradient method {method!r}")
    grad = model.noise.survival * (dloss_dscore @ per_example)
    return loss, grad


def qnn_get_params(model: QnnModel) -> np.ndarray:
    return model.theta.copy()


def qnn_set_params(model: QnnModel, flat: np.ndarray) -> None:
    model.theta = np.asarray(flat, dtype=float).copy()


@dataclass
class QcnnModel:
    """Quantum convolution (per-channel 4-qubit kernels) + dense head."""

    kernel: ParameterizedCircuit
    kernel_theta: np.ndarray  # (channels, 6)
    stride: int
    side: int
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    @property
    def n_channels(self) -> int:
        return self.kernel_theta.shape[0]

    @property
    def map_side(self) -> int:
        return (self.side - 2) // self.stride + 1


def _uniform_fan_in(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


def make_qcnn_model(
    rng: np.random.Generator,
    n_channels: int = 4,
    stride: int = 2,
    side: int = 10,
    fc_hidden: int = 32,
    n_classes: int = 10,
    noise_p: float = 0.0,
) -> QcnnModel:
    kernel = build_qcnn_kernel()
    theta = init_params(n_channels * kernel.n_params, rng).reshape(n_channels, -1)
    m = (side - 2) // stride + 1
    flat = n_channels * m * m
    return QcnnModel(
        kernel=kernel,
        kernel_theta=theta,
        stride=stride,
        side=side,
        fc1_w=_uniform_fan_in(rng, (fc_hidden, flat), flat),
        fc1_b=_uniform_fan_in(rng, (fc_hidden,), flat),
        fc2_w=_uniform_fan_in(rng, (n_classes, fc_hidden), fc_hidden),
        fc2_b=_uniform_fan_in(rng, (n_classes,), fc_hidden),
        noise=NoiseSpec(noise_p, len(kernel.layer_boundaries)),
    )


def extract_patches(images: np.ndarray, stride: int, side: int) -> np.ndarray:
    """2x2 patches at the given stride: (n, map_side, map_side, 4), row-major
    pixel order within each window."""
    images = np.asarray(images, dtype=float)
    if images.ndim == 2:
        images = images[None, :, :]
    if images.shape[1] != side or images.shape[2] != side:
        raise ValueError(f"image shape {images.shape[1:]} does not match {side}x{side}")
    m = (side - 2) // stride + 1
    out = np.empty((images.shape[0], m, m, 4))
    for i in range(m):
        for j in range(m):
            r, c = i * stride, j * stride
            out[:, i, j, 0] = images[:, r, c]
            out[:, i, j, 1] = images[:, r, c + 1]
            out[:, i, j, 2] = images[:, r + 1, c]
            out[:, i, j, 3] = images[:, r + 1, c + 1]
    return out


def _patches(model: QcnnModel, images: np.ndarray) -> np.ndarray:
    return extract_patches(images, model.stride, model.side)


_KERNEL_READOUT = Observable.z(0)


def _kernel_eval_grid(model: QcnnModel, flat_pat: np.ndarray, thetas: np.ndarray):
    """Evaluate the kernel for every (theta row, patch) pair in one sweep.

    Returns shape (len(thetas), len(flat_pat)) of clean expectations.
    """
    m = flat_pat.shape[0]
    k = thetas.shape[0]
    X = np.tile(flat_pat, (k, 1))
    TH = np.repeat(thetas, m, axis=0)
    e = circuit_expectation_batch(model.kernel, X, TH, _KERNEL_READOUT)
    return e.reshape(k, m)


def qcnn_feature_maps(model: QcnnModel, images: np.ndarray) -> np.ndarray:
    """Quantum convolution output, shape (n, channels, map_side, map_side)."""
    pat = _patches(model, images)
    n, m = pat.shape[0], model.map_side
    flat_pat = pat.reshape(n * m * m, 4)
    e = _kernel_eval_grid(model, flat_pat, model.kernel_theta)
    e = apply_depolarizing(e, 0.0, model.kernel.n_qubits, model.noise)
    return e.reshape(model.n_channels, n, m, m).transpose(1, 0, 2, 3)


def _head_forward(model: QcnnModel, maps: np.ndarray):
    flat = maps.reshape(maps.shape[0], -1)
    pre1 = flat @ model.fc1_w.T + model.fc1_b
    h1 = np.maximum(pre1, 0.0)
    logits = h1 @ model.fc2_w.T + model.fc2_b
    return flat, pre1, h1, logits


def qcnn_logits(model: QcnnModel, images: np.ndarray) -> np.ndarray:
    return _head_forward(model, qcnn_feature_maps(model, images))[3]


def qcnn_forward(model: QcnnModel, image: np.ndarray) -> np.ndarray:
    """Logits (one row) for a single image."""
    return qcnn_logits(model, np.asarray(image)[None, :, :])[0]


def qcnn_predict(model: QcnnModel, images: np.ndarray) -> np.ndarray:
    return np.argmax(qcnn_logits(model, images), axis=1)


def softmax_cross_entropy(logits: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and dloss/dlogits for integer labels."""
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    probs = ez / ez.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    nll = -np.log(probs[np.arange(n), y] + 1e-300)
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    return float(np.mean(nll)), dlogits / n


def qcnn_loss_and_grad(
    model: QcnnModel, images: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy; dense grads by backprop, kernel grads by the
    shift rule joined at the feature map."""
    images = np.asarray(images, dtype=float)
    if images.ndim == 2:
        images = images[None, :, :]
    if images.shape[0] == 0:
        raise ValueError("batch is empty")
    y = np.asarray(y, dtype=int)
    pat = _patches(model, images)
    n, m = pat.shape[0], model.map_side
    flat_pat = pat.reshape(n * m * m, 4)

    e = _kernel_eval_grid(model, flat_pat, model.kernel_theta)
    maps = (
        apply_depolarizing(e, 0.0, 4, model.noise)
        .reshape(model.n_channels, n, m, m)
        .transpose(1, 0, 2, 3)
    )

    flat, pre1, h1, logits = _head_forward(model, maps)
    loss, dlogits = softmax_cross_entropy(logits, y)

    dfc2_w = dlogits.T @ h1
    dfc2_b = dlogits.sum(axis=0)
    dh1 = dlogits @ model.fc2_w
    dpre1 = dh1 * (pre1 > 0)
    dfc1_w = dpre1.T @ flat
    dfc1_b = dpre1.sum(axis=0)
    dmaps = (dpre1 @ model.fc1_w).reshape(n, model.n_channels, m, m)

    # kernel-parameter gradients: shift-rule evaluations weighted by dL/dfeature,
    # all (channel, parameter, shift-term) variants batched into one sweep
    from .grad import _CTRL_COEFFS, _CTRL_SHIFTS  # fixed four-term rule

    (s1, s2), (c1, c2) = _CTRL_SHIFTS, _CTRL_COEFFS
    terms = ((s1, c1), (-s1, -c1), (s2, -c2), (-s2, c2))
    n_params = model.kernel.n_params
    variants = []
    for c in range(model.n_channels):
        for p in range(n_params):
            for shift, _ in terms:
                th = model.kernel_theta[c].copy()
                th[p] += shift
                variants.append(th)
    vals = _kernel_eval_grid(model, flat_pat, np.stack(variants))
    vals = vals.reshape(model.n_channels, n_params, len(terms), -1)
    weights = model.noise.survival * dmaps.transpose(1, 0, 2, 3).reshape(
        model.n_channels, -1
    )
    coeffs = np.array([c for _, c in terms])
    dtheta = np.einsum("cpti,t,ci->cp", vals, coeffs, weights)

    grad = np.concatenate(
        [dtheta.ravel(), dfc1_w.ravel(), dfc1_b, dfc2_w.ravel(), dfc2_b]
    )
    return loss, grad


def qcnn_get_params(model: QcnnModel) -> np.ndarray:
    return np.concatenate(
        [
            model.kernel_theta.ravel(),
            model.fc1_w.ravel(),
            model.fc1_b,
            model.fc2_w.ravel(),
            model.fc2_b,
        ]
    )


def qcnn_set_params(model: QcnnModel, flat: np.ndarray) -> None:
    flat = np.asarray(flat, dtype=float)
    pieces = [
        model.kernel_theta,
        model.fc1_w,
        model.fc1_b,
        model.fc2_w,
        model.fc2_b,
    ]
    lo = 0
    for arr in pieces:
        hi = lo + arr.size
        arr[...] = flat[lo:hi].reshape(arr.shape)
        lo = hi
    if lo != flat.size:
        raise ValueError(f"flat vector length {flat.size} does not match model ({lo})")
