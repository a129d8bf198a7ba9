"""Classical baselines with hand-rolled backpropagation.

DenseNet covers the MLP and over-parameterized MLP++ settings; ConvNet swaps
the quantum convolution for a classical 2x2 kernel while keeping the same
dense head, so the two image models differ only in the first layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qmodels import extract_patches, softmax_cross_entropy


def uniform_fan_in(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


@dataclass
class DenseNet:
    """Fully-connected network; rectifier on hidden layers.

    ``loss`` is "softmax" (cross-entropy over class logits) or "squared"
    (single output scored against labels in {-1,+1}, the circuit-model
    convention).
    """

    widths: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    loss: str = "softmax"

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


def make_dense(widths, rng: np.random.Generator, loss: str = "softmax") -> DenseNet:
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2:
        raise ValueError("need at least input and output widths")
    if loss not in ("softmax", "squared"):
        raise ValueError(f"unknown loss {loss!r}")
    if loss == "squared" and widths[-1] != 1:
        raise ValueError("squared loss expects a single output")
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(uniform_fan_in(rng, (fan_out, fan_in), fan_in))
        biases.append(uniform_fan_in(rng, (fan_out,), fan_in))
    return DenseNet(widths, weights, biases, loss)


def _dense_pass(net: DenseNet, X: np.ndarray):
    acts = [X]
    pres = []
    h = X
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        pre = h @ w.T + b
        pres.append(pre)
        h = pre if i == last else np.maximum(pre, 0.0)
        acts.append(h)
    return acts, pres


def dense_logits(net: DenseNet, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != net.widths[0]:
        raise ValueError(f"input width {X.shape[1]} does not match net ({net.widths[0]})")
    return _dense_pass(net, X)[0][-1]


def dense_forward(net: DenseNet, x: np.ndarray) -> np.ndarray:
    """Logits (or single score) for one example."""
    return dense_logits(net, np.atleast_2d(x))[0]


def dense_predict(net: DenseNet, X: np.ndarray) -> np.ndarray:
    out = dense_logits(net, X)
    if net.loss == "squared":
        return (out[:, 0] > 0).astype(int)
    return np.argmax(out, axis=1)


def dense_loss_and_grad(net: DenseNet, X: np.ndarray, y: np.ndarray):
    """Exact gradients for the configured loss; flattened layer by layer."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("batch is empty")
    if X.shape[1] != net.widths[0]:
        raise ValueError(f"input width {X.shape[1]} does not match net ({net.widths[0]})")
    y = np.asarray(y)
    acts, pres = _dense_pass(net, X)
    out = acts[-1]
    if net.loss == "softmax":
        loss, dout = softmax_cross_entropy(out, y.astype(int))
    else:
        target = 2.0 * y.astype(float) - 1.0
        resid = out[:, 0] - target
        loss = float(np.mean(resid**2))
        dout = (2.0 * resid / X.shape[0])[:, None]
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.weights)
    delta = dout
    for i in range(len(net.weights) - 1, -1, -1):
        grads_w[i] = delta.T @ acts[i]
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i]) * (pres[i - 1] > 0)
    flat = np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(grads_w, grads_b)])
    return loss, flat


def dense_get_params(net: DenseNet) -> np.ndarray:
    return np.concatenate(
        [np.concatenate([w.ravel(), b]) for w, b in zip(net.weights, net.biases)]
    )


def dense_set_params(net: DenseNet, flat: np.ndarray) -> None:
    flat = np.asarray(flat, dtype=float)
    lo = 0
    for w, b in zip(net.weights, net.biases):
        w[...] = flat[lo : lo + w.size].reshape(w.shape)
        lo += w.size
        b[...] = flat[lo : lo + b.size]
        lo += b.size
    if lo != flat.size:
        raise ValueError(f"flat vector length {flat.size} does not match net ({lo})")


@dataclass
class ConvNet:
    """One classical 2x2 conv layer + the same dense head as the QCNN."""

    conv_w: np.ndarray  # (channels, 4)
    conv_b: np.ndarray  # (channels,)
    stride: int
    side: int
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray

    @property
    def n_channels(self) -> int:
        return self.conv_w.shape[0]

    @property
    def map_side(self) -> int:
        return (self.side - 2) // self.stride + 1

    @property
    def n_params(self) -> int:
        return (
            self.conv_w.size
            + self.conv_b.size
            + self.fc1_w.size
            + self.fc1_b.size
            + self.fc2_w.size
            + self.fc2_b.size
        )


def make_conv(
    rng: np.random.Generator,
    n_channels: int = 4,
    stride: int = 2,
    side: int = 10,
    fc_hidden: int = 32,
    n_classes: int = 10,
) -> ConvNet:
    m = (side - 2) // stride + 1
    flat = n_channels * m * m
    return ConvNet(
        conv_w=uniform_fan_in(rng, (n_channels, 4), 4),
        conv_b=uniform_fan_in(rng, (n_channels,), 4),
        stride=stride,
        side=side,
        fc1_w=uniform_fan_in(rng, (fc_hidden, flat), flat),
        fc1_b=uniform_fan_in(rng, (fc_hidden,), flat),
        fc2_w=uniform_fan_in(rng, (n_classes, fc_hidden), fc_hidden),
        fc2_b=uniform_fan_in(rng, (n_classes,), fc_hidden),
    )


def conv_feature_maps(net: ConvNet, images: np.ndarray) -> np.ndarray:
    pat = extract_patches(images, net.stride, net.side)  # (n, m, m, 4)
    return np.einsum("nijp,cp->ncij", pat, net.conv_w) + net.conv_b[None, :, None, None]


def _conv_head(net: ConvNet, maps: np.ndarray):
    flat = maps.reshape(maps.shape[0], -1)
    pre1 = flat @ net.fc1_w.T + net.fc1_b
    h1 = np.maximum(pre1, 0.0)
    logits = h1 @ net.fc2_w.T + net.fc2_b
    return flat, pre1, h1, logits


def conv_logits(net: ConvNet, images: np.ndarray) -> np.ndarray:
    return _conv_head(net, conv_feature_maps(net, images))[3]


def conv_forward(net: ConvNet, image: np.ndarray) -> np.ndarray:
    return conv_logits(net, np.asarray(image)[None, :, :])[0]


def conv_predict(net: ConvNet, images: np.ndarray) -> np.ndarray:
    return np.argmax(conv_logits(net, images), axis=1)


def conv_loss_and_grad(net: ConvNet, images: np.ndarray, y: np.ndarray):
    images = np.asarray(images, dtype=float)
    if images.ndim == 2:
        images = images[None, :, :]
    if images.shape[0] == 0:
        raise ValueError("batch is empty")
    y = np.asarray(y, dtype=int)
    pat = extract_patches(images, net.stride, net.side)
    maps = np.einsum("nijp,cp->ncij", pat, net.conv_w) + net.conv_b[None, :, None, None]
    flat, pre1, h1, logits = _conv_head(net, maps)
    loss, dlogits = softmax_cross_entropy(logits, y)
    dfc2_w = dlogits.T @ h1
    dfc2_b = dlogits.sum(axis=0)
    dh1 = dlogits @ net.fc2_w
    dpre1 = dh1 * (pre1 > 0)
    dfc1_w = dpre1.T @ flat
    dfc1_b = dpre1.sum(axis=0)
    dmaps = (dpre1 @ net.fc1_w).reshape(maps.shape)
    dconv_w = np.einsum("ncij,nijp->cp", dmaps, pat)
    dconv_b = dmaps.sum(axis=(0, 2, 3))
    grad = np.concatenate(
        [dconv_w.ravel(), dconv_b, dfc1_w.ravel(), dfc1_b, dfc2_w.ravel(), dfc2_b]
    )
    return loss, grad


def conv_get_params(net: ConvNet) -> np.ndarray:
    return np.concatenate(
        [
            net.conv_w.ravel(),
            net.conv_b,
            net.fc1_w.ravel(),
            net.fc1_b,
            net.fc2_w.ravel(),
            net.fc2_b,
        ]
    )


def conv_set_params(net: ConvNet, flat: np.ndarray) -> None:
    flat = np.asarray(flat, dtype=float)
    lo = 0
    for arr in (net.conv_w, net.conv_b, net.fc1_w, net.fc1_b, net.fc2_w, net.fc2_b):
        arr[...] = flat[lo : lo + arr.size].reshape(arr.shape)
        lo += arr.size
    if lo != flat.size:
        raise ValueError(f"flat vector length {flat.size} does not match net ({lo})")
