"""Model checkpoints as structured text: a JSON descriptor line plus the
flat parameter vector. Floats are written with repr, so save/load round-trips
exactly."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import classical as cl
from . import qmodels as qm
from .simcore import NoiseSpec

_HEADER = "# qnnbench-checkpoint v1"


def _describe(model) -> dict:
    if isinstance(model, qm.QnnModel):
        return {
            "kind": "qnn",
            "arch": model.arch,
            "n_qubits": model.circuit.n_qubits,
            "layers": model.n_layers,
            "noise_p": model.noise.p,
            "noise_layers": model.noise.layer_count,
        }
    if isinstance(model, qm.QcnnModel):
        return {
            "kind": "qcnn",
            "channels": model.n_channels,
            "stride": model.stride,
            "side": model.side,
            "fc_hidden": model.fc1_w.shape[0],
            "classes": model.fc2_w.shape[0],
            "noise_p": model.noise.p,
            "noise_layers": model.noise.layer_count,
        }
    if isinstance(model, cl.DenseNet):
        return {"kind": "dense", "widths": list(model.widths), "loss": model.loss}
    if isinstance(model, cl.ConvNet):
        return {
            "kind": "conv",
            "channels": model.n_channels,
            "stride": model.stride,
            "side": model.side,
            "fc_hidden": model.fc1_w.shape[0],
            "classes": model.fc2_w.shape[0],
        }
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def _flat_params(model) -> np.ndarray:
    if isinstance(model, qm.QnnModel):
        return qm.qnn_get_params(model)
    if isinstance(model, qm.QcnnModel):
        return qm.qcnn_get_params(model)
    if isinstance(model, cl.DenseNet):
        return cl.dense_get_params(model)
    return cl.conv_get_params(model)


def save_model(model, path) -> Path:
    path = Path(path)
    desc = _describe(model)
    params = _flat_params(model)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(_HEADER + "\n")
        fh.write(json.dumps(desc, sort_keys=True) + "\n")
        fh.write("params " + " ".join(repr(float(v)) for v in params) + "\n")
    return path


def load_model(path):
    path = Path(path)
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != _HEADER:
            raise ValueError(f"{path}: not a qnnbench checkpoint")
        desc = json.loads(fh.readline())
        tokens = fh.readline().split()
        if not tokens or tokens[0] != "params":
            raise ValueError(f"{path}: missing params line")
        flat = np.array([float(t) for t in tokens[1:]])
    rng = np.random.default_rng(0)  # placeholder init, overwritten below
    kind = desc["kind"]
    if kind == "qnn":
        model = qm.make_qnn_model(
            desc["arch"], desc["n_qubits"], desc["layers"], rng,
            desc.get("noise_p", 0.0), desc.get("noise_layers"),
        )
        qm.qnn_set_params(model, flat)
    elif kind == "qcnn":
        model = qm.make_qcnn_model(
            rng, n_channels=desc["channels"], stride=desc["stride"], side=desc["side"],
            fc_hidden=desc["fc_hidden"], n_classes=desc["classes"],
            noise_p=desc.get("noise_p", 0.0),
        )
        model.noise = NoiseSpec(desc.get("noise_p", 0.0), desc.get("noise_layers", 1))
        qm.qcnn_set_params(model, flat)
    elif kind == "dense":
        model = cl.make_dense(desc["widths"], rng, loss=desc["loss"])
        cl.dense_set_params(model, flat)
    elif kind == "conv":
        model = cl.make_conv(
            rng, n_channels=desc["channels"], stride=desc["stride"], side=desc["side"],
            fc_hidden=desc["fc_hidden"], n_classes=desc["classes"],
        )
        cl.conv_set_params(model, flat)
    else:
        raise ValueError(f"{path}: unknown checkpoint kind {kind!r}")
    return model
