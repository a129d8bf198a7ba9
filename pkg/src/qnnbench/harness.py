"""Training loops, per-epoch metrics, repetition averaging, sweeps, timing.

Every run is a pure function of its config (seeds included): repeated runs
produce identical metric sequences, wall-clock numbers aside. Repetition r of
a run with seed s draws all of its randomness from generators seeded with
[s, r, ...] so repetitions are independent and reproducible in isolation.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import classical as cl
from . import data as dat
from . import optim
from . import qmodels as qm
from .grad import gradient_norm, metric_tensor_batch
from .simcore import NoiseSpec

METRICS_CSV_HEADER = (
    "run_id,repetition,epoch,train_acc,test_acc,train_loss,gen_error,grad_norm,wall_ms"
)

_MODEL_KEYS = {"arch", "layers", "hidden", "channels", "stride", "loss", "fc_hidden", "n_qubits"}
_DATA_KEYS = {
    "provenance",
    "seed",
    "path",
    "n_per_class",
    "dim",
    "n_train",
    "n_test",
    "side",
    "random_label_fraction",
    "label_seed",
}
_OPT_KEYS = {"kind", "learning_rate", "batch_size", "weight_decay", "alpha", "pinv_cutoff", "metric_dtype"}
_NOISE_KEYS = {"p", "layer_count"}
ARCHS = ("qnnn", "qenn", "qcnn", "mlp", "cnn")


@dataclass
class ExperimentConfig:
    model: dict = field(default_factory=lambda: {"arch": "qnnn", "layers": 3})
    data: dict = field(default_factory=lambda: {"provenance": "synthetic", "seed": 7})
    optimizer: dict = field(default_factory=lambda: {"kind": "sgd", "learning_rate": 0.01, "batch_size": 4})
    noise: dict = field(default_factory=dict)
    epochs: int = 10
    repetitions: int = 10
    seed: int = 0
    gradient_method: str = "analytic"
    j_batches: int = 8

    def __post_init__(self):
        for name, d, allowed in (
            ("model", self.model, _MODEL_KEYS),
            ("data", self.data, _DATA_KEYS),
            ("optimizer", self.optimizer, _OPT_KEYS),
            ("noise", self.noise, _NOISE_KEYS),
        ):
            for key in d:
                if key not in allowed:
                    raise ValueError(f"unknown config key {name}.{key}")
        if self.model.get("arch") not in ARCHS:
            raise ValueError(f"model.arch must be one of {ARCHS}, got {self.model.get('arch')!r}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.gradient_method not in ("analytic", "shift"):
            raise ValueError(f"gradient_method must be 'analytic' or 'shift', got {self.gradient_method!r}")
        if not (0 <= self.j_batches <= 8):
            raise ValueError("j_batches must be in 0..8")

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(ExperimentConfig)}
        for key in d:
            if key not in known:
                raise ValueError(f"unknown config key {key}")
        return ExperimentConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MetricsRecord:
    epoch: int
    train_accuracy: float
    test_accuracy: float
    train_loss: float
    gradient_norm: float
    wall_ms: float = 0.0
    wall_ms_per_iter: float = 0.0

    @property
    def generalization_error(self) -> float:
        return self.train_accuracy - self.test_accuracy


def generalization_error(train_acc: float, test_acc: float) -> float:
    """Train/test accuracy discrepancy; the empirical generalization gap."""
    for v in (train_acc, test_acc):
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"accuracy {v} outside [0, 1]")
    return train_acc - test_acc


@dataclass
class TrainResult:
    config: ExperimentConfig
    records: list[MetricsRecord]  # averaged pointwise over surviving repetitions
    per_rep: list[list[MetricsRecord]]
    failed: list[tuple[int, str]]
    models: list = field(default_factory=list, repr=False)

    def final(self) -> MetricsRecord:
        return self.records[-1]


class _ModelOps:
    """Uniform flat-parameter view over the five model families."""

    def __init__(self, arch, model, loss_and_grad, evaluate, get_params, set_params, circuit=None):
        self.arch = arch
        self.model = model
        self.loss_and_grad = loss_and_grad
        self.evaluate = evaluate  # (X, y) -> (accuracy, loss)
        self.get_params = get_params
        self.set_params = set_params
        self.circuit = circuit  # trainable circuit, quantum score models only


def build_dataset(data_cfg: dict) -> dat.Dataset:
    cfg = dict(data_cfg)
    prov = cfg.get("provenance", "synthetic")
    seed = cfg.get("seed", 7)
    if prov == "synthetic":
        ds = dat.generate_synthetic(
            n_per_class=cfg.get("n_per_class", 200), d=cfg.get("dim", 16), seed=seed
        )
    elif prov == "wine":
        if not cfg.get("path"):
            raise ValueError("data.path is required for the wine provenance")
        ds = dat.load_wine(cfg["path"], seed=seed)
    elif prov == "mnist":
        if not cfg.get("path"):
            raise ValueError("data.path is required for the mnist provenance")
        ds = dat.load_mnist(
            cfg["path"],
            n_train=cfg.get("n_train", 2000),
            n_test=cfg.get("n_test", 2000),
            side=cfg.get("side", 10),
            seed=seed,
        )
    elif prov == "csv":
        if not cfg.get("path"):
            raise ValueError("data.path is required for the csv provenance")
        ds = dat.dataset_from_csv(cfg["path"])
    else:
        raise ValueError(f"unknown data.provenance {prov!r}")
    frac = cfg.get("random_label_fraction", 0.0)
    if frac:
        label_seed = cfg.get("label_seed")
        if label_seed is None:
            label_seed = (seed if isinstance(seed, int) else 0) + 1
        ds = dat.randomize_labels(ds, fraction=frac, seed=label_seed)
    return ds


def _binary_eval(scores: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    pred = (scores > 0).astype(int)
    acc = float(np.mean(pred == y))
    loss = float(np.mean((scores - (2.0 * y - 1.0)) ** 2))
    return acc, loss


def _softmax_eval(logits: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    acc = float(np.mean(np.argmax(logits, axis=1) == y))
    loss, _ = qm.softmax_cross_entropy(logits, y.astype(int))
    return acc, loss


def build_model(config: ExperimentConfig, ds: dat.Dataset, rng: np.random.Generator) -> _ModelOps:
    mc = config.model
    arch = mc["arch"]
    noise_p = config.noise.get("p", 0.0)
    noise_layers = config.noise.get("layer_count")
    side = ds.image_side

    if arch in ("qnnn", "qenn"):
        layers = mc.get("layers", 3)
        n_qubits = mc.get("n_qubits", ds.n_features)
        if n_qubits != ds.n_features:
            raise ValueError(
                f"model.n_qubits {n_qubits} does not match the dataset's {ds.n_features} features"
            )
        model = qm.make_qnn_model(arch, n_qubits, layers, rng, noise_p, noise_layers)

        def lag(X, y, m=model):
            return qm.qnn_loss_and_grad(m, X, y, method=config.gradient_method)

        def ev(X, y, m=model):
            return _binary_eval(qm.qnn_scores(m, X)[:, 0], y)

        return _ModelOps(arch, model, lag, ev,
                         lambda m=model: qm.qnn_get_params(m),
                         lambda fl, m=model: qm.qnn_set_params(m, fl),
                         circuit=model.circuit)

    if arch == "mlp":
        loss_mode = mc.get("loss", "softmax")
        hidden = mc.get("hidden", 32)
        out = 1 if loss_mode == "squared" else ds.n_classes
        net = cl.make_dense([ds.n_features, hidden, out], rng, loss=loss_mode)

        def lag(X, y, m=net):
            return cl.dense_loss_and_grad(m, X, y)

        def ev(X, y, m=net):
            outv = cl.dense_logits(m, X)
            if m.loss == "squared":
                return _binary_eval(outv[:, 0], y)
            return _softmax_eval(outv, y)

        return _ModelOps(arch, net, lag, ev,
                         lambda m=net: cl.dense_get_params(m),
                         lambda fl, m=net: cl.dense_set_params(m, fl))

    if side == 0:
        raise ValueError(f"model.arch {arch!r} needs image data")
    channels = mc.get("channels", 4)
    stride = mc.get("stride", 2)
    fc_hidden = mc.get("fc_hidden", 32)

    if arch == "qcnn":
        model = qm.make_qcnn_model(
            rng, n_channels=channels, stride=stride, side=side,
            fc_hidden=fc_hidden, n_classes=ds.n_classes, noise_p=noise_p,
        )

        def lag(X, y, m=model, s=side):
            return qm.qcnn_loss_and_grad(m, X.reshape(-1, s, s), y)

        def ev(X, y, m=model, s=side):
            return _softmax_eval(qm.qcnn_logits(m, X.reshape(-1, s, s)), y)

        return _ModelOps(arch, model, lag, ev,
                         lambda m=model: qm.qcnn_get_params(m),
                         lambda fl, m=model: qm.qcnn_set_params(m, fl))

    if arch == "cnn":
        net = cl.make_conv(
            rng, n_channels=channels, stride=stride, side=side,
            fc_hidden=fc_hidden, n_classes=ds.n_classes,
        )

        def lag(X, y, m=net, s=side):
            return cl.conv_loss_and_grad(m, X.reshape(-1, s, s), y)

        def ev(X, y, m=net, s=side):
            return _softmax_eval(cl.conv_logits(m, X.reshape(-1, s, s)), y)

        return _ModelOps(arch, net, lag, ev,
                         lambda m=net: cl.conv_get_params(m),
                         lambda fl, m=net: cl.conv_set_params(m, fl))

    raise ValueError(f"unknown model.arch {arch!r}")  # pragma: no cover


def _metric_dtype(config: ExperimentConfig):
    name = config.optimizer.get("metric_dtype", "complex128")
    if name not in ("complex64", "complex128"):
        raise ValueError(f"optimizer.metric_dtype must be complex64 or complex128, got {name!r}")
    return np.complex64 if name == "complex64" else np.complex128


def _make_opt_state(config: ExperimentConfig, n_train: int) -> optim.OptimizerState:
    oc = config.optimizer
    kind = oc.get("kind", "sgd")
    bs = n_train if kind == "gd" else oc.get("batch_size", 4)
    return optim.OptimizerState(
        kind=kind,
        learning_rate=oc.get("learning_rate", 0.01),
        batch_size=bs,
        weight_decay=oc.get("weight_decay", 0.0),
        pinv_cutoff=oc.get("pinv_cutoff", 1e-8),
    )


def _eval_record(config, ops, ds, epoch, rep, wall_ms=0.0, wall_iter=0.0) -> MetricsRecord:
    train_acc, train_loss = ops.evaluate(ds.train_features, ds.train_labels)
    test_acc, _ = ops.evaluate(ds.test_features, ds.test_labels)
    gn = float("nan")
    if config.j_batches > 0:
        bs = min(_make_opt_state(config, ds.train_idx.size).batch_size, ds.train_idx.size)
        jb = optim.make_batches(ds.train_idx.size, bs, seed=[config.seed, rep, epoch, 999])
        norms = []
        for b in jb[: config.j_batches]:
            _, g = ops.loss_and_grad(ds.train_features[b], ds.train_labels[b])
            norms.append(g)
        gn = gradient_norm(norms) if norms else float("nan")
    return MetricsRecord(
        epoch=epoch,
        train_accuracy=train_acc,
        test_accuracy=test_acc,
        train_loss=train_loss,
        gradient_norm=gn,
        wall_ms=wall_ms,
        wall_ms_per_iter=wall_iter,
    )


def train(
    config: ExperimentConfig,
    dataset: dat.Dataset | None = None,
    epoch_callback=None,
    keep_models: bool = False,
    rep_indices=None,
) -> TrainResult:
    """Run every repetition of the configured experiment.

    ``epoch_callback(rep, record) -> bool`` may stop a repetition early by
    returning False. Divergent repetitions are excluded from averages but
    reported in ``failed``. ``rep_indices`` runs a subset of repetitions
    (used to fan repetitions across worker processes); each repetition's
    randomness depends only on (config.seed, repetition index).
    """
    ds = dataset if dataset is not None else build_dataset(config.data)
    metric_dtype = _metric_dtype(config)
    n_train = ds.train_idx.size
    per_rep: list[list[MetricsRecord]] = []
    failed: list[tuple[int, str]] = []
    models = []
    reps = range(config.repetitions) if rep_indices is None else list(rep_indices)
    for rep in reps:
        rng = np.random.default_rng([config.seed, rep])
        ops = build_model(config, ds, rng)
        state = _make_opt_state(config, n_train)
        records = [_eval_record(config, ops, ds, 0, rep)]
        try:
            for epoch in range(1, config.epochs + 1):
                batches = optim.make_batches(
                    n_train, state.batch_size, seed=[config.seed, rep, epoch]
                )
                t0 = time.perf_counter()
                for b in batches:
                    Xb = ds.train_features[b]
                    yb = ds.train_labels[b]
                    loss, grad = ops.loss_and_grad(Xb, yb)
                    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                        raise FloatingPointError(f"non-finite loss/gradient at epoch {epoch}")
                    theta = ops.get_params()
                    metric = None
                    if state.kind == "sqngd":
                        if ops.circuit is None:
                            raise ValueError("sqngd applies to circuit models only")
                        metric = metric_tensor_batch(ops.circuit, Xb, theta, dtype=metric_dtype)
                    ops.set_params(optim.step(theta, grad, state, metric))
                wall = (time.perf_counter() - t0) * 1e3
                records.append(
                    _eval_record(config, ops, ds, epoch, rep, wall, wall / max(len(batches), 1))
                )
                if epoch_callback is not None and not epoch_callback(rep, records[-1]):
                    break
        except FloatingPointError as exc:
            failed.append((rep, str(exc)))
            continue
        per_rep.append(records)
        if keep_models:
            models.append(ops)
    if not per_rep:
        raise RuntimeError(f"all repetitions failed: {failed}")
    averaged = train_averages(per_rep, min(len(r) for r in per_rep))
    return TrainResult(config=config, records=averaged, per_rep=per_rep, failed=failed, models=models)


def train_averages(per_rep: list[list[MetricsRecord]], n_epochs: int) -> list[MetricsRecord]:
    """Pointwise mean of per-repetition records over the first n_epochs."""
    averaged = []
    for e in range(n_epochs):
        recs = [r[e] for r in per_rep]
        averaged.append(
            MetricsRecord(
                epoch=recs[0].epoch,
                train_accuracy=float(np.mean([r.train_accuracy for r in recs])),
                test_accuracy=float(np.mean([r.test_accuracy for r in recs])),
                train_loss=float(np.mean([r.train_loss for r in recs])),
                gradient_norm=float(np.mean([r.gradient_norm for r in recs])),
                wall_ms=float(np.mean([r.wall_ms for r in recs])),
                wall_ms_per_iter=float(np.mean([r.wall_ms_per_iter for r in recs])),
            )
        )
    return averaged


_SWEEP_AXES = {
    "batch_size": ("optimizer", "batch_size"),
    "noise_p": ("noise", "p"),
    "L": ("model", "layers"),
}


@dataclass
class SweepResult:
    axis: str
    values: list
    results: list[TrainResult]

    def table(self) -> list[dict]:
        rows = []
        for v, res in zip(self.values, self.results):
            fin = res.final()
            rows.append(
                {
                    self.axis: v,
                    "train_acc": fin.train_accuracy,
                    "test_acc": fin.test_accuracy,
                    "train_loss": fin.train_loss,
                    "gen_error": fin.generalization_error,
                    "grad_norm": fin.gradient_norm,
                }
            )
        return rows


def sweep(config: ExperimentConfig, axis: str, values, dataset=None) -> SweepResult:
    """One train() per value with shared seeds for paired comparison."""
    if axis not in _SWEEP_AXES:
        raise ValueError(f"sweep axis must be one of {sorted(_SWEEP_AXES)}, got {axis!r}")
    values = list(values)
    if not values:
        raise ValueError("sweep values must be non-empty")
    section, key = _SWEEP_AXES[axis]
    results = []
    for v in values:
        sub = {**getattr(config, section), key: v}
        cfg = replace(config, **{section: sub})
        results.append(train(cfg, dataset=dataset))
    return SweepResult(axis=axis, values=values, results=results)


@dataclass
class TimingResult:
    mean_ms_per_iter: float
    std_ms_per_iter: float
    mean_ms_per_epoch: float
    iters_per_epoch: int
    n_timed: int


def time_iteration(
    config: ExperimentConfig, warmup: int = 3, iters: int = 20, dataset=None
) -> TimingResult:
    """Monotonic-clock timing of single optimizer updates; warmup excluded."""
    ds = dataset if dataset is not None else build_dataset(config.data)
    rng = np.random.default_rng([config.seed, 0])
    ops = build_model(config, ds, rng)
    state = _make_opt_state(config, ds.train_idx.size)
    batches = optim.make_batches(ds.train_idx.size, state.batch_size, seed=[config.seed, 0, 1])
    iters_per_epoch = len(batches)

    def one_update(b):
        Xb, yb = ds.train_features[b], ds.train_labels[b]
        _, grad = ops.loss_and_grad(Xb, yb)
        theta = ops.get_params()
        metric = None
        if state.kind == "sqngd":
            metric = metric_tensor_batch(ops.circuit, Xb, theta, dtype=_metric_dtype(config))
        ops.set_params(optim.step(theta, grad, state, metric))

    seq = (batches * ((warmup + iters) // len(batches) + 1))[: warmup + iters]
    for b in seq[:warmup]:
        one_update(b)
    times = []
    for b in seq[warmup:]:
        t0 = time.perf_counter()
        one_update(b)
        times.append((time.perf_counter() - t0) * 1e3)
    times_arr = np.array(times)
    return TimingResult(
        mean_ms_per_iter=float(times_arr.mean()),
        std_ms_per_iter=float(times_arr.std()),
        mean_ms_per_epoch=float(times_arr.mean() * iters_per_epoch),
        iters_per_epoch=iters_per_epoch,
        n_timed=iters,
    )


def write_metrics_csv(path, run_id: str, result: TrainResult) -> None:
    """One row per epoch per repetition under the fixed header."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(METRICS_CSV_HEADER + "\n")
        for rep, records in enumerate(result.per_rep):
            for r in records:
                fh.write(
                    f"{run_id},{rep},{r.epoch},{r.train_accuracy!r},{r.test_accuracy!r},"
                    f"{r.train_loss!r},{r.generalization_error!r},{r.gradient_norm!r},"
                    f"{r.wall_ms:.3f}\n"
                )


def summary_dict(result: TrainResult, run_id: str, wall_s: float | None = None) -> dict:
    fin = result.final()
    return {
        "run_id": run_id,
        "config": result.config.to_dict(),
        "epochs_recorded": len(result.records),
        "repetitions": result.config.repetitions,
        "failed_repetitions": [{"repetition": r, "reason": m} for r, m in result.failed],
        "final": {
            "train_accuracy": fin.train_accuracy,
            "test_accuracy": fin.test_accuracy,
            "train_loss": fin.train_loss,
            "generalization_error": fin.generalization_error,
            "gradient_norm": fin.gradient_norm,
        },
        "wall_s": wall_s,
    }


def write_summary(path, summary: dict) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
