"""Benchmark acceptance suite: one test per criterion, in order.

Each test prints a `[PASS]`/`[FAIL]` line with the measured quantities so the
whole gate can be read off the pytest -s output. The training criteria are
seed-averaged experiments and dominate the runtime (the Wine natural-gradient
leg alone is on the order of an hour or two on two cores); run this module
with `pytest tests/test_acceptance.py -v -s`.

Image criteria use real MNIST IDX files when QNNBENCH_DATA_DIR points at
them, and otherwise fall back to the bundled scikit-learn handwritten digits
upscaled to 10x10 (fewer examples, same protocol and thresholds).
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from qnnbench.circuit import (
    CircuitOp,
    Param,
    ParameterizedCircuit,
    build_qcnn_kernel,
    build_qenn,
    build_qnnn,
)
from qnnbench.data import (
    Dataset,
    bilinear_resize,
    dataset_from_csv,
    dataset_to_csv,
    generate_synthetic,
    load_mnist,
    materialize_wine_csv,
    randomize_labels,
    validate_dataset,
)
from qnnbench.grad import (
    ShiftRuleConfig,
    circuit_expectation_batch,
    quantum_geometric_tensor,
    shift_gradient,
)
from qnnbench.harness import (
    ExperimentConfig,
    sweep,
    time_iteration,
    train,
    write_metrics_csv,
)
from qnnbench.simcore import GateKind, Observable

Z0 = Observable.z(0)


def report(num, passed, detail):
    print(f"\n[{'PASS' if passed else 'FAIL'}] criterion {num}: {detail}")
    assert passed, f"criterion {num}: {detail}"


@pytest.fixture(scope="module")
def wine_path(tmp_path_factory):
    return materialize_wine_csv(tmp_path_factory.mktemp("wine") / "wine.csv")


@pytest.fixture(scope="module")
def synth():
    return generate_synthetic(seed=7)


@pytest.fixture(scope="module")
def image_data():
    """Real MNIST when available, bundled digits upscaled to 10x10 otherwise."""
    root = os.environ.get("QNNBENCH_DATA_DIR")
    if root and (Path(root) / "train-images-idx3-ubyte").exists():
        ds = load_mnist(root, n_train=2000, n_test=2000, side=10, seed=5)
        return ds, "mnist-2000/2000"
    from sklearn.datasets import load_digits

    bunch = load_digits()
    rng = np.random.default_rng(5)
    perm = rng.permutation(len(bunch.images))
    n_train = 1200
    big = bilinear_resize(bunch.images[perm], 10)
    feats = (big / 16.0 * np.pi).reshape(len(big), 100)
    ds = Dataset(
        features=feats,
        labels=bunch.target[perm],
        train_idx=np.arange(n_train),
        test_idx=np.arange(n_train, len(big)),
        provenance="mnist",
        n_classes=10,
        image_side=10,
    )
    validate_dataset(ds)
    return ds, f"digits-{n_train}/{len(big) - n_train}"


def _fd_gradient(circ, x, th, obs, eps=1e-4):
    fd = np.empty(circ.n_params)
    for j in range(circ.n_params):
        e = np.zeros_like(th)
        e[j] = eps
        hi = circuit_expectation_batch(circ, x, (th + e)[None, :], obs)[0]
        lo = circuit_expectation_batch(circ, x, (th - e)[None, :], obs)[0]
        fd[j] = (hi - lo) / (2 * eps)
    return fd


def test_criterion_1_gradient_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_rel, worst_abs, alpha_dev = 0.0, 0.0, 0.0
    cases = [("qnnn", build_qnnn), ("qenn", build_qenn), ("qcnn", None)]
    for name, build in cases:
        for draw in range(20):
            if name == "qcnn":
                circ = build_qcnn_kernel()
            else:
                circ = build(4 + draw % 3, 2)  # 4-6 qubits
            x = rng.uniform(0, np.pi, circ.n_features)
            th = rng.uniform(0, 2 * np.pi, circ.n_params)
            g = shift_gradient(circ, x, th, Z0)
            fd = _fd_gradient(circ, x, th, Z0)
            big = np.abs(fd) >= 1e-2
            if big.any():
                worst_rel = max(worst_rel, np.max(np.abs(g - fd)[big] / np.abs(fd)[big]))
            if (~big).any():
                worst_abs = max(worst_abs, np.max(np.abs(g - fd)[~big]))
            if name != "qcnn":
                g2 = shift_gradient(circ, x, th, Z0, ShiftRuleConfig(np.pi / 3))
                alpha_dev = max(alpha_dev, float(np.max(np.abs(g - g2))))
    elapsed = time.perf_counter() - t0
    ok = worst_rel < 1e-5 and worst_abs < 1e-7 and alpha_dev < 1e-9 and elapsed < 60
    report(
        1,
        ok,
        f"shift vs finite differences: rel {worst_rel:.2e} (<1e-5), "
        f"abs {worst_abs:.2e} (<1e-7), alpha dev {alpha_dev:.2e} (<1e-9), "
        f"{elapsed:.1f}s (<60s)",
    )


def test_criterion_2_metric_oracles():
    t0 = time.perf_counter()
    ry = ParameterizedCircuit(1, (CircuitOp(GateKind.RY, (0,), (Param(0),)),), 1, 0, (1,))
    rz = ParameterizedCircuit(1, (CircuitOp(GateKind.RZ, (0,), (Param(0),)),), 1, 0, (1,))
    g_ry = quantum_geometric_tensor(ry, np.zeros(0), np.array([0.7])).g[0, 0]
    g_rz = quantum_geometric_tensor(rz, np.zeros(0), np.array([0.7])).g[0, 0]
    rng = np.random.default_rng(102)
    worst_asym, min_eig = 0.0, np.inf
    for build, n in ((build_qnnn, 4), (build_qenn, 4), (build_qenn, 5), (build_qnnn, 6)):
        circ = build(n, 2)
        for _ in range(5):
            x = rng.uniform(0, np.pi, n)
            th = rng.uniform(0, 2 * np.pi, circ.n_params)
            g = quantum_geometric_tensor(circ, x, th).g
            worst_asym = max(worst_asym, float(np.abs(g - g.T).max()))
            min_eig = min(min_eig, float(np.linalg.eigvalsh(g).min()))
    elapsed = time.perf_counter() - t0
    ok = (
        abs(g_ry - 0.25) < 1e-10
        and abs(g_rz) < 1e-10
        and worst_asym < 1e-10
        and min_eig >= -1e-8
        and elapsed < 60
    )
    report(
        2,
        ok,
        f"single-RY {g_ry:.12f} (0.25+-1e-10), single-RZ {g_rz:.2e} (0+-1e-10), "
        f"asymmetry {worst_asym:.2e}, min eigenvalue {min_eig:.2e} (>=-1e-8), "
        f"{elapsed:.1f}s (<60s)",
    )


def test_criterion_3_synthetic_learnability(synth):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(
        model={"arch": "qenn", "layers": 3},
        data={"provenance": "synthetic", "seed": 7},
        optimizer={"kind": "sgd", "learning_rate": 0.01, "batch_size": 4},
        epochs=50,
        repetitions=10,
        seed=11,
        j_batches=0,
    )

    def stop_when_learned(rep, rec):
        return not (rec.train_accuracy >= 0.86 and rec.test_accuracy >= 0.86)

    res = train(cfg, dataset=synth, epoch_callback=stop_when_learned)
    finals = [r[-1] for r in res.per_rep]
    train_acc = float(np.mean([r.train_accuracy for r in finals]))
    test_acc = float(np.mean([r.test_accuracy for r in finals]))
    gen = float(np.mean([r.generalization_error for r in finals]))
    epochs_used = [r.epoch for r in finals]
    elapsed = time.perf_counter() - t0
    ok = train_acc >= 0.85 and test_acc >= 0.85 and gen <= 0.08
    report(
        3,
        ok,
        f"embedding circuit on synthetic data, 10 seeds: train {train_acc:.3f} (>=0.85), "
        f"test {test_acc:.3f} (>=0.85), gen error {gen:.3f} (<=0.08), "
        f"stop epochs {epochs_used} (<=50), {elapsed:.0f}s",
    )


def test_criterion_4_randomization_gap(synth):
    t0 = time.perf_counter()
    data_cfg = {
        "provenance": "synthetic",
        "seed": 7,
        "random_label_fraction": 1.0,
        "label_seed": 8,
    }
    noisy = randomize_labels(synth, 1.0, seed=8)
    finals = {}
    for arch, model_cfg in (
        ("qnnn", {"arch": "qnnn", "layers": 3}),
        ("qenn", {"arch": "qenn", "layers": 3}),
        ("mlp++", {"arch": "mlp", "hidden": 8192}),
    ):
        cfg = ExperimentConfig(
            model=model_cfg,
            data=data_cfg,
            optimizer={"kind": "sgd", "learning_rate": 0.01, "batch_size": 4},
            epochs=40,
            repetitions=10,
            seed=11,
            j_batches=0,
        )
        res = train(cfg, dataset=noisy)
        finals[arch] = float(np.mean([r[-1].train_accuracy for r in res.per_rep]))
    elapsed = time.perf_counter() - t0
    ok = finals["qnnn"] <= 0.72 and finals["qenn"] <= 0.72 and finals["mlp++"] >= 0.95
    report(
        4,
        ok,
        f"random-label train accuracy after 40 epochs, 10 seeds: "
        f"qnnn {finals['qnnn']:.3f} (<=0.72), qenn {finals['qenn']:.3f} (<=0.72), "
        f"mlp++ {finals['mlp++']:.3f} (>=0.95), {elapsed:.0f}s",
    )


def test_criterion_5_optimizer_ordering_wine(wine_path):
    t0 = time.perf_counter()
    base = dict(
        model={"arch": "qnnn", "layers": 3},
        data={"provenance": "wine", "path": str(wine_path), "seed": 0},
        epochs=100,
        repetitions=10,
        seed=3,
        j_batches=0,
    )
    finals = {}
    for kind, opt in (
        ("sgd", {"kind": "sgd", "learning_rate": 0.01, "batch_size": 4}),
        ("gd", {"kind": "gd", "learning_rate": 0.01}),
        ("sqngd", {"kind": "sqngd", "learning_rate": 0.01, "batch_size": 4}),
    ):
        res = train(ExperimentConfig(optimizer=opt, **base))
        finals[kind] = np.array([r[-1].train_accuracy for r in res.per_rep])
    sgd_vs_gd = int(np.sum(finals["sgd"] - finals["gd"] >= 0.10))
    sqngd_vs_sgd = int(np.sum(finals["sqngd"] >= finals["sgd"]))
    elapsed = time.perf_counter() - t0
    ok = sgd_vs_gd >= 8 and sqngd_vs_sgd >= 6
    report(
        5,
        ok,
        f"wine train accuracy at epoch 100, paired seeds: SGD beats GD by >=0.10 in "
        f"{sgd_vs_gd}/10 (need >=8), SQNGD >= SGD in {sqngd_vs_sgd}/10 (need >=6); "
        f"means sgd {finals['sgd'].mean():.3f} gd {finals['gd'].mean():.3f} "
        f"sqngd {finals['sqngd'].mean():.3f}, {elapsed:.0f}s",
    )


def test_criterion_6_noise_degradation(synth):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(
        model={"arch": "qenn", "layers": 3},
        data={"provenance": "synthetic", "seed": 7},
        optimizer={"kind": "sgd", "learning_rate": 0.01, "batch_size": 4},
        epochs=5,
        repetitions=5,
        seed=21,
        j_batches=0,
    )
    levels = [0.0, 0.02, 0.05, 0.1]
    res = sweep(cfg, "noise_p", levels, dataset=synth)
    acc = [r.final().test_accuracy for r in res.results]
    drop = acc[0] - acc[2]
    monotone = all(a >= b - 1e-12 for a, b in zip(acc, acc[1:]))
    elapsed = time.perf_counter() - t0
    ok = drop >= 0.03 and monotone
    report(
        6,
        ok,
        f"mean test accuracy across p={levels}: {[round(a, 3) for a in acc]}; "
        f"p=0.05 drop {drop:.3f} (>=0.03), non-increasing {monotone}, {elapsed:.0f}s",
    )


def test_criterion_7_image_models(image_data):
    ds, source = image_data
    t0 = time.perf_counter()
    base = dict(
        data={"provenance": "synthetic"},  # dataset injected below
        optimizer={"kind": "adam", "learning_rate": 0.001, "batch_size": 5},
        repetitions=3,
        seed=9,
        j_batches=0,
    )
    test_accs = {}
    for arch in ("qcnn", "cnn"):
        cfg = ExperimentConfig(
            model={"arch": arch, "channels": 4, "stride": 2}, epochs=10, **base
        )
        res = train(cfg, dataset=ds)
        test_accs[arch] = float(np.mean([r[-1].test_accuracy for r in res.per_rep]))

    noisy = randomize_labels(ds, 1.0, seed=6)
    random_train = {}
    for arch, model_cfg in (
        ("qcnn", {"arch": "qcnn", "channels": 4, "stride": 2}),
        ("cnn", {"arch": "cnn", "channels": 4, "stride": 2}),
        ("mlp", {"arch": "mlp", "hidden": 32}),
    ):
        cfg = ExperimentConfig(model=model_cfg, epochs=20, **base)
        res = train(cfg, dataset=noisy)
        random_train[arch] = float(np.mean([r[-1].train_accuracy for r in res.per_rep]))
    elapsed = time.perf_counter() - t0
    floor_ok = all(v <= 0.25 for v in random_train.values())
    ok = (
        test_accs["qcnn"] >= 0.85
        and test_accs["cnn"] >= test_accs["qcnn"] - 0.02
        and floor_ok
    )
    report(
        7,
        ok,
        f"images ({source}), 3 seeds: qcnn test {test_accs['qcnn']:.3f} (>=0.85), "
        f"cnn test {test_accs['cnn']:.3f} (>= qcnn-0.02), random-label train "
        f"{ {k: round(v, 3) for k, v in random_train.items()} } (each <=0.25), {elapsed:.0f}s",
    )


def test_criterion_8_determinism_and_plumbing(tmp_path):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(
        model={"arch": "qnnn", "layers": 2},
        data={"provenance": "synthetic", "seed": 3, "n_per_class": 16, "dim": 4},
        optimizer={"kind": "sgd", "learning_rate": 0.05, "batch_size": 4,
                   "weight_decay": 0.0},
        epochs=3,
        repetitions=2,
        seed=5,
        j_batches=1,
    )
    ds = generate_synthetic(n_per_class=16, d=4, seed=3)
    a, b = train(cfg, dataset=ds), train(cfg, dataset=ds)
    for pa, pb in zip(a.per_rep, b.per_rep):
        for ra, rb in zip(pa, pb):
            assert (ra.train_accuracy, ra.test_accuracy, ra.train_loss, ra.gradient_norm) == (
                rb.train_accuracy, rb.test_accuracy, rb.train_loss, rb.gradient_norm
            )
    write_metrics_csv(tmp_path / "a.csv", "r", a)
    write_metrics_csv(tmp_path / "b.csv", "r", b)

    def without_wall(p):
        return [",".join(line.split(",")[:-1]) for line in p.read_text().splitlines()]

    csv_same = without_wall(tmp_path / "a.csv") == without_wall(tmp_path / "b.csv")

    # loader round trip, bit-exact
    path1 = dataset_to_csv(ds, tmp_path / "d1.csv")
    back = dataset_from_csv(path1)
    path2 = dataset_to_csv(back, tmp_path / "d2.csv")
    roundtrip = path1.read_bytes() == path2.read_bytes() and np.array_equal(
        back.features, ds.features
    )

    # lambda = 0 decay is bit-identical to the undecayed path
    cfg_nodecay = ExperimentConfig(
        model=cfg.model,
        data=cfg.data,
        optimizer={"kind": "sgd", "learning_rate": 0.05, "batch_size": 4},
        epochs=3,
        repetitions=2,
        seed=5,
        j_batches=1,
    )
    c = train(cfg_nodecay, dataset=ds)
    decay_same = all(
        ra.train_loss == rc.train_loss and ra.train_accuracy == rc.train_accuracy
        for pa, pc in zip(a.per_rep, c.per_rep)
        for ra, rc in zip(pa, pc)
    )
    elapsed = time.perf_counter() - t0
    ok = csv_same and roundtrip and decay_same
    report(
        8,
        ok,
        f"rerun CSVs identical sans wall_ms: {csv_same}; dataset CSV round-trip "
        f"bit-exact: {roundtrip}; zero weight decay bit-identical: {decay_same}, "
        f"{elapsed:.0f}s",
    )


def test_criterion_9_timing_ordering():
    t0 = time.perf_counter()
    qubit_counts = [4, 6, 8, 10]
    qnn_times, mlp_times = [], []
    for n in qubit_counts:
        data = {"provenance": "synthetic", "seed": 3, "n_per_class": 12, "dim": n}
        qnn_cfg = ExperimentConfig(
            model={"arch": "qnnn", "layers": 3},
            data=data,
            optimizer={"kind": "sgd", "learning_rate": 0.01, "batch_size": 4},
            epochs=1,
            repetitions=1,
            seed=2,
            j_batches=0,
        )
        qnn_times.append(time_iteration(qnn_cfg, warmup=3, iters=20).mean_ms_per_iter)
        hidden = max(2, round((9 * n - 2) / (n + 3)))  # match 9n circuit parameters
        mlp_cfg = ExperimentConfig(
            model={"arch": "mlp", "hidden": hidden},
            data=data,
            optimizer={"kind": "sgd", "learning_rate": 0.01, "batch_size": 4},
            epochs=1,
            repetitions=1,
            seed=2,
            j_batches=0,
        )
        mlp_times.append(time_iteration(mlp_cfg, warmup=5, iters=30).mean_ms_per_iter)
    qnn_growing = all(b > a for a, b in zip(qnn_times, qnn_times[1:]))
    qnn_ratio = qnn_times[-1] / qnn_times[0]
    mlp_ratio = max(mlp_times) / min(mlp_times)
    elapsed = time.perf_counter() - t0
    ok = qnn_growing and qnn_ratio >= 2.0 and mlp_ratio <= 2.0
    report(
        9,
        ok,
        f"per-iteration ms over qubits {qubit_counts}: circuit "
        f"{[round(t, 2) for t in qnn_times]} (growing x{qnn_ratio:.1f}, need >=2), "
        f"matched-budget MLP {[round(t, 3) for t in mlp_times]} "
        f"(spread x{mlp_ratio:.2f}, need <=2), {elapsed:.0f}s",
    )
