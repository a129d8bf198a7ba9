"""Training loops, metrics, sweeps, timing, and determinism."""

import dataclasses

import numpy as np
import pytest

from qnnbench.data import generate_synthetic, randomize_labels
from qnnbench.harness import (
    METRICS_CSV_HEADER,
    ExperimentConfig,
    MetricsRecord,
    build_dataset,
    generalization_error,
    summary_dict,
    sweep,
    time_iteration,
    train,
    write_metrics_csv,
)


def tiny_config(**over):
    base = dict(
        model={"arch": "qnnn", "layers": 2},
        data={"provenance": "synthetic", "seed": 3, "n_per_class": 16, "dim": 4},
        optimizer={"kind": "sgd", "learning_rate": 0.05, "batch_size": 4},
        epochs=2,
        repetitions=2,
        seed=5,
        j_batches=1,
    )
    base.update(over)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def tiny_ds():
    return generate_synthetic(n_per_class=16, d=4, seed=3)


def test_config_validation_names_offending_key():
    with pytest.raises(ValueError, match="optimizer.learning_rete"):
        ExperimentConfig(optimizer={"kind": "sgd", "learning_rete": 0.1})
    with pytest.raises(ValueError, match="model.arch"):
        ExperimentConfig(model={"arch": "qznn"})
    with pytest.raises(ValueError, match="epochz"):
        ExperimentConfig.from_dict({"epochz": 3})
    with pytest.raises(ValueError, match="gradient_method"):
        ExperimentConfig(gradient_method="magic")


def test_generalization_error_examples():
    assert generalization_error(0.92, 0.91) == pytest.approx(0.01)
    assert generalization_error(0.5, 0.5) == 0.0
    assert generalization_error(0.90, 0.50) == pytest.approx(0.40)
    with pytest.raises(ValueError):
        generalization_error(1.2, 0.5)


def test_metrics_record_gen_error_property():
    r = MetricsRecord(1, 0.8, 0.7, 0.5, 0.1)
    assert r.generalization_error == pytest.approx(0.1)


def test_zero_epoch_run_gives_initial_record(tiny_ds):
    res = train(tiny_config(epochs=0), dataset=tiny_ds)
    assert len(res.records) == 1
    assert res.records[0].epoch == 0
    assert 0.0 <= res.records[0].train_accuracy <= 1.0


def test_training_is_deterministic(tiny_ds):
    cfg = tiny_config()
    a = train(cfg, dataset=tiny_ds)
    b = train(cfg, dataset=tiny_ds)
    for ra, rb in zip(a.records, b.records):
        assert ra.train_accuracy == rb.train_accuracy
        assert ra.train_loss == rb.train_loss
        assert ra.gradient_norm == rb.gradient_norm


def test_gd_performs_one_update_per_epoch(tiny_ds):
    res = train(tiny_config(optimizer={"kind": "gd", "learning_rate": 0.05}), dataset=tiny_ds)
    # one batch per epoch: per-iteration wall equals whole-epoch wall
    for r in res.records[1:]:
        assert r.wall_ms == pytest.approx(r.wall_ms_per_iter)


def test_per_rep_records_kept(tiny_ds):
    res = train(tiny_config(), dataset=tiny_ds)
    assert len(res.per_rep) == 2
    assert all(len(r) == 3 for r in res.per_rep)  # epoch 0 + 2 epochs


def test_rep_indices_subset_matches_full_run(tiny_ds):
    cfg = tiny_config()
    full = train(cfg, dataset=tiny_ds)
    only1 = train(cfg, dataset=tiny_ds, rep_indices=[1])
    for ra, rb in zip(full.per_rep[1], only1.per_rep[0]):
        assert ra.train_accuracy == rb.train_accuracy
        assert ra.train_loss == rb.train_loss


def test_epoch_callback_early_stop(tiny_ds):
    seen = []

    def cb(rep, record):
        seen.append((rep, record.epoch))
        return record.epoch < 1  # stop after first epoch

    res = train(tiny_config(epochs=5), dataset=tiny_ds, epoch_callback=cb)
    assert all(len(r) == 2 for r in res.per_rep)  # epoch 0 + epoch 1


def test_all_model_archs_train(tiny_ds):
    for arch, extra in (
        ("qenn", {"layers": 1}),
        ("mlp", {"hidden": 8}),
    ):
        cfg = tiny_config(model={"arch": arch, **extra}, epochs=1, repetitions=1)
        res = train(cfg, dataset=tiny_ds)
        assert len(res.records) == 2


def test_image_archs_train():
    # tiny 6x6 image dataset wrapped as a Dataset
    rng = np.random.default_rng(0)
    from qnnbench.data import Dataset

    n = 12
    feats = rng.uniform(0, np.pi, (n, 36))
    ds = Dataset(
        features=feats,
        labels=rng.integers(0, 3, n),
        train_idx=np.arange(8),
        test_idx=np.arange(8, n),
        provenance="mnist",
        n_classes=3,
        image_side=6,
    )
    for arch in ("qcnn", "cnn", "mlp"):
        cfg = tiny_config(
            model={"arch": arch, "channels": 2, "hidden": 8},
            optimizer={"kind": "adam", "learning_rate": 0.01, "batch_size": 4},
            epochs=1,
            repetitions=1,
        )
        res = train(cfg, dataset=ds)
        assert 0.0 <= res.records[-1].train_accuracy <= 1.0


def test_sqngd_requires_circuit_model(tiny_ds):
    cfg = tiny_config(
        model={"arch": "mlp", "hidden": 4},
        optimizer={"kind": "sqngd", "learning_rate": 0.05, "batch_size": 4},
        repetitions=1,
        epochs=1,
    )
    with pytest.raises(ValueError, match="sqngd"):
        train(cfg, dataset=tiny_ds)


def test_sqngd_trains_on_circuit(tiny_ds):
    cfg = tiny_config(
        model={"arch": "qnnn", "layers": 1},
        optimizer={"kind": "sqngd", "learning_rate": 0.05, "batch_size": 4},
        repetitions=1,
        epochs=1,
    )
    res = train(cfg, dataset=tiny_ds)
    assert len(res.records) == 2


def test_random_label_runs_eval_against_true_test_labels(tiny_ds):
    noisy = randomize_labels(tiny_ds, 1.0, seed=1)
    np.testing.assert_array_equal(noisy.test_labels, tiny_ds.test_labels)
    cfg = tiny_config(epochs=1, repetitions=1)
    res = train(cfg, dataset=noisy)
    assert 0.0 <= res.records[-1].test_accuracy <= 1.0


def test_build_dataset_random_fraction():
    cfg = {"provenance": "synthetic", "seed": 3, "n_per_class": 16, "dim": 4,
           "random_label_fraction": 1.0, "label_seed": 9}
    ds = build_dataset(cfg)
    clean = build_dataset({k: v for k, v in cfg.items() if "label" not in k})
    assert (ds.train_labels != clean.train_labels).any()
    np.testing.assert_array_equal(ds.test_labels, clean.test_labels)


def test_build_dataset_unknown_provenance():
    with pytest.raises(ValueError, match="provenance"):
        build_dataset({"provenance": "imagenet"})
    with pytest.raises(ValueError, match="data.path"):
        build_dataset({"provenance": "wine"})


def test_sweep_batch_sizes_paired(tiny_ds):
    cfg = tiny_config(epochs=1, repetitions=1)
    res = sweep(cfg, "batch_size", [4, 8], dataset=tiny_ds)
    rows = res.table()
    assert [r["batch_size"] for r in rows] == [4, 8]
    assert set(rows[0]) >= {"train_acc", "test_acc", "gen_error"}


def test_sweep_single_value_equals_train(tiny_ds):
    cfg = tiny_config(epochs=1, repetitions=1)
    res = sweep(cfg, "noise_p", [0.0], dataset=tiny_ds)
    direct = train(cfg, dataset=tiny_ds)
    assert res.results[0].final().train_accuracy == direct.final().train_accuracy


def test_sweep_validation(tiny_ds):
    cfg = tiny_config()
    with pytest.raises(ValueError, match="axis"):
        sweep(cfg, "learning_rate", [0.1], dataset=tiny_ds)
    with pytest.raises(ValueError, match="non-empty"):
        sweep(cfg, "batch_size", [], dataset=tiny_ds)


def test_sweep_layers_axis(tiny_ds):
    cfg = tiny_config(epochs=0, repetitions=1)
    res = sweep(cfg, "L", [1, 2], dataset=tiny_ds)
    assert len(res.results) == 2


def test_time_iteration(tiny_ds):
    cfg = tiny_config(repetitions=1)
    t = time_iteration(cfg, warmup=1, iters=4, dataset=tiny_ds)
    assert t.mean_ms_per_iter > 0
    assert t.n_timed == 4
    assert t.iters_per_epoch == 4  # 16 train examples at batch size 4
    assert t.mean_ms_per_epoch == pytest.approx(t.mean_ms_per_iter * t.iters_per_epoch)


def test_metrics_csv_format(tmp_path, tiny_ds):
    res = train(tiny_config(), dataset=tiny_ds)
    path = tmp_path / "metrics.csv"
    write_metrics_csv(path, "runX", res)
    lines = path.read_text().splitlines()
    assert lines[0] == METRICS_CSV_HEADER
    assert len(lines) == 1 + 2 * 3  # 2 reps x (epoch0 + 2 epochs)
    first = lines[1].split(",")
    assert first[0] == "runX" and first[1] == "0" and first[2] == "0"


def test_metrics_csv_deterministic_excluding_wall(tmp_path, tiny_ds):
    cfg = tiny_config()
    for name in ("a.csv", "b.csv"):
        write_metrics_csv(tmp_path / name, "r", train(cfg, dataset=tiny_ds))

    def strip_wall(p):
        return ["," .join(line.split(",")[:-1]) for line in p.read_text().splitlines()]

    assert strip_wall(tmp_path / "a.csv") == strip_wall(tmp_path / "b.csv")


def test_summary_dict_contents(tiny_ds):
    res = train(tiny_config(), dataset=tiny_ds)
    s = summary_dict(res, "run1", wall_s=1.0)
    assert s["run_id"] == "run1"
    assert s["config"]["model"]["arch"] == "qnnn"
    assert "train_accuracy" in s["final"]
    assert s["failed_repetitions"] == []
