"""Command-line entry point: train, gradcheck, report, generate-data, sweep,
timeit.

Exit codes: 0 success, 1 numerical failure (divergent repetitions under
--strict, gradcheck above tolerance), 2 usage or configuration error.
QNNBENCH_DATA_DIR supplies a default directory for dataset paths.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import multiprocessing
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import data as dat
from . import harness, report
from .circuit import build_qcnn_kernel, build_qenn, build_qnnn
from .grad import (
    ShiftRuleConfig,
    analytic_gradient,
    circuit_expectation_batch,
    quantum_geometric_tensor,
    shift_gradient,
)
from .simcore import Observable

USAGE_ERROR, NUMERICAL_ERROR = 2, 1


def _config_hash(cfg_dict: dict) -> str:
    canon = json.dumps(cfg_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _parse_override(text: str):
    key, _, raw = text.partition("=")
    if not _ or not key:
        raise ValueError(f"--set expects key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _apply_overrides(cfg: dict, overrides) -> dict:
    for text in overrides or ():
        key, value = _parse_override(text)
        parts = key.split(".")
        node = cfg
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ValueError(f"--set {key}: {p} is not a section")
        node[parts[-1]] = value
    return cfg


def _default_data_path(cfg: dict) -> None:
    data = cfg.setdefault("data", {})
    if data.get("path") or "provenance" not in data:
        return
    root = os.environ.get("QNNBENCH_DATA_DIR")
    if not root:
        return
    prov = data["provenance"]
    if prov == "wine":
        data["path"] = str(Path(root) / "wine.csv")
    elif prov == "mnist":
        data["path"] = str(root)


def _load_config(path, overrides) -> tuple[harness.ExperimentConfig, dict]:
    path = Path(path)
    if not path.exists():
        raise ValueError(f"config file not found: {path}")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from exc
    cfg = _apply_overrides(cfg, overrides)
    _default_data_path(cfg)
    return harness.ExperimentConfig.from_dict(cfg), cfg


def _prepare_out_dir(out: str, force: bool) -> Path:
    out_dir = Path(out)
    if out_dir.exists() and any(out_dir.iterdir()) and not force:
        raise ValueError(f"output directory {out_dir} is not empty; pass --force to reuse")
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def _train_worker(args):
    cfg_dict, rep, ckpt_path = args
    config = harness.ExperimentConfig.from_dict(cfg_dict)
    res = harness.train(config, rep_indices=[rep], keep_models=ckpt_path is not None)
    if ckpt_path is not None and res.models:
        ckpt.save_model(res.models[0].model, ckpt_path)
    return rep, res.per_rep, res.failed


def cmd_train(args) -> int:
    config, cfg_dict = _load_config(args.config, args.set)
    out_dir = _prepare_out_dir(args.out, args.force)
    run_hash = _config_hash(cfg_dict)
    run_id = time.strftime("%Y%m%dT%H%M%S", time.gmtime()) + "-" + run_hash
    ckpt_path = out_dir / "checkpoint.txt"
    t0 = time.perf_counter()
    if args.jobs > 1:
        jobs = [(cfg_dict, rep, str(ckpt_path) if rep == 0 else None)
                for rep in range(config.repetitions)]
        per_rep: list = []
        failed: list = []
        ctx = multiprocessing.get_context("spawn")  # fork is unsafe under OpenMP
        with ProcessPoolExecutor(max_workers=args.jobs, mp_context=ctx) as pool:
            for rep, recs, fails in sorted(pool.map(_train_worker, jobs)):
                per_rep.extend(recs)
                failed.extend(fails)
        if not per_rep:
            print(f"error: all repetitions failed: {failed}", file=sys.stderr)
            return NUMERICAL_ERROR
        records = harness.train_averages(per_rep, min(len(r) for r in per_rep))
        result = harness.TrainResult(config=config, records=records, per_rep=per_rep, failed=failed)
    else:
        result = harness.train(config, keep_models=True)
        ckpt.save_model(result.models[0].model, ckpt_path)
    wall = time.perf_counter() - t0
    harness.write_metrics_csv(out_dir / "metrics.csv", run_hash, result)
    summary = harness.summary_dict(result, run_id, wall_s=wall)
    harness.write_summary(out_dir / "summary.json", summary)
    manifest = {
        "run_id": run_id,
        "config_hash": run_hash,
        "config_path": str(args.config),
        "out_dir": str(out_dir),
        "artifacts": ["metrics.csv", "summary.json", "checkpoint.txt", "manifest.json"],
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    fin = result.final()
    print(
        f"{run_id}: {len(result.per_rep)} repetitions, final train_acc="
        f"{fin.train_accuracy:.4f} test_acc={fin.test_accuracy:.4f} "
        f"gen_error={fin.generalization_error:.4f} ({wall:.1f}s)"
    )
    if result.failed:
        print(f"failed repetitions: {result.failed}", file=sys.stderr)
        if args.strict:
            return NUMERICAL_ERROR
    return 0


def _gradcheck_arch(arch: str, seed: int, n_qubits: int = 4, n_draws: int = 5):
    """Max |shift - finite difference| relative error over random draws."""
    build = {"qnnn": lambda: build_qnnn(n_qubits, 2),
             "qenn": lambda: build_qenn(n_qubits, 2),
             "qcnn": build_qcnn_kernel}[arch]
    circ = build()
    obs = Observable.z(0)
    rng = np.random.default_rng(seed)
    worst = 0.0
    alpha_dev = 0.0
    eps = 1e-4
    for _ in range(n_draws):
        x = rng.uniform(0, np.pi, circ.n_features)
        th = rng.uniform(0, 2 * np.pi, circ.n_params)
        g = shift_gradient(circ, x, th, obs)
        fd = np.empty_like(g)
        for j in range(circ.n_params):
            e = np.zeros_like(th)
            e[j] = eps
            hi = circuit_expectation_batch(circ, x, (th + e)[None, :], obs)[0]
            lo = circuit_expectation_batch(circ, x, (th - e)[None, :], obs)[0]
            fd[j] = (hi - lo) / (2 * eps)
        scale = np.maximum(np.abs(fd), 1e-2)
        worst = max(worst, float(np.max(np.abs(g - fd) / scale)))
        if arch != "qcnn":  # alpha applies to the two-term rule
            g2 = shift_gradient(circ, x, th, obs, ShiftRuleConfig(np.pi / 3))
            alpha_dev = max(alpha_dev, float(np.max(np.abs(g - g2))))
        ga = analytic_gradient(circ, x, th, obs)
        worst = max(worst, float(np.max(np.abs(g - ga) / scale)))
    return worst, alpha_dev


def cmd_gradcheck(args) -> int:
    archs = ["qnnn", "qenn", "qcnn"] if args.arch == "all" else [args.arch]
    ok = True
    for arch in archs:
        worst, alpha_dev = _gradcheck_arch(arch, args.seed)
        good = worst < 1e-5 and alpha_dev < 1e-9
        ok = ok and good
        print(f"{arch}: max rel err vs finite differences {worst:.3e}, "
              f"alpha deviation {alpha_dev:.3e} [{'ok' if good else 'FAIL'}]")
    from .circuit import CircuitOp, Param, ParameterizedCircuit
    from .simcore import GateKind

    ry = ParameterizedCircuit(1, (CircuitOp(GateKind.RY, (0,), (Param(0),)),), 1, 0, (1,))
    rz = ParameterizedCircuit(1, (CircuitOp(GateKind.RZ, (0,), (Param(0),)),), 1, 0, (1,))
    g_ry = quantum_geometric_tensor(ry, np.zeros(0), np.array([0.7])).g[0, 0]
    g_rz = quantum_geometric_tensor(rz, np.zeros(0), np.array([0.7])).g[0, 0]
    oracles_ok = abs(g_ry - 0.25) < 1e-10 and abs(g_rz) < 1e-10
    ok = ok and oracles_ok
    print(f"metric oracles: single-RY {g_ry:.12f} (0.25), single-RZ {g_rz:.3e} (0.0) "
          f"[{'ok' if oracles_ok else 'FAIL'}]")
    return 0 if ok else NUMERICAL_ERROR


def cmd_report(args) -> int:
    out = report.write_report(args.run_dirs, args.out)
    print(f"merged {out['n_runs']} runs -> {out['merged_csv']}")
    print(Path(out["table"]).read_text(), end="")
    for f in out["figures"]:
        print(f"figure: {f}")
    return 0


def cmd_generate_data(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.kind == "synthetic":
        ds = dat.generate_synthetic(n_per_class=args.n_per_class, d=args.dim, seed=args.seed)
        dat.dataset_to_csv(ds, out)
    elif args.kind == "wine":
        if args.source:
            dat.load_wine(args.source)  # validates schema before copying through
            out.write_text(Path(args.source).read_text())
        else:
            dat.materialize_wine_csv(out)
        dat.load_wine(out)
    elif args.kind == "mnist":
        root = args.source or os.environ.get("QNNBENCH_DATA_DIR")
        if not root:
            print("error: mnist needs --source or QNNBENCH_DATA_DIR", file=sys.stderr)
            return USAGE_ERROR
        ds = dat.load_mnist(root, n_train=args.n_train, n_test=args.n_test,
                            side=args.side, seed=args.seed)
        dat.dataset_to_csv(ds, out)
    print(f"wrote {out}")
    return 0


def cmd_sweep(args) -> int:
    config, cfg_dict = _load_config(args.config, args.set)
    out_dir = _prepare_out_dir(args.out, args.force)
    values = []
    for tok in args.values.split(","):
        try:
            values.append(json.loads(tok))
        except json.JSONDecodeError:
            raise ValueError(f"--values entries must be numbers, got {tok!r}")
    res = harness.sweep(config, args.axis, values)
    run_hash = _config_hash(cfg_dict)
    rows = res.table()
    table_path = out_dir / "sweep_table.csv"
    with open(table_path, "w", encoding="ascii") as fh:
        cols = list(rows[0].keys())
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(repr(row[c]) for c in cols) + "\n")
    for v, r in zip(res.values, res.results):
        sub = out_dir / f"{args.axis}_{v}"
        sub.mkdir(exist_ok=True)
        harness.write_metrics_csv(sub / "metrics.csv", f"{run_hash}-{args.axis}{v}", r)
    print(f"swept {args.axis} over {values}; table -> {table_path}")
    for row in rows:
        print("  " + json.dumps(row, sort_keys=True))
    return 0


def cmd_timeit(args) -> int:
    config, _ = _load_config(args.config, args.set)
    res = harness.time_iteration(config, warmup=args.warmup, iters=args.iters)
    out = {
        "mean_ms_per_iter": res.mean_ms_per_iter,
        "std_ms_per_iter": res.std_ms_per_iter,
        "mean_ms_per_epoch": res.mean_ms_per_epoch,
        "iters_per_epoch": res.iters_per_epoch,
        "n_timed": res.n_timed,
    }
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qnnbench",
        description="Train and benchmark quantum and classical models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a training experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a dotted config key, e.g. optimizer.batch_size=8")
    p.add_argument("--force", action="store_true", help="reuse a non-empty output directory")
    p.add_argument("--strict", action="store_true",
                   help="exit nonzero if any repetition diverges")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for repetitions")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("gradcheck", help="verify shift-rule gradients and metric oracles")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--arch", choices=["qnnn", "qenn", "qcnn", "all"], default="all")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("report", help="merge finished runs into a table, CSV, and figures")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("generate-data", help="write a dataset in the canonical CSV format")
    p.add_argument("kind", choices=["synthetic", "wine", "mnist"])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--source", help="wine source CSV or MNIST IDX directory")
    p.add_argument("--n-per-class", type=int, default=200)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-test", type=int, default=2000)
    p.add_argument("--side", type=int, default=10)
    p.set_defaults(fn=cmd_generate_data)

    p = sub.add_parser("sweep", help="train once per value along one config axis")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", choices=["batch_size", "noise_p", "L"], required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("timeit", help="time optimizer iterations for a config")
    p.add_argument("--config", required=True)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(fn=cmd_timeit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
