"""Run comparison: merged long-format CSV, a plain-text table, and figures.

The report path renders accuracy curves, the generalization-error bar chart,
and gradient-norm (trainability) curves as PNG files next to the merged CSV,
so a finished sweep is inspectable without re-running anything.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

import numpy as np

from .harness import METRICS_CSV_HEADER

_COLUMNS = METRICS_CSV_HEADER.split(",")


@dataclass
class RunMetrics:
    run_id: str
    rows: list[dict]  # parsed metric rows, per repetition per epoch

    def epochs(self) -> np.ndarray:
        return np.unique([int(r["epoch"]) for r in self.rows])

    def mean_over_reps(self, field: str) -> np.ndarray:
        """Per-epoch mean of a metric across repetitions."""
        out = []
        for e in self.epochs():
            vals = [float(r[field]) for r in self.rows if int(r["epoch"]) == e]
            out.append(float(np.mean(vals)))
        return np.asarray(out)

    def final_mean(self, field: str) -> float:
        last = self.epochs().max()
        vals = [float(r[field]) for r in self.rows if int(r["epoch"]) == last]
        return float(np.mean(vals))


def read_metrics_csv(path) -> RunMetrics:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"metrics CSV not found: {path}")
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _COLUMNS:
            raise ValueError(
                f"{path}: header mismatch; expected {METRICS_CSV_HEADER!r}"
            )
        rows = [dict(zip(_COLUMNS, row)) for row in reader]
    if not rows:
        raise ValueError(f"{path}: no metric rows")
    return RunMetrics(run_id=rows[0]["run_id"], rows=rows)


def load_runs(run_dirs) -> list[RunMetrics]:
    runs = []
    for d in run_dirs:
        d = Path(d)
        path = d if d.suffix == ".csv" else d / "metrics.csv"
        runs.append(read_metrics_csv(path))
    return runs


def write_merged_csv(runs: list[RunMetrics], out_path) -> Path:
    out_path = Path(out_path)
    with open(out_path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(_COLUMNS)
        for run in runs:
            for r in run.rows:
                writer.writerow([r[c] for c in _COLUMNS])
    return out_path


def comparison_table(runs: list[RunMetrics]) -> str:
    """Final-epoch comparison of every run, one line each."""
    head = f"{'run_id':<40} {'train_acc':>9} {'test_acc':>9} {'gen_error':>9} {'grad_norm':>9}"
    lines = [head, "-" * len(head)]
    for run in runs:
        lines.append(
            f"{run.run_id:<40} "
            f"{run.final_mean('train_acc'):>9.4f} "
            f"{run.final_mean('test_acc'):>9.4f} "
            f"{run.final_mean('gen_error'):>9.4f} "
            f"{run.final_mean('grad_norm'):>9.4f}"
        )
    return "\n".join(lines) + "\n"


def render_figures(runs: list[RunMetrics], out_dir) -> list[Path]:
    """Accuracy curves, generalization-error bars, and gradient-norm curves."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for run in runs:
        ep = run.epochs()
        ax.plot(ep, run.mean_over_reps("train_acc"), label=f"{run.run_id} train")
        ax.plot(ep, run.mean_over_reps("test_acc"), "--", label=f"{run.run_id} test")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    p = out_dir / "accuracy_curves.png"
    fig.tight_layout()
    fig.savefig(p, dpi=150)
    plt.close(fig)
    written.append(p)

    fig, ax = plt.subplots(figsize=(6, 4))
    names = [r.run_id for r in runs]
    gerr = [r.final_mean("gen_error") for r in runs]
    ax.bar(range(len(runs)), gerr, color="tab:purple")
    ax.set_xticks(range(len(runs)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=7)
    ax.set_ylabel("generalization error (train - test)")
    ax.grid(axis="y", alpha=0.3)
    p = out_dir / "generalization_error.png"
    fig.tight_layout()
    fig.savefig(p, dpi=150)
    plt.close(fig)
    written.append(p)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for run in runs:
        gn = run.mean_over_reps("grad_norm")
        if np.all(np.isnan(gn)):
            continue
        ax.plot(run.epochs(), gn, label=run.run_id)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss-gradient norm")
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    p = out_dir / "gradient_norm.png"
    fig.tight_layout()
    fig.savefig(p, dpi=150)
    plt.close(fig)
    written.append(p)
    return written


def write_report(run_dirs, out_dir) -> dict:
    """Merged CSV + comparison table + figures for a set of finished runs."""
    runs = load_runs(run_dirs)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    merged = write_merged_csv(runs, out_dir / "merged.csv")
    table = comparison_table(runs)
    table_path = out_dir / "comparison.txt"
    table_path.write_text(table, encoding="ascii")
    figures = render_figures(runs, out_dir)
    return {
        "merged_csv": str(merged),
        "table": str(table_path),
        "figures": [str(f) for f in figures],
        "n_runs": len(runs),
    }
