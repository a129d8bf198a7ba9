"""Dataset construction and ingestion.

All loaders are pure functions of (path, seed): repeated calls produce
byte-identical datasets. Features are rescaled to [0, pi] so they can be
bound directly as rotation angles; for tabular data the rescale is computed
from the training split only.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .circuit import build_qenn
from .grad import circuit_expectation_batch
from .optim import init_params
from .simcore import Observable

PROVENANCES = ("synthetic", "wine", "mnist", "csv")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n, d) in [0, pi]
    labels: np.ndarray  # (n,) ints in 0..n_classes-1
    train_idx: np.ndarray
    test_idx: np.ndarray
    provenance: str
    n_classes: int
    image_side: int = 0  # 0 for tabular data

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def train_features(self) -> np.ndarray:
        return self.features[self.train_idx]

    @property
    def train_labels(self) -> np.ndarray:
        return self.labels[self.train_idx]

    @property
    def test_features(self) -> np.ndarray:
        return self.features[self.test_idx]

    @property
    def test_labels(self) -> np.ndarray:
        return self.labels[self.test_idx]

    def train_images(self) -> np.ndarray:
        if self.image_side == 0:
            raise ValueError("dataset is tabular, not images")
        s = self.image_side
        return self.train_features.reshape(-1, s, s)

    def test_images(self) -> np.ndarray:
        s = self.image_side
        return self.test_features.reshape(-1, s, s)


def validate_dataset(ds: Dataset) -> None:
    if set(ds.train_idx) & set(ds.test_idx):
        raise ValueError("train and test indices overlap")
    if ds.features.min() < -1e-12 or ds.features.max() > np.pi + 1e-12:
        raise ValueError("features outside [0, pi]")
    if ds.labels.min() < 0 or ds.labels.max() >= ds.n_classes:
        raise ValueError("labels outside class range")


def synthetic_generator(d: int, seed) -> tuple:
    """Labeling circuit for the synthetic task: a 2-layer embedding network
    with frozen random parameters. Returns (circuit, theta_star, rng); the
    rng has consumed exactly the parameter draw."""
    rng = np.random.default_rng(seed)
    circ = build_qenn(d, 2)
    theta_star = init_params(circ.n_params, rng)
    return circ, theta_star, rng


def generate_synthetic(
    n_per_class: int = 200, d: int = 16, seed=7, max_draws: int = 1_000_000
) -> Dataset:
    """Label-by-circuit synthetic data: x ~ U[0, pi]^d, y = sign of the
    generator's Z-readout; exactly n_per_class examples per class, split
    evenly and class-balanced into train and test."""
    circ, theta_star, rng = synthetic_generator(d, seed)
    obs = Observable.z(0)
    pos: list[np.ndarray] = []
    neg: list[np.ndarray] = []
    draws = 0
    while (len(pos) < n_per_class or len(neg) < n_per_class) and draws < max_draws:
        batch = min(512, max_draws - draws)
        X = rng.uniform(0.0, np.pi, (batch, d))
        draws += batch
        vals = circuit_expectation_batch(circ, X, theta_star, obs)
        for x, v in zip(X, vals):
            if v > 0 and len(pos) < n_per_class:
                pos.append(x)
            elif v <= 0 and len(neg) < n_per_class:
                neg.append(x)
    if len(pos) < n_per_class or len(neg) < n_per_class:
        raise RuntimeError(
            f"rejection sampling did not converge after {draws} draws: "
            f"{len(pos)} positive, {len(neg)} negative"
        )
    half = n_per_class // 2
    train = pos[:half] + neg[:half]
    test = pos[half:] + neg[half:]
    features = np.vstack(train + test)
    labels = np.array(
        [1] * half + [0] * half + [1] * (n_per_class - half) + [0] * (n_per_class - half)
    )
    n_train = len(train)
    ds = Dataset(
        features=features,
        labels=labels,
        train_idx=np.arange(n_train),
        test_idx=np.arange(n_train, features.shape[0]),
        provenance="synthetic",
        n_classes=2,
    )
    validate_dataset(ds)
    return ds


def _stratified_half(labels: np.ndarray, rng: np.random.Generator):
    """Split indices into halves preserving class balance within +-1."""
    classes = np.unique(labels)
    counts = {c: int(np.sum(labels == c)) for c in classes}
    base = {c: counts[c] // 2 for c in classes}
    deficit = labels.size // 2 - sum(base.values())
    for c in classes:
        if deficit <= 0:
            break
        if base[c] < counts[c]:
            base[c] += 1
            deficit -= 1
    train, test = [], []
    for c in classes:
        idx = np.nonzero(labels == c)[0]
        idx = idx[rng.permutation(idx.size)]
        train.extend(idx[: base[c]])
        test.extend(idx[base[c] :])
    return np.array(sorted(train)), np.array(sorted(test))


def _rescale_from_train(features: np.ndarray, train_idx: np.ndarray) -> np.ndarray:
    """Affine map sending each train-column's [min, max] to [0, pi]."""
    lo = features[train_idx].min(axis=0)
    hi = features[train_idx].max(axis=0)
    span = hi - lo
    span[span == 0] = 1.0
    return np.clip((features - lo) / span * np.pi, 0.0, np.pi)


def load_wine(path, seed=0) -> Dataset:
    """UCI-format wine CSV: label (1/2/3) in column 0 then 13 attributes.

    Classes 1 and 2 are kept and relabeled 0/1; the split is a seeded,
    stratified half/half; rescaling uses training statistics only.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"wine CSV not found: {path}")
    rows, labels = [], []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 14:
                raise ValueError(f"{path}:{lineno}: expected 14 columns, got {len(parts)}")
            try:
                lab = int(float(parts[0]))
                vals = [float(p) for p in parts[1:]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed value ({exc})") from exc
            if lab in (1, 2):
                labels.append(lab - 1)
                rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no class-1/class-2 rows found")
    features = np.array(rows)
    labels_arr = np.array(labels)
    rng = np.random.default_rng(seed)
    train_idx, test_idx = _stratified_half(labels_arr, rng)
    features = _rescale_from_train(features, train_idx)
    # canonical row order: train rows first
    order = np.concatenate([train_idx, test_idx])
    ds = Dataset(
        features=features[order],
        labels=labels_arr[order],
        train_idx=np.arange(train_idx.size),
        test_idx=np.arange(train_idx.size, order.size),
        provenance="wine",
        n_classes=2,
    )
    validate_dataset(ds)
    return ds


def materialize_wine_csv(out_path) -> Path:
    """Write the canonical UCI wine CSV from scikit-learn's bundled copy."""
    from sklearn.datasets import load_wine as _sk_wine

    bunch = _sk_wine()
    out_path = Path(out_path)
    with open(out_path, "w", encoding="ascii") as fh:
        for label, row in zip(bunch.target, bunch.data):
            fh.write(",".join([str(int(label) + 1)] + [repr(float(v)) for v in row]) + "\n")
    return out_path


_IDX_IMAGE_MAGIC = 2051
_IDX_LABEL_MAGIC = 2049


def _open_maybe_gz(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_be32(fh, path) -> int:
    data = fh.read(4)
    if len(data) != 4:
        raise ValueError(f"{path}: truncated IDX header")
    return struct.unpack(">i", data)[0]


def read_idx_images(path) -> np.ndarray:
    path = Path(path)
    with _open_maybe_gz(path) as fh:
        magic = _read_be32(fh, path)
        if magic != _IDX_IMAGE_MAGIC:
            raise ValueError(f"{path}: bad IDX image magic {magic}, expected {_IDX_IMAGE_MAGIC}")
        count = _read_be32(fh, path)
        h = _read_be32(fh, path)
        w = _read_be32(fh, path)
        raw = fh.read(count * h * w)
        if len(raw) != count * h * w:
            raise ValueError(f"{path}: truncated IDX image payload")
        return np.frombuffer(raw, dtype=np.uint8).reshape(count, h, w)


def read_idx_labels(path) -> np.ndarray:
    path = Path(path)
    with _open_maybe_gz(path) as fh:
        magic = _read_be32(fh, path)
        if magic != _IDX_LABEL_MAGIC:
            raise ValueError(f"{path}: bad IDX label magic {magic}, expected {_IDX_LABEL_MAGIC}")
        count = _read_be32(fh, path)
        raw = fh.read(count)
        if len(raw) != count:
            raise ValueError(f"{path}: truncated IDX label payload")
        return np.frombuffer(raw, dtype=np.uint8).astype(int)


def bilinear_resize(images: np.ndarray, side: int) -> np.ndarray:
    """Corner-aligned bilinear resize of a stack of square images."""
    images = np.asarray(images, dtype=float)
    n, h, w = images.shape
    if side == 1:
        ys = np.array([0.0])
        xs = np.array([0.0])
    else:
        ys = np.linspace(0.0, h - 1.0, side)
        xs = np.linspace(0.0, w - 1.0, side)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[None, :, None]
    wx = (xs - x0)[None, None, :]
    a = images[:, y0][:, :, x0]
    b = images[:, y0][:, :, x1]
    c = images[:, y1][:, :, x0]
    d = images[:, y1][:, :, x1]
    return (1 - wy) * ((1 - wx) * a + wx * b) + wy * ((1 - wx) * c + wx * d)


_MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def _find_idx_file(root: Path, stem: str) -> Path:
    for cand in (root / stem, root / (stem + ".gz")):
        if cand.exists():
            return cand
    raise FileNotFoundError(f"missing IDX file {stem}[.gz] under {root}")


def load_mnist(path, n_train: int = 2000, n_test: int = 2000, side: int = 10, seed=0) -> Dataset:
    """Seeded subsample of an IDX-format digit directory, resized to
    side x side by bilinear interpolation and rescaled to [0, pi]."""
    root = Path(path)
    tr_x = read_idx_images(_find_idx_file(root, _MNIST_FILES["train_images"]))
    tr_y = read_idx_labels(_find_idx_file(root, _MNIST_FILES["train_labels"]))
    te_x = read_idx_images(_find_idx_file(root, _MNIST_FILES["test_images"]))
    te_y = read_idx_labels(_find_idx_file(root, _MNIST_FILES["test_labels"]))
    if tr_x.shape[0] != tr_y.shape[0] or te_x.shape[0] != te_y.shape[0]:
        raise ValueError("image/label counts disagree")
    if n_train > tr_x.shape[0] or n_test > te_x.shape[0]:
        raise ValueError("requested subsample larger than the source files")
    rng = np.random.default_rng(seed)
    tr_sel = rng.permutation(tr_x.shape[0])[:n_train]
    te_sel = rng.permutation(te_x.shape[0])[:n_test]
    imgs = np.concatenate([tr_x[tr_sel], te_x[te_sel]]).astype(float)
    labels = np.concatenate([tr_y[tr_sel], te_y[te_sel]])
    small = bilinear_resize(imgs, side)
    features = (small / 255.0 * np.pi).reshape(small.shape[0], side * side)
    ds = Dataset(
        features=features,
        labels=labels,
        train_idx=np.arange(n_train),
        test_idx=np.arange(n_train, n_train + n_test),
        provenance="mnist",
        n_classes=10,
        image_side=side,
    )
    validate_dataset(ds)
    return ds


def randomize_labels(ds: Dataset, fraction: float = 1.0, seed=0) -> Dataset:
    """Replace a fraction of training labels by uniform draws over the class
    set; test labels are untouched and the input dataset is not modified."""
    if not (0.0 <= fraction <= 1.0):
        raise ValueError("fraction must be in [0, 1]")
    labels = ds.labels.copy()
    if fraction > 0:
        rng = np.random.default_rng(seed)
        k = int(round(fraction * ds.train_idx.size))
        chosen = rng.choice(ds.train_idx, size=k, replace=False)
        labels[chosen] = rng.integers(0, ds.n_classes, k)
    return replace(ds, labels=labels)


def dataset_to_csv(ds: Dataset, path) -> Path:
    """Canonical CSV: metadata comment, header naming features and label,
    then train rows followed by test rows. Floats are written with repr so
    the round trip is bit-exact."""
    path = Path(path)
    d = ds.n_features
    with open(path, "w", encoding="ascii") as fh:
        fh.write(
            f"# qnnbench-dataset provenance={ds.provenance} classes={ds.n_classes} "
            f"side={ds.image_side} train={ds.train_idx.size} test={ds.test_idx.size}\n"
        )
        fh.write(",".join([f"f{j}" for j in range(d)] + ["label"]) + "\n")
        for idx in np.concatenate([ds.train_idx, ds.test_idx]):
            row = [repr(float(v)) for v in ds.features[idx]] + [str(int(ds.labels[idx]))]
            fh.write(",".join(row) + "\n")
    return path


def dataset_from_csv(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset CSV not found: {path}")
    with open(path, "r", encoding="ascii") as fh:
        meta_line = fh.readline().strip()
        if not meta_line.startswith("# qnnbench-dataset"):
            raise ValueError(f"{path}: missing qnnbench-dataset metadata line")
        meta = dict(tok.split("=") for tok in meta_line.split()[2:])
        header = fh.readline().strip().split(",")
        d = len(header) - 1
        feats, labels = [], []
        for lineno, line in enumerate(fh, start=3):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != d + 1:
                raise ValueError(f"{path}:{lineno}: expected {d + 1} columns, got {len(parts)}")
            feats.append([float(p) for p in parts[:-1]])
            labels.append(int(parts[-1]))
    n_train, n_test = int(meta["train"]), int(meta["test"])
    if n_train + n_test != len(feats):
        raise ValueError(f"{path}: row count {len(feats)} does not match metadata")
    ds = Dataset(
        features=np.array(feats),
        labels=np.array(labels),
        train_idx=np.arange(n_train),
        test_idx=np.arange(n_train, n_train + n_test),
        provenance=meta["provenance"],
        n_classes=int(meta["classes"]),
        image_side=int(meta["side"]),
    )
    validate_dataset(ds)
    return ds
