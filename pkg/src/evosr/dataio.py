"""Dataset loading, splitting and the synthetic problem suite.

Splits are 80:20 with shuffling, features are standardized with statistics
learned on the training rows only, and the target is left on its original
scale so reported R^2 values stay comparable across operators.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TRAIN_FRACTION = 0.8
TRAIN_ROW_CAP = 10_000
MIN_ROWS = 5
_STD_FLOOR = 1e-12

DEFAULT_ROWS = 500
DEFAULT_NOISE = 0.05


class DataError(ValueError):
    """Raised for malformed input files or undersized datasets."""


@dataclass
class Dataset:
    name: str
    X: np.ndarray
    y: np.ndarray


@dataclass
class DatasetSplit:
    name: str
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray

    @property
    def n_features(self) -> int:
        return self.X_train.shape[1]


def load_csv(path: str, target: str) -> Dataset:
    """Read a numeric CSV with a header row; errors cite 1-based line numbers."""
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    if all(_is_number(cell) for cell in header):
        raise DataError(f"{path}: missing header row")
    if target not in header:
        raise DataError(f"{path}: target column {target!r} not in header {header}")
    t_idx = header.index(target)
    data = np.empty((len(rows) - 1, len(header)), dtype=float)
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: line {r}: expected {len(header)} fields, got {len(row)}")
        for c, cell in enumerate(row):
            try:
                data[r - 2, c] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: line {r}: non-numeric value {cell!r} in column {header[c]!r}"
                ) from None
    mask = np.ones(len(header), dtype=bool)
    mask[t_idx] = False
    return Dataset(name=path, X=data[:, mask], y=data[:, t_idx])


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def make_split(dataset: Dataset, seed: int) -> DatasetSplit:
    """Shuffled 80:20 split, train capped at 10k rows, train-fit scaling."""
    n = dataset.y.size
    if n < MIN_ROWS:
        raise DataError(f"{dataset.name}: needs at least {MIN_ROWS} rows, got {n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_train = min(max(int(round(TRAIN_FRACTION * n)), 1), n - 1)
    train_idx = order[:n_train][:TRAIN_ROW_CAP]
    val_idx = order[n_train:]
    X_train = dataset.X[train_idx]
    X_val = dataset.X[val_idx]
    mean = X_train.mean(axis=0)
    std = np.maximum(X_train.std(axis=0), _STD_FLOOR)
    return DatasetSplit(
        name=dataset.name,
        X_train=(X_train - mean) / std,
        y_train=dataset.y[train_idx].copy(),
        X_val=(X_val - mean) / std,
        y_val=dataset.y[val_idx].copy(),
    )


# ---------------------------------------------------------------------------
# synthetic problems


def _gen_product(rows: int, rng) -> tuple[np.ndarray, np.ndarray]:
    X = rng.uniform(-2.0, 2.0, size=(rows, 3))
    return X, X[:, 0] * X[:, 1] + X[:, 2]


def _gen_trig(rows: int, rng) -> tuple[np.ndarray, np.ndarray]:
    X = rng.uniform(-1.0, 1.0, size=(rows, 2))
    return X, np.sin(np.pi * X[:, 0]) + X[:, 1] ** 2


def _gen_sparse_linear(rows: int, rng) -> tuple[np.ndarray, np.ndarray]:
    X = rng.normal(0.0, 1.0, size=(rows, 10))
    return X, 3.0 * X[:, 1] - 2.0 * X[:, 4] + 0.5 * X[:, 7]


def _gen_rational(rows: int, rng) -> tuple[np.ndarray, np.ndarray]:
    X = rng.uniform(-2.0, 2.0, size=(rows, 2))
    return X, X[:, 0] / (1.0 + X[:, 1] ** 2)


SYNTHETIC_GENERATORS = {
    "product": _gen_product,
    "trig": _gen_trig,
    "sparse_linear": _gen_sparse_linear,
    "rational": _gen_rational,
}


def make_synthetic(
    name: str, seed: int, rows: int = DEFAULT_ROWS, noise: float = DEFAULT_NOISE
) -> Dataset:
    """One synthetic problem; noise is Gaussian, scaled by the clean-target std."""
    try:
        gen = SYNTHETIC_GENERATORS[name]
    except KeyError:
        raise DataError(
            f"unknown synthetic dataset {name!r}; "
            f"available: {', '.join(sorted(SYNTHETIC_GENERATORS))}"
        ) from None
    rng = np.random.default_rng(seed)
    X, y = gen(rows, rng)
    if noise > 0:
        y = y + rng.normal(0.0, noise * max(y.std(), _STD_FLOOR), size=y.shape)
    return Dataset(name=f"synthetic:{name}", X=X, y=y)


def synthetic_suite(
    seed: int, rows: int = DEFAULT_ROWS, noise: float = DEFAULT_NOISE
) -> list[Dataset]:
    """All four synthetic problems with per-problem derived seeds."""
    return [
        make_synthetic(name, seed=seed + i, rows=rows, noise=noise)
        for i, name in enumerate(sorted(SYNTHETIC_GENERATORS))
    ]


# ---------------------------------------------------------------------------
# manifests


def load_manifest(path: str) -> list[dict]:
    """Dataset manifest: a JSON list of CSV or synthetic entries.

    CSV entry: {"name", "path", "target", "split_seed"?}
    Synthetic entry: {"name", "synthetic", "rows"?, "noise"?, "seed"?, "split_seed"?}
    """
    with open(path) as fh:
        entries = json.load(fh)
    if not isinstance(entries, list) or not entries:
        raise DataError(f"{path}: manifest must be a non-empty JSON list")
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise DataError(f"{path}: entry {i} is not an object")
        if "path" not in entry and "synthetic" not in entry:
            raise DataError(f"{path}: entry {i} needs either 'path' or 'synthetic'")
        if "path" in entry and "target" not in entry:
            raise DataError(f"{path}: entry {i} has 'path' but no 'target'")
    return entries


def manifest_splits(manifest, base_seed: int = 0) -> list[DatasetSplit]:
    entries = load_manifest(manifest) if isinstance(manifest, (str, Path)) else manifest
    splits = []
    for i, entry in enumerate(entries):
        if "path" in entry:
            ds = load_csv(entry["path"], entry["target"])
        else:
            ds = make_synthetic(
                entry["synthetic"],
                seed=int(entry.get("seed", base_seed + i)),
                rows=int(entry.get("rows", DEFAULT_ROWS)),
                noise=float(entry.get("noise", DEFAULT_NOISE)),
            )
        if "name" in entry:
            ds.name = entry["name"]
        splits.append(make_split(ds, seed=int(entry.get("split_seed", base_seed + i))))
    return splits
