"""Datasets: CSV io, preprocessing to integers, synthetic data, bundled Iris."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from sklearn.model_selection import train_test_split

PREPROCESS_MODES = ("rounding", "zoom")


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    mode: str = "rounding"
    q: int = 1
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.y)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


def round_half_up(x) -> np.ndarray:
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(np.int64)


def preprocess(raw, mode: str = "rounding", q: int = 16, width: int = 16, y=None) -> Dataset:
    """Map real features to integers: ``rounding`` -> round(x), ``zoom`` -> round(x*q)."""
    raw = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(raw)):
        raise ValueError("features must be finite")
    if mode == "rounding":
        X, scale = round_half_up(raw), 1
    elif mode == "zoom":
        X, scale = round_half_up(raw * q), q
    else:
        raise ValueError(f"preprocess mode must be one of {PREPROCESS_MODES}, got {mode!r}")
    lim = 1 << (width - 1)
    if X.size and (X.min() < -lim or X.max() >= lim):
        raise OverflowError(f"preprocessed features exceed {width}-bit words")
    y = np.zeros(len(X), dtype=np.int64) if y is None else np.asarray(y)
    return Dataset(X, y, mode, scale)


def decode_features(ds: Dataset) -> np.ndarray:
    return ds.X / ds.q


def add_bias(X, value: int = 1) -> np.ndarray:
    X = np.asarray(X)
    return np.hstack([np.full((len(X), 1), value, dtype=X.dtype), X])


# -- synthetic linear data ---------------------------------------------------

SYNTHETIC_DEFAULTS = {"samples": 200, "features": 2, "noise": 0.5, "seed": 7, "spread": 8.0}


def make_synthetic(samples: int = 200, features: int = 2, noise: float = 0.5, seed: int = 7,
                   spread: float = 8.0):
    """Linearly separable clouds with Gaussian jitter.

    A random unit normal ``w`` and offset define the boundary; points are
    drawn uniformly in ``[-spread, spread]^d`` and labelled by the side they
    fall on, then perturbed by ``noise``.
    """
    if samples < 2 or features < 1:
        raise ValueError("need at least 2 samples and 1 feature")
    rng = np.random.default_rng(seed)
    w = rng.normal(size=features)
    w /= np.linalg.norm(w)
    offset = rng.uniform(-0.5, 0.5)
    X = rng.uniform(-spread, spread, size=(samples, features))
    y = (X @ w + offset > 0).astype(np.int64)
    X = X + rng.normal(scale=noise, size=X.shape)
    return X, y


# -- csv -----------------------------------------------------------------------

def write_csv(path, X, y, header=None) -> None:
    X = np.asarray(X)
    header = header or [f"x{i}" for i in range(X.shape[1])] + ["label"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row, label in zip(X, y):
            w.writerow([f"{v:.6g}" for v in row] + [int(label)])


def read_csv(path):
    """Header row, numeric columns, last column is the label."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    body = np.array(rows[1:], dtype=float)
    return body[:, :-1], body[:, -1].astype(np.int64), rows[0]


def iris_path() -> Path:
    return Path(str(resources.files("mktorus") / "data" / "iris.csv"))


def load_iris():
    X, y, _ = read_csv(iris_path())
    return X, y


def split_half(X, y, seed: int = 0):
    """Stratified 50/50 train/test split."""
    return train_test_split(X, y, test_size=0.5, stratify=y, random_state=seed)


def one_hot(y, n_classes: int | None = None) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    n_classes = n_classes or int(y.max()) + 1
    return np.eye(n_classes, dtype=np.int64)[y]
