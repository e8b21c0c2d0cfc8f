"""Feature and label file formats."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .data import as_features, as_labels

FEATURES_MAGIC = b"ILHF"
FEATURES_VERSION = 1


def save_features(path, X) -> None:
    X = as_features(X)
    with open(path, "wb") as fh:
        fh.write(FEATURES_MAGIC)
        fh.write(struct.pack("<IQI", FEATURES_VERSION, X.shape[0], X.shape[1]))
        fh.write(X.astype("<f4").tobytes())


def load_features(path) -> np.ndarray:
    """Load a feature matrix from the binary format, or CSV by extension."""
    path = Path(path)
    if path.suffix.lower() in (".csv", ".txt"):
        X = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
        return as_features(X)
    with open(path, "rb") as fh:
        if fh.read(4) != FEATURES_MAGIC:
            raise ValueError(f"{path}: not a feature file")
        version, n, d = struct.unpack("<IQI", fh.read(16))
        if version != FEATURES_VERSION:
            raise ValueError(f"{path}: unsupported feature file version {version}")
        raw = fh.read(n * d * 4)
    if len(raw) != n * d * 4:
        raise ValueError(f"{path}: truncated feature file")
    return as_features(np.frombuffer(raw, dtype="<f4").reshape(n, d))


def save_labels(path, labels) -> None:
    np.savetxt(path, as_labels(labels), fmt="%d")


def load_labels(path, n_points: int | None = None) -> np.ndarray:
    return as_labels(np.loadtxt(path, dtype=np.int64, ndmin=1), n_points)
