"""Orthogonality of codes and hyperplanes, with a random-vector control."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codes import CodeMatrix

N_BINS = 41


def ortho_matrices(codes, weights) -> tuple[np.ndarray, np.ndarray]:
    """C_Z = Z^T Z / N over +-1 codes and C_W = W W^T over unit-normalised rows.

    ``codes`` is a :class:`CodeMatrix` or an N x b sign array; ``weights``
    is b x D (biases excluded).  Rows of ``weights`` are normalised here.
    """
    Z = codes.to_signs() if isinstance(codes, CodeMatrix) else np.asarray(codes)
    Z = Z.astype(np.float64)
    W = np.asarray(weights, dtype=np.float64)
    if W.shape[0] != Z.shape[1]:
        raise ValueError(f"{Z.shape[1]} code bits but {W.shape[0]} weight rows")
    norms = np.linalg.norm(W, axis=1)
    if np.any(norms == 0):
        raise ValueError(f"weight rows {np.flatnonzero(norms == 0).tolist()} have zero norm")
    W = W / norms[:, None]
    return Z.T @ Z / Z.shape[0], np.clip(W @ W.T, -1.0, 1.0)


def ortho_measure(C) -> float:
    """Mean squared off-diagonal entry: ||I - C||_F^2 / (b (b - 1))."""
    C = np.asarray(C, dtype=np.float64)
    b = C.shape[0]
    if C.shape != (b, b):
        raise ValueError("C must be square")
    if b < 2:
        raise ValueError("the measure needs at least 2 bits")
    return float(np.sum((np.eye(b) - C) ** 2) / (b * (b - 1)))


def random_control(dim: int, n_samples: int, kind: str = "binary", seed: int = 0) -> np.ndarray:
    """Normalised dot products of independent random vector pairs.

    ``binary``: x^T y / dim for uniform +-1 vectors.  ``real-unit``: dot
    product of two vectors with uniform[-1, 1] entries scaled to unit length.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    if kind == "binary":
        x = rng.choice(np.array([-1.0, 1.0]), (n_samples, dim))
        y = rng.choice(np.array([-1.0, 1.0]), (n_samples, dim))
        return np.einsum("ij,ij->i", x, y) / dim
    if kind == "real-unit":
        x = rng.uniform(-1.0, 1.0, (n_samples, dim))
        y = rng.uniform(-1.0, 1.0, (n_samples, dim))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        y /= np.linalg.norm(y, axis=1, keepdims=True)
        return np.einsum("ij,ij->i", x, y)
    raise ValueError("kind must be 'binary' or 'real-unit'")


def off_diagonal(C) -> np.ndarray:
    C = np.asarray(C)
    return C[~np.eye(C.shape[0], dtype=bool)]


def histogram(values) -> tuple[np.ndarray, np.ndarray]:
    counts, edges = np.histogram(np.clip(values, -1.0, 1.0), bins=N_BINS, range=(-1.0, 1.0))
    return counts, edges


@dataclass
class OrthoReport:
    C_Z: np.ndarray
    C_W: np.ndarray
    measure_Z: float
    measure_W: float
    hist_Z: np.ndarray
    hist_W: np.ndarray
    control_hist: np.ndarray
    edges: np.ndarray


def ortho_report(codes, weights, n_control: int = 10_000, seed: int = 0) -> OrthoReport:
    """Both Gram matrices, their measures and histograms.

    The control histogram uses binary random vectors of the code length N.
    """
    C_Z, C_W = ortho_matrices(codes, weights)
    n = codes.n_points if isinstance(codes, CodeMatrix) else np.asarray(codes).shape[0]
    hz, edges = histogram(off_diagonal(C_Z))
    hw, _ = histogram(off_diagonal(C_W))
    hc, _ = histogram(random_control(n, n_control, "binary", seed))
    return OrthoReport(C_Z, C_W, ortho_measure(C_Z), ortho_measure(C_W), hz, hw, hc, edges)


def write_matrix_tsv(path, C) -> None:
    np.savetxt(path, np.asarray(C), fmt="%.17g", delimiter="\t")


def write_histogram_tsv(path, counts, control, edges) -> None:
    with open(path, "w") as fh:
        for i in range(len(counts)):
            fh.write(f"{edges[i]:.6f}\t{edges[i + 1]:.6f}\t{int(counts[i])}\t{int(control[i])}\n")
