"""Per-bit hash functions: linear and RBF-kernel SVMs.

The SVM is the L1-loss soft-margin SVM trained by dual coordinate
descent.  The bias is handled by appending a constant feature, so it is
regularised along with the weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy.spatial.distance import cdist, pdist


class DegenerateTargetsError(ValueError):
    """Targets contain a single class; no separating hyperplane to learn."""


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    tol: float = 1e-4
    max_epochs: int = 1000

    def __post_init__(self):
        if self.C <= 0 or self.tol <= 0 or self.max_epochs < 1:
            raise ValueError("SvmConfig fields must be positive")


@dataclass(frozen=True, eq=False)
class LinearHash:
    weights: np.ndarray
    bias: float

    def score(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias

    def __eq__(self, other):
        return (type(other) is LinearHash and self.bias == other.bias
                and np.array_equal(self.weights, other.weights))


@dataclass(frozen=True, eq=False)
class KernelHash:
    centers: np.ndarray
    sigma: float
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.centers.ndim != 2 or self.centers.shape[0] < 1:
            raise ValueError("need at least one center")

    def score(self, X) -> np.ndarray:
        return rbf_features(X, self.centers, self.sigma) @ self.weights + self.bias

    def __eq__(self, other):
        return (type(other) is KernelHash and self.bias == other.bias and self.sigma == other.sigma
                and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.centers, other.centers))


def predict(h, X) -> np.ndarray:
    """Hash values in {-1, +1}; a zero score maps to +1.

    ``X`` may be a single vector or a matrix of row vectors.
    """
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    dim = h.weights.size if isinstance(h, LinearHash) else h.centers.shape[1]
    if X2.shape[1] != dim:
        raise ValueError(f"input has {X2.shape[1]} features, hash expects {dim}")
    out = np.where(h.score(X2) >= 0, 1, -1).astype(np.int8)
    return out[0] if single else out


def rbf_features(X, centers, sigma: float) -> np.ndarray:
    """exp(-||x - c_j||^2 / (2 sigma^2)) for every row x and center c_j."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    C = np.asarray(centers, dtype=np.float64)
    if X2.shape[1] != C.shape[1]:
        raise ValueError("dimension mismatch between inputs and centers")
    d2 = cdist(X2, C, "sqeuclidean")
    F = np.exp(-d2 / (2.0 * sigma * sigma))
    return F[0] if single else F


def median_sigma(X, max_points: int = 1000, seed: int = 0) -> float:
    """Median pairwise Euclidean distance over a random sample of rows."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] > max_points:
        X = X[np.random.default_rng(seed).choice(X.shape[0], max_points, replace=False)]
    if X.shape[0] < 2:
        return 1.0
    s = float(np.median(pdist(X)))
    return s if s > 0 else 1.0


@numba.njit(cache=True, nogil=True)
def _dcd(X, y, C, tol, max_epochs, seed, primal_trace):
    n, d = X.shape
    w = np.zeros(d)
    alpha = np.zeros(n)
    qd = np.empty(n)
    for i in range(n):
        qd[i] = np.dot(X[i], X[i])
    order = np.arange(n)
    state = np.uint64(seed) * np.uint64(0x9E3779B97F4A7C15) + np.uint64(1)
    epochs = 0
    for epoch in range(max_epochs):
        # Fisher-Yates with a splitmix64 stream
        for i in range(n - 1, 0, -1):
            state += np.uint64(0x9E3779B97F4A7C15)
            r = state
            r = (r ^ (r >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            r = (r ^ (r >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            r = r ^ (r >> np.uint64(31))
            j = np.int64(r % np.uint64(i + 1))
            tmp = order[i]
            order[i] = order[j]
            order[j] = tmp
        pg_max = -np.inf
        pg_min = np.inf
        for k in range(n):
            i = order[k]
            g = y[i] * np.dot(w, X[i]) - 1.0
            a = alpha[i]
            if a == 0.0:
                pg = min(g, 0.0)
            elif a == C:
                pg = max(g, 0.0)
            else:
                pg = g
            pg_max = max(pg_max, pg)
            pg_min = min(pg_min, pg)
            if pg != 0.0 and qd[i] > 0.0:
                a_new = min(max(a - g / qd[i], 0.0), C)
                step = (a_new - a) * y[i]
                for f in range(d):
                    w[f] += step * X[i, f]
                alpha[i] = a_new
        epochs = epoch + 1
        if primal_trace.size > epoch:
            loss = 0.0
            for i in range(n):
                m = 1.0 - y[i] * np.dot(w, X[i])
                if m > 0.0:
                    loss += m
            primal_trace[epoch] = 0.5 * np.dot(w, w) + C * loss
        if pg_max - pg_min < tol:
            break
    return w, alpha, epochs


def fit_linear(X, targets, cfg: SvmConfig = SvmConfig(), seed: int = 0, trace: list | None = None) -> LinearHash:
    """Soft-margin linear SVM fitted to ``targets`` in {-1, +1}.

    If ``trace`` is a list, the primal objective after every epoch is
    appended to it.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != (X.shape[0],):
        raise ValueError("targets must have one entry per point")
    if not np.all(np.abs(y) == 1):
        raise ValueError("targets must be +1/-1")
    if np.all(y == y[0]):
        raise DegenerateTargetsError("targets contain a single class")
    Xa = np.hstack((X, np.ones((X.shape[0], 1))))
    buf = np.zeros(cfg.max_epochs if trace is not None else 0)
    w, _, epochs = _dcd(Xa, y, float(cfg.C), float(cfg.tol), int(cfg.max_epochs), int(seed) & (2**63 - 1), buf)
    if trace is not None:
        trace.extend(buf[:epochs].tolist())
    return LinearHash(w[:-1].copy(), float(w[-1]))


def primal_objective(h: LinearHash, X, targets, C: float = 1.0) -> float:
    w = np.append(h.weights, h.bias)
    margins = 1.0 - np.asarray(targets) * h.score(X)
    return 0.5 * float(w @ w) + C * float(np.maximum(margins, 0.0).sum())


def fit_kernel(X, targets, centers=None, n_centers: int = 500, cfg: SvmConfig = SvmConfig(),
               seed: int = 0, sigma: float | None = None) -> KernelHash:
    """RBF-kernel hash: linear SVM on Gaussian features of ``n_centers`` centers.

    ``centers=None`` draws a private random subset of the training points;
    otherwise the given (shared) centers are used.  ``sigma`` defaults to
    the median pairwise distance.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    rng = np.random.default_rng(seed)
    if centers is None:
        if n_centers > X.shape[0]:
            raise ValueError(f"n_centers={n_centers} exceeds {X.shape[0]} training points")
        centers = X[np.sort(rng.choice(X.shape[0], n_centers, replace=False))]
    centers = np.asarray(centers, dtype=np.float64)
    if sigma is None:
        sigma = median_sigma(X, seed=int(rng.integers(2**31)))
    F = rbf_features(X, centers, sigma)
    lin = fit_linear(F, targets, cfg, int(rng.integers(2**31)))
    return KernelHash(centers, float(sigma), lin.weights, lin.bias)


def hash_dim(h) -> int:
    return h.weights.size if isinstance(h, LinearHash) else h.centers.shape[1]
