"""Core value types, affinity construction and synthetic data."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

log = logging.getLogger(__name__)


def as_features(X) -> np.ndarray:
    """Validate and return an N x D float64 feature matrix."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"feature matrix must be 2-D and non-empty, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains NaN or Inf")
    return X


def as_labels(labels, n_points: int | None = None) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError("labels must be a 1-D vector")
    if labels.size and not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise ValueError("labels must be integers")
    labels = labels.astype(np.int64)
    if np.any(labels < 0):
        raise ValueError("labels must be nonnegative")
    if n_points is not None and labels.shape[0] != n_points:
        raise ValueError(f"{labels.shape[0]} labels for {n_points} points")
    return labels


@dataclass(frozen=True, eq=False)
class AffinitySet:
    """Symmetric set of supervised pairs ``(n, m, y)`` with ``y`` in {+1, -1}.

    Pairs are stored once per unordered pair with ``n < m``, in the order
    they were first generated.
    """

    n: np.ndarray
    m: np.ndarray
    y: np.ndarray
    n_points: int
    n_conflicts: int = 0
    _lookup: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        n = np.asarray(self.n, dtype=np.int64)
        m = np.asarray(self.m, dtype=np.int64)
        y = np.asarray(self.y, dtype=np.int8)
        if not (n.shape == m.shape == y.shape) or n.ndim != 1:
            raise ValueError("n, m, y must be 1-D arrays of equal length")
        if np.any(n == m):
            raise ValueError("self-pairs are not allowed")
        if n.size and (min(n.min(), m.min()) < 0 or max(n.max(), m.max()) >= self.n_points):
            raise ValueError("pair index out of range")
        if not np.all(np.abs(y) == 1):
            raise ValueError("affinity labels must be +1 or -1")
        lo, hi = np.minimum(n, m), np.maximum(n, m)
        keys = lo * self.n_points + hi
        if np.unique(keys).size != keys.size:
            raise ValueError("duplicate unordered pair")
        for name, arr in (("n", lo), ("m", hi), ("y", y)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_pairs(cls, n, m, y, n_points: int) -> AffinitySet:
        """Build from raw (possibly repeated) pairs; first occurrence wins."""
        n = np.asarray(n, dtype=np.int64)
        m = np.asarray(m, dtype=np.int64)
        y = np.asarray(y, dtype=np.int8)
        keep = n != m
        n, m, y = n[keep], m[keep], y[keep]
        lo, hi = np.minimum(n, m), np.maximum(n, m)
        keys = lo * n_points + hi
        uniq, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        conflicts = 0
        if uniq.size != keys.size:
            # a key conflicts if any of its occurrences disagrees with the first
            disagree = y != y[first][inverse]
            conflicts = int(np.unique(inverse[disagree]).size)
            if conflicts:
                log.warning("%d conflicting affinity pairs; kept first label", conflicts)
        order = np.sort(first)
        return cls(lo[order], hi[order], y[order], n_points, conflicts)

    def __len__(self) -> int:
        return int(self.y.size)

    def get(self, a: int, b: int) -> int | None:
        """Label of the unordered pair (a, b), or None if absent."""
        if self._lookup is None:
            table = {(int(i), int(j)): int(v) for i, j, v in zip(self.n, self.m, self.y)}
            object.__setattr__(self, "_lookup", table)
        return self._lookup.get((min(a, b), max(a, b)))

    def restrict(self, indices) -> AffinitySet:
        """Affinities among ``indices``, re-indexed to positions in ``indices``.

        ``indices`` may repeat (bootstrap samples); each copy of a point is a
        separate position and copies of the same point are not paired.
        """
        indices = np.asarray(indices, dtype=np.int64)
        counts = np.bincount(indices, minlength=self.n_points)
        start = np.concatenate(([0], np.cumsum(counts)[:-1]))
        pos_sorted = np.argsort(indices, kind="stable")
        cn, cm = counts[self.n], counts[self.m]
        total = cn * cm
        sel = np.repeat(np.arange(self.y.size), total)
        # offset of each expanded row within its pair's cartesian block
        k = np.arange(sel.size) - np.repeat(np.cumsum(total) - total, total)
        i, j = k // cm[sel], k % cm[sel]
        pn = pos_sorted[start[self.n[sel]] + i]
        pm = pos_sorted[start[self.m[sel]] + j]
        return AffinitySet(pn, pm, self.y[sel], int(indices.size))

    def to_tsv(self, path) -> None:
        with open(path, "w") as fh:
            for a, b, v in zip(self.n, self.m, self.y):
                fh.write(f"{a}\t{b}\t{v}\n")

    @classmethod
    def from_tsv(cls, path, n_points: int) -> AffinitySet:
        rows = np.loadtxt(path, dtype=np.int64, ndmin=2, delimiter="\t")
        if rows.size == 0:
            rows = rows.reshape(0, 3)
        return cls.from_pairs(rows[:, 0], rows[:, 1], rows[:, 2], n_points)


def build_affinities_supervised(X, labels, s_pos: int = 100, s_neg: int = 100, seed: int = 0) -> AffinitySet:
    """Per point, ``s_pos`` random same-label and ``s_neg`` random other-label partners."""
    X = as_features(X)
    labels = as_labels(labels, X.shape[0])
    if s_pos < 1 or s_neg < 1:
        raise ValueError("s_pos and s_neg must be >= 1")
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2:
        raise ValueError("need at least two classes to draw dissimilar pairs")
    if np.any(counts < 2):
        log.warning("%d classes with a single member get no positive pairs", int(np.sum(counts < 2)))
    rng = np.random.default_rng(seed)
    N = X.shape[0]
    by_class = np.argsort(labels, kind="stable")
    cls_start = dict(zip(classes.tolist(), np.concatenate(([0], np.cumsum(counts)[:-1])).tolist()))
    cls_count = dict(zip(classes.tolist(), counts.tolist()))
    src, dst, ys = [], [], []
    for p in range(N):
        c = int(labels[p])
        lo, cnt = cls_start[c], cls_count[c]
        same = by_class[lo:lo + cnt]
        same = same[same != p]
        k = min(s_pos, same.size)
        if k:
            dst.append(rng.choice(same, size=k, replace=False))
            src.append(np.full(k, p))
            ys.append(np.ones(k, dtype=np.int8))
        n_other = N - cnt
        k = min(s_neg, n_other)
        r = rng.choice(n_other, size=k, replace=False)
        # skip over this class's contiguous block in class-sorted order
        r = np.where(r >= lo, r + cnt, r)
        dst.append(by_class[r])
        src.append(np.full(k, p))
        ys.append(-np.ones(k, dtype=np.int8))
    return AffinitySet.from_pairs(np.concatenate(src), np.concatenate(dst), np.concatenate(ys), N)


def build_affinities_unsupervised(X, k_pos: int = 100, s_neg: int = 100, seed: int = 0,
                                  chunk: int = 1024) -> AffinitySet:
    """Pseudolabels: ``k_pos`` Euclidean nearest neighbours similar, ``s_neg`` random others dissimilar."""
    X = as_features(X)
    N = X.shape[0]
    if k_pos >= N:
        raise ValueError(f"k_pos={k_pos} must be smaller than N={N}")
    if N <= k_pos + s_neg:
        raise ValueError("need N > k_pos + s_neg")
    rng = np.random.default_rng(seed)
    nn = knn_euclidean(X, X, k_pos + 1, chunk=chunk)
    # all neighbour pairs are generated before any random negative, so a
    # pair that is a true neighbour for either endpoint stays positive
    pos, neg = [], []
    for p in range(N):
        row = nn[p]
        row = row[row != p][:k_pos]
        pos.append(row)
        excluded = np.sort(np.concatenate((row, [p])))
        r = rng.choice(N - excluded.size, size=s_neg, replace=False)
        # map ranks among non-excluded points back to point indices
        neg.append(r + np.searchsorted(excluded - np.arange(excluded.size), r, side="right"))
    src = np.concatenate((np.repeat(np.arange(N), k_pos), np.repeat(np.arange(N), s_neg)))
    dst = np.concatenate(pos + neg)
    ys = np.concatenate((np.ones(N * k_pos, dtype=np.int8), -np.ones(N * s_neg, dtype=np.int8)))
    return AffinitySet.from_pairs(src, dst, ys, N)


def knn_euclidean(Q, B, k: int, chunk: int = 1024) -> np.ndarray:
    """Exact k nearest rows of ``B`` for each row of ``Q``; ties by ascending index."""
    Q, B = np.asarray(Q, dtype=np.float64), np.asarray(B, dtype=np.float64)
    k = min(k, B.shape[0])
    out = np.empty((Q.shape[0], k), dtype=np.int64)
    for s in range(0, Q.shape[0], chunk):
        # direct differences keep exact duplicates at distance exactly 0
        d = cdist(Q[s:s + chunk], B, "sqeuclidean")
        out[s:s + chunk] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


def synth_dataset(n_clusters: int, dim: int, n_points: int, spread: float = 1.0, seed: int = 0):
    """Isotropic Gaussian blobs around unit-separated means.

    Means are spaced so every pair is at distance 1; points are
    ``mean + spread * N(0, I)``. Returns ``(X, labels)``.
    """
    if n_clusters < 2:
        raise ValueError("n_clusters must be >= 2")
    if n_points < n_clusters:
        raise ValueError("n_points must be >= n_clusters")
    rng = np.random.default_rng(seed)
    if n_clusters <= dim:
        Q, _ = np.linalg.qr(rng.standard_normal((dim, n_clusters)))
        means = Q.T / np.sqrt(2.0)
    else:
        means = rng.standard_normal((n_clusters, dim))
        means /= np.linalg.norm(means, axis=1, keepdims=True) * np.sqrt(2.0)
    labels = np.arange(n_points) % n_clusters
    labels.sort()
    X = means[labels] + spread * rng.standard_normal((n_points, dim))
    return X, labels


class SubsetAffinityBuilder:
    """Builds supervised affinities afresh inside each training subset.

    Drop-in for :class:`AffinitySet` wherever only ``restrict`` is used:
    every subset gets ``s_pos`` / ``s_neg`` partners per point drawn among
    its own members, as when a method is trained on that subset alone.
    The draw is seeded by the subset contents, so it does not depend on
    the order in which subsets are requested.
    """

    def __init__(self, labels, s_pos: int = 100, s_neg: int = 100, seed: int = 0):
        self.labels = as_labels(labels)
        self.n_points = int(self.labels.size)
        self.s_pos, self.s_neg, self.seed = s_pos, s_neg, seed

    def restrict(self, indices) -> AffinitySet:
        indices = np.asarray(indices, dtype=np.int64)
        digest = hashlib.sha256(indices.tobytes()).digest()
        seed = np.random.SeedSequence([self.seed, int.from_bytes(digest[:8], "little")])
        return build_affinities_supervised(np.zeros((indices.size, 1)), self.labels[indices],
                                           self.s_pos, self.s_neg, seed)
