"""Encoding, exact Hamming k-NN search and precision/recall."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codes import CodeMatrix
from .data import knn_euclidean


def encode(ensemble, X) -> CodeMatrix:
    """Codes of every row of ``X``, one bit per hash function."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != ensemble.dim:
        raise ValueError(f"expected {ensemble.dim}-dimensional rows, got shape {X.shape}")
    Z = np.empty((X.shape[0], ensemble.n_bits), dtype=np.int8)
    for i, bit in enumerate(ensemble.bits):
        Z[:, i] = bit.predict(X)
    return CodeMatrix.from_signs(Z)


_POP8 = np.array([bin(v).count("1") for v in range(256)], dtype=np.uint8)


def _popcount(words: np.ndarray) -> np.ndarray:
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(words)
    return _POP8[words.view(np.uint8)].reshape(*words.shape, 8).sum(-1)


def hamming_distances(queries: CodeMatrix, database: CodeMatrix) -> np.ndarray:
    """Full (n_queries, n_database) distance matrix."""
    if queries.n_bits != database.n_bits:
        raise ValueError("queries and database have different code lengths")
    q, d = queries.words(), database.words()
    out = np.zeros((q.shape[0], d.shape[0]), dtype=np.int32)
    for w in range(q.shape[1]):
        out += _popcount(q[:, w, None] ^ d[None, :, w])
    return out


@dataclass
class RetrievalResult:
    indices: np.ndarray    # (n_queries, k) database ids, nearest first
    distances: np.ndarray  # (n_queries, k)

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    def to_tsv(self, path) -> None:
        with open(path, "w") as fh:
            for q in range(self.indices.shape[0]):
                for r in range(self.k):
                    fh.write(f"{q}\t{r}\t{self.indices[q, r]}\t{self.distances[q, r]}\n")

    @classmethod
    def from_tsv(cls, path) -> RetrievalResult:
        rows = np.loadtxt(path, dtype=np.int64, ndmin=2, delimiter="\t")
        if rows.size == 0:
            return cls(np.zeros((0, 0), np.int64), np.zeros((0, 0), np.int32))
        nq, k = rows[:, 0].max() + 1, rows[:, 1].max() + 1
        idx = np.zeros((nq, k), dtype=np.int64)
        dist = np.zeros((nq, k), dtype=np.int32)
        idx[rows[:, 0], rows[:, 1]] = rows[:, 2]
        dist[rows[:, 0], rows[:, 1]] = rows[:, 3]
        return cls(idx, dist)


def hamming_knn(queries: CodeMatrix, database: CodeMatrix, k: int, chunk: int = 256) -> RetrievalResult:
    """Exact k nearest codes by linear popcount scan; ties by ascending index."""
    if queries.n_bits != database.n_bits:
        raise ValueError("queries and database have different code lengths")
    n = database.n_points
    if k < 0 or k > n:
        raise ValueError(f"k={k} must lie in [0, {n}]")
    nq = queries.n_points
    idx = np.zeros((nq, k), dtype=np.int64)
    dist = np.zeros((nq, k), dtype=np.int32)
    if k == 0:
        return RetrievalResult(idx, dist)
    order = np.arange(n, dtype=np.int64)
    dwords = database.words()
    for s in range(0, nq, chunk):
        qc = CodeMatrix(queries.packed[s:s + chunk], queries.n_bits)
        D = np.zeros((qc.n_points, n), dtype=np.int64)
        qw = qc.words()
        for w in range(qw.shape[1]):
            D += _popcount(qw[:, w, None] ^ dwords[None, :, w])
        key = D * n + order[None, :]
        if k < n:
            part = np.argpartition(key, k - 1, axis=1)[:, :k]
            key_k = np.take_along_axis(key, part, axis=1)
        else:
            key_k = key
        key_k = np.sort(key_k, axis=1)
        idx[s:s + chunk] = key_k % n
        dist[s:s + chunk] = key_k // n
    return RetrievalResult(idx, dist)


@dataclass
class Metrics:
    precision: np.ndarray  # per query
    recall: np.ndarray
    mean_precision: float
    mean_recall: float
    n_excluded: int  # queries without relevant items, left out of the means


def precision_recall(result: RetrievalResult, gt: list) -> Metrics:
    nq = result.indices.shape[0]
    if len(gt) != nq:
        raise ValueError(f"{nq} queries but ground truth for {len(gt)}")
    k = result.k
    prec = np.zeros(nq)
    rec = np.zeros(nq)
    valid = np.zeros(nq, dtype=bool)
    for q in range(nq):
        rel = np.asarray(gt[q])
        if rel.size == 0:
            continue
        valid[q] = True
        hits = int(np.isin(result.indices[q], rel, assume_unique=False).sum()) if k else 0
        prec[q] = hits / k if k else 0.0
        rec[q] = hits / rel.size
    n_ok = int(valid.sum())
    mp = float(prec[valid].mean()) if n_ok else float("nan")
    mr = float(rec[valid].mean()) if n_ok else float("nan")
    return Metrics(prec, rec, mp, mr, nq - n_ok)


def ground_truth_labels(query_labels, base_labels) -> list:
    """Relevant set of each query: database items with the same label."""
    base_labels = np.asarray(base_labels)
    order = np.argsort(base_labels, kind="stable")
    sorted_labels = base_labels[order]
    out = []
    for lab in np.asarray(query_labels).tolist():
        lo, hi = np.searchsorted(sorted_labels, lab, "left"), np.searchsorted(sorted_labels, lab, "right")
        out.append(np.sort(order[lo:hi]))
    return out


def ground_truth_euclidean(query_features, base_features, K: int) -> list:
    """Relevant set of each query: its K Euclidean nearest database items."""
    n = np.asarray(base_features).shape[0]
    if K > n:
        raise ValueError(f"K={K} exceeds the database size {n}")
    nn = knn_euclidean(query_features, base_features, K)
    return [row.copy() for row in nn]


def write_metrics_tsv(path, rows) -> None:
    """Rows of ``(k, mean_precision, mean_recall)``."""
    with open(path, "w") as fh:
        for k, p, r in rows:
            fh.write(f"{k}\t{p:.6f}\t{r:.6f}\n")
