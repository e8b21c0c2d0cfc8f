"""Desk-scale retrieval benchmark on labelled Gaussian clusters.

A dataset of ``n_base + n_query`` points is shuffled and split into a
search database and a query set; the first ``n_train`` database points
form the training set of the coupled and unsupervised baselines.
Relevance is label equality.  ILHt draws its per-bit subsets from the
whole database, each subset getting its own freshly sampled affinities.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import KshcutConfig, kshcut_train, lsh_train, tpca_bagging_train, tpca_train
from .data import SubsetAffinityBuilder, build_affinities_supervised, synth_dataset
from .ensemble import DiversityConfig, HashEnsemble, TrainConfig, train_ensemble
from .retrieval import encode, ground_truth_labels, hamming_knn, precision_recall


@dataclass(frozen=True)
class BenchmarkConfig:
    n_clusters: int = 10
    dim: int = 32
    spread: float = 0.25
    n_train: int = 2000
    n_base: int = 10_000
    n_query: int = 200
    k: int = 100
    s_pos: int = 100
    s_neg: int = 100


@dataclass
class Split:
    base: np.ndarray
    base_labels: np.ndarray
    queries: np.ndarray
    query_labels: np.ndarray
    n_train: int
    seed: int
    gt: list = field(default_factory=list)

    @property
    def train(self) -> np.ndarray:
        return self.base[:self.n_train]

    @property
    def train_labels(self) -> np.ndarray:
        return self.base_labels[:self.n_train]


def make_split(cfg: BenchmarkConfig, seed: int) -> Split:
    n = cfg.n_base + cfg.n_query
    X, labels = synth_dataset(cfg.n_clusters, cfg.dim, n, cfg.spread, seed)
    perm = np.random.default_rng([seed, 7]).permutation(n)
    X, labels = X[perm], labels[perm]
    s = Split(X[:cfg.n_base], labels[:cfg.n_base], X[cfg.n_base:], labels[cfg.n_base:], cfg.n_train, seed)
    s.gt = ground_truth_labels(s.query_labels, s.base_labels)
    return s


def precision_at_k(ens: HashEnsemble, split: Split, k: int) -> float:
    res = hamming_knn(encode(ens, split.queries), encode(ens, split.base), k)
    return precision_recall(res, split.gt).mean_precision


def train_method(method: str, split: Split, b: int, cfg: BenchmarkConfig, sampling: str = "disjoint",
                 n_bit: int | None = None, train_cfg: TrainConfig = TrainConfig(),
                 jobs: int | None = None) -> HashEnsemble:
    """Train one method of the benchmark on ``split``.

    ``method`` is ``ilh``, ``kshcut``, ``lsh``, ``tpca`` or ``tpca_bagging``.
    For ``ilh``, ``n_bit`` defaults to ``n_base // b``.
    """
    seed = split.seed
    if method == "ilh":
        aff = SubsetAffinityBuilder(split.base_labels, cfg.s_pos, cfg.s_neg, seed)
        div = DiversityConfig(sampling=sampling, n_bit=n_bit or split.base.shape[0] // b, master_seed=seed)
        return train_ensemble(split.base, aff, b, div, train_cfg, jobs)
    if method == "kshcut":
        aff = build_affinities_supervised(split.train, split.train_labels, cfg.s_pos, cfg.s_neg, seed)
        return kshcut_train(split.train, aff, b, KshcutConfig(seed=seed, train_cfg=train_cfg))
    if method == "lsh":
        return lsh_train(split.base.shape[1], b, seed)
    if method == "tpca":
        return tpca_train(split.train, b, seed)
    if method == "tpca_bagging":
        return tpca_bagging_train(split.train, b, 16, seed)
    raise ValueError(f"unknown method {method!r}")


def run(methods, seeds, b: int = 32, cfg: BenchmarkConfig = BenchmarkConfig(), **kw) -> dict:
    """Precision@k per method and seed, plus training seconds.

    Returns ``{method: {"precision": [...], "seconds": [...]}}``.
    """
    out = {m: {"precision": [], "seconds": []} for m in methods}
    for seed in seeds:
        split = make_split(cfg, seed)
        for m in methods:
            t0 = time.perf_counter()
            ens = train_method(m, split, b, cfg, **kw)
            out[m]["seconds"].append(time.perf_counter() - t0)
            out[m]["precision"].append(precision_at_k(ens, split, cfg.k))
    return out
