"""Independent per-bit training with ensemble-style diversity.

Every bit optimises the same single-bit Laplacian objective; the bits
differ only through their random initial codes, their training subsets
and their feature subsets.  All randomness of bit ``i`` is derived from
``(master_seed, i)``, so an ensemble does not depend on how many bits are
trained together or in which order.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .classifiers import KernelHash, LinearHash, SvmConfig, fit_kernel, fit_linear, predict
from .data import AffinitySet, as_features
from .losses import LossKind, build_energy, energy_eval
from .mincut import alternating_mincut

log = logging.getLogger(__name__)

INIT_MODES = ("all_ones", "random")
SAMPLING_MODES = ("none", "disjoint", "random", "bootstrap")

# random streams of a bit
_SUBSET, _FEATURES, _INIT, _MINCUT, _FIT, _RETRY = range(6)
_DISJOINT_KEY = (1 << 40,)
_CENTERS_KEY = (1 << 41,)


def stream_seed(master_seed: int, *key: int) -> int:
    """64-bit seed mixed from the master seed and a key path."""
    ss = np.random.SeedSequence(master_seed, spawn_key=key)
    return int(ss.generate_state(2, np.uint32).view(np.uint64)[0] & np.uint64(2**63 - 1))


def stream_rng(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=key))


@dataclass(frozen=True)
class DiversityConfig:
    init_mode: str = "all_ones"
    sampling: str = "none"
    n_bit: int | None = None
    feature_fraction: float = 1.0
    master_seed: int = 0

    def __post_init__(self):
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}")
        if self.sampling not in SAMPLING_MODES:
            raise ValueError(f"sampling must be one of {SAMPLING_MODES}")
        if not 0.0 < self.feature_fraction <= 1.0:
            raise ValueError("feature_fraction must lie in (0, 1]")
        if self.sampling != "none" and (self.n_bit is None or self.n_bit < 1):
            raise ValueError(f"sampling={self.sampling!r} needs n_bit >= 1")
        if self.master_seed < 0:
            raise ValueError("master_seed must be nonnegative")

    def check_feasible(self, n_points: int, n_bits: int) -> None:
        if self.sampling == "none":
            return
        if self.n_bit > n_points:
            raise ValueError(f"n_bit={self.n_bit} exceeds the {n_points} available points")
        if self.sampling == "disjoint" and n_bits * self.n_bit > n_points:
            raise ValueError(
                f"disjoint sampling needs {n_bits} x {self.n_bit} <= {n_points} points; "
                "use sampling='random' or a smaller n_bit")

    def n_features(self, dim: int) -> int:
        return max(1, math.ceil(self.feature_fraction * dim - 1e-9))


@dataclass(frozen=True)
class TrainConfig:
    """How each bit's codes are optimised and fitted."""

    hash_family: str = "linear"
    n_centers: int = 500
    centers_mode: str = "shared"
    svm: SvmConfig = SvmConfig()
    max_sweeps: int = 5
    loss: LossKind = LossKind.LAP

    def __post_init__(self):
        if self.hash_family not in ("linear", "kernel"):
            raise ValueError("hash_family must be 'linear' or 'kernel'")
        if self.centers_mode not in ("shared", "private"):
            raise ValueError("centers_mode must be 'shared' or 'private'")
        if self.max_sweeps < 1 or self.n_centers < 1:
            raise ValueError("max_sweeps and n_centers must be >= 1")


@dataclass(eq=False)
class BitEntry:
    hash: LinearHash | KernelHash
    features: np.ndarray
    train_idx: np.ndarray
    seed: int
    degenerate: bool = False
    energy: float = float("nan")
    seconds: float = 0.0

    def __eq__(self, other):
        if not isinstance(other, BitEntry):
            return NotImplemented
        return (self.hash == other.hash and self.seed == other.seed and self.degenerate == other.degenerate
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.train_idx, other.train_idx))

    def predict(self, X) -> np.ndarray:
        return predict(self.hash, np.asarray(X)[:, self.features])


@dataclass(eq=False)
class HashEnsemble:
    """``b`` hash functions applied bit by bit, each to its own feature subset."""

    bits: list
    dim: int
    hash_family: str = "linear"
    method: str = "ilh"
    loss: LossKind = LossKind.LAP
    diversity: DiversityConfig | None = None
    train_cfg: TrainConfig | None = None
    shared_centers: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_bits(self) -> int:
        return len(self.bits)

    def __len__(self):
        return len(self.bits)

    def prefix(self, b: int) -> HashEnsemble:
        return replace(self, bits=list(self.bits[:b]), meta=dict(self.meta))

    def same_bits(self, other: HashEnsemble) -> bool:
        return self.n_bits == other.n_bits and all(a == b for a, b in zip(self.bits, other.bits))

    def weight_matrix(self) -> np.ndarray:
        """b x D hyperplane normals (zero outside each bit's feature subset); linear only."""
        if self.hash_family != "linear":
            raise ValueError("weight matrix is only defined for linear hashes")
        W = np.zeros((self.n_bits, self.dim))
        for i, bit in enumerate(self.bits):
            W[i, bit.features] = bit.hash.weights
        return W

    def seconds_per_bit(self) -> list[float]:
        return [bit.seconds for bit in self.bits]


def _subset(data_n: int, cfg: DiversityConfig, bit_index: int) -> np.ndarray:
    if cfg.sampling == "none":
        return np.arange(data_n)
    rng = stream_rng(cfg.master_seed, bit_index, _SUBSET)
    if cfg.sampling == "random":
        return np.sort(rng.choice(data_n, cfg.n_bit, replace=False))
    if cfg.sampling == "bootstrap":
        return np.sort(rng.integers(0, data_n, cfg.n_bit))
    perm = stream_rng(cfg.master_seed, *_DISJOINT_KEY).permutation(data_n)
    lo = bit_index * cfg.n_bit
    if lo + cfg.n_bit > data_n:
        raise ValueError(f"disjoint sampling budget exhausted at bit {bit_index}; use sampling='random'")
    return np.sort(perm[lo:lo + cfg.n_bit])


def _feature_subset(dim: int, cfg: DiversityConfig, bit_index: int) -> np.ndarray:
    d = cfg.n_features(dim)
    if d >= dim:
        return np.arange(dim)
    rng = stream_rng(cfg.master_seed, bit_index, _FEATURES)
    return np.sort(rng.choice(dim, d, replace=False))


def shared_centers(X, cfg: DiversityConfig, train_cfg: TrainConfig) -> np.ndarray | None:
    if train_cfg.hash_family != "kernel" or train_cfg.centers_mode != "shared":
        return None
    X = np.asarray(X)
    m = min(train_cfg.n_centers, X.shape[0])
    idx = np.sort(stream_rng(cfg.master_seed, *_CENTERS_KEY).choice(X.shape[0], m, replace=False))
    return X[idx]


def constant_hash(family: str, Xf: np.ndarray, value: int):
    if family == "linear":
        return LinearHash(np.zeros(Xf.shape[1]), float(value))
    return KernelHash(Xf[:1].copy(), 1.0, np.zeros(1), float(value))


def fit_hash(Xf, z, train_cfg: TrainConfig, seed: int, centers=None):
    """Fit the bit's hash function to its codes; kernel centers restricted by caller."""
    if train_cfg.hash_family == "linear":
        return fit_linear(Xf, z, train_cfg.svm, seed)
    if centers is None:
        m = min(train_cfg.n_centers, Xf.shape[0])
        if m < train_cfg.n_centers:
            log.info("using %d private centers (only %d training points)", m, Xf.shape[0])
        return fit_kernel(Xf, z, None, m, train_cfg.svm, seed)
    return fit_kernel(Xf, z, centers, centers.shape[0], train_cfg.svm, seed)


def bit_codes(n_points: int, affinities: AffinitySet, cfg: DiversityConfig, bit_index: int,
              train_cfg: TrainConfig = TrainConfig()) -> tuple[np.ndarray, np.ndarray, float]:
    """Step one of a bit: ``(subset, codes, energy)`` from the single-bit objective."""
    idx = _subset(n_points, cfg, bit_index)
    aff = affinities.restrict(idx)
    if len(aff) == 0:
        raise ValueError(
            f"bit {bit_index}: no affinity pairs inside its {idx.size}-point training subset; "
            "increase n_bit or the number of neighbours per point")
    e = build_energy(aff, train_cfg.loss)
    if cfg.init_mode == "random":
        z0 = stream_rng(cfg.master_seed, bit_index, _INIT).choice(np.array([-1, 1], dtype=np.int8), idx.size)
    else:
        z0 = np.ones(idx.size, dtype=np.int8)
    mincut_seed = stream_seed(cfg.master_seed, bit_index, _MINCUT)
    z = alternating_mincut(e, z0, train_cfg.max_sweeps, mincut_seed)
    if np.all(z == z[0]):
        z0 = stream_rng(cfg.master_seed, bit_index, _RETRY).choice(np.array([-1, 1], dtype=np.int8), idx.size)
        z = alternating_mincut(e, z0, train_cfg.max_sweeps, mincut_seed)
    return idx, z, energy_eval(e, z)


def train_bit(X, affinities: AffinitySet, cfg: DiversityConfig, bit_index: int,
              train_cfg: TrainConfig = TrainConfig(), centers=None) -> BitEntry:
    """Optimise one bit's codes on its own subset and fit its hash function."""
    t0 = time.perf_counter()
    X = np.asarray(X, dtype=np.float64)
    N, D = X.shape
    idx, z, energy = bit_codes(N, affinities, cfg, bit_index, train_cfg)
    feats = _feature_subset(D, cfg, bit_index)
    Xf = X[idx][:, feats]
    degenerate = bool(np.all(z == z[0]))
    if degenerate:
        log.warning("bit %d: codes are constant after retry; keeping a constant hash", bit_index)
        h = constant_hash(train_cfg.hash_family, Xf, int(z[0]))
    else:
        c = None if centers is None else np.asarray(centers)[:, feats]
        h = fit_hash(Xf, z, train_cfg, stream_seed(cfg.master_seed, bit_index, _FIT), c)
    return BitEntry(h, feats, idx, stream_seed(cfg.master_seed, bit_index), degenerate,
                    energy, time.perf_counter() - t0)


def default_jobs() -> int:
    env = os.environ.get("ILH_JOBS")
    return int(env) if env else 1


def _train_bits(X, affinities, cfg, train_cfg, centers, indices, jobs) -> list[BitEntry]:
    def one(i):
        try:
            return train_bit(X, affinities, cfg, i, train_cfg, centers)
        except Exception as exc:
            raise RuntimeError(f"training bit {i} failed: {exc}") from exc

    if jobs <= 1 or len(indices) <= 1:
        return [one(i) for i in indices]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, indices))


def train_ensemble(X, affinities: AffinitySet, b: int, cfg: DiversityConfig = DiversityConfig(),
                   train_cfg: TrainConfig = TrainConfig(), jobs: int | None = None) -> HashEnsemble:
    """Train ``b`` independent bits; ``jobs`` bits run concurrently."""
    X = as_features(X)
    if b < 1:
        raise ValueError("b must be >= 1")
    cfg.check_feasible(X.shape[0], b)
    jobs = default_jobs() if jobs is None else jobs
    centers = shared_centers(X, cfg, train_cfg)
    bits = _train_bits(X, affinities, cfg, train_cfg, centers, list(range(b)), jobs)
    return HashEnsemble(bits, X.shape[1], train_cfg.hash_family, "ilh", train_cfg.loss, cfg, train_cfg, centers)


def extend_ensemble(e: HashEnsemble, extra_bits: int, X, affinities: AffinitySet,
                    jobs: int | None = None) -> HashEnsemble:
    """Append bits ``b, ..., b + extra_bits - 1``; existing bits are kept as they are."""
    if e.method != "ilh":
        raise ValueError("only independently trained ensembles can be extended")
    X = as_features(X)
    b = e.n_bits
    e.diversity.check_feasible(X.shape[0], b + extra_bits)
    if extra_bits == 0:
        return e.prefix(b)
    jobs = default_jobs() if jobs is None else jobs
    new = _train_bits(X, affinities, e.diversity, e.train_cfg, e.shared_centers,
                      list(range(b, b + extra_bits)), jobs)
    return replace(e, bits=list(e.bits) + new, meta=dict(e.meta))


def select_bits(X, affinities: AffinitySet, validation, b_max: int, patience: int = 2,
                epsilon: float = 1e-3, cfg: DiversityConfig = DiversityConfig(),
                train_cfg: TrainConfig = TrainConfig(), batch: int | None = None, k: int = 100,
                jobs: int | None = None) -> HashEnsemble:
    """Grow the ensemble in batches until validation precision stops improving.

    ``validation`` is ``(query_features, ground_truth)`` where the ground
    truth indexes rows of ``X``, which serves as the search database.
    Returns the prefix with the best precision; the per-batch history is
    kept in ``meta["selection"]``.
    """
    from .retrieval import encode, hamming_knn, precision_recall

    if b_max < 1:
        raise ValueError("b_max must be >= 1")
    X = as_features(X)
    queries, gt = validation
    batch = batch or os.cpu_count() or 1
    jobs = batch if jobs is None else jobs
    k = min(k, X.shape[0])
    ens = None
    best_b, best_p, stale = 0, -np.inf, 0
    history = []
    while True:
        b = 0 if ens is None else ens.n_bits
        step = min(batch, b_max - b)
        if ens is None:
            ens = train_ensemble(X, affinities, step, cfg, train_cfg, jobs)
        else:
            ens = extend_ensemble(ens, step, X, affinities, jobs)
        res = hamming_knn(encode(ens, queries), encode(ens, X), k)
        p = precision_recall(res, gt).mean_precision
        history.append((ens.n_bits, p))
        if p > best_p + epsilon:
            best_b, best_p, stale = ens.n_bits, p, 0
        else:
            stale += 1
        if stale >= patience or ens.n_bits >= b_max:
            break
    out = ens.prefix(best_b)
    out.meta["selection"] = history
    return out
