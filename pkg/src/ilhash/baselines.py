"""Baselines: KSHcut (coupled KSH codes by min-cut), LSH, thresholded PCA, bagged tPCA."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .classifiers import LinearHash
from .data import AffinitySet, as_features
from .ensemble import (_FIT, _MINCUT, BitEntry, HashEnsemble, TrainConfig, constant_hash, fit_hash,
                       stream_rng, stream_seed)
from .losses import LossKind, QuadraticEnergy
from .mincut import alternating_mincut

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KshcutConfig:
    outer_iterations: int = 1
    init: str = "all_ones"
    seed: int = 0
    max_sweeps: int = 5
    train_cfg: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.outer_iterations < 1:
            raise ValueError("outer_iterations must be >= 1")
        if self.init != "all_ones":
            raise ValueError("KSHcut starts from all-ones codes (pass init_codes to warm start)")


def ksh_total_loss(Z, affinities: AffinitySet) -> float:
    """sum over pairs of (z_n . z_m - b y_nm)^2."""
    Z = np.asarray(Z, dtype=np.float64)
    b = Z.shape[1]
    dots = np.einsum("ij,ij->i", Z[affinities.n], Z[affinities.m])
    return float(np.sum((dots - b * affinities.y) ** 2))


def ksh_conditional_energy(Z, affinities: AffinitySet, bit: int) -> QuadraticEnergy:
    """KSH loss as a function of column ``bit`` with the other columns fixed.

    With s = sum_{j != bit} z_nj z_mj, the pair term (s + z_n z_m - b y)^2
    expands to 2 (s - b y) z_n z_m + (s - b y)^2 + 1.
    """
    Z = np.asarray(Z, dtype=np.float64)
    b = Z.shape[1]
    n, m = affinities.n, affinities.m
    s = np.einsum("ij,ij->i", Z[n], Z[m]) - Z[n, bit] * Z[m, bit]
    r = s - b * affinities.y
    return QuadraticEnergy(Z.shape[0], n, m, 2.0 * r, None, float(np.sum(r * r + 1.0)))


def kshcut_codes(N: int, affinities: AffinitySet, b: int, cfg: KshcutConfig = KshcutConfig(),
                 init_codes=None, trace: list | None = None) -> np.ndarray:
    """Optimise an N x b code matrix for the KSH loss, one bit at a time.

    If ``trace`` is a list, the total KSH loss is appended after every
    per-bit update (preceded by the initial loss).
    """
    if init_codes is None:
        Z = np.ones((N, b), dtype=np.int8)
    else:
        Z = np.array(init_codes, dtype=np.int8)
        if Z.shape != (N, b):
            raise ValueError(f"init_codes must have shape {(N, b)}")
    if trace is not None:
        trace.append(ksh_total_loss(Z, affinities))
    for it in range(cfg.outer_iterations):
        for i in range(b):
            e = ksh_conditional_energy(Z, affinities, i)
            key = (i, _MINCUT) if it == 0 else (i, _MINCUT, it)
            Z[:, i] = alternating_mincut(e, Z[:, i], cfg.max_sweeps, stream_seed(cfg.seed, *key))
            if trace is not None:
                trace.append(ksh_total_loss(Z, affinities))
    return Z


def kshcut_train(X, affinities: AffinitySet, b: int, cfg: KshcutConfig = KshcutConfig(),
                 init_codes=None, trace: list | None = None) -> HashEnsemble:
    """Two-step KSHcut: coupled code optimisation, then one classifier per bit."""
    X = as_features(X)
    if affinities.n_points != X.shape[0]:
        raise ValueError("affinities do not index this dataset")
    Z = kshcut_codes(X.shape[0], affinities, b, cfg, init_codes, trace)
    idx = np.arange(X.shape[0])
    feats = np.arange(X.shape[1])
    bits = []
    for i in range(b):
        z = Z[:, i]
        if np.all(z == z[0]):
            log.warning("KSHcut bit %d is constant", i)
            h, degenerate = constant_hash(cfg.train_cfg.hash_family, X, int(z[0])), True
        else:
            h, degenerate = fit_hash(X, z, cfg.train_cfg, stream_seed(cfg.seed, i, _FIT)), False
        bits.append(BitEntry(h, feats, idx, stream_seed(cfg.seed, i), degenerate))
    ens = HashEnsemble(bits, X.shape[1], cfg.train_cfg.hash_family, "kshcut", LossKind.KSH,
                       None, cfg.train_cfg)
    ens.meta["codes"] = Z
    return ens


def _linear_ensemble(W, bias, method: str, dim: int) -> HashEnsemble:
    feats = np.arange(dim)
    empty = np.zeros(0, dtype=np.int64)
    bits = [BitEntry(LinearHash(np.array(w, dtype=np.float64), float(c)), feats, empty, 0)
            for w, c in zip(W, bias)]
    return HashEnsemble(bits, dim, "linear", method)


def lsh_train(dim: int, b: int, seed: int = 0) -> HashEnsemble:
    """Random hyperplanes through the origin with standard normal normals."""
    W = np.random.default_rng(seed).standard_normal((b, dim))
    return _linear_ensemble(W, np.zeros(b), "lsh", dim)


def power_iteration_pca(X, n_components: int, seed: int = 0, tol: float = 1e-8,
                        max_iter: int = 10_000) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top principal directions of ``X`` by power iteration with deflation.

    Returns ``(directions, eigenvalues, mean)``; directions are rows.
    Directions beyond the numerical rank are filled with random unit
    vectors orthogonal to the ones found.
    """
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    Xc = X - mean
    C = Xc.T @ Xc / X.shape[0]
    D = C.shape[0]
    rng = np.random.default_rng(seed)
    V = np.zeros((n_components, D))
    lams = np.zeros(n_components)
    top = max(float(np.trace(C)), 1e-300)
    found = 0
    for i in range(n_components):
        v = rng.standard_normal(D)
        v -= V[:i].T @ (V[:i] @ v)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(max_iter):
            w = C @ v
            w -= V[:i].T @ (V[:i] @ w)
            nrm = np.linalg.norm(w)
            if nrm <= 1e-12 * top:
                lam = 0.0
                break
            w /= nrm
            if w @ v < 0:
                w = -w
            done = np.linalg.norm(w - v) < tol
            v = w
            lam = float(v @ C @ v)
            if done:
                break
        if lam <= 1e-10 * top:
            break
        V[i], lams[i] = v, lam
        C = C - lam * np.outer(v, v)
        found += 1
    if found < n_components:
        log.warning("data rank %d < %d requested components; filling with random directions",
                    found, n_components)
        for i in range(found, n_components):
            while True:
                v = rng.standard_normal(D)
                v -= V[:i].T @ (V[:i] @ v)
                if np.linalg.norm(v) > 1e-8:
                    break
            V[i] = v / np.linalg.norm(v)
    return V, lams, mean


def tpca_train(X, b: int, seed: int = 0) -> HashEnsemble:
    """Bits are the signs of the top ``b`` centred principal projections."""
    X = as_features(X)
    if b > X.shape[1]:
        raise ValueError(f"b={b} exceeds the dimension {X.shape[1]}")
    V, lams, mean = power_iteration_pca(X, b, seed)
    ens = _linear_ensemble(V, -(V @ mean), "tpca", X.shape[1])
    ens.meta["eigenvalues"] = lams
    return ens


def tpca_bagging_train(X, b: int, member_bits: int = 16, seed: int = 0) -> HashEnsemble:
    """Concatenated tPCA members, each fitted to its own bootstrap sample."""
    X = as_features(X)
    if member_bits > X.shape[1]:
        raise ValueError(f"member_bits={member_bits} exceeds the dimension {X.shape[1]}")
    n_members = math.ceil(b / member_bits)
    bits = []
    for j in range(n_members):
        rng = stream_rng(seed, j)
        sample = rng.integers(0, X.shape[0], X.shape[0])
        member = tpca_train(X[sample], member_bits, stream_seed(seed, j, 1))
        bits.extend(member.bits)
    ens = HashEnsemble(bits[:b], X.shape[1], "linear", "tpca_bagging")
    ens.meta["n_members"] = n_members
    return ens
