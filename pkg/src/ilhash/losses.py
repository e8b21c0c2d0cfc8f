"""Single-bit affinity losses as binary quadratic energies.

For one bit, any loss that only depends on whether ``z_n`` and ``z_m`` agree
can be written ``a * z_n * z_m + c``.  Summing those terms over the
affinity pairs gives ``E(z) = sum_{n<m} a_nm z_n z_m + sum_n l_n z_n + const``
with ``z`` in {-1, +1}^N.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import AffinitySet


class LossKind(str, enum.Enum):
    KSH = "ksh"
    BRE = "bre"
    LAP = "lap"


def ksh_loss(zn, zm, y, b: int = 1):
    """(z_n . z_m - b y)^2 for code vectors (or scalars when b = 1)."""
    return (np.dot(zn, zm) - b * y) ** 2


def bre_loss(zn, zm, y, b: int = 1):
    """((1/b) ||z_n - z_m||^2 - y)^2."""
    d = np.asarray(zn, dtype=float) - np.asarray(zm, dtype=float)
    return (np.dot(d, d) / b - y) ** 2


def lap_loss(zn, zm, y):
    d = np.asarray(zn, dtype=float) - np.asarray(zm, dtype=float)
    return y * np.dot(d, d)


def pairwise_coefficient(kind: LossKind, y: float) -> tuple[float, float]:
    """Return ``(a, c)`` with ``loss(z_n, z_m; y) == a z_n z_m + c`` for one bit."""
    kind = LossKind(kind)
    if kind is LossKind.BRE:
        if not 0.0 <= y <= 1.0:
            raise ValueError(f"BRE affinity must lie in [0, 1], got {y}")
        # ||z_n - z_m||^2 = 2 - 2 z_n z_m
        return -4.0 * (2.0 - y), (2.0 - y) ** 2 + 4.0
    if y not in (1, -1):
        raise ValueError(f"{kind.name} affinity must be +1 or -1, got {y}")
    if kind is LossKind.KSH:
        return -2.0 * y, 1.0 + y * y
    return -2.0 * y, 2.0 * y


@dataclass(frozen=True, eq=False)
class QuadraticEnergy:
    """``E(z) = sum_k a_k z_{i_k} z_{j_k} + sum_n l_n z_n + constant``.

    Couplings are stored once per unordered pair (``i < j``), merged and
    sorted, so two energies with the same terms have identical layouts.
    """

    n_vars: int
    rows: np.ndarray
    cols: np.ndarray
    coef: np.ndarray
    linear: np.ndarray | None = None
    constant: float = 0.0

    def __post_init__(self):
        i = np.asarray(self.rows, dtype=np.int64)
        j = np.asarray(self.cols, dtype=np.int64)
        a = np.asarray(self.coef, dtype=np.float64)
        const = float(self.constant)
        if i.size and (min(i.min(), j.min()) < 0 or max(i.max(), j.max()) >= self.n_vars):
            raise ValueError("coupling index out of range")
        diag = i == j
        if np.any(diag):
            # z_n^2 = 1
            const += float(a[diag].sum())
            i, j, a = i[~diag], j[~diag], a[~diag]
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        keys = lo * self.n_vars + hi
        uniq, inv = np.unique(keys, return_inverse=True)
        a = np.bincount(inv, weights=a, minlength=uniq.size) if uniq.size else a
        lo, hi = uniq // max(self.n_vars, 1), uniq % max(self.n_vars, 1)
        lin = np.zeros(self.n_vars) if self.linear is None else np.asarray(self.linear, dtype=np.float64)
        if lin.shape != (self.n_vars,):
            raise ValueError("linear terms must have length n_vars")
        for arr in (lo, hi, a, lin):
            arr.setflags(write=False)
        object.__setattr__(self, "rows", lo)
        object.__setattr__(self, "cols", hi)
        object.__setattr__(self, "coef", a)
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "constant", const)

    @classmethod
    def from_terms(cls, n_vars, rows=(), cols=(), coef=(), linear=None, constant=0.0) -> QuadraticEnergy:
        return cls(n_vars, rows, cols, coef, linear, constant)

    @property
    def is_submodular(self) -> bool:
        return not np.any(self.coef > 0)

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric sparse coupling matrix (both triangles, zero diagonal)."""
        n = self.n_vars
        return sp.csr_matrix(
            (np.concatenate((self.coef, self.coef)),
             (np.concatenate((self.rows, self.cols)), np.concatenate((self.cols, self.rows)))),
            shape=(n, n))

    def with_linear(self, linear, constant=None) -> QuadraticEnergy:
        return QuadraticEnergy(self.n_vars, self.rows, self.cols, self.coef, linear,
                               self.constant if constant is None else constant)


def build_energy(affinities: AffinitySet, kind: LossKind = LossKind.LAP) -> QuadraticEnergy:
    """Quadratic energy of the single-bit loss summed over the affinity pairs."""
    kind = LossKind(kind)
    y = affinities.y.astype(np.float64)
    if kind is LossKind.BRE:
        raise ValueError("BRE needs real affinities in [0, 1]; use build_energy_real")
    a = -2.0 * y
    c = 2.0 * y if kind is LossKind.LAP else 1.0 + y * y
    return QuadraticEnergy(affinities.n_points, affinities.n, affinities.m, a, None, float(np.sum(c)))


def build_energy_real(n_points: int, n, m, y, kind: LossKind) -> QuadraticEnergy:
    """Same as :func:`build_energy` for explicit (possibly real-valued) pair lists."""
    a, c = zip(*(pairwise_coefficient(kind, float(v)) for v in y)) if len(y) else ((), ())
    return QuadraticEnergy(n_points, n, m, np.array(a, dtype=float), None, float(np.sum(c)))


def energy_eval(e: QuadraticEnergy, z) -> float:
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (e.n_vars,):
        raise ValueError(f"z has length {z.size}, energy has {e.n_vars} variables")
    return float(np.dot(e.coef, z[e.rows] * z[e.cols]) + np.dot(e.linear, z) + e.constant)


def mlh_loss(zn: int, zm: int, y: int, rho: float = 1.0, lam: float = 1.0) -> float:
    """Minimal-loss-hashing hinge for one bit; distance is the Hamming distance."""
    d = float(zn != zm)
    if y == 1:
        return max(d - rho + 1.0, 0.0)
    return lam * max(rho - d + 1.0, 0.0)


def mlh_singlebit_table(rho: float = 1.0, lam: float = 1.0) -> list[tuple[int, int, int, float]]:
    """All 8 (z_n, z_m, y) cases of the single-bit MLH loss."""
    return [(zn, zm, y, mlh_loss(zn, zm, y, rho, lam))
            for y in (1, 0) for zn in (1, -1) for zm in (1, -1)]


def mlh_singlebit_is_constant(rho: float = 1.0, lam: float = 1.0) -> bool:
    """Whether the single-bit MLH loss is independent of the codes for each y."""
    table = mlh_singlebit_table(rho, lam)
    return all(len({v for zn, zm, yy, v in table if yy == y}) == 1 for y in (1, 0))
