"""Min-cut minimisation of binary quadratic energies.

Submodular energies (all couplings <= 0) are minimised exactly through an
s-t min cut.  General energies are split into submodular groups and
optimised block by block, each block exactly with the rest held fixed.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, maximum_flow

from .losses import QuadraticEnergy, energy_eval

CAP_TOL = 1e-12
_INT_CAP_LIMIT = 2**31 - 1


@dataclass(frozen=True)
class FlowNetwork:
    n_nodes: int
    source: int
    sink: int
    tails: np.ndarray
    heads: np.ndarray
    caps: np.ndarray

    def __post_init__(self):
        caps = np.asarray(self.caps, dtype=np.float64)
        if np.any(caps < 0) or not np.all(np.isfinite(caps)):
            raise ValueError("capacities must be finite and nonnegative")
        if self.source == self.sink:
            raise ValueError("source and sink must differ")
        object.__setattr__(self, "tails", np.asarray(self.tails, dtype=np.int64))
        object.__setattr__(self, "heads", np.asarray(self.heads, dtype=np.int64))
        object.__setattr__(self, "caps", caps)

    def cut_capacity(self, source_side) -> float:
        """Total capacity of arcs leaving ``source_side``."""
        inside = np.zeros(self.n_nodes, dtype=bool)
        inside[list(source_side)] = True
        return float(self.caps[inside[self.tails] & ~inside[self.heads]].sum())


def max_flow(net: FlowNetwork, method: str = "auto") -> tuple[float, set[int]]:
    """Maximum flow value and the source side of a minimum cut.

    ``method`` is ``"bfs"`` (shortest augmenting path), ``"dinic"`` (scipy,
    integral capacities only) or ``"auto"``, which picks dinic whenever the
    capacities are integers small enough for it.
    """
    if method == "auto":
        integral = np.all(net.caps == np.round(net.caps)) and net.caps.sum() <= _INT_CAP_LIMIT
        method = "dinic" if integral else "bfs"
    if method == "dinic":
        return _max_flow_scipy(net)
    if method == "bfs":
        return _max_flow_bfs(net)
    raise ValueError(f"unknown max-flow method {method!r}")


def _max_flow_scipy(net: FlowNetwork) -> tuple[float, set[int]]:
    n = net.n_nodes
    keep = (net.caps > 0) & (net.tails != net.heads)
    cap = sp.csr_matrix((np.round(net.caps[keep]).astype(np.int64),
                         (net.tails[keep], net.heads[keep])), shape=(n, n))
    cap.sum_duplicates()
    cap = cap.astype(np.int32)
    res = maximum_flow(cap, net.source, net.sink, method="dinic")
    residual = (cap - res.flow).tocsr()
    residual.data[residual.data < 0] = 0
    residual.eliminate_zeros()
    reach = breadth_first_order(residual, net.source, directed=True, return_predecessors=False)
    return float(res.flow_value), set(int(v) for v in reach)


def _max_flow_bfs(net: FlowNetwork) -> tuple[float, set[int]]:
    """Edmonds-Karp on a paired-arc residual graph."""
    n = net.n_nodes
    head, cap, adj = [], [], [[] for _ in range(n)]
    for u, v, c in zip(net.tails.tolist(), net.heads.tolist(), net.caps.tolist()):
        if u == v:
            continue
        adj[u].append(len(head)); head.append(v); cap.append(c)
        adj[v].append(len(head)); head.append(u); cap.append(0.0)
    s, t = net.source, net.sink
    flow = 0.0
    while True:
        parent = [-1] * n
        parent[s] = -2
        queue = deque([s])
        while queue and parent[t] == -1:
            u = queue.popleft()
            for a in adj[u]:
                v = head[a]
                if parent[v] == -1 and cap[a] > CAP_TOL:
                    parent[v] = a
                    queue.append(v)
        if parent[t] == -1:
            break
        push, v = float("inf"), t
        while v != s:
            a = parent[v]
            push = min(push, cap[a])
            v = head[a ^ 1]
        v = t
        while v != s:
            a = parent[v]
            cap[a] -= push
            cap[a ^ 1] += push
            v = head[a ^ 1]
        flow += push
    side = {v for v in range(n) if parent[v] != -1}
    return flow, side


def energy_network(e: QuadraticEnergy) -> FlowNetwork:
    """Flow network whose cuts equal ``E(z)`` up to a constant.

    Node ``i`` on the sink side means ``z_i = +1``.  A coupling ``a < 0``
    contributes ``a + (-2a)[z_i != z_j]``; a linear term ``l z_i`` costs
    ``2l`` more for ``z_i = +1`` than for ``z_i = -1``.
    """
    if not e.is_submodular:
        raise ValueError("energy has positive couplings; partition it first")
    n = e.n_vars
    s, t = n, n + 1
    w = -2.0 * e.coef
    lin = e.linear
    pos, neg = np.flatnonzero(lin > 0), np.flatnonzero(lin < 0)
    tails = np.concatenate((e.rows, e.cols, np.full(pos.size, s), neg))
    heads = np.concatenate((e.cols, e.rows, pos, np.full(neg.size, t)))
    caps = np.concatenate((w, w, 2.0 * lin[pos], -2.0 * lin[neg]))
    return FlowNetwork(n + 2, s, t, tails, heads, caps)


def solve_submodular(e: QuadraticEnergy, method: str = "auto") -> np.ndarray:
    """Global minimiser of an energy with nonpositive couplings."""
    net = energy_network(e)
    _, side = max_flow(net, method)
    z = np.ones(e.n_vars, dtype=np.int8)
    src = np.fromiter((v for v in side if v < e.n_vars), dtype=np.int64)
    z[src] = -1
    return z


@dataclass(frozen=True)
class GroupPartition:
    groups: list

    def __len__(self):
        return len(self.groups)

    def is_valid_for(self, e: QuadraticEnergy) -> bool:
        label = np.full(e.n_vars, -1)
        for g, idx in enumerate(self.groups):
            if np.any(label[idx] >= 0):
                return False
            label[idx] = g
        if np.any(label < 0):
            return False
        pos = e.coef > 0
        return not np.any(label[e.rows[pos]] == label[e.cols[pos]])


def partition_groups(e: QuadraticEnergy, seed: int = 0) -> GroupPartition:
    """Greedy split into groups free of positive couplings, visiting points in random order."""
    n = e.n_vars
    pos = e.coef > 0
    r, c = e.rows[pos], e.cols[pos]
    g = sp.csr_matrix((np.ones(2 * r.size, dtype=np.int8), (np.concatenate((r, c)), np.concatenate((c, r)))),
                      shape=(n, n))
    indptr, indices = g.indptr, g.indices
    order = np.random.default_rng(seed).permutation(n)
    group_of = np.full(n, -1, dtype=np.int64)
    members: list[list[int]] = []
    for p in order.tolist():
        nb = group_of[indices[indptr[p]:indptr[p + 1]]]
        used = set(nb[nb >= 0].tolist())
        k = 0
        while k in used:
            k += 1
        if k == len(members):
            members.append([])
        members[k].append(p)
        group_of[p] = k
    return GroupPartition([np.array(sorted(m), dtype=np.int64) for m in members])


class _Block:
    """Pre-sliced coupling structure of one group."""

    def __init__(self, e: QuadraticEnergy, A: sp.csr_matrix, idx: np.ndarray, n: int):
        self.idx = idx
        local = np.full(n, -1, dtype=np.int64)
        local[idx] = np.arange(idx.size)
        inside = (local[e.rows] >= 0) & (local[e.cols] >= 0)
        self.rows = local[e.rows[inside]]
        self.cols = local[e.cols[inside]]
        self.coef = e.coef[inside]
        rows = A[idx]
        mask = np.zeros(n, dtype=bool)
        mask[idx] = True
        ext = rows.tocoo()
        keep = ~mask[ext.col]
        self.ext = sp.csr_matrix((ext.data[keep], (ext.row[keep], ext.col[keep])), shape=(idx.size, n))

    def local_energy(self, lin, zg):
        zg = zg.astype(np.float64)
        return float(np.dot(self.coef, zg[self.rows] * zg[self.cols]) + np.dot(lin, zg))


def alternating_mincut(e: QuadraticEnergy, z0, max_sweeps: int = 5, seed: int = 0,
                       trace: list | None = None, method: str = "auto") -> np.ndarray:
    """Block-coordinate descent over submodular groups.

    The groups are fixed once; each sweep visits them in a fresh random
    order and replaces a group by its exact minimiser given the other
    variables.  Stops after ``max_sweeps`` or a sweep that changes nothing.
    If ``trace`` is a list, the energy after every group update is
    appended to it (preceded by the initial energy).
    """
    z = np.array(z0, dtype=np.int8)
    if z.shape != (e.n_vars,):
        raise ValueError(f"z0 has length {z.size}, energy has {e.n_vars} variables")
    if not np.all(np.abs(z) == 1):
        raise ValueError("z0 must be +1/-1")
    if e.n_vars == 0:
        return z
    part = partition_groups(e, seed)
    A = e.adjacency()
    blocks = [_Block(e, A, idx, e.n_vars) for idx in part.groups]
    rng = np.random.default_rng([seed, 1])
    energy = energy_eval(e, z)
    scale = 1.0 + float(np.abs(e.coef).sum() + np.abs(e.linear).sum())
    if trace is not None:
        trace.append(energy)
    for _ in range(max_sweeps):
        changed = False
        for gi in rng.permutation(len(blocks)).tolist():
            blk = blocks[gi]
            lin = e.linear[blk.idx] + blk.ext @ z.astype(np.float64)
            old = z[blk.idx]
            sub = QuadraticEnergy(blk.idx.size, blk.rows, blk.cols, blk.coef, lin)
            new = solve_submodular(sub, method)
            delta = blk.local_energy(lin, new) - blk.local_energy(lin, old)
            if delta > 1e-9 * scale:
                raise RuntimeError(f"block update increased the energy by {delta}")
            if delta < -1e-12 * scale and not np.array_equal(new, old):
                z[blk.idx] = new
                energy += delta
                changed = True
            if trace is not None:
                trace.append(energy)
        if not changed:
            break
    return z
