"""Text model format.

::

    ilh-model v1
    bits <b>
    hash <linear|kernel>
    dim <D>
    method <name>
    loss <ksh|bre|lap>
    diversity <json or none>
    train <json or none>
    shared_centers <M> <d>        (kernel + shared centers only; M rows follow)
    bit <i>
    seed <int>
    degenerate <0|1>
    features <n> <i0> <i1> ...
    train_idx <n> <i0> ...
    bias <float>
    weights <n> <w0> ...
    sigma <float>                 (kernel)
    centers shared | centers <M> <d>, then M rows
    end

Floats are written with 17 significant digits, which round-trips every
64-bit value exactly.
"""

from __future__ import annotations

import dataclasses
import json

import numpy as np

from .classifiers import KernelHash, LinearHash, SvmConfig
from .ensemble import BitEntry, DiversityConfig, HashEnsemble, TrainConfig
from .losses import LossKind

HEADER = "ilh-model v1"


def _f(x) -> str:
    return format(float(x), ".17g")


def _vec(v, conv=_f) -> str:
    v = np.asarray(v).ravel()
    return " ".join([str(v.size)] + [conv(x) for x in v.tolist()])


def _rows(M) -> list[str]:
    return [" ".join(_f(x) for x in row) for row in np.asarray(M).tolist()]


def _cfg_json(cfg) -> str:
    if cfg is None:
        return "none"
    d = dataclasses.asdict(cfg)
    if "loss" in d:
        d["loss"] = LossKind(d["loss"]).value
    return json.dumps(d, sort_keys=True)


def dumps(ens: HashEnsemble) -> str:
    lines = [HEADER, f"bits {ens.n_bits}", f"hash {ens.hash_family}", f"dim {ens.dim}",
             f"method {ens.method}", f"loss {LossKind(ens.loss).value}",
             f"diversity {_cfg_json(ens.diversity)}", f"train {_cfg_json(ens.train_cfg)}"]
    shared = ens.shared_centers
    if shared is not None:
        lines.append(f"shared_centers {shared.shape[0]} {shared.shape[1]}")
        lines += _rows(shared)
    for i, bit in enumerate(ens.bits):
        h = bit.hash
        lines += [f"bit {i}", f"seed {bit.seed}", f"degenerate {int(bit.degenerate)}",
                  f"features {_vec(bit.features, str)}", f"train_idx {_vec(bit.train_idx, str)}",
                  f"bias {_f(h.bias)}", f"weights {_vec(h.weights)}"]
        if isinstance(h, KernelHash):
            lines.append(f"sigma {_f(h.sigma)}")
            if shared is not None and h.centers.shape == (shared.shape[0], bit.features.size) \
                    and np.array_equal(h.centers, shared[:, bit.features]):
                lines.append("centers shared")
            else:
                lines.append(f"centers {h.centers.shape[0]} {h.centers.shape[1]}")
                lines += _rows(h.centers)
        lines.append("end")
    return "\n".join(lines) + "\n"


def save_model(path, ens: HashEnsemble) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(ens))


class _Reader:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self, key: str | None = None) -> list[str]:
        if self.pos >= len(self.lines):
            raise ValueError("model file ends unexpectedly")
        parts = self.lines[self.pos].split(" ", 1 if key in ("diversity", "train") else -1)
        self.pos += 1
        if key is not None and parts[0] != key:
            raise ValueError(f"line {self.pos}: expected {key!r}, found {parts[0]!r}")
        return parts[1:]

    def peek(self) -> str | None:
        return self.lines[self.pos].split(" ", 1)[0] if self.pos < len(self.lines) else None

    def matrix(self, m: int, d: int) -> np.ndarray:
        if self.pos + m > len(self.lines):
            raise ValueError("model file ends inside a matrix")
        rows = self.lines[self.pos:self.pos + m]
        self.pos += m
        return np.array([r.split() for r in rows], dtype=np.float64).reshape(m, d)


def _vector(parts, dtype):
    n = int(parts[0])
    v = np.array(parts[1:], dtype=dtype)
    if v.size != n:
        raise ValueError(f"expected {n} values, found {v.size}")
    return v


def loads(text: str) -> HashEnsemble:
    r = _Reader(text)
    if r.lines[:1] != [HEADER]:
        raise ValueError("not an ilh-model v1 file")
    r.pos = 1
    b = int(r.next("bits")[0])
    family = r.next("hash")[0]
    dim = int(r.next("dim")[0])
    method = r.next("method")[0]
    loss = LossKind(r.next("loss")[0])
    div = r.next("diversity")[0]
    diversity = None if div == "none" else DiversityConfig(**json.loads(div))
    tc = r.next("train")[0]
    train_cfg = None
    if tc != "none":
        d = json.loads(tc)
        d["svm"] = SvmConfig(**d["svm"])
        d["loss"] = LossKind(d["loss"])
        train_cfg = TrainConfig(**d)
    shared = None
    if r.peek() == "shared_centers":
        m, d = map(int, r.next())
        shared = r.matrix(m, d)
    bits = []
    for i in range(b):
        if int(r.next("bit")[0]) != i:
            raise ValueError(f"bit blocks out of order at bit {i}")
        seed = int(r.next("seed")[0])
        degenerate = bool(int(r.next("degenerate")[0]))
        feats = _vector(r.next("features"), np.int64)
        tidx = _vector(r.next("train_idx"), np.int64)
        bias = float(r.next("bias")[0])
        w = _vector(r.next("weights"), np.float64)
        if family == "kernel":
            sigma = float(r.next("sigma")[0])
            c = r.next("centers")
            centers = shared[:, feats] if c == ["shared"] else r.matrix(int(c[0]), int(c[1]))
            h = KernelHash(centers, sigma, w, bias)
        else:
            h = LinearHash(w, bias)
        r.next("end")
        bits.append(BitEntry(h, feats, tidx, seed, degenerate))
    return HashEnsemble(bits, dim, family, method, loss, diversity, train_cfg, shared)


def load_model(path) -> HashEnsemble:
    with open(path) as fh:
        return loads(fh.read())
