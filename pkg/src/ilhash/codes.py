"""Bit-packed binary code matrices.

Logical +1 is stored as a set bit, -1 as a clear bit.  Bit ``j`` of a row
lives in byte ``j // 8`` at position ``j % 8`` (LSB first).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

CODES_MAGIC = b"ILHC"
CODES_VERSION = 1


@dataclass(frozen=True, eq=False)
class CodeMatrix:
    packed: np.ndarray  # (n_points, ceil(n_bits / 8)) uint8
    n_bits: int

    def __post_init__(self):
        packed = np.ascontiguousarray(self.packed, dtype=np.uint8)
        if packed.ndim != 2 or packed.shape[1] != (self.n_bits + 7) // 8:
            raise ValueError("packed array does not match n_bits")
        packed.setflags(write=False)
        object.__setattr__(self, "packed", packed)

    @property
    def n_points(self) -> int:
        return self.packed.shape[0]

    @classmethod
    def from_signs(cls, Z) -> CodeMatrix:
        Z = np.asarray(Z)
        if Z.ndim != 2:
            raise ValueError("code matrix must be 2-D")
        if not np.all((Z == 1) | (Z == -1)):
            raise ValueError("codes must be +1/-1")
        return cls(np.packbits(Z > 0, axis=1, bitorder="little"), Z.shape[1])

    def to_signs(self) -> np.ndarray:
        bits = np.unpackbits(self.packed, axis=1, count=self.n_bits, bitorder="little")
        return bits.astype(np.int8) * 2 - 1

    def columns(self, idx) -> CodeMatrix:
        return CodeMatrix.from_signs(self.to_signs()[:, idx])

    def __eq__(self, other) -> bool:
        if not isinstance(other, CodeMatrix):
            return NotImplemented
        return self.n_bits == other.n_bits and np.array_equal(self.packed, other.packed)

    def words(self) -> np.ndarray:
        """Rows as little-endian uint64 words (zero padded), for popcount search."""
        nbytes = self.packed.shape[1]
        nwords = (nbytes + 7) // 8
        buf = np.zeros((self.n_points, nwords * 8), dtype=np.uint8)
        buf[:, :nbytes] = self.packed
        return buf.view("<u8")

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(CODES_MAGIC)
            fh.write(struct.pack("<IQI", CODES_VERSION, self.n_points, self.n_bits))
            fh.write(self.packed.tobytes())

    @classmethod
    def load(cls, path) -> CodeMatrix:
        with open(path, "rb") as fh:
            if fh.read(4) != CODES_MAGIC:
                raise ValueError(f"{path}: not a codes file")
            version, n, b = struct.unpack("<IQI", fh.read(16))
            if version != CODES_VERSION:
                raise ValueError(f"{path}: unsupported codes version {version}")
            nbytes = (b + 7) // 8
            raw = fh.read(n * nbytes)
        if len(raw) != n * nbytes:
            raise ValueError(f"{path}: truncated codes file")
        return cls(np.frombuffer(raw, dtype=np.uint8).reshape(n, nbytes).copy(), b)
