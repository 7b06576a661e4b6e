"""Signed random-projection hashing of local descriptors.

A :class:`HashFamily` holds ``m`` hyperplanes for the fine code followed by
``L * bucket_bits`` hyperplanes for the coarse bucket keys. Bit ``s`` of a
code is 1 when the (centred) descriptor has a non-negative dot product with
hyperplane ``s``. Fine codes are packed LSB-first, so as little-endian words
bit ``s`` lives in word ``s // 64`` at position ``s % 64``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .frame_store import Frame, LocalDescriptor

CENTER_SAMPLE = 10_000


@dataclass(frozen=True)
class BinaryCode:
    bits: np.ndarray  # packed uint8, LSB-first
    m: int

    def __post_init__(self) -> None:
        if self.bits.dtype != np.uint8 or self.bits.shape != ((self.m + 7) // 8,):
            raise ValueError("bits must be a packed uint8 vector of length ceil(m/8)")

    def unpack(self) -> np.ndarray:
        return np.unpackbits(self.bits, bitorder="little")[: self.m]

    def complement(self) -> "BinaryCode":
        return pack_bits(1 - self.unpack())

    def to_bytes(self) -> bytes:
        return self.bits.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, m: int) -> "BinaryCode":
        return cls(np.frombuffer(data, dtype=np.uint8).copy(), m)


def pack_bits(bits) -> BinaryCode:
    bits = np.asarray(bits, dtype=np.uint8)
    return BinaryCode(np.packbits(bits, bitorder="little"), bits.shape[0])


class HashFamily:
    """Seeded hyperplane family with fine codes and coarse bucket tables.

    Args:
        dim: local descriptor dimension.
        m: fine code length in bits (a multiple of 8).
        n_tables: number of coarse tables ``L``.
        bucket_bits: bits per coarse key.
        seed: generator seed; the same seed always gives the same hyperplanes.
        center: optional descriptor mean subtracted before the sign tests.
    """

    def __init__(
        self,
        dim: int = 128,
        m: int = 256,
        n_tables: int = 6,
        bucket_bits: int = 8,
        seed: int = 0,
        center: Optional[np.ndarray] = None,
    ) -> None:
        if m < 1 or m % 8:
            raise ValueError("m must be a positive multiple of 8")
        if n_tables < 1 or not 1 <= bucket_bits <= 16:
            raise ValueError("need n_tables >= 1 and 1 <= bucket_bits <= 16")
        self.dim = dim
        self.m = m
        self.n_tables = n_tables
        self.bucket_bits = bucket_bits
        self.seed = seed
        rng = np.random.default_rng(seed)
        n_planes = m + n_tables * bucket_bits
        self.projections = rng.standard_normal((n_planes, dim))
        if np.any(np.linalg.norm(self.projections, axis=1) == 0):
            raise ValueError("degenerate hyperplane drawn; pick another seed")
        self.projections.flags.writeable = False
        self._center = np.zeros(dim)
        self._center_frozen = False
        if center is not None:
            self.set_center(center)
        self._key_weights = (1 << np.arange(bucket_bits - 1, -1, -1)).astype(np.int64)

    @classmethod
    def from_projections(cls, projections, m: int, n_tables: int = 1, bucket_bits: int = 8) -> "HashFamily":
        """Family with explicitly given hyperplanes (rows), e.g. for constructed cases."""
        projections = np.asarray(projections, dtype=np.float64)
        if projections.shape[0] != m + n_tables * bucket_bits:
            raise ValueError("need m + n_tables * bucket_bits hyperplanes")
        fam = cls(dim=projections.shape[1], m=m, n_tables=n_tables, bucket_bits=bucket_bits, seed=0)
        if np.any(np.linalg.norm(projections, axis=1) == 0):
            raise ValueError("every hyperplane must have nonzero norm")
        fam.projections = projections.copy()
        fam.projections.flags.writeable = False
        return fam

    @property
    def center(self) -> np.ndarray:
        return self._center

    @property
    def code_bytes(self) -> int:
        return self.m // 8

    def set_center(self, center) -> None:
        if self._center_frozen:
            raise ValueError("center is frozen")
        center = np.asarray(center, dtype=np.float64)
        if center.shape != (self.dim,):
            raise ValueError(f"center must have shape ({self.dim},)")
        self._center = center.copy()
        self._center.flags.writeable = False
        self._center_frozen = True

    def fit_center(self, descriptors: np.ndarray, limit: int = CENTER_SAMPLE) -> np.ndarray:
        """Freeze the centre as the mean of the first ``limit`` descriptors."""
        descriptors = np.asarray(descriptors, dtype=np.float64)[:limit]
        if descriptors.shape[0] == 0:
            raise ValueError("no descriptors to estimate the center from")
        self.set_center(descriptors.mean(axis=0))
        return self._center

    def _check(self, desc: np.ndarray) -> np.ndarray:
        desc = np.asarray(desc, dtype=np.float64)
        if desc.shape[-1] != self.dim:
            raise ValueError(f"descriptor dimension {desc.shape[-1]} != family dimension {self.dim}")
        return desc

    def sign_bits(self, descs: np.ndarray) -> np.ndarray:
        """All sign tests for (K, d) descriptors, as a (K, m + L*bucket_bits) 0/1 array."""
        descs = self._check(descs)
        return ((descs - self._center) @ self.projections.T >= 0).astype(np.uint8)

    def encode_many(self, descs: np.ndarray) -> tuple:
        """Packed fine codes (K, m/8) and bucket keys (K, L) for a stack of descriptors."""
        descs = np.atleast_2d(self._check(descs))
        if descs.shape[0] == 0:
            return (np.zeros((0, self.code_bytes), np.uint8), np.zeros((0, self.n_tables), np.int64))
        bits = self.sign_bits(descs)
        codes = np.packbits(bits[:, : self.m], axis=1, bitorder="little")
        coarse = bits[:, self.m :].reshape(-1, self.n_tables, self.bucket_bits).astype(np.int64)
        keys = coarse @ self._key_weights
        return codes, keys

    def encode_frame(self, frame: Frame) -> tuple:
        if frame.locals is None:
            raise ValueError(f"frame {frame.id} has no float local descriptors to encode")
        return self.encode_many(frame.locals)


def _values(desc: Union[LocalDescriptor, np.ndarray]) -> np.ndarray:
    return desc.values if isinstance(desc, LocalDescriptor) else np.asarray(desc)


def encode(desc: Union[LocalDescriptor, np.ndarray], family: HashFamily) -> BinaryCode:
    values = family._check(_values(desc))
    if values.ndim != 1:
        raise ValueError("encode takes a single descriptor")
    codes, _ = family.encode_many(values[None, :])
    return BinaryCode(codes[0], family.m)


def bucket_key(desc: Union[LocalDescriptor, np.ndarray], family: HashFamily, table: int) -> int:
    """Coarse key of one table: its sign tests read as a binary number, first test most significant."""
    if not 0 <= table < family.n_tables:
        raise IndexError(f"table {table} out of range [0, {family.n_tables})")
    values = family._check(_values(desc))
    _, keys = family.encode_many(values[None, :])
    return int(keys[0, table])


def _as_packed(code) -> np.ndarray:
    return code.bits if isinstance(code, BinaryCode) else np.asarray(code, dtype=np.uint8)


def hamming(a: Union[BinaryCode, np.ndarray], b: Union[BinaryCode, np.ndarray]) -> int:
    pa, pb = _as_packed(a), _as_packed(b)
    if pa.shape != pb.shape or (
        isinstance(a, BinaryCode) and isinstance(b, BinaryCode) and a.m != b.m
    ):
        raise ValueError("codes have different lengths")
    return int(np.bitwise_count(np.bitwise_xor(pa, pb)).sum())


def hamming_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Hamming distances between packed code stacks (Ka, B) and (Kb, B)."""
    if a.shape[1] != b.shape[1]:
        raise ValueError("codes have different lengths")
    nbytes = a.shape[1]
    if nbytes % 8 == 0:
        a = np.ascontiguousarray(a).view("<u8")
        b = np.ascontiguousarray(b).view("<u8")
    out = np.zeros((a.shape[0], b.shape[0]), np.int64)
    for w in range(a.shape[1]):
        out += np.bitwise_count(np.bitwise_xor(a[:, w, None], b[None, :, w]))
    return out


def code_bytes_per_descriptor(codes: np.ndarray) -> float:
    """Stored fine-code bytes per local descriptor for a (K, m/8) code stack."""
    if codes.shape[0] == 0:
        return float(codes.shape[1]) if codes.ndim == 2 else 0.0
    return codes.nbytes / codes.shape[0]
