"""Putative correspondences from binary codes.

Each query descriptor gathers the candidate descriptors that share one of its
coarse bucket keys in any table, ranks that shortlist by fine Hamming distance
and keeps the best one if ``d1 / d2 <= eps**2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np

from .frame_store import Frame
from .hashing import HashFamily, hamming_matrix


class MatchingError(ValueError):
    pass


@dataclass(frozen=True)
class Match:
    query_idx: int
    cand_idx: int
    d1: int
    d2: int


@dataclass
class MatchSet:
    query_id: int
    candidate_id: int
    matches: List[Match] = field(default_factory=list)
    shortlist_sizes: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    def __len__(self) -> int:
        return len(self.matches)

    @property
    def query_indices(self) -> np.ndarray:
        return np.array([mt.query_idx for mt in self.matches], dtype=np.int64)

    @property
    def cand_indices(self) -> np.ndarray:
        return np.array([mt.cand_idx for mt in self.matches], dtype=np.int64)

    def pairs(self) -> List[Tuple[int, int]]:
        return [(mt.query_idx, mt.cand_idx) for mt in self.matches]


@lru_cache(maxsize=64)
def _eps_squared(eps: float) -> Fraction:
    # the decimal the caller wrote, so that e.g. 49/100 passes at eps = 0.7
    return Fraction(repr(float(eps))) ** 2


def ratio_accepts(d1: int, d2: int, eps: float) -> bool:
    """``d1 / d2 <= eps**2`` evaluated exactly; a zero ``d2`` is ambiguous and fails."""
    if d2 <= 0:
        return False
    e2 = _eps_squared(eps)
    return d1 * e2.denominator <= e2.numerator * d2


def match_frames(query: Frame, candidate: Frame, eps: float, family: Optional[HashFamily] = None) -> MatchSet:
    """Match ``query`` against ``candidate`` with the binary ratio test.

    Both frames must already carry codes. When ``family`` is given the code
    length is checked against it.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    for f in (query, candidate):
        if f.codes is None or f.bucket_keys is None:
            raise MatchingError(f"frame {f.id} has no binary codes")
    if candidate.n_locals < 2:
        raise MatchingError(f"candidate frame {candidate.id} has fewer than 2 local descriptors")
    if query.codes.shape[1] != candidate.codes.shape[1]:
        raise MatchingError("frames were hashed with different code lengths")
    if family is not None and query.codes.shape[1] != family.code_bytes:
        raise MatchingError(f"codes are not {family.m}-bit codes")

    out = MatchSet(query.id, candidate.id)
    n_q = query.n_locals
    if n_q == 0:
        return out
    # (K_q, K_c) shortlist membership: shares a bucket in at least one table
    qk, ck = query.bucket_keys, candidate.bucket_keys
    shortlist = np.zeros((n_q, candidate.n_locals), dtype=bool)
    for l in range(qk.shape[1]):
        shortlist |= qk[:, l, None] == ck[None, :, l]
    sizes = shortlist.sum(axis=1)
    out.shortlist_sizes = sizes
    dist = hamming_matrix(query.codes, candidate.codes)
    sentinel = np.iinfo(np.int64).max
    masked = np.where(shortlist, dist, sentinel)
    rows = np.arange(n_q)
    # argmin returns the first minimum, so ties resolve to the smaller cand_idx
    best = masked.argmin(axis=1)
    d1 = masked[rows, best]
    masked[rows, best] = sentinel
    d2 = masked.min(axis=1)
    for qi in np.flatnonzero(sizes >= 2).tolist():
        a, b = int(d1[qi]), int(d2[qi])
        if ratio_accepts(a, b, eps):
            out.matches.append(Match(qi, int(best[qi]), a, b))
    return out
