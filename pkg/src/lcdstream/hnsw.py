"""Incremental hierarchical navigable small world graph under cosine distance.

Vectors are unit-normalised into a float32 table used for graph traversal;
the similarity reported to callers is recomputed from the original
descriptor in float64. Nodes are append-only.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import _kernels
from .frame_store import GlobalDescriptor, cosine_similarity


class DuplicateIdError(KeyError):
    pass


class EmptyIndexError(LookupError):
    pass


@dataclass
class HnswParams:
    M: int = 48
    ef_construction: int = 200
    ef_search: int = 40
    level_scale: Optional[float] = None  # defaults to 1/ln(M)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.M < 2:
            raise ValueError("M must be at least 2")
        if self.ef_construction < self.M:
            raise ValueError("ef_construction must be >= M")
        if self.ef_search < 1:
            raise ValueError("ef_search must be >= 1")
        if self.level_scale is None:
            self.level_scale = 1.0 / math.log(self.M)
        if self.level_scale <= 0:
            raise ValueError("level_scale must be positive")

    @property
    def max_links0(self) -> int:
        return 2 * self.M


@dataclass(frozen=True)
class SearchResult:
    frame_id: int
    similarity: float


class _Layer:
    """Adjacency table of one layer; ``rows`` maps node index to table row."""

    def __init__(self, capacity: int, width: int, rows: np.ndarray) -> None:
        self.links = np.full((capacity, width), -1, np.int64)
        self.dists = np.zeros((capacity, width), np.float32)
        self.counts = np.zeros(capacity, np.int64)
        self.rows = rows

    def grow(self, capacity: int) -> None:
        old = self.links.shape[0]
        if capacity <= old:
            return
        width = self.links.shape[1]
        links = np.full((capacity, width), -1, np.int64)
        dists = np.zeros((capacity, width), np.float32)
        counts = np.zeros(capacity, np.int64)
        links[:old] = self.links
        dists[:old] = self.dists
        counts[:old] = self.counts
        self.links, self.dists, self.counts = links, dists, counts

    def neighbors(self, node: int) -> np.ndarray:
        row = self.rows[node]
        return self.links[row, : self.counts[row]]


def draw_level(u: float, level_scale: float) -> int:
    """Level for a uniform draw ``u`` in (0, 1]: floor(-ln(u) * level_scale)."""
    if not 0.0 < u <= 1.0:
        raise ValueError("u must lie in (0, 1]")
    return int(math.floor(-math.log(u) * level_scale))


class HnswIndex:
    """Multi-layer proximity graph keyed by frame id.

    Args:
        dim: descriptor dimension.
        params: graph parameters; see :class:`HnswParams`.
        capacity: initial number of node slots (grows by doubling).
    """

    def __init__(self, dim: int, params: Optional[HnswParams] = None, capacity: int = 1024) -> None:
        self.dim = dim
        self.params = params or HnswParams()
        self._rng = np.random.Generator(np.random.PCG64(self.params.rng_seed))
        capacity = max(capacity, 16)
        self._vecs = np.zeros((capacity, dim), np.float32)
        self._levels = np.zeros(capacity, np.int64)
        self._ids: List[int] = []
        self._raw: List[GlobalDescriptor] = []
        self._index_of: Dict[int, int] = {}
        self._identity = np.arange(capacity, dtype=np.int64)
        self._upper_rows = np.full(capacity, -1, np.int64)
        self._n_upper = 0
        self._layers: List[_Layer] = [_Layer(capacity, self.params.max_links0, self._identity)]
        self._entry = -1
        self._max_level = -1

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, frame_id: int) -> bool:
        return frame_id in self._index_of

    @property
    def entry_point(self) -> Optional[int]:
        return None if self._entry < 0 else self._ids[self._entry]

    @property
    def max_level(self) -> int:
        return self._max_level

    # -- construction ---------------------------------------------------

    def assign_level(self) -> int:
        # Generator.random is in [0, 1); flip it to (0, 1]
        u = 1.0 - self._rng.random()
        return draw_level(u, self.params.level_scale)

    def _grow(self, need: int) -> None:
        cap = self._vecs.shape[0]
        if need <= cap:
            return
        new_cap = max(need, 2 * cap)
        vecs = np.zeros((new_cap, self.dim), np.float32)
        vecs[:cap] = self._vecs
        self._vecs = vecs
        levels = np.zeros(new_cap, np.int64)
        levels[:cap] = self._levels
        self._levels = levels
        self._identity = np.arange(new_cap, dtype=np.int64)
        upper = np.full(new_cap, -1, np.int64)
        upper[:cap] = self._upper_rows
        self._upper_rows = upper
        self._layers[0].grow(new_cap)
        self._layers[0].rows = self._identity
        for layer in self._layers[1:]:
            layer.rows = self._upper_rows

    def _ensure_upper(self, node: int, level: int) -> None:
        if level == 0:
            return
        row = self._n_upper
        self._n_upper += 1
        self._upper_rows[node] = row
        ucap = self._layers[1].links.shape[0] if len(self._layers) > 1 else 0
        while len(self._layers) <= level:
            self._layers.append(_Layer(max(ucap, 16), self.params.M, self._upper_rows))
        need = self._n_upper
        for layer in self._layers[1:]:
            if layer.links.shape[0] < need:
                layer.grow(max(need, 2 * layer.links.shape[0]))

    def _max_links(self, layer: int) -> int:
        return self.params.max_links0 if layer == 0 else self.params.M

    def _search(self, q: np.ndarray, entries: np.ndarray, ef: int, layer: int) -> Tuple[np.ndarray, np.ndarray]:
        lay = self._layers[layer]
        return _kernels.search_layer(
            self._vecs, q, lay.links, lay.counts, lay.rows, entries, ef, len(self._ids) + 1
        )

    def insert(self, frame_id: int, descriptor: Union[GlobalDescriptor, np.ndarray]) -> None:
        if frame_id in self._index_of:
            raise DuplicateIdError(f"frame {frame_id} is already indexed")
        if not isinstance(descriptor, GlobalDescriptor):
            descriptor = GlobalDescriptor.from_values(descriptor)
        if descriptor.dim != self.dim:
            raise ValueError(f"descriptor dimension {descriptor.dim} != index dimension {self.dim}")
        node = len(self._ids)
        self._grow(node + 1)
        q = (descriptor.values.astype(np.float64) / descriptor.norm).astype(np.float32)
        self._vecs[node] = q
        level = self.assign_level()
        self._levels[node] = level
        self._ensure_upper(node, level)

        if self._entry < 0:
            self._commit(node, frame_id, descriptor, level)
            return

        M = self.params.M
        ef_c = self.params.ef_construction
        entries = np.array([self._entry], np.int64)
        for lc in range(self._max_level, level, -1):
            ids, _ = self._search(q, entries, 1, lc)
            entries = ids[:1]
        for lc in range(min(level, self._max_level), -1, -1):
            ids, dists = self._search(q, entries, ef_c, lc)
            keep, keep_d = _kernels.select_neighbors(self._vecs, ids, dists, M)
            lay = self._layers[lc]
            row = lay.rows[node]
            lay.links[row, : keep.shape[0]] = keep
            lay.dists[row, : keep.shape[0]] = keep_d
            lay.counts[row] = keep.shape[0]
            width = self._max_links(lc)
            for nb, d in zip(keep.tolist(), keep_d.tolist()):
                _kernels.add_link(
                    self._vecs, lay.links, lay.dists, lay.counts, lay.rows[nb], nb, node, np.float32(d), width
                )
            entries = ids
        self._commit(node, frame_id, descriptor, level)

    def _commit(self, node: int, frame_id: int, descriptor: GlobalDescriptor, level: int) -> None:
        # publish only after links are in place
        self._ids.append(frame_id)
        self._raw.append(descriptor)
        self._index_of[frame_id] = node
        if level > self._max_level:
            self._max_level = level
            self._entry = node

    # -- queries ----------------------------------------------------------

    def _query_vector(self, query: Union[GlobalDescriptor, np.ndarray]) -> Tuple[GlobalDescriptor, np.ndarray]:
        if not isinstance(query, GlobalDescriptor):
            query = GlobalDescriptor.from_values(query)
        if query.dim != self.dim:
            raise ValueError(f"query dimension {query.dim} != index dimension {self.dim}")
        return query, (query.values.astype(np.float64) / query.norm).astype(np.float32)

    def search_layer(
        self, query, enter_points: Sequence[int], ef: int, layer: int
    ) -> List[Tuple[int, float]]:
        """Best-first search restricted to one layer.

        Returns up to ``ef`` ``(frame_id, distance)`` pairs, nearest first.
        """
        if not enter_points:
            raise ValueError("enter_points must be nonempty")
        _, q = self._query_vector(query)
        nodes = []
        for fid in enter_points:
            node = self._index_of[fid]
            if self._levels[node] < layer:
                raise ValueError(f"frame {fid} is not present at layer {layer}")
            nodes.append(node)
        ids, dists = self._search(q, np.array(nodes, np.int64), ef, layer)
        return [(self._ids[i], float(d)) for i, d in zip(ids.tolist(), dists.tolist())]

    def knn_search(self, query, k: int, ef_search: Optional[int] = None) -> List[SearchResult]:
        """Approximate k nearest frames by cosine similarity.

        Results are sorted by similarity descending, ties by smaller frame id.
        """
        if not self._ids:
            raise EmptyIndexError("the index is empty")
        if k < 1:
            raise ValueError("k must be >= 1")
        ef = self.params.ef_search if ef_search is None else ef_search
        if ef < k:
            raise ValueError(f"ef_search ({ef}) must be >= k ({k})")
        gq, q = self._query_vector(query)
        entries = np.array([self._entry], np.int64)
        for lc in range(self._max_level, 0, -1):
            ids, _ = self._search(q, entries, 1, lc)
            entries = ids[:1]
        ids, _ = self._search(q, entries, ef, 0)
        results = [
            SearchResult(self._ids[i], cosine_similarity(gq, self._raw[i])) for i in ids.tolist()
        ]
        results.sort(key=lambda r: (-r.similarity, r.frame_id))
        return results[:k]

    # -- introspection ----------------------------------------------------

    def level_of(self, frame_id: int) -> int:
        return int(self._levels[self._index_of[frame_id]])

    def neighbors(self, frame_id: int, layer: int) -> List[int]:
        node = self._index_of[frame_id]
        if layer > self._levels[node]:
            raise ValueError(f"frame {frame_id} has no layer {layer}")
        return [self._ids[i] for i in self._layers[layer].neighbors(node).tolist()]

    def frame_ids(self) -> List[int]:
        return list(self._ids)

    def serialize(self) -> bytes:
        """Canonical byte image of the graph.

        Header: M, ef_construction, ef_search, level_scale, seed, node count,
        entry frame id. Then nodes in frame-id order, each with its level and
        per-layer sorted adjacency lists (frame ids), all little-endian.
        """
        p = self.params
        buf = io.BytesIO()
        buf.write(b"HNSW")
        entry = -1 if self._entry < 0 else self._ids[self._entry]
        buf.write(struct.pack("<iiidqqq", p.M, p.ef_construction, p.ef_search, p.level_scale,
                              p.rng_seed, len(self._ids), entry))
        for fid in sorted(self._ids):
            node = self._index_of[fid]
            level = int(self._levels[node])
            buf.write(struct.pack("<qi", fid, level))
            for layer in range(level + 1):
                nbrs = sorted(self._ids[i] for i in self._layers[layer].neighbors(node).tolist())
                buf.write(struct.pack("<i", len(nbrs)))
                buf.write(np.asarray(nbrs, dtype="<i8").tobytes())
        return buf.getvalue()

    def audit(self) -> List[str]:
        """Structural problems found in the graph; empty when healthy."""
        problems = []
        for node, fid in enumerate(self._ids):
            level = int(self._levels[node])
            for layer in range(level + 1):
                nbrs = self._layers[layer].neighbors(node).tolist()
                if len(nbrs) > self._max_links(layer):
                    problems.append(f"frame {fid} layer {layer}: degree {len(nbrs)}")
                if len(set(nbrs)) != len(nbrs):
                    problems.append(f"frame {fid} layer {layer}: duplicate links")
                for nb in nbrs:
                    if nb == node:
                        problems.append(f"frame {fid} layer {layer}: self link")
                    elif nb >= len(self._ids) or nb < 0:
                        problems.append(f"frame {fid} layer {layer}: dangling link {nb}")
                    elif self._levels[nb] < layer:
                        problems.append(f"frame {fid} layer {layer}: link to {self._ids[nb]} above its level")
        return problems

    def reachable(self, layer: int = 0) -> set:
        """Frame ids reachable from the entry point by following links down to ``layer``."""
        if self._entry < 0:
            return set()
        seen = {self._entry}
        for lc in range(self._max_level, layer - 1, -1):
            stack = list(seen)
            while stack:
                node = stack.pop()
                if self._levels[node] < lc:
                    continue
                for nb in self._layers[lc].neighbors(node).tolist():
                    if nb not in seen:
                        seen.add(nb)
                        stack.append(nb)
        return {self._ids[i] for i in seen}
