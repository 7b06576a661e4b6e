"""Per-frame loop-closure state machine.

For every incoming frame: hash its local descriptors, push its global
descriptor into the exclusion FIFO (the oldest pending descriptor moves into
the graph once more than ``window`` are waiting), query the graph, verify the
best candidates geometrically and pass the result through the temporal
consistency gate.
"""

from __future__ import annotations

import collections
import math
import time
from dataclasses import dataclass, field
from typing import Deque, Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np

from .frame_store import Frame, FrameStore, GlobalDescriptor, RawFrame
from .geometry import FundamentalMatrix, RansacParams, ransac_verify
from .hashing import CENTER_SAMPLE, HashFamily
from .hnsw import HnswIndex, HnswParams
from .matcher import match_frames

# Row order of the per-stage timing table; extraction happens upstream, so it is "ingest".
STAGES = (
    "ingest",
    "hash_codes",
    "add_feature",
    "graph_search",
    "hash_matching",
    "ransac",
    "whole_system",
)


@dataclass
class PipelineConfig:
    psi: float = 40.0  # seconds
    phi: float = 1.0  # frames per second of the stream
    n: int = 1
    beta: int = 2
    epsilon: float = 0.7
    consistency_window: int = 10
    similarity_threshold: Optional[float] = None
    hnsw: HnswParams = field(default_factory=HnswParams)
    ransac: RansacParams = field(default_factory=RansacParams)
    hash_bits: int = 256
    hash_tables: int = 6
    bucket_bits: int = 8
    hash_seed: int = 0
    global_dim: int = 1280
    local_dim: int = 128
    keep_float_locals: bool = False

    def __post_init__(self) -> None:
        if self.psi * self.phi < 1:
            raise ValueError("psi * phi must be at least 1")
        if self.n < 1 or self.beta < 1:
            raise ValueError("n and beta must be >= 1")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.consistency_window < 0:
            raise ValueError("consistency_window must be >= 0")

    @property
    def window(self) -> int:
        """Number of most recent frames excluded from retrieval."""
        return math.ceil(self.psi * self.phi - 1e-9)


@dataclass
class LoopDetection:
    query_id: int
    match_id: int
    similarity: float
    inlier_count: int
    fundamental: np.ndarray

    def csv_row(self) -> str:
        return f"{self.query_id},{self.match_id},{self.similarity:.6f},{self.inlier_count}"


class FifoQueue:
    """Pending global descriptors not yet visible to retrieval."""

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: Deque[Tuple[int, GlobalDescriptor]] = collections.deque()

    def __len__(self) -> int:
        return len(self._items)

    def pending_ids(self) -> List[int]:
        return [fid for fid, _ in self._items]

    def push(self, frame_id: int, desc: GlobalDescriptor) -> Optional[Tuple[int, GlobalDescriptor]]:
        """Add a descriptor; returns the one that overflowed, if any."""
        self._items.append((frame_id, desc))
        if len(self._items) > self.capacity:
            return self._items.popleft()
        return None


class TemporalConsistencyGate:
    """Emit only after ``beta`` consecutive frames agree on where the loop is.

    Consecutive verified candidates agree when their ids differ by at most
    ``window``. A frame without a verified candidate breaks the run.
    """

    def __init__(self, beta: int = 2, window: int = 10) -> None:
        self.beta = beta
        self.window = window
        self.run = 0
        self.last_candidate: Optional[int] = None

    def reset(self) -> None:
        self.run = 0
        self.last_candidate = None

    def update(self, candidate: Optional[int]) -> bool:
        if candidate is None:
            self.reset()
            return False
        if self.last_candidate is not None and abs(candidate - self.last_candidate) <= self.window:
            self.run += 1
        else:
            self.run = 1
        self.last_candidate = candidate
        return self.run >= self.beta


@dataclass
class _Verified:
    match_id: int
    similarity: float
    model: FundamentalMatrix


class LoopClosureDetector:
    """Streaming detector; feed frames in order with :meth:`process`.

    Args:
        config: pipeline parameters.
        store: frame archive to ingest into; a new one is made if omitted.
    """

    def __init__(self, config: Optional[PipelineConfig] = None, store: Optional[FrameStore] = None) -> None:
        self.config = config or PipelineConfig()
        cfg = self.config
        self.store = store if store is not None else FrameStore(cfg.global_dim, cfg.local_dim, keep_float_locals=cfg.keep_float_locals)
        self.family = HashFamily(
            dim=self.store.local_dim, m=cfg.hash_bits, n_tables=cfg.hash_tables,
            bucket_bits=cfg.bucket_bits, seed=cfg.hash_seed,
        )
        self.index = HnswIndex(self.store.global_dim, cfg.hnsw)
        self.fifo = FifoQueue(cfg.window)
        self.gate = TemporalConsistencyGate(cfg.beta, cfg.consistency_window)
        self.timings: Dict[str, List[float]] = {s: [] for s in STAGES}
        self.last_attempts: List[int] = []
        self.detections: List[LoopDetection] = []
        self._processed = 0

    # -- hashing centre --------------------------------------------------

    def calibrate(self, descriptors: np.ndarray) -> None:
        """Freeze the hashing centre from a prefix of local descriptors."""
        self.family.fit_center(descriptors)

    # -- per-frame loop --------------------------------------------------

    def process(self, record: RawFrame) -> Optional[LoopDetection]:
        t0 = time.perf_counter()
        frame = self.store.ingest_frame(record)
        self.timings["ingest"].append(time.perf_counter() - t0)
        return self.process_frame(frame, _t0=t0)

    def _hash(self, frame: Frame) -> None:
        if frame.codes is not None:
            return
        if frame.locals is None:
            raise ValueError(f"frame {frame.id} has neither codes nor float descriptors")
        codes, keys = self.family.encode_many(frame.locals)
        self.store.attach_codes(frame.id, codes, keys)

    def process_frame(self, frame: Frame, _t0: Optional[float] = None) -> Optional[LoopDetection]:
        if frame.id != self._processed:
            raise ValueError(f"frames must be processed in order: expected {self._processed}, got {frame.id}")
        cfg = self.config
        start = time.perf_counter() if _t0 is None else _t0
        if _t0 is None:
            self.timings["ingest"].append(0.0)

        t = time.perf_counter()
        self._hash(frame)
        self.timings["hash_codes"].append(time.perf_counter() - t)

        t = time.perf_counter()
        overflow = self.fifo.push(frame.id, frame.global_desc)
        if overflow is not None:
            self.index.insert(overflow[0], overflow[1])
        self.timings["add_feature"].append(time.perf_counter() - t)

        t = time.perf_counter()
        candidates = []
        if len(self.index):
            ef = max(cfg.hnsw.ef_search, cfg.n)
            candidates = self.index.knn_search(frame.global_desc, cfg.n, ef)
            if cfg.similarity_threshold is not None:
                candidates = [c for c in candidates if c.similarity >= cfg.similarity_threshold]
        self.timings["graph_search"].append(time.perf_counter() - t)

        verified = self._verify(frame, candidates)
        self._processed += 1

        detection = None
        fired = self.gate.update(None if verified is None else verified.match_id)
        if fired and verified is not None:
            detection = LoopDetection(
                frame.id, verified.match_id, verified.similarity, verified.model.inlier_count, verified.model.matrix
            )
            self.detections.append(detection)
        self.timings["whole_system"].append(time.perf_counter() - start)
        return detection

    def _verify(self, frame: Frame, candidates) -> Optional[_Verified]:
        cfg = self.config
        self.last_attempts = []
        t_match = 0.0
        t_ransac = 0.0
        result = None
        for cand in candidates:  # already in descending similarity
            self.last_attempts.append(cand.frame_id)
            other = self.store[cand.frame_id]
            t = time.perf_counter()
            if other.n_locals < 2 or frame.n_locals == 0:
                t_match += time.perf_counter() - t
                continue
            ms = match_frames(frame, other, cfg.epsilon)
            t_match += time.perf_counter() - t
            t = time.perf_counter()
            model = ransac_verify(ms, frame.keypoints, other.keypoints, cfg.ransac)
            t_ransac += time.perf_counter() - t
            if model is not None:
                result = _Verified(cand.frame_id, cand.similarity, model)
                break
        self.timings["hash_matching"].append(t_match)
        self.timings["ransac"].append(t_ransac)
        return result

    # -- bookkeeping -----------------------------------------------------

    @property
    def n_indexed(self) -> int:
        return len(self.index)

    @property
    def n_pending(self) -> int:
        return len(self.fifo)

    def mean_timings_ms(self) -> Dict[str, float]:
        return {s: (1e3 * float(np.mean(v)) if v else 0.0) for s, v in self.timings.items()}

    def run(self, records: Iterable[RawFrame], calibrate: bool = True) -> Iterator[LoopDetection]:
        """Process a stream, yielding detections as they are emitted.

        With ``calibrate`` and no centre set yet, records are buffered until
        the first ``CENTER_SAMPLE`` local descriptors are seen and the centre
        is frozen from them before any frame is processed.
        """
        it = iter(records)
        buffered: List[RawFrame] = []
        if calibrate and not self.family._center_frozen:
            seen = 0
            for rec in it:
                buffered.append(rec)
                seen += np.asarray(rec.locals).shape[0]
                if seen >= CENTER_SAMPLE:
                    break
            locs = [np.asarray(r.locals, dtype=np.float64) for r in buffered if np.asarray(r.locals).size]
            if locs:
                self.calibrate(np.concatenate(locs)[:CENTER_SAMPLE])
        for rec in buffered:
            det = self.process(rec)
            if det is not None:
                yield det
        for rec in it:
            det = self.process(rec)
            if det is not None:
                yield det


def detections_to_csv(detections: Iterable[LoopDetection]) -> str:
    lines = ["query_id,match_id,similarity,inliers"]
    lines += [d.csv_row() for d in detections]
    return "\n".join(lines) + "\n"
