"""Append-only archive of per-frame descriptors.

Frames arrive as raw records (a global descriptor, a set of local descriptors
with keypoints, and a timestamp), get validated, and are assigned consecutive
integer ids. Global descriptors are kept unnormalised with a cached norm.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np


class IngestError(ValueError):
    """Raised when a record cannot be turned into a frame.

    Args:
        message: what went wrong.
        frame_index: position of the offending record in the stream, if known.
    """

    def __init__(self, message: str, frame_index: Optional[int] = None) -> None:
        self.frame_index = frame_index
        if frame_index is not None:
            message = f"frame {frame_index}: {message}"
        super().__init__(message)


class DimensionMismatchError(IngestError):
    pass


class ZeroVectorError(IngestError):
    pass


class MalformedRecordError(IngestError):
    pass


@dataclass(frozen=True)
class GlobalDescriptor:
    """A whole-image descriptor and its cached Euclidean norm."""

    values: np.ndarray
    norm: float

    @classmethod
    def from_values(cls, values) -> "GlobalDescriptor":
        arr = np.asarray(values)
        if arr.ndim != 1:
            raise ValueError("global descriptor must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("global descriptor has non-finite entries")
        norm = float(np.linalg.norm(arr.astype(np.float64)))
        if norm <= 0.0:
            raise ZeroVectorError("global descriptor is the zero vector")
        arr = arr.copy()
        arr.flags.writeable = False
        return cls(arr, norm)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class LocalDescriptor:
    """A single keypoint and its descriptor vector."""

    values: np.ndarray
    keypoint: Tuple[float, float]


@dataclass
class RawFrame:
    """An un-ingested record, as read from a container or produced in memory.

    ``keypoints`` is (K, 2) and ``locals`` is (K, d).
    """

    timestamp: float
    global_values: np.ndarray
    keypoints: np.ndarray
    locals: np.ndarray


@dataclass
class Frame:
    id: int
    timestamp: float
    global_desc: GlobalDescriptor
    keypoints: np.ndarray
    locals: Optional[np.ndarray]
    # (K, m/8) packed fine codes and (K, L) coarse bucket keys, set once by hashing
    codes: Optional[np.ndarray] = None
    bucket_keys: Optional[np.ndarray] = None

    @property
    def n_locals(self) -> int:
        return self.keypoints.shape[0]

    def local(self, i: int) -> LocalDescriptor:
        if self.locals is None:
            raise ValueError(f"frame {self.id}: float local descriptors were released")
        return LocalDescriptor(self.locals[i], (float(self.keypoints[i, 0]), float(self.keypoints[i, 1])))


def cosine_similarity(a: Union[GlobalDescriptor, np.ndarray], b: Union[GlobalDescriptor, np.ndarray]) -> float:
    """Normalised scalar product ``a.b / (|a| |b|)``.

    Arguments are put in a canonical order before summation so the result is
    bit-for-bit symmetric.
    """
    if not isinstance(a, GlobalDescriptor):
        a = GlobalDescriptor.from_values(a)
    if not isinstance(b, GlobalDescriptor):
        b = GlobalDescriptor.from_values(b)
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dimension mismatch: {a.dim} vs {b.dim}")
    x = a.values.astype(np.float64)
    y = b.values.astype(np.float64)
    # elementwise product commutes exactly; the norm product is ordered
    dot = float(np.dot(x, y))
    na, nb = sorted((a.norm, b.norm))
    sim = dot / (na * nb)
    return min(1.0, max(-1.0, sim))


@dataclass(frozen=True)
class ConvFoldInput:
    w_conv: np.ndarray
    b_conv: np.ndarray
    w_bn: np.ndarray
    b_bn: np.ndarray


def fold_batchnorm(inp: ConvFoldInput) -> Tuple[np.ndarray, np.ndarray]:
    """Merge a batch-norm affine map into the preceding convolution.

    Returns ``(w_bn @ w_conv, w_bn @ b_conv + b_bn)`` so that one affine map
    reproduces the two-stage output for every unrolled input patch.
    """
    w_conv = np.asarray(inp.w_conv, dtype=np.float64)
    b_conv = np.asarray(inp.b_conv, dtype=np.float64)
    w_bn = np.asarray(inp.w_bn, dtype=np.float64)
    b_bn = np.asarray(inp.b_bn, dtype=np.float64)
    if w_conv.ndim != 2 or w_bn.ndim != 2 or b_conv.ndim != 1 or b_bn.ndim != 1:
        raise DimensionMismatchError("fold_batchnorm expects two matrices and two vectors")
    c = w_conv.shape[0]
    if w_bn.shape != (c, c) or b_conv.shape != (c,) or b_bn.shape != (c,):
        raise DimensionMismatchError(
            f"inconsistent shapes: w_conv {w_conv.shape}, b_conv {b_conv.shape}, "
            f"w_bn {w_bn.shape}, b_bn {b_bn.shape}"
        )
    for name, arr in (("w_conv", w_conv), ("b_conv", b_conv), ("w_bn", w_bn), ("b_bn", b_bn)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} has non-finite entries")
    return w_bn @ w_conv, w_bn @ b_conv + b_bn


class FrameStore:
    """Append-only frame archive with a single writer.

    Readers may access any frame with id below ``len(store)``; published
    frames are not modified except for the one-time attachment of codes.
    """

    def __init__(self, global_dim: int = 1280, local_dim: int = 128, keep_float_locals: bool = True) -> None:
        self.global_dim = global_dim
        self.local_dim = local_dim
        self.keep_float_locals = keep_float_locals
        self._frames: List[Frame] = []
        self._write_lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._frames)

    def __getitem__(self, frame_id: int) -> Frame:
        return self._frames[frame_id]

    def __iter__(self) -> Iterator[Frame]:
        return iter(list(self._frames))

    def _validate(self, record: RawFrame, index: int) -> Tuple[float, GlobalDescriptor, np.ndarray, np.ndarray]:
        try:
            timestamp = float(record.timestamp)
            g = np.asarray(record.global_values)
            kp = np.asarray(record.keypoints, dtype=np.float32)
            loc = np.asarray(record.locals, dtype=np.float32)
        except (TypeError, ValueError, AttributeError) as exc:
            raise MalformedRecordError(f"malformed record ({exc})", index) from None
        if g.ndim != 1:
            raise MalformedRecordError("global descriptor must be a vector", index)
        if g.shape[0] != self.global_dim:
            raise DimensionMismatchError(
                f"global descriptor has dimension {g.shape[0]}, store expects {self.global_dim}", index
            )
        if not math.isfinite(timestamp):
            raise MalformedRecordError("timestamp is not finite", index)
        if kp.size == 0 and loc.size == 0:
            kp = kp.reshape(0, 2)
            loc = loc.reshape(0, self.local_dim)
        if kp.ndim != 2 or kp.shape[1] != 2:
            raise MalformedRecordError(f"keypoints must be (K, 2), got {kp.shape}", index)
        if loc.ndim != 2 or loc.shape[0] != kp.shape[0]:
            raise MalformedRecordError(
                f"{loc.shape[0] if loc.ndim == 2 else '?'} local descriptors for {kp.shape[0]} keypoints", index
            )
        if loc.shape[1] != self.local_dim:
            raise DimensionMismatchError(
                f"local descriptor has dimension {loc.shape[1]}, store expects {self.local_dim}", index
            )
        if not (np.all(np.isfinite(kp)) and np.all(kp >= 0)):
            raise MalformedRecordError("keypoint coordinates must be finite and non-negative", index)
        if not np.all(np.isfinite(loc)):
            raise MalformedRecordError("local descriptors have non-finite entries", index)
        try:
            gd = GlobalDescriptor.from_values(g)
        except ZeroVectorError:
            raise ZeroVectorError("global descriptor is the zero vector", index) from None
        except ValueError as exc:
            raise MalformedRecordError(str(exc), index) from None
        return timestamp, gd, kp, loc

    def ingest_frame(self, record: RawFrame) -> Frame:
        with self._write_lock:
            index = len(self._frames)
            timestamp, gd, kp, loc = self._validate(record, index)
            kp.flags.writeable = False
            loc.flags.writeable = False
            frame = Frame(id=index, timestamp=timestamp, global_desc=gd, keypoints=kp, locals=loc)
            self._frames.append(frame)
            return frame

    def ingest_many(self, records: Iterable[RawFrame]) -> List[Frame]:
        return [self.ingest_frame(r) for r in records]

    def attach_codes(self, frame_id: int, codes: np.ndarray, bucket_keys: np.ndarray) -> Frame:
        """Attach binary codes to a frame, exactly once."""
        frame = self._frames[frame_id]
        if frame.codes is not None:
            raise ValueError(f"frame {frame_id} already has codes")
        if codes.shape[0] != frame.n_locals or bucket_keys.shape[0] != frame.n_locals:
            raise ValueError(f"frame {frame_id}: need one code per local descriptor")
        codes.flags.writeable = False
        bucket_keys.flags.writeable = False
        frame.codes = codes
        frame.bucket_keys = bucket_keys
        if not self.keep_float_locals:
            frame.locals = None
        return frame


def stack_locals(locals_: Sequence[LocalDescriptor]) -> Tuple[np.ndarray, np.ndarray]:
    """Turn a list of LocalDescriptor into (keypoints, descriptors) arrays."""
    if not locals_:
        return np.zeros((0, 2), np.float32), np.zeros((0, 0), np.float32)
    kp = np.array([l.keypoint for l in locals_], dtype=np.float32)
    desc = np.stack([np.asarray(l.values, dtype=np.float32) for l in locals_])
    return kp, desc


__all__ = [
    "ConvFoldInput",
    "DimensionMismatchError",
    "Frame",
    "FrameStore",
    "GlobalDescriptor",
    "IngestError",
    "LocalDescriptor",
    "MalformedRecordError",
    "RawFrame",
    "ZeroVectorError",
    "cosine_similarity",
    "fold_batchnorm",
    "stack_locals",
]
