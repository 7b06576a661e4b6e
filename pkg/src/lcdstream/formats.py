"""Descriptor container, its text alternative, and ground-truth files.

Binary container layout (little-endian)::

    b"FILD" | version u16 | D u32 | d u32
    per frame: timestamp f64 | global f32*D | count u32 | count * (x f32, y f32, local f32*d)
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, List, Tuple, Union

import numpy as np

from .frame_store import DimensionMismatchError, MalformedRecordError, RawFrame

MAGIC = b"FILD"
VERSION = 1
_HEADER = struct.Struct("<4sHII")

PathLike = Union[str, Path]


def write_container(path: PathLike, records: Iterable[RawFrame], global_dim: int, local_dim: int) -> int:
    """Write records to a binary container; returns the number of frames written."""
    n = 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, global_dim, local_dim))
        for rec in records:
            g = np.asarray(rec.global_values, dtype="<f4")
            if g.shape != (global_dim,):
                raise DimensionMismatchError(f"global descriptor has shape {g.shape}", n)
            kp = np.asarray(rec.keypoints, dtype="<f4").reshape(-1, 2)
            loc = np.asarray(rec.locals, dtype="<f4").reshape(kp.shape[0], local_dim)
            fh.write(struct.pack("<d", float(rec.timestamp)))
            fh.write(g.tobytes())
            fh.write(struct.pack("<I", kp.shape[0]))
            fh.write(np.hstack([kp, loc]).astype("<f4").tobytes())
            n += 1
    return n


def read_header(fh: BinaryIO) -> Tuple[int, int, int]:
    raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise MalformedRecordError("truncated container header")
    magic, version, gdim, ldim = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise MalformedRecordError(f"bad magic {magic!r}")
    if version != VERSION:
        raise MalformedRecordError(f"unsupported container version {version}")
    return version, gdim, ldim


def _read_exact(fh: BinaryIO, size: int, index: int, what: str) -> bytes:
    data = fh.read(size)
    if len(data) != size:
        raise MalformedRecordError(f"truncated {what}", index)
    return data


def iter_container(path: PathLike) -> Iterator[RawFrame]:
    """Stream records from a binary container without loading it whole."""
    with open(path, "rb") as fh:
        _, gdim, ldim = read_header(fh)
        index = 0
        while True:
            head = fh.read(8)
            if not head:
                return
            if len(head) != 8:
                raise MalformedRecordError("truncated timestamp", index)
            (ts,) = struct.unpack("<d", head)
            g = np.frombuffer(_read_exact(fh, 4 * gdim, index, "global descriptor"), dtype="<f4")
            (count,) = struct.unpack("<I", _read_exact(fh, 4, index, "local count"))
            block = np.frombuffer(
                _read_exact(fh, 4 * count * (2 + ldim), index, "local descriptors"), dtype="<f4"
            ).reshape(count, 2 + ldim)
            yield RawFrame(ts, g.astype(np.float32), block[:, :2].astype(np.float32), block[:, 2:].astype(np.float32))
            index += 1


def container_dims(path: PathLike) -> Tuple[int, int]:
    with open(path, "rb") as fh:
        _, gdim, ldim = read_header(fh)
    return gdim, ldim


def write_jsonl(path: PathLike, records: Iterable[RawFrame]) -> int:
    """Line-delimited text form: one JSON object per frame."""
    n = 0
    with open(path, "w") as fh:
        for rec in records:
            kp = np.asarray(rec.keypoints).reshape(-1, 2)
            loc = np.asarray(rec.locals)
            loc = loc.reshape(kp.shape[0], loc.shape[-1] if loc.ndim == 2 else -1)
            obj = {
                "timestamp": float(rec.timestamp),
                "local_dim": int(loc.shape[1]),
                "global": [float(v) for v in np.asarray(rec.global_values)],
                "locals": [[float(x), float(y)] + [float(v) for v in row] for (x, y), row in zip(kp, loc)],
            }
            fh.write(json.dumps(obj) + "\n")
            n += 1
    return n


def iter_jsonl(path: PathLike) -> Iterator[RawFrame]:
    with open(path) as fh:
        index = 0
        for line in fh:
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                g = np.asarray(obj["global"], dtype=np.float32)
                rows = obj.get("locals", [])
                width = len(rows[0]) if rows else 2 + int(obj.get("local_dim", 0))
                if any(len(r) != width for r in rows):
                    raise ValueError("ragged local rows")
                arr = np.asarray(rows, dtype=np.float32).reshape(len(rows), width)
                rec = RawFrame(float(obj["timestamp"]), g, arr[:, :2], arr[:, 2:])
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedRecordError(f"malformed JSON record ({exc})", index) from None
            yield rec
            index += 1


def iter_records(path: PathLike) -> Iterator[RawFrame]:
    """Dispatch on file content: binary container or JSON lines."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == MAGIC:
        return iter_container(path)
    return iter_jsonl(path)


GroundTruth = List[Tuple[int, int, int]]


def read_ground_truth(path: PathLike) -> GroundTruth:
    """Lines of ``query_id match_id_start match_id_end``; ``#`` starts a comment."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            q, a, b = (int(p) for p in parts)
            if a > b:
                raise ValueError(f"{path}:{lineno}: empty range {a}..{b}")
            rows.append((q, a, b))
    return rows


def write_ground_truth(path: PathLike, rows: Iterable[Tuple[int, int, int]]) -> None:
    with open(path, "w") as fh:
        for q, a, b in rows:
            fh.write(f"{q} {a} {b}\n")


def read_detections(path: PathLike) -> List[Tuple[int, int, float, int]]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("query_id"):
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 comma-separated fields")
            out.append((int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3])))
    return out
