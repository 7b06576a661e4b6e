"""One-axis parameter sweeps over a prepared dataset."""

from __future__ import annotations

import copy
import csv
import io
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence, Tuple

from ..frame_store import RawFrame
from ..pipeline import LoopClosureDetector, PipelineConfig
from .scoring import score

AXES = ("M", "ef_search", "m", "epsilon", "n")


def configure(base: PipelineConfig, axis: str, value) -> PipelineConfig:
    """Copy of ``base`` with one sweep axis set to ``value``."""
    cfg = copy.deepcopy(base)
    if axis == "M":
        cfg.hnsw = replace(cfg.hnsw, M=int(value), level_scale=None)
    elif axis == "ef_search":
        cfg.hnsw = replace(cfg.hnsw, ef_search=int(value))
    elif axis == "m":
        cfg.hash_bits = int(value)
    elif axis == "epsilon":
        cfg.epsilon = float(value)
    elif axis == "n":
        cfg.n = int(value)
    else:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {AXES}")
    cfg.__post_init__()
    return cfg


@dataclass
class SweepResult:
    axis: str
    rows: List[dict] = field(default_factory=list)  # one PR row per value
    timings: List[dict] = field(default_factory=list)  # mean ms per stage per value

    def pr_csv(self) -> str:
        return _to_csv(self.rows)

    def timing_csv(self) -> str:
        return _to_csv(self.timings)

    def recalls(self) -> List[float]:
        return [r["recall"] for r in self.rows]


def _to_csv(rows: List[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def run_pipeline(records: Sequence[RawFrame], config: PipelineConfig) -> Tuple[LoopClosureDetector, list]:
    det = LoopClosureDetector(config)
    detections = list(det.run(records))
    return det, detections


def sweep(
    axis: str,
    values: Iterable,
    records: Sequence[RawFrame],
    ground_truth,
    base: Optional[PipelineConfig] = None,
    tolerance_frames: int = 10,
) -> SweepResult:
    """Run the full pipeline once per value with everything else held fixed."""
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {AXES}")
    base = base or PipelineConfig()
    result = SweepResult(axis)
    for value in values:
        cfg = configure(base, axis, value)
        t0 = time.perf_counter()
        det, detections = run_pipeline(records, cfg)
        elapsed = time.perf_counter() - t0
        report = score(detections, ground_truth, tolerance_frames)
        result.rows.append({axis: value, **report.as_dict(), "detections": len(detections), "seconds": elapsed})
        result.timings.append({axis: value, **{s: ms for s, ms in det.mean_timings_ms().items()}})
    return result
