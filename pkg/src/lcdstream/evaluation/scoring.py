"""Precision/recall against interval ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

DetectionLike = Tuple[int, int]


@dataclass
class PRReport:
    true_positives: int
    false_positives: int
    false_negatives: int
    rows: List[dict] = field(default_factory=list)

    @property
    def precision(self) -> float:
        denom = self.true_positives + self.false_positives
        return 1.0 if denom == 0 else self.true_positives / denom

    @property
    def recall(self) -> float:
        denom = self.true_positives + self.false_negatives
        return 1.0 if denom == 0 else self.true_positives / denom

    def as_dict(self) -> dict:
        return {
            "tp": self.true_positives,
            "fp": self.false_positives,
            "fn": self.false_negatives,
            "precision": self.precision,
            "recall": self.recall,
        }


def _pairs(detections) -> List[DetectionLike]:
    out = []
    for det in detections:
        if hasattr(det, "query_id"):
            out.append((int(det.query_id), int(det.match_id)))
        else:
            out.append((int(det[0]), int(det[1])))
    return out


def _check_sorted(keys: Sequence[int], what: str) -> None:
    for a, b in zip(keys, keys[1:]):
        if b < a:
            raise ValueError(f"{what} must be sorted by query id")


def score(detections, ground_truth: Sequence[Tuple[int, int, int]], tolerance_frames: int = 10) -> PRReport:
    """Count true/false positives and misses.

    A detection is a true positive when its query has a ground-truth entry and
    its match id lies within ``tolerance_frames`` of one of that query's
    ranges. Each ground-truth query is credited at most once; any other
    detection is a false positive.
    """
    pairs = _pairs(detections)
    _check_sorted([q for q, _ in pairs], "detections")
    _check_sorted([q for q, _, _ in ground_truth], "ground truth")
    ranges: Dict[int, List[Tuple[int, int]]] = {}
    for q, a, b in ground_truth:
        ranges.setdefault(q, []).append((a, b))

    credited = set()
    tp = fp = 0
    for q, m in pairs:
        hit = any(a - tolerance_frames <= m <= b + tolerance_frames for a, b in ranges.get(q, ()))
        if hit and q not in credited:
            credited.add(q)
            tp += 1
        else:
            fp += 1
    fn = len(ranges) - len(credited)
    return PRReport(tp, fp, fn)
