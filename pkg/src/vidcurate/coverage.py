"""Text and face coverage filters built on an exact rectangle-union area."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .corpus import DROPPED, KEPT, Decision, DetectionSidecar, Rect, VideoRecord

TEXT_FRAMES = 3
FACE_FRAMES = 5

# Engineering defaults, not published values.
DEFAULT_TEXT_THRESHOLD = 0.30
DEFAULT_FACE_THRESHOLD = 0.50

UNFILTERABLE = "unfilterable"


def union_area(boxes: Iterable[Rect]) -> float:
    """Exact area covered by the union of axis-aligned boxes.

    Sweeps over the compressed x coordinates; inside each vertical slab the
    y intervals of the boxes spanning it are merged and measured.
    O(n^2 log n) for n boxes.
    """
    boxes = [b for b in boxes]
    if not boxes:
        return 0.0
    xs = sorted({b.x0 for b in boxes} | {b.x1 for b in boxes})
    by_y = sorted(boxes, key=lambda b: b.y0)
    area = 0.0
    for left, right in zip(xs, xs[1:]):
        covered = 0.0
        cur_lo = cur_hi = None
        for b in by_y:
            if b.x0 > left or b.x1 < right:
                continue
            if cur_hi is None or b.y0 > cur_hi:
                if cur_hi is not None:
                    covered += cur_hi - cur_lo
                cur_lo, cur_hi = b.y0, b.y1
            elif b.y1 > cur_hi:
                cur_hi = b.y1
        if cur_hi is not None:
            covered += cur_hi - cur_lo
        area += covered * (right - left)
    return area


@dataclass
class CoverageResult:
    per_frame_ratio: list[float]
    max_ratio: float
    decision: str
    threshold_used: float
    notes: list[str] = field(default_factory=list)

    @property
    def unfilterable(self) -> bool:
        return UNFILTERABLE in self.notes

    def to_decision(self) -> Decision:
        note = "; ".join(self.notes) or None
        score = None if self.unfilterable else self.max_ratio
        return Decision(self.decision, score, note)


def frame_coverage(boxes: Sequence[Rect], width: int, height: int) -> float:
    """Fraction of a ``width x height`` frame covered by ``boxes`` (clipped to the frame)."""
    clipped = [c for c in (b.clip(width, height) for b in boxes) if c is not None]
    return min(1.0, union_area(clipped) / float(width * height))


def _coverage(
    record: VideoRecord,
    sidecar: Optional[DetectionSidecar],
    threshold: float,
    attr: str,
    canonical: int,
) -> CoverageResult:
    if sidecar is None:
        return CoverageResult([], 0.0, KEPT, threshold, [UNFILTERABLE, "missing sidecar"])
    per_frame = [getattr(fr, attr) for fr in sidecar.frames if getattr(fr, attr) is not None]
    if not per_frame:
        return CoverageResult([], 0.0, KEPT, threshold, [UNFILTERABLE, f"no {attr} in sidecar"])
    notes = []
    if len(per_frame) != canonical:
        notes.append(f"expected {canonical} frames, found {len(per_frame)}")
    ratios = [frame_coverage(boxes, record.width, record.height) for boxes in per_frame]
    top = max(ratios)
    return CoverageResult(ratios, top, DROPPED if top > threshold else KEPT, threshold, notes)


def text_coverage(
    record: VideoRecord, sidecar: Optional[DetectionSidecar], threshold: float = DEFAULT_TEXT_THRESHOLD
) -> CoverageResult:
    """Maximum per-frame OCR box coverage; dropped when it exceeds ``threshold``.

    A missing sidecar never drops the record: it is kept and noted as
    unfilterable.
    """
    return _coverage(record, sidecar, threshold, "text_boxes", TEXT_FRAMES)


def face_coverage(
    record: VideoRecord, sidecar: Optional[DetectionSidecar], threshold: float = DEFAULT_FACE_THRESHOLD
) -> CoverageResult:
    """Same as :func:`text_coverage` over face boxes (five canonical frames)."""
    return _coverage(record, sidecar, threshold, "face_boxes", FACE_FRAMES)
