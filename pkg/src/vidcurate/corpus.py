"""Data model for video records, captions and detector sidecars.

Manifests are JSON Lines, one :class:`VideoRecord` per line. Sidecars are
JSON files named ``<video_id>.json`` holding externally produced OCR and face
boxes for a handful of sampled frames.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

LANGUAGES = ("en", "zh")

# filter_status keys accepted in a manifest
FILTER_NAMES = (
    "validation",
    "text_coverage",
    "face_coverage",
    "static_scene",
    "scene_cut",
    "category_balance",
    "caption_redundancy",
)

KEPT = "kept"
DROPPED = "dropped"

MIN_DURATION_S = 5.0


class ManifestError(Exception):
    """Fatal problem with a manifest or sidecar file."""


class RecordFormatError(ValueError):
    """A single manifest line or sidecar entry does not match the schema."""


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        coords = (self.x0, self.y0, self.x1, self.y1)
        if not all(math.isfinite(c) for c in coords):
            raise RecordFormatError(f"non-finite box {coords}")
        if min(coords) < 0:
            raise RecordFormatError(f"negative coordinate in box {coords}")
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise RecordFormatError(f"zero-area box {coords}")

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def clip(self, width: float, height: float) -> Optional["Rect"]:
        """Intersect with the frame ``[0, width] x [0, height]``; None if nothing is left."""
        x1, y1 = min(self.x1, width), min(self.y1, height)
        if x1 <= self.x0 or y1 <= self.y0:
            return None
        return Rect(self.x0, self.y0, x1, y1)

    def to_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def from_list(cls, box: Any) -> "Rect":
        if not isinstance(box, (list, tuple)) or len(box) != 4:
            raise RecordFormatError(f"box must be [x0, y0, x1, y1], got {box!r}")
        if not all(_is_number(c) for c in box):
            raise RecordFormatError(f"box coordinates must be numbers, got {box!r}")
        return cls(*(float(c) for c in box))


@dataclass(frozen=True)
class Decision:
    """Outcome of one filter on one record."""

    decision: str
    score: Optional[float] = None
    note: Optional[str] = None

    def __post_init__(self):
        if self.decision not in (KEPT, DROPPED):
            raise RecordFormatError(f"decision must be kept|dropped, got {self.decision!r}")

    @property
    def dropped(self) -> bool:
        return self.decision == DROPPED

    def to_dict(self) -> dict[str, Any]:
        return {"decision": self.decision, "score": self.score, "note": self.note}

    @classmethod
    def from_dict(cls, data: Any) -> "Decision":
        if not isinstance(data, Mapping) or "decision" not in data:
            raise RecordFormatError(f"filter decision must be an object with 'decision', got {data!r}")
        score = data.get("score")
        if score is not None and not _is_number(score):
            raise RecordFormatError(f"decision score must be a number, got {score!r}")
        note = data.get("note")
        if note is not None and not isinstance(note, str):
            raise RecordFormatError(f"decision note must be a string, got {note!r}")
        return cls(data["decision"], None if score is None else float(score), note)


@dataclass(frozen=True)
class Caption:
    language: str
    text: str

    def __post_init__(self):
        if self.language not in LANGUAGES:
            raise RecordFormatError(f"unknown caption language {self.language!r}")

    @property
    def sentences(self) -> list[str]:
        from .captions import split_sentences

        return split_sentences(self.text, self.language)

    def to_dict(self) -> dict[str, Any]:
        return {"language": self.language, "text": self.text}


@dataclass(frozen=True)
class VideoRecord:
    id: str
    media_path: str
    duration_s: float
    fps: float
    width: int
    height: int
    category: Optional[str]
    language: str
    source: str
    captions: tuple[Caption, ...] = ()
    filter_status: Mapping[str, Decision] = field(default_factory=dict)

    def with_decision(self, filter_name: str, decision: Decision) -> "VideoRecord":
        """Copy of the record with one filter_status entry set."""
        if filter_name not in FILTER_NAMES:
            raise ValueError(f"unregistered filter {filter_name!r}")
        status = dict(self.filter_status)
        status[filter_name] = decision
        return replace(self, filter_status=status)

    def is_dropped(self) -> bool:
        return any(d.dropped for d in self.filter_status.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "media_path": self.media_path,
            "duration_s": self.duration_s,
            "fps": self.fps,
            "width": self.width,
            "height": self.height,
            "category": self.category,
            "language": self.language,
            "source": self.source,
            "captions": [c.to_dict() for c in self.captions],
            "filter_status": {k: v.to_dict() for k, v in self.filter_status.items()},
        }

    @classmethod
    def from_dict(cls, data: Any) -> "VideoRecord":
        if not isinstance(data, Mapping):
            raise RecordFormatError("record must be a JSON object")
        missing = [k for k in _RECORD_KEYS if k not in data]
        if missing:
            raise RecordFormatError(f"missing keys: {', '.join(missing)}")
        extra = sorted(set(data) - set(_RECORD_KEYS))
        if extra:
            raise RecordFormatError(f"unknown keys: {', '.join(extra)}")

        if not isinstance(data["id"], str) or not data["id"]:
            raise RecordFormatError("id must be a non-empty string")
        for key in ("media_path", "source"):
            if not isinstance(data[key], str):
                raise RecordFormatError(f"{key} must be a string")
        category = data["category"]
        if category is not None and not isinstance(category, str):
            raise RecordFormatError("category must be a string or null")
        for key in ("duration_s", "fps"):
            value = data[key]
            if not _is_number(value) or not math.isfinite(value) or value <= 0:
                raise RecordFormatError(f"{key} must be a positive number, got {value!r}")
        for key in ("width", "height"):
            value = data[key]
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise RecordFormatError(f"{key} must be a positive integer, got {value!r}")
        if data["language"] not in LANGUAGES:
            raise RecordFormatError(f"language must be one of {LANGUAGES}, got {data['language']!r}")

        raw_caps = data["captions"]
        if not isinstance(raw_caps, list):
            raise RecordFormatError("captions must be an array")
        captions = []
        for cap in raw_caps:
            if not isinstance(cap, Mapping) or set(cap) != {"language", "text"}:
                raise RecordFormatError(f"caption must be {{language, text}}, got {cap!r}")
            if not isinstance(cap["text"], str):
                raise RecordFormatError("caption text must be a string")
            captions.append(Caption(cap["language"], cap["text"]))

        raw_status = data["filter_status"]
        if not isinstance(raw_status, Mapping):
            raise RecordFormatError("filter_status must be an object")
        status = {}
        for name, dec in raw_status.items():
            if name not in FILTER_NAMES:
                raise RecordFormatError(f"unregistered filter {name!r}")
            status[name] = Decision.from_dict(dec)

        return cls(
            id=data["id"],
            media_path=data["media_path"],
            duration_s=float(data["duration_s"]),
            fps=float(data["fps"]),
            width=data["width"],
            height=data["height"],
            category=category,
            language=data["language"],
            source=data["source"],
            captions=tuple(captions),
            filter_status=status,
        )


_RECORD_KEYS = (
    "id",
    "media_path",
    "duration_s",
    "fps",
    "width",
    "height",
    "category",
    "language",
    "source",
    "captions",
    "filter_status",
)


@dataclass(frozen=True)
class FrameDetections:
    """Detector output for one sampled frame.

    ``None`` for a box list means that detector was not run on this frame,
    which is different from an empty list (run, nothing found).
    """

    timestamp_s: float
    text_boxes: Optional[tuple[Rect, ...]] = ()
    face_boxes: Optional[tuple[Rect, ...]] = ()

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"timestamp_s": self.timestamp_s}
        if self.text_boxes is not None:
            out["text_boxes"] = [b.to_list() for b in self.text_boxes]
        if self.face_boxes is not None:
            out["face_boxes"] = [b.to_list() for b in self.face_boxes]
        return out


@dataclass(frozen=True)
class DetectionSidecar:
    video_id: str
    frames: tuple[FrameDetections, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"video_id": self.video_id, "frames": [f.to_dict() for f in self.frames]}

    @classmethod
    def from_dict(cls, data: Any) -> "DetectionSidecar":
        if not isinstance(data, Mapping) or not isinstance(data.get("video_id"), str):
            raise RecordFormatError("sidecar must be an object with a string video_id")
        frames_raw = data.get("frames")
        if not isinstance(frames_raw, list):
            raise RecordFormatError("sidecar frames must be an array")
        frames = []
        for fr in frames_raw:
            if not isinstance(fr, Mapping) or not _is_number(fr.get("timestamp_s")):
                raise RecordFormatError(f"bad sidecar frame {fr!r}")

            def boxes(key):
                if key not in fr or fr[key] is None:
                    return None
                if not isinstance(fr[key], list):
                    raise RecordFormatError(f"{key} must be an array")
                return tuple(Rect.from_list(b) for b in fr[key])

            frames.append(FrameDetections(float(fr["timestamp_s"]), boxes("text_boxes"), boxes("face_boxes")))
        return cls(data["video_id"], tuple(frames))


@dataclass
class ManifestLoad:
    records: list[VideoRecord]
    errors: list[tuple[int, str]]

    @property
    def ok(self) -> bool:
        return not self.errors


@dataclass
class Violation:
    code: str
    message: str


@dataclass
class ValidationReport:
    record_id: str
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def load_manifest(path: str | Path) -> ManifestLoad:
    """Read a JSON Lines manifest.

    Malformed lines are collected as ``(line_number, message)`` pairs with
    1-based line numbers; blank lines are ignored. A duplicate id is fatal.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc

    records: list[VideoRecord] = []
    errors: list[tuple[int, str]] = []
    seen: dict[str, int] = {}
    # split on "\n" only: str.splitlines() would also break on U+0085/U+2028 inside strings
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        try:
            record = VideoRecord.from_dict(json.loads(line))
        except (json.JSONDecodeError, RecordFormatError) as exc:
            errors.append((lineno, str(exc)))
            continue
        if record.id in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate id {record.id!r} (first seen on line {seen[record.id]})")
        seen[record.id] = lineno
        records.append(record)
    return ManifestLoad(records, errors)


def dump_line(obj: Mapping[str, Any]) -> str:
    return json.dumps(obj, ensure_ascii=False, allow_nan=False)


def write_jsonl(path: str | Path, rows: Iterable[Mapping[str, Any]]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(dump_line(row))
            fh.write("\n")
            n += 1
    return n


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    """Plain JSON Lines reader for auxiliary files (instructions, budgets, plans)."""
    path = Path(path)
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
    return rows


def write_manifest(path: str | Path, records: Iterable[VideoRecord]) -> int:
    return write_jsonl(path, (r.to_dict() for r in records))


def sidecar_path(sidecar_dir: str | Path, video_id: str) -> Path:
    if "/" in video_id or "\\" in video_id or video_id in (".", ".."):
        raise ValueError(f"video id {video_id!r} cannot be used as a sidecar file name")
    return Path(sidecar_dir) / f"{video_id}.json"


def load_sidecar(path: str | Path) -> DetectionSidecar:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read sidecar {path}: {exc}") from exc
    try:
        return DetectionSidecar.from_dict(data)
    except RecordFormatError as exc:
        raise ManifestError(f"{path}: {exc}") from exc


def find_sidecar(sidecar_dir: str | Path | None, video_id: str) -> Optional[DetectionSidecar]:
    """Sidecar for ``video_id`` or None when the directory or file is absent."""
    if sidecar_dir is None:
        return None
    path = sidecar_path(sidecar_dir, video_id)
    if not path.exists():
        return None
    return load_sidecar(path)


def write_sidecar(path: str | Path, sidecar: DetectionSidecar) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(sidecar.to_dict(), ensure_ascii=False) + "\n", encoding="utf-8")


def validate_record(record: VideoRecord, max_caption_len: int) -> ValidationReport:
    """Check a record against the curation policy; never raises.

    Videos shorter than five seconds are flagged (exactly 5.0 s passes).
    Caption length is measured in characters.
    """
    report = ValidationReport(record.id)
    add = report.violations.append
    if not (record.duration_s > 0):
        add(Violation("bad_duration", f"duration_s must be > 0, got {record.duration_s}"))
    elif record.duration_s < MIN_DURATION_S:
        add(Violation("short_video", f"duration {record.duration_s:g}s is below {MIN_DURATION_S:g}s"))
    if not (record.fps > 0):
        add(Violation("bad_fps", f"fps must be > 0, got {record.fps}"))
    if record.width < 1 or record.height < 1:
        add(Violation("bad_dimensions", f"frame size {record.width}x{record.height}"))
    if record.language not in LANGUAGES:
        add(Violation("bad_language", f"unknown language {record.language!r}"))
    for i, cap in enumerate(record.captions):
        if not cap.text.strip():
            add(Violation("empty_caption", f"caption {i} is empty"))
        elif len(cap.text) > max_caption_len:
            add(Violation("caption_too_long", f"caption {i} has {len(cap.text)} chars, limit {max_caption_len}"))
    unknown = [k for k in record.filter_status if k not in FILTER_NAMES]
    if unknown:
        add(Violation("unknown_filter", f"unregistered filter names {unknown}"))
    return report


def validate_sidecar(record: VideoRecord, sidecar: DetectionSidecar) -> list[str]:
    """Problems with a sidecar relative to its record (timestamps, out-of-frame boxes)."""
    problems = []
    if sidecar.video_id != record.id:
        problems.append(f"sidecar video_id {sidecar.video_id!r} != record id {record.id!r}")
    for i, fr in enumerate(sidecar.frames):
        if not (0 <= fr.timestamp_s < record.duration_s):
            problems.append(f"frame {i} timestamp {fr.timestamp_s} outside [0, {record.duration_s})")
        for kind, boxes in (("text", fr.text_boxes), ("face", fr.face_boxes)):
            for b in boxes or ():
                if b.x1 > record.width or b.y1 > record.height:
                    problems.append(f"frame {i} {kind} box {b.to_list()} exceeds {record.width}x{record.height}")
    return problems
