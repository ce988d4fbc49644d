"""End-to-end curation run: filters, balance, refinement, assembly, budgeting, packing."""

from __future__ import annotations

import json
import logging
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from . import captions as cap
from . import coverage, motion
from .balance import balance
from .corpus import (
    DROPPED,
    KEPT,
    MIN_DURATION_S,
    Decision,
    VideoRecord,
    find_sidecar,
    load_manifest,
    read_jsonl,
    validate_record,
    write_jsonl,
    write_manifest,
)
from .packer import pack_sequences, plan_rows, utilization
from .sampling import STAGE_NAMES, dynamic_frame_count, estimate_text_tokens, get_stage, token_budget, uniform_timestamps

log = logging.getLogger(__name__)


class ConfigError(Exception):
    pass


class PipelineError(Exception):
    def __init__(self, stage: str, report: "RunReport", cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.report = report
        self.cause = cause


_PATH_KEYS = ("input", "output_dir", "sidecar_dir", "frame_dir", "templates", "instructions")


@dataclass
class PipelineConfig:
    input: Optional[str] = None
    output_dir: Optional[str] = None
    stage: str = "instruct"
    sidecar_dir: Optional[str] = None
    frame_dir: Optional[str] = None
    templates: Optional[str] = None
    instructions: Optional[str] = None
    max_caption_len: Optional[int] = None
    text_threshold: float = coverage.DEFAULT_TEXT_THRESHOLD
    face_threshold: float = coverage.DEFAULT_FACE_THRESHOLD
    flow_threshold: float = motion.DEFAULT_FLOW_THRESHOLD
    flow_alpha: float = motion.DEFAULT_FLOW_ALPHA
    flow_iterations: int = motion.DEFAULT_FLOW_ITERATIONS
    flow_resolution: int = motion.FLOW_RESOLUTION
    flow_frames: int = motion.STATIC_SCENE_FRAMES
    cut_threshold: float = motion.DEFAULT_CUT_THRESHOLD
    min_clip_s: float = motion.DEFAULT_MIN_CLIP_S
    max_clip_s: float = motion.DEFAULT_MAX_CLIP_S
    balance_cap: float = 0.01
    redundancy_threshold: Optional[float] = None
    caption_task: str = "detailed_description"
    group_by_task: bool = False
    budget_tokens: Optional[int] = None
    min_frames: Optional[int] = None
    max_frames: Optional[int] = None
    patchify_stride: Optional[list[int]] = None
    separator_tokens_per_frame: Optional[int] = None
    figures: bool = False
    seed: int = 0
    jobs: int = 1

    @classmethod
    def from_dict(cls, data: dict[str, Any], base_dir: Optional[Path] = None) -> "PipelineConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**data)
        if base_dir is not None:
            for key in _PATH_KEYS:
                value = getattr(cfg, key)
                if value is not None and not Path(value).is_absolute():
                    setattr(cfg, key, str(base_dir / value))
        cfg.check()
        return cfg

    def check(self) -> None:
        def need(cond: bool, msg: str):
            if not cond:
                raise ConfigError(msg)

        def num(key: str, integer: bool = False):
            value = getattr(self, key)
            ok = isinstance(value, int) if integer else isinstance(value, (int, float))
            need(ok and not isinstance(value, bool), f"{key} must be {'an integer' if integer else 'a number'}")
            return value

        need(self.stage in STAGE_NAMES, f"stage must be one of {', '.join(STAGE_NAMES)}")
        for key in ("text_threshold", "face_threshold"):
            need(0.0 <= num(key) <= 1.0, f"{key} must be in [0, 1]")
        need(num("flow_threshold") >= 0, "flow_threshold must be >= 0")
        need(num("flow_alpha") > 0, "flow_alpha must be > 0")
        need(num("flow_iterations", True) >= 1, "flow_iterations must be >= 1")
        need(num("flow_resolution", True) >= 1, "flow_resolution must be >= 1")
        need(num("flow_frames", True) >= 2, "flow_frames must be >= 2")
        need(num("cut_threshold") >= 0, "cut_threshold must be >= 0")
        need(0 < num("min_clip_s") < num("max_clip_s"), "need 0 < min_clip_s < max_clip_s")
        need(0.0 < num("balance_cap") < 1.0, "balance_cap must be in (0, 1)")
        if self.redundancy_threshold is not None:
            need(0.0 <= num("redundancy_threshold") <= 1.0, "redundancy_threshold must be in [0, 1]")
        if self.max_caption_len is not None:
            need(num("max_caption_len", True) >= 1, "max_caption_len must be a positive integer")
        need(self.caption_task in cap.CAPTION_TASKS, f"caption_task must be one of {cap.CAPTION_TASKS}")
        need(isinstance(self.group_by_task, bool), "group_by_task must be true or false")
        need(isinstance(self.figures, bool), "figures must be true or false")
        num("seed", True)
        need(num("jobs", True) >= 1, "jobs must be >= 1")
        for key in ("budget_tokens", "min_frames", "max_frames", "separator_tokens_per_frame"):
            if getattr(self, key) is not None:
                num(key, True)
        try:
            self.stage_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def stage_config(self):
        cfg = get_stage(self.stage)
        overrides = {
            "llm_budget_tokens": self.budget_tokens,
            "min_frames": self.min_frames,
            "max_frames": self.max_frames,
            "patchify_stride": self.patchify_stride,
            "separator_tokens_per_frame": self.separator_tokens_per_frame,
        }
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return cfg.with_overrides(**overrides) if overrides else cfg

    def require(self, *keys: str) -> None:
        missing = [k for k in keys if getattr(self, k) is None]
        if missing:
            raise ConfigError(f"missing required config keys: {', '.join(missing)}")


def load_config(path: Optional[str | Path], overrides: Optional[dict[str, Any]] = None) -> PipelineConfig:
    """Read a flat JSON config; ``overrides`` (e.g. CLI flags) win over file values."""
    data: dict[str, Any] = {}
    base = None
    if path is not None:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        base = path.parent.resolve()
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in _PATH_KEYS:
            value = str(Path(value).resolve())
        data[key] = value
    return PipelineConfig.from_dict(data, base)


@dataclass
class StageReport:
    name: str
    input: int
    kept: int
    dropped: int
    seconds: float = 0.0
    notes: dict[str, Any] = field(default_factory=dict)


@dataclass
class RunReport:
    stages: list[StageReport] = field(default_factory=list)
    manifest_errors: list[tuple[int, str]] = field(default_factory=list)
    ok: bool = True
    failed_stage: Optional[str] = None
    error: Optional[str] = None

    def stage(self, name: str) -> StageReport:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "failed_stage": self.failed_stage,
            "error": self.error,
            "manifest_errors": [{"line": n, "error": e} for n, e in self.manifest_errors],
            "stages": [asdict(s) for s in self.stages],
        }


# --- record stages ----------------------------------------------------------


@dataclass
class StageResult:
    kept: list
    dropped: list
    notes: dict[str, Any] = field(default_factory=dict)


def _split(records: Sequence[VideoRecord], name: str) -> StageResult:
    kept = [r for r in records if not r.filter_status[name].dropped]
    dropped = [r for r in records if r.filter_status[name].dropped]
    return StageResult(kept, dropped)


def validation_stage(records: Sequence[VideoRecord], cfg: PipelineConfig) -> StageResult:
    cfg.require("max_caption_len")
    out = []
    for r in records:
        rep = validate_record(r, cfg.max_caption_len)
        dec = Decision(KEPT) if rep.ok else Decision(DROPPED, None, ",".join(rep.codes))
        out.append(r.with_decision("validation", dec))
    return _split(out, "validation")


def _coverage_stage(records, cfg: PipelineConfig, name: str) -> StageResult:
    fn, threshold = (
        (coverage.text_coverage, cfg.text_threshold)
        if name == "text_coverage"
        else (coverage.face_coverage, cfg.face_threshold)
    )
    out = []
    unfilterable = 0
    for r in records:
        res = fn(r, find_sidecar(cfg.sidecar_dir, r.id), threshold)
        unfilterable += res.unfilterable
        out.append(r.with_decision(name, res.to_decision()))
    result = _split(out, name)
    result.notes["unfilterable"] = unfilterable
    return result


def text_stage(records, cfg: PipelineConfig) -> StageResult:
    return _coverage_stage(records, cfg, "text_coverage")


def face_stage(records, cfg: PipelineConfig) -> StageResult:
    return _coverage_stage(records, cfg, "face_coverage")


def _frame_dir(cfg: PipelineConfig, video_id: str) -> Optional[Path]:
    if cfg.frame_dir is None:
        return None
    d = Path(cfg.frame_dir) / video_id
    return d if d.is_dir() else None


def _static_decision(args) -> Decision:
    directory, n_frames, resolution, threshold, alpha, iterations = args
    if directory is None:
        return Decision(KEPT, None, "unfilterable; no frames")
    _, frames = motion.load_frame_dir(directory)
    picked = motion.pick_uniform(frames, n_frames)
    small = [motion.downscale(f, resolution, resolution) for f in picked]
    return motion.static_scene_decision(small, threshold, alpha, iterations)


def motion_stage(records, cfg: PipelineConfig) -> StageResult:
    jobs = [
        (_frame_dir(cfg, r.id), cfg.flow_frames, cfg.flow_resolution, cfg.flow_threshold, cfg.flow_alpha, cfg.flow_iterations)
        for r in records
    ]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            decisions = list(pool.map(_static_decision, jobs))
    else:
        decisions = [_static_decision(j) for j in jobs]
    out = [r.with_decision("static_scene", d) for r, d in zip(records, decisions)]
    result = _split(out, "static_scene")
    result.notes["unfilterable"] = sum(1 for d in decisions if d.score is None)
    return result


def clip_record(record: VideoRecord, span: motion.ClipSpan) -> VideoRecord:
    """Record for one clip; id and media path carry the span (media-fragment syntax)."""
    start_ms, end_ms = round(span.start_s * 1000), round(span.end_s * 1000)
    return replace(
        record,
        id=f"{record.id}@{start_ms}-{end_ms}",
        media_path=f"{record.media_path}#t={span.start_s:.3f},{span.end_s:.3f}",
        duration_s=span.duration_s,
    )


def scene_cut_stage(records, cfg: PipelineConfig) -> StageResult:
    """Split every video into clips; videos yielding no clip are dropped.

    Videos without frames are segmented by duration alone. Clips inherit the
    parent's captions and filter decisions.
    """
    kept, dropped = [], []
    n_clips = 0
    for r in records:
        cuts: list[float] = []
        directory = _frame_dir(cfg, r.id)
        if directory is not None:
            stamps, frames = motion.load_frame_dir(directory)
            if len(frames) >= 2:
                cuts = motion.detect_scene_cuts(frames, stamps, cfg.cut_threshold)
        spans = motion.segment_clips(r.duration_s, cuts, cfg.min_clip_s, cfg.max_clip_s)
        if not spans:
            dropped.append(r.with_decision("scene_cut", Decision(DROPPED, 0.0, f"no clip >= {cfg.min_clip_s:g}s")))
            continue
        whole = len(spans) == 1 and spans[0].start_s == 0.0 and spans[0].end_s == r.duration_s
        note = None if whole else f"{len(spans)} clip(s) from {len(cuts)} cut(s)"
        marked = r.with_decision("scene_cut", Decision(KEPT, float(len(spans)), note))
        clips = [marked] if whole else [clip_record(marked, s) for s in spans]
        n_clips += len(clips)
        kept.extend(clips)
    return StageResult(kept, dropped, {"clips": n_clips})


def balance_stage(records, cfg: PipelineConfig) -> StageResult:
    res = balance(records, cfg.balance_cap, cfg.seed)
    return StageResult(res.kept, res.dropped, {"targets": res.targets, "emptied": res.emptied})


def refine_stage(records, cfg: PipelineConfig) -> StageResult:
    cfg.require("redundancy_threshold")
    return _split(cap.annotate_redundancy(records, cfg.redundancy_threshold), "caption_redundancy")


# --- instruction, budget and packing stages --------------------------------


def load_template_set(cfg: PipelineConfig) -> dict[str, list[str]]:
    if cfg.templates is None:
        return cap.DEFAULT_TEMPLATES
    try:
        data = json.loads(Path(cfg.templates).read_text(encoding="utf-8"))
        return {**cap.DEFAULT_TEMPLATES, **cap.load_templates(data)}
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        raise ConfigError(f"bad template file {cfg.templates}: {exc}") from exc


def assemble_stage(records: Sequence[VideoRecord], items: Sequence[dict], cfg: PipelineConfig) -> StageResult:
    """Instruction samples from record captions plus raw instruction items.

    Items whose video is unknown or shorter than five seconds are excluded.
    Kept entries are ``(sample_id, InstructionSample)`` pairs.
    """
    templates = load_template_set(cfg)
    by_id = {r.id: r for r in records}
    counters: dict[str, int] = {}
    kept, dropped = [], []

    def add(sample: cap.InstructionSample):
        k = counters.get(sample.video_id, 0)
        counters[sample.video_id] = k + 1
        kept.append((f"{sample.video_id}:{sample.task_type}:{k}", sample))

    for r in records:
        for i, c in enumerate(r.captions):
            if c.text.strip():
                add(cap.caption_to_qa(c, cfg.caption_task, templates, f"{cfg.seed}:{r.id}:{i}", r.id))
    from_captions = len(kept)
    reasons: dict[str, int] = {}
    for n, item in enumerate(items):
        video = by_id.get(item.get("video_id"))
        if video is None:
            reason = "unknown_video"
        elif video.duration_s < MIN_DURATION_S:
            reason = "short_video"
        else:
            try:
                add(cap.item_to_sample(item, templates, f"{cfg.seed}:item:{n}"))
                continue
            except (KeyError, ValueError, IndexError, TypeError) as exc:
                reason = f"malformed_item: {exc}"
        dropped.append((n, reason))
        key = reason.split(":")[0]
        reasons[key] = reasons.get(key, 0) + 1
    return StageResult(kept, dropped, {"excluded": reasons, "from_captions": from_captions})


def sample_row(sample_id: str, sample: cap.InstructionSample) -> dict[str, Any]:
    return {"sample_id": sample_id, **sample.to_dict()}


def budget_rows(samples, durations: dict[str, float], stage_cfg) -> list[dict[str, Any]]:
    rows = []
    for sample_id, s in samples:
        duration = durations[s.video_id]
        n = dynamic_frame_count(duration, stage_cfg)
        acct = token_budget(stage_cfg, n, estimate_text_tokens(s.prompt + " " + s.response))
        rows.append(
            {
                "sample_id": sample_id,
                "video_id": s.video_id,
                "task_type": s.task_type,
                "n_frames": n,
                "timestamps": uniform_timestamps(duration, n),
                **acct.to_dict(),
            }
        )
    return rows


def pack_rows(rows: Sequence[dict[str, Any]], budget: int, group_by_task: bool = False) -> tuple[list[dict], dict[str, Any]]:
    """Pack admitted budget rows; returns plan rows and summary notes."""
    admitted = [r for r in rows if r.get("admitted", True)]
    groups: dict[str, list] = {}
    for r in admitted:
        key = r.get("task_type", "all") if group_by_task else "all"
        groups.setdefault(key, []).append((r["sample_id"], int(r["total"] if "total" in r else r["length"])))
    out: list[dict] = []
    used = slots = 0
    for key in sorted(groups):
        plan = pack_sequences(groups[key], budget)
        prefix = f"{key}-" if group_by_task else ""
        out.extend(plan_rows(plan, prefix))
        used += sum(c.length for c in plan.composites)
        slots += len(plan.composites) * budget
        log.debug("packed %s: utilization %.4f", key, utilization(plan))
    notes = {"composites": len(out), "utilization": used / slots if slots else None}
    return out, notes


# --- driver -----------------------------------------------------------------

RECORD_STAGES: list[tuple[str, Callable[..., StageResult]]] = [
    ("validation", validation_stage),
    ("text_coverage", text_stage),
    ("face_coverage", face_stage),
    ("static_scene", motion_stage),
    ("scene_cut", scene_cut_stage),
    ("category_balance", balance_stage),
    ("caption_redundancy", refine_stage),
]


def _finalize(tmp: Path, out_dir: Path) -> None:
    for src in sorted(tmp.rglob("*")):
        if src.is_file():
            dest = out_dir / src.relative_to(tmp)
            dest.parent.mkdir(parents=True, exist_ok=True)
            src.replace(dest)
    shutil.rmtree(tmp)


def run_pipeline(cfg: PipelineConfig) -> RunReport:
    """Run every stage in curation order and write all outputs under ``cfg.output_dir``.

    Outputs are staged in a scratch directory and moved into place only when
    every stage succeeds. On failure the partial outputs end up in
    ``<output_dir>/quarantine`` and :class:`PipelineError` carries the
    partial report.
    """
    cfg.require("input", "output_dir", "max_caption_len", "redundancy_threshold")
    in_path = Path(cfg.input).resolve()
    out_dir = Path(cfg.output_dir).resolve()
    if out_dir == in_path.parent and in_path.name in _OUTPUT_NAMES:
        raise ConfigError(f"input {in_path} would be overwritten by pipeline outputs")
    out_dir.mkdir(parents=True, exist_ok=True)
    tmp = out_dir / ".partial"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir()

    report = RunReport()
    current = "load"
    try:
        loaded = load_manifest(in_path)
        report.manifest_errors = loaded.errors
        records = loaded.records
        dropped_all: list[VideoRecord] = []

        for i, (name, fn) in enumerate(RECORD_STAGES, start=1):
            current = name
            t0 = time.perf_counter()
            res = fn(records, cfg)
            write_manifest(tmp / "stages" / f"{i:02d}_{name}.kept.jsonl", res.kept)
            write_manifest(tmp / "stages" / f"{i:02d}_{name}.dropped.jsonl", res.dropped)
            kept_parents = len(records) - len(res.dropped)
            report.stages.append(StageReport(name, len(records), kept_parents, len(res.dropped), time.perf_counter() - t0, res.notes))
            dropped_all.extend(res.dropped)
            records = res.kept
        write_manifest(tmp / "curated.jsonl", records)

        current = "assemble"
        t0 = time.perf_counter()
        items = read_jsonl(cfg.instructions) if cfg.instructions else []
        res = assemble_stage(records, items, cfg)
        write_jsonl(tmp / "instructions.jsonl", (sample_row(sid, s) for sid, s in res.kept))
        n_in = len(res.kept) + len(res.dropped)
        report.stages.append(StageReport("assemble", n_in, len(res.kept), len(res.dropped), time.perf_counter() - t0, res.notes))

        current = "budget"
        t0 = time.perf_counter()
        stage_cfg = cfg.stage_config()
        rows = budget_rows(res.kept, {r.id: r.duration_s for r in records}, stage_cfg)
        write_jsonl(tmp / "budget.jsonl", rows)
        admitted = sum(1 for r in rows if r["admitted"])
        report.stages.append(
            StageReport("budget", len(rows), admitted, len(rows) - admitted, time.perf_counter() - t0, {"stage": stage_cfg.name})
        )

        current = "pack"
        t0 = time.perf_counter()
        plan, notes = pack_rows(rows, stage_cfg.llm_budget_tokens, cfg.group_by_task)
        write_jsonl(tmp / "packing.jsonl", plan)
        report.stages.append(StageReport("pack", admitted, admitted, 0, time.perf_counter() - t0, notes))

        if cfg.figures:
            current = "report"
            from .plotting import write_report

            write_report(records + dropped_all, tmp / "report")
    except Exception as exc:
        report.ok = False
        report.failed_stage = current
        report.error = f"{type(exc).__name__}: {exc}"
        quarantine = out_dir / "quarantine"
        if quarantine.exists():
            shutil.rmtree(quarantine)
        tmp.replace(quarantine)
        (quarantine / "run_report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
        raise PipelineError(current, report, exc) from exc

    _finalize(tmp, out_dir)
    (out_dir / "run_report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return report


_OUTPUT_NAMES = {"curated.jsonl", "instructions.jsonl", "budget.jsonl", "packing.jsonl", "run_report.json"}
