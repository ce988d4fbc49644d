"""Command line entry point: ``vidcurate <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import pipeline as pl
from .corpus import ManifestError, RecordFormatError, VideoRecord, load_manifest, read_jsonl, write_jsonl, write_manifest
from .sampling import STAGE_NAMES, dynamic_frame_count, stratified_timestamps, uniform_timestamps

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("vidcurate")


def _common(p: argparse.ArgumentParser, output: bool = True) -> None:
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("--stage", choices=STAGE_NAMES, help="training stage whose budgets apply")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--input", help="input manifest")
    if output:
        p.add_argument("--output", help="output file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vidcurate", description="Video corpus curation and batch preparation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, thr_help in (("filter-text", "text_threshold"), ("filter-face", "face_threshold")):
        p = sub.add_parser(name, help=f"coverage filter ({thr_help})")
        _common(p)
        p.add_argument("--sidecars", dest="sidecar_dir")
        p.add_argument("--threshold", type=float)

    p = sub.add_parser("filter-motion", help="static scene filter")
    _common(p)
    p.add_argument("--frames", dest="frame_dir")
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("scene-cut", help="split videos into clips at content cuts")
    _common(p)
    p.add_argument("--frames", dest="frame_dir")
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("balance", help="cap over-represented categories")
    _common(p)
    p.add_argument("--cap", type=float)

    p = sub.add_parser("refine-captions", help="drop captions with redundant sentences")
    _common(p)
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("assemble-instructions", help="build instruction samples")
    _common(p)
    p.add_argument("--items", dest="instructions", help="raw instruction items (JSON Lines)")
    p.add_argument("--templates")

    p = sub.add_parser("sample-frames", help="frame timestamps per video")
    _common(p)
    p.add_argument("--stratified", type=int, metavar="K", help="one random frame in each of K segments")

    p = sub.add_parser("budget", help="token accounts for instruction samples")
    _common(p)
    p.add_argument("--videos", required=True, help="manifest with the videos' durations")

    p = sub.add_parser("pack", help="pack budgeted samples into composites")
    _common(p)
    p.add_argument("--budget", type=int, dest="budget_tokens")
    p.add_argument("--group-by-task", action="store_true", default=None)

    p = sub.add_parser("report", help="statistics, CSV tables and figures")
    _common(p)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("run", help="full pipeline")
    _common(p, output=False)
    p.add_argument("--output", dest="output_dir", help="output directory")
    return parser


_THRESHOLD_KEY = {
    "filter-text": "text_threshold",
    "filter-face": "face_threshold",
    "filter-motion": "flow_threshold",
    "scene-cut": "cut_threshold",
    "refine-captions": "redundancy_threshold",
}


def _config(args) -> pl.PipelineConfig:
    overrides = {
        "stage": args.stage,
        "seed": args.seed,
        "jobs": args.jobs,
        "input": args.input,
    }
    for key in ("sidecar_dir", "frame_dir", "instructions", "templates", "budget_tokens", "group_by_task", "output_dir"):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    if getattr(args, "threshold", None) is not None:
        overrides[_THRESHOLD_KEY[args.command]] = args.threshold
    if getattr(args, "cap", None) is not None:
        overrides["balance_cap"] = args.cap
    return pl.load_config(args.config, overrides)


def _io(cfg: pl.PipelineConfig, args) -> tuple[Path, Path]:
    if cfg.input is None or args.output is None:
        raise pl.ConfigError("--input and --output are required")
    src, dst = Path(cfg.input).resolve(), Path(args.output).resolve()
    if src == dst:
        raise pl.ConfigError("output must not overwrite the input")
    return src, dst


def _records(path: Path) -> list[VideoRecord]:
    loaded = load_manifest(path)
    for lineno, err in loaded.errors:
        log.warning("%s:%d: %s", path, lineno, err)
    return loaded.records


def _dropped_path(dst: Path) -> Path:
    return dst.with_name(dst.stem + ".dropped" + (dst.suffix or ".jsonl"))


def _record_stage(fn: Callable[..., pl.StageResult]):
    def command(cfg: pl.PipelineConfig, args) -> None:
        src, dst = _io(cfg, args)
        records = _records(src)
        res = fn(records, cfg)
        write_manifest(dst, res.kept)
        write_manifest(_dropped_path(dst), res.dropped)
        print(f"{args.command}: input {len(records)}, kept {len(records) - len(res.dropped)}, dropped {len(res.dropped)}")

    return command


def cmd_assemble(cfg: pl.PipelineConfig, args) -> None:
    src, dst = _io(cfg, args)
    items = read_jsonl(cfg.instructions) if cfg.instructions else []
    res = pl.assemble_stage(_records(src), items, cfg)
    write_jsonl(dst, (pl.sample_row(sid, s) for sid, s in res.kept))
    print(f"assemble-instructions: {len(res.kept)} samples, {len(res.dropped)} items excluded")


def cmd_sample_frames(cfg: pl.PipelineConfig, args) -> None:
    src, dst = _io(cfg, args)
    stage = cfg.stage_config()
    rows = []
    for r in _records(src):
        if args.stratified:
            stamps = stratified_timestamps(r.duration_s, args.stratified, f"{cfg.seed}:{r.id}")
        else:
            stamps = uniform_timestamps(r.duration_s, dynamic_frame_count(r.duration_s, stage))
        rows.append({"video_id": r.id, "n_frames": len(stamps), "timestamps": stamps})
    write_jsonl(dst, rows)
    print(f"sample-frames: {len(rows)} videos")


def cmd_budget(cfg: pl.PipelineConfig, args) -> None:
    from .captions import InstructionSample

    src, dst = _io(cfg, args)
    durations = {r.id: r.duration_s for r in _records(Path(args.videos))}
    samples = []
    for row in read_jsonl(src):
        try:
            samples.append((row["sample_id"], InstructionSample.from_dict(row)))
        except (KeyError, ValueError) as exc:
            raise RecordFormatError(f"bad instruction row {row!r}: {exc}") from exc
    missing = sorted({s.video_id for _, s in samples} - set(durations))
    if missing:
        raise RecordFormatError(f"videos missing from {args.videos}: {', '.join(missing[:5])}")
    rows = pl.budget_rows(samples, durations, cfg.stage_config())
    write_jsonl(dst, rows)
    admitted = sum(r["admitted"] for r in rows)
    print(f"budget: {admitted} of {len(rows)} samples admitted under {cfg.stage_config().llm_budget_tokens} tokens")


def cmd_pack(cfg: pl.PipelineConfig, args) -> None:
    src, dst = _io(cfg, args)
    budget = cfg.stage_config().llm_budget_tokens
    rows, notes = pl.pack_rows(read_jsonl(src), budget, cfg.group_by_task)
    write_jsonl(dst, rows)
    print(f"pack: {notes['composites']} composites, utilization {notes['utilization']}")


def cmd_report(cfg: pl.PipelineConfig, args) -> None:
    from .plotting import write_report

    src, dst = _io(cfg, args)
    rep = write_report(_records(src), dst, figures=not args.no_figures)
    print(f"report: {rep.total} records, {len(rep.categories)} categories -> {dst}")


def cmd_run(cfg: pl.PipelineConfig, args) -> None:
    report = pl.run_pipeline(cfg)
    for s in report.stages:
        print(f"{s.name:>20}: input {s.input:6d}  kept {s.kept:6d}  dropped {s.dropped:6d}  {s.seconds:7.3f}s")


COMMANDS = {
    "filter-text": _record_stage(pl.text_stage),
    "filter-face": _record_stage(pl.face_stage),
    "filter-motion": _record_stage(pl.motion_stage),
    "scene-cut": _record_stage(pl.scene_cut_stage),
    "balance": _record_stage(pl.balance_stage),
    "refine-captions": _record_stage(pl.refine_stage),
    "assemble-instructions": cmd_assemble,
    "sample-frames": cmd_sample_frames,
    "budget": cmd_budget,
    "pack": cmd_pack,
    "report": cmd_report,
    "run": cmd_run,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command](cfg, args)
    except pl.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except pl.PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(json.dumps(exc.report.to_dict(), indent=2), file=sys.stderr)
        if isinstance(exc.cause, pl.ConfigError):
            return EXIT_CONFIG
        if isinstance(exc.cause, (ManifestError, ValueError, OSError)):
            return EXIT_DATA
        return EXIT_INTERNAL
    except (ManifestError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
