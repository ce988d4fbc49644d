"""Video corpus curation and long-context training-batch preparation."""

from .balance import balance_categories, dataset_report
from .captions import caption_redundancy, caption_to_qa, refine_captions
from .corpus import Caption, Decision, DetectionSidecar, Rect, VideoRecord, load_manifest, validate_record, write_manifest
from .coverage import face_coverage, text_coverage, union_area
from .motion import detect_scene_cuts, horn_schunck, segment_clips, static_scene_decision
from .packer import build_mask, pack_sequences, utilization
from .sampling import STAGES, StageConfig, TPEParams, add_tpe, patchify, token_budget, tpe

__version__ = "0.1.0"

__all__ = [
    "Caption",
    "Decision",
    "DetectionSidecar",
    "Rect",
    "STAGES",
    "StageConfig",
    "TPEParams",
    "VideoRecord",
    "add_tpe",
    "balance_categories",
    "build_mask",
    "caption_redundancy",
    "caption_to_qa",
    "dataset_report",
    "detect_scene_cuts",
    "face_coverage",
    "horn_schunck",
    "load_manifest",
    "pack_sequences",
    "patchify",
    "refine_captions",
    "segment_clips",
    "static_scene_decision",
    "text_coverage",
    "token_budget",
    "tpe",
    "union_area",
    "utilization",
    "validate_record",
    "write_manifest",
]
