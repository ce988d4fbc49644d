"""Frame sampling, temporal position embedding, patchify and token budgets.

Feature grids are ``float64`` arrays shaped ``(frames, height, width,
channels)``.
"""

from __future__ import annotations

import math
import random
import re
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Hashable, Optional, Sequence

import numpy as np

_CJK = re.compile(r"[\u3400-\u9fff\uf900-\ufaff]")

STAGE_NAMES = ("image_pt", "video_pt", "refine", "instruct", "long_video")


@dataclass(frozen=True)
class StageConfig:
    name: str
    resolution: int
    vit_tokens_per_frame: int
    llm_budget_tokens: int
    min_frames: int
    max_frames: int
    patchify_stride: tuple[int, int, int] = (1, 1, 1)
    separator_tokens_per_frame: int = 1

    def __post_init__(self):
        if self.min_frames < 1 or self.min_frames > self.max_frames:
            raise ValueError(f"{self.name}: need 1 <= min_frames <= max_frames")
        if len(self.patchify_stride) != 3 or min(self.patchify_stride) < 1:
            raise ValueError(f"{self.name}: patchify_stride must be three positive integers")
        if self.vit_tokens_per_frame % self.spatial_stride:
            raise ValueError(f"{self.name}: spatial stride does not divide the per-frame token count")
        if self.llm_budget_tokens * self.stride_product < self.vit_tokens_per_frame:
            raise ValueError(f"{self.name}: budget cannot hold a single condensed frame")
        if self.separator_tokens_per_frame < 0:
            raise ValueError(f"{self.name}: negative separator count")

    @property
    def stride_product(self) -> int:
        t, h, w = self.patchify_stride
        return t * h * w

    @property
    def spatial_stride(self) -> int:
        return self.patchify_stride[1] * self.patchify_stride[2]

    def with_overrides(self, **changes) -> "StageConfig":
        if "patchify_stride" in changes:
            changes["patchify_stride"] = tuple(changes["patchify_stride"])
        return replace(self, **changes)


# Budgets "10K" and "22K" are read as 10000 and 22000.
STAGES: dict[str, StageConfig] = {
    "image_pt": StageConfig("image_pt", 224, 256, 512, 1, 1, (1, 1, 1)),
    "video_pt": StageConfig("video_pt", 224, 256, 2560, 8, 8, (1, 1, 1)),
    "refine": StageConfig("refine", 448, 1024, 2560, 16, 16, (2, 2, 2)),
    "instruct": StageConfig("instruct", 448, 1024, 10000, 16, 64, (2, 2, 2)),
    "long_video": StageConfig("long_video", 448, 1024, 22000, 16, 160, (2, 2, 2)),
}


def get_stage(name: str) -> StageConfig:
    try:
        return STAGES[name]
    except KeyError:
        raise ValueError(f"unknown stage {name!r}; choose from {', '.join(STAGE_NAMES)}") from None


# --- timestamps -----------------------------------------------------------


def uniform_timestamps(duration_s: float, n: int) -> list[float]:
    """Centres of ``n`` equal bins over the video."""
    if n < 1 or not duration_s > 0:
        raise ValueError("need n >= 1 and duration_s > 0")
    step = duration_s / n
    return [(k + 0.5) * step for k in range(n)]


def stratified_timestamps(duration_s: float, k: int = 5, seed: Hashable = 0) -> list[float]:
    """One uniformly random timestamp inside each of ``k`` equal segments."""
    if k < 1 or not duration_s > 0:
        raise ValueError("need k >= 1 and duration_s > 0")
    rng = random.Random(str(seed))
    step = duration_s / k
    out = []
    for i in range(k):
        lo = i * step
        t = lo + rng.random() * step
        out.append(min(t, math.nextafter((i + 1) * step, lo)))
    return out


def dynamic_frame_count(duration_s: float, cfg: StageConfig) -> int:
    """About one frame per second, clamped to the stage's frame range."""
    if not duration_s > 0:
        raise ValueError("duration_s must be > 0")
    return max(cfg.min_frames, min(cfg.max_frames, math.ceil(duration_s)))


# --- temporal position embedding -----------------------------------------


@dataclass(frozen=True)
class TPEParams:
    d: int
    theta: float = 10000.0

    def __post_init__(self):
        if self.d < 2 or self.d % 2:
            raise ValueError(f"d must be a positive even integer, got {self.d}")
        if not self.theta > 1:
            raise ValueError(f"theta must be > 1, got {self.theta}")


def tpe(t: float, p: TPEParams) -> np.ndarray:
    """Sinusoidal embedding of a float timestamp.

    Entry k uses the scale ``theta ** (k / d)``; even entries take the sine,
    odd entries the cosine.
    """
    k = np.arange(p.d)
    phase = t / np.power(p.theta, k / p.d)
    return np.where(k % 2 == 0, np.sin(phase), np.cos(phase))


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 4:
        raise ValueError(f"feature grid must be (frames, h, w, c), got shape {grid.shape}")
    return grid


def add_tpe(grid, timestamps: Sequence[float], p: TPEParams) -> np.ndarray:
    """Add ``tpe(t_k)`` to every spatial position of frame k."""
    grid = _check_grid(grid)
    n, _, _, c = grid.shape
    if c != p.d:
        raise ValueError(f"embedding size {p.d} != channel count {c}")
    if len(timestamps) != n:
        raise ValueError(f"{len(timestamps)} timestamps for {n} frames")
    emb = np.stack([tpe(t, p) for t in timestamps])
    return grid + emb[:, None, None, :]


# --- patchify -------------------------------------------------------------


def patchify(grid, stride: Sequence[int], kernel_weights) -> np.ndarray:
    """Non-overlapping depthwise 3-D convolution.

    ``kernel_weights`` has shape ``(channels, t, h, w)`` with the kernel equal
    to the stride. Each output token is the per-channel weighted sum over one
    ``t x h x w`` window; no padding is applied.
    """
    grid = _check_grid(grid)
    n, h, w, c = grid.shape
    st, sh, sw = (int(s) for s in stride)
    if min(st, sh, sw) < 1:
        raise ValueError("stride components must be >= 1")
    if n % st or h % sh or w % sw:
        raise ValueError(f"grid {grid.shape[:3]} is not divisible by stride {(st, sh, sw)}")
    k = np.asarray(kernel_weights, dtype=np.float64)
    if k.shape != (c, st, sh, sw):
        raise ValueError(f"kernel shape {k.shape} != {(c, st, sh, sw)}")
    windows = grid.reshape(n // st, st, h // sh, sh, w // sw, sw, c)
    return np.einsum("atbhcwk,kthw->abck", windows, k)


def uniform_kernel(channels: int, stride: Sequence[int]) -> np.ndarray:
    """Averaging kernel (every weight ``1 / prod(stride)``)."""
    st, sh, sw = stride
    return np.full((channels, st, sh, sw), 1.0 / (st * sh * sw))


def pad_frames(grid, multiple: int) -> np.ndarray:
    """Repeat the last frame until the frame count divides ``multiple``."""
    grid = _check_grid(grid)
    extra = (-grid.shape[0]) % multiple
    if not extra:
        return grid
    return np.concatenate([grid, np.repeat(grid[-1:], extra, axis=0)])


# --- sequence layout ------------------------------------------------------


@dataclass
class ConcatLayout:
    total_len: int
    separator_positions: list[int]
    frame_spans: list[tuple[int, int]]
    frame_order: list[int] = field(default_factory=list)


def concat_layout(
    n_frames: int,
    tokens_per_frame: int,
    separators_per_frame: int = 1,
    timestamps: Optional[Sequence[float]] = None,
) -> ConcatLayout:
    """Token layout ``[sep, frame, sep, frame, ...]`` with frames in timestamp order.

    ``frame_order[j]`` is the input index of the j-th frame block.
    """
    if n_frames < 1 or tokens_per_frame < 0 or separators_per_frame < 0:
        raise ValueError("need n_frames >= 1 and non-negative token counts")
    if timestamps is None:
        order = list(range(n_frames))
    else:
        if len(timestamps) != n_frames:
            raise ValueError(f"{len(timestamps)} timestamps for {n_frames} frames")
        order = sorted(range(n_frames), key=lambda i: (timestamps[i], i))
    seps, spans = [], []
    pos = 0
    for _ in range(n_frames):
        seps.extend(range(pos, pos + separators_per_frame))
        pos += separators_per_frame
        spans.append((pos, pos + tokens_per_frame))
        pos += tokens_per_frame
    return ConcatLayout(pos, seps, spans, order)


def concat_frames(grid, timestamps: Sequence[float], separator) -> np.ndarray:
    """Flatten a feature grid into a ``(tokens, c)`` sequence following :func:`concat_layout`.

    ``separator`` is a ``(s, c)`` block inserted before each frame.
    """
    grid = _check_grid(grid)
    n, h, w, c = grid.shape
    sep = np.asarray(separator, dtype=np.float64).reshape(-1, c)
    layout = concat_layout(n, h * w, sep.shape[0], timestamps)
    out = np.empty((layout.total_len, c))
    for block, (lo, hi) in zip(layout.frame_order, layout.frame_spans):
        out[lo - sep.shape[0] : lo] = sep
        out[lo:hi] = grid[block].reshape(h * w, c)
    return out


# --- token budget ---------------------------------------------------------


@dataclass(frozen=True)
class TokenAccount:
    visual_tokens: int
    separator_tokens: int
    text_tokens: int
    total: int
    budget: int
    admitted: bool
    violation: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "visual_tokens": self.visual_tokens,
            "separator_tokens": self.separator_tokens,
            "text_tokens": self.text_tokens,
            "total": self.total,
            "budget": self.budget,
            "admitted": self.admitted,
            "violation": self.violation,
        }


def visual_tokens(cfg: StageConfig, n_frames: int) -> int:
    """Condensed visual tokens for ``n_frames``.

    A frame count that the temporal stride does not divide is padded up to
    the next multiple, mirroring :func:`pad_frames`.
    """
    st = cfg.patchify_stride[0]
    return -(-n_frames // st) * (cfg.vit_tokens_per_frame // cfg.spatial_stride)


def token_budget(cfg: StageConfig, n_frames: int, text_tokens: int) -> TokenAccount:
    """Exact integer token account for one sample under a stage budget.

    The account is returned either way; ``admitted`` is False when the total
    exceeds the budget and ``violation`` names the first term that broke it.
    """
    if not 1 <= n_frames <= cfg.max_frames:
        raise ValueError(f"n_frames {n_frames} outside [1, {cfg.max_frames}] for stage {cfg.name}")
    if text_tokens < 0:
        raise ValueError("text_tokens must be >= 0")
    vis = visual_tokens(cfg, n_frames)
    sep = n_frames * cfg.separator_tokens_per_frame
    total = vis + sep + text_tokens
    budget = cfg.llm_budget_tokens
    violation = None
    if vis > budget:
        violation = "visual_tokens"
    elif vis + sep > budget:
        violation = "separator_tokens"
    elif total > budget:
        violation = "text_tokens"
    return TokenAccount(vis, sep, text_tokens, total, budget, violation is None, violation)


def estimate_text_tokens(text: str) -> int:
    """Rough token count: one per CJK character plus one per other word."""
    return len(_CJK.findall(text)) + len(_CJK.sub(" ", text).split())


# --- binary grid fixtures -------------------------------------------------


def write_grid(path: str | Path, grid) -> None:
    """Four little-endian uint64 dims followed by little-endian float64 values."""
    grid = _check_grid(grid)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4Q", *grid.shape))
        fh.write(np.ascontiguousarray(grid, dtype="<f8").tobytes())


def read_grid(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 32:
        raise ValueError(f"{path}: truncated grid header")
    dims = struct.unpack_from("<4Q", data)
    count = math.prod(dims)
    if len(data) != 32 + 8 * count:
        raise ValueError(f"{path}: expected {count} values for dims {dims}")
    return np.frombuffer(data, dtype="<f8", offset=32).astype(np.float64).reshape(dims)
