"""Dense optical flow, static-scene scoring, scene cuts and clip segmentation.

Frames are 2-D ``float64`` arrays with values in ``[0, 1]`` (rows = height).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import DROPPED, KEPT, Decision

# Engineering defaults, not published values.
DEFAULT_FLOW_THRESHOLD = 0.05
DEFAULT_CUT_THRESHOLD = 0.30
DEFAULT_MIN_CLIP_S = 5.0
DEFAULT_MAX_CLIP_S = 60.0
DEFAULT_FLOW_ALPHA = 1.0
DEFAULT_FLOW_ITERATIONS = 100
FLOW_RESOLUTION = 128
STATIC_SCENE_FRAMES = 5


@dataclass(frozen=True)
class FlowField:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ValueError("u and v must be 2-D arrays of equal shape")
        if not (np.isfinite(self.u).all() and np.isfinite(self.v).all()):
            raise ValueError("flow contains non-finite values")

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]


@dataclass(frozen=True)
class ClipSpan:
    start_s: float
    end_s: float

    def __post_init__(self):
        if not self.end_s > self.start_s:
            raise ValueError(f"empty clip span [{self.start_s}, {self.end_s})")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


def as_frame(pixels) -> np.ndarray:
    frame = np.asarray(pixels, dtype=np.float64)
    if frame.ndim != 2 or frame.size == 0:
        raise ValueError(f"frame must be a non-empty 2-D array, got shape {frame.shape}")
    return frame


def _area_weights(src: int, dst: int) -> np.ndarray:
    # weights[i, j] = overlap of source cell j with target cell i, over the target cell size
    edges = np.arange(dst + 1) * (src / dst)
    lo, hi = edges[:-1, None], edges[1:, None]
    cells = np.arange(src)[None, :]
    overlap = np.clip(np.minimum(hi, cells + 1) - np.maximum(lo, cells), 0.0, None)
    return overlap / (src / dst)


def downscale(frame, target_w: int, target_h: int) -> np.ndarray:
    """Area-averaged resize to ``target_h x target_w``.

    Every source pixel contributes with weight proportional to its overlap
    with the target cell, so the mean brightness is preserved.
    """
    if target_w < 1 or target_h < 1:
        raise ValueError("target dimensions must be >= 1")
    frame = as_frame(frame)
    h, w = frame.shape
    if (h, w) == (target_h, target_w):
        return frame.copy()
    if h % target_h == 0 and w % target_w == 0:
        return frame.reshape(target_h, h // target_h, target_w, w // target_w).mean(axis=(1, 3))
    return _area_weights(h, target_h) @ frame @ _area_weights(w, target_w).T


def _neighbor_mean(f: np.ndarray) -> np.ndarray:
    p = np.pad(f, 1, mode="edge")
    return (p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:]) / 4.0


def image_gradients(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Central spatial differences of the frame average and the forward temporal difference."""
    mid = np.pad((a + b) / 2.0, 1, mode="edge")
    ix = (mid[1:-1, 2:] - mid[1:-1, :-2]) / 2.0
    iy = (mid[2:, 1:-1] - mid[:-2, 1:-1]) / 2.0
    return ix, iy, b - a


def horn_schunck(a, b, alpha: float = DEFAULT_FLOW_ALPHA, iterations: int = DEFAULT_FLOW_ITERATIONS) -> FlowField:
    """Horn-Schunck optical flow from ``a`` to ``b``.

    Jacobi iterations from zero flow, using the 4-neighbour average as the
    smoothness estimate. Edge pixels replicate their border, which makes
    every iteration a descent step on :func:`flow_energy`.
    """
    a, b = as_frame(a), as_frame(b)
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")

    ix, iy, it = image_gradients(a, b)
    denom = alpha * alpha + ix * ix + iy * iy
    u = np.zeros_like(a)
    v = np.zeros_like(a)
    for _ in range(iterations):
        u_bar = _neighbor_mean(u)
        v_bar = _neighbor_mean(v)
        step = (ix * u_bar + iy * v_bar + it) / denom
        u = u_bar - ix * step
        v = v_bar - iy * step
    return FlowField(u, v)


def flow_energy(a, b, flow: FlowField, alpha: float) -> float:
    """Horn-Schunck objective for ``flow``: data term plus alpha^2 times smoothness.

    The smoothness term sums squared differences over 4-connected pixel pairs
    with weight 1/4, matching the neighbour average used by the solver.
    """
    a, b = as_frame(a), as_frame(b)
    ix, iy, it = image_gradients(a, b)
    data = np.sum((ix * flow.u + iy * flow.v + it) ** 2)
    smooth = 0.0
    for f in (flow.u, flow.v):
        smooth += np.sum(np.diff(f, axis=0) ** 2) + np.sum(np.diff(f, axis=1) ** 2)
    return float(data + alpha * alpha * smooth / 4.0)


def mean_flow_magnitude(flow: FlowField) -> float:
    return float(np.mean(np.hypot(flow.u, flow.v)))


def static_scene_decision(
    frames: Sequence,
    threshold: float = DEFAULT_FLOW_THRESHOLD,
    alpha: float = DEFAULT_FLOW_ALPHA,
    iterations: int = DEFAULT_FLOW_ITERATIONS,
) -> Decision:
    """Drop near-static videos.

    The score is the mean flow magnitude averaged over consecutive frame
    pairs; the video is dropped when the score is strictly below
    ``threshold``. Fewer than two frames cannot be scored and are kept.
    """
    if len(frames) < 2:
        return Decision(KEPT, None, "unfilterable; fewer than 2 frames")
    mags = [
        mean_flow_magnitude(horn_schunck(f0, f1, alpha, iterations))
        for f0, f1 in zip(frames, frames[1:])
    ]
    score = float(np.mean(mags))
    return Decision(DROPPED if score < threshold else KEPT, score)


def detect_scene_cuts(frames: Sequence, timestamps: Sequence[float], cut_threshold: float = DEFAULT_CUT_THRESHOLD) -> list[float]:
    """Timestamps of content cuts.

    A cut lies between frames i and i+1 when their mean absolute pixel
    difference exceeds ``cut_threshold``; it is reported at the midpoint of
    the two timestamps.
    """
    if len(frames) != len(timestamps):
        raise ValueError(f"{len(frames)} frames but {len(timestamps)} timestamps")
    if any(t1 <= t0 for t0, t1 in zip(timestamps, timestamps[1:])):
        raise ValueError("timestamps must be strictly increasing")
    cuts = []
    prev = None
    for i, frame in enumerate(frames):
        cur = as_frame(frame)
        if prev is not None:
            if prev.shape != cur.shape:
                raise ValueError(f"frame {i} shape {cur.shape} differs from {prev.shape}")
            if float(np.mean(np.abs(cur - prev))) > cut_threshold:
                cuts.append((timestamps[i - 1] + timestamps[i]) / 2.0)
        prev = cur
    return cuts


def segment_clips(
    duration_s: float,
    cuts: Sequence[float],
    min_len_s: float = DEFAULT_MIN_CLIP_S,
    max_len_s: float = DEFAULT_MAX_CLIP_S,
) -> list[ClipSpan]:
    """Split ``[0, duration_s)`` at ``cuts``, break long spans, drop short ones.

    Spans longer than ``max_len_s`` are cut into the fewest equal pieces that
    fit; pieces shorter than ``min_len_s`` are discarded afterwards.
    """
    if not min_len_s < max_len_s:
        raise ValueError("min_len_s must be < max_len_s")
    bounds = [0.0] + [c for c in cuts if 0.0 < c < duration_s] + [float(duration_s)]
    spans = []
    for start, end in zip(bounds, bounds[1:]):
        length = end - start
        if length <= 0:
            continue
        pieces = max(1, math.ceil(length / max_len_s))
        edges = [start + length * k / pieces for k in range(pieces)] + [end]
        for s, e in zip(edges, edges[1:]):
            if e - s >= min_len_s and e > s:
                spans.append(ClipSpan(s, e))
    return spans


# --- PGM frame files ------------------------------------------------------

_PGM_TOKEN = re.compile(rb"(?:\s*(?:#[^\n]*\n)?)*\s*(\S+)")


def read_pgm(path: str | Path) -> np.ndarray:
    """Load a binary (P5) 8-bit PGM as floats in [0, 1]."""
    data = Path(path).read_bytes()
    pos = 0
    fields = []
    for _ in range(4):
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise ValueError(f"{path}: truncated PGM header")
        fields.append(m.group(1))
        pos = m.end()
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {magic!r})")
    if not 0 < maxval < 256:
        raise ValueError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    pos += 1  # single whitespace byte before the raster
    raster = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    return raster.reshape(h, w).astype(np.float64) / maxval


def write_pgm(path: str | Path, frame) -> None:
    frame = as_frame(frame)
    h, w = frame.shape
    raster = np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + raster.tobytes())


_MS = re.compile(r"(\d+)(?!.*\d)")


def frame_timestamp_ms(path: str | Path) -> int:
    """Millisecond timestamp carried by the last digit run of the file stem."""
    m = _MS.search(Path(path).stem)
    if m is None:
        raise ValueError(f"no timestamp in frame file name {Path(path).name!r}")
    return int(m.group(1))


def load_frame_dir(directory: str | Path) -> tuple[list[float], list[np.ndarray]]:
    """All PGM frames of a directory sorted by timestamp; returns (seconds, frames)."""
    paths = sorted(Path(directory).glob("*.pgm"), key=frame_timestamp_ms)
    stamps = [frame_timestamp_ms(p) / 1000.0 for p in paths]
    return stamps, [read_pgm(p) for p in paths]


def pick_uniform(items: Sequence, k: int) -> list:
    """``k`` items spread evenly over ``items`` (all of them when there are fewer)."""
    n = len(items)
    if n <= k:
        return list(items)
    if k == 1:
        return [items[n // 2]]
    return [items[round(i * (n - 1) / (k - 1))] for i in range(k)]
