import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import raster_union_area
from vidcurate.corpus import DetectionSidecar, FrameDetections, Rect, VideoRecord
from vidcurate.coverage import face_coverage, frame_coverage, text_coverage, union_area


def rects(*boxes):
    return [Rect(*b) for b in boxes]


def record(width=100, height=100):
    return VideoRecord("v", "v.mp4", 10.0, 25.0, width, height, "c", "en", "s")


def test_union_examples():
    assert union_area([]) == 0
    assert union_area(rects((0, 0, 10, 10))) == 100
    boxes = [(0, 0, 10, 10), (5, 5, 15, 15)]
    assert raster_union_area(boxes, 20) == 175
    assert union_area(rects(*boxes)) == 175


def test_union_nested_and_touching():
    assert union_area(rects((0, 0, 10, 10), (2, 2, 4, 4))) == 100
    assert union_area(rects((0, 0, 5, 5), (5, 0, 10, 5))) == 50
    assert union_area(rects((0, 0, 10, 10), (0, 0, 10, 10))) == 100


int_box = st.tuples(st.integers(0, 99), st.integers(0, 99), st.integers(1, 50), st.integers(1, 50)).map(
    lambda t: (t[0], t[1], t[0] + t[2], t[1] + t[3])
)


@given(st.lists(int_box, max_size=8))
def test_union_matches_raster(boxes):
    assert union_area(rects(*boxes)) == raster_union_area(boxes, 150)


@given(st.lists(int_box, max_size=8), st.randoms())
def test_union_order_and_duplicates(boxes, rnd):
    shuffled = boxes + boxes[: len(boxes) // 2]
    rnd.shuffle(shuffled)
    assert union_area(rects(*shuffled)) == union_area(rects(*boxes))


@given(st.lists(int_box, max_size=8), int_box)
def test_union_monotone(boxes, extra):
    assert union_area(rects(*boxes, extra)) >= union_area(rects(*boxes))


@given(st.lists(int_box, max_size=6))
def test_union_subadditive(boxes):
    total = sum((x1 - x0) * (y1 - y0) for x0, y0, x1, y1 in boxes)
    area = union_area(rects(*boxes))
    assert area <= total

    def overlap(a, b):
        return min(a[2], b[2]) > max(a[0], b[0]) and min(a[3], b[3]) > max(a[1], b[1])

    disjoint = all(not overlap(a, b) for i, a in enumerate(boxes) for b in boxes[i + 1 :])
    assert (area == total) == disjoint


@given(st.lists(int_box, min_size=1, max_size=6), st.integers(2, 5))
def test_ratio_scale_invariant(boxes, k):
    scaled = [tuple(c * k for c in b) for b in boxes]
    assert frame_coverage(rects(*boxes), 150, 150) == pytest.approx(frame_coverage(rects(*scaled), 150 * k, 150 * k), abs=1e-12)


def test_boxes_clipped_to_frame():
    assert frame_coverage(rects((50, 50, 500, 500)), 100, 100) == 0.25
    assert frame_coverage(rects((200, 200, 300, 300)), 100, 100) == 0.0


def sidecar_from_unions(text_unions=None, face_unions=None):
    frames = []
    n = max(len(text_unions or []), len(face_unions or []))
    for i in range(n):
        # a 100-pixel-high strip has area 100 * width
        t = rects((0, 0, text_unions[i] / 100, 100)) if text_unions and text_unions[i] else ()
        f = rects((0, 0, face_unions[i] / 100, 100)) if face_unions and face_unions[i] else ()
        frames.append(FrameDetections(float(i), tuple(t) if text_unions else None, tuple(f) if face_unions else None))
    return DetectionSidecar("v", tuple(frames))


def test_text_coverage_example():
    res = text_coverage(record(), sidecar_from_unions([3000, 1000, 500]), 0.25)
    assert res.per_frame_ratio == [0.30, 0.10, 0.05]
    assert res.max_ratio == 0.30
    assert res.decision == "dropped"
    assert res.threshold_used == 0.25
    assert res.notes == []


def test_text_coverage_zero_boxes_kept():
    res = text_coverage(record(), sidecar_from_unions([0, 0, 0]), 0.25)
    assert res.max_ratio == 0 and res.decision == "kept"


def test_full_frame_text_dropped():
    sc = DetectionSidecar("v", (FrameDetections(0.0, tuple(rects((0, 0, 100, 100))), ()),))
    for thr in (0.0, 0.5, 0.999):
        assert text_coverage(record(), sc, thr).decision == "dropped"


def test_missing_sidecar_kept_and_flagged():
    res = text_coverage(record(), None, 0.1)
    assert res.decision == "kept" and res.unfilterable
    dec = res.to_decision()
    assert dec.score is None and "unfilterable" in dec.note


def test_frame_count_mismatch_reported():
    res = text_coverage(record(), sidecar_from_unions([100, 200]), 0.5)
    assert res.decision == "kept"
    assert res.notes == ["expected 3 frames, found 2"]


def test_face_coverage_examples():
    res = face_coverage(record(), sidecar_from_unions(face_unions=[0, 0, 6000, 100, 0]), 0.4)
    assert res.max_ratio == pytest.approx(0.6)
    assert res.decision == "dropped"
    assert face_coverage(record(), sidecar_from_unions(face_unions=[0] * 5), 0.4).decision == "kept"
    full = sidecar_from_unions(face_unions=[10000] * 5)
    assert face_coverage(record(), full, 1.0).decision == "kept"


def test_face_filter_ignores_text_only_frames():
    sc = sidecar_from_unions(text_unions=[9000, 9000, 9000])
    res = face_coverage(record(), sc, 0.4)
    assert res.unfilterable and res.decision == "kept"


def test_random_large_sets_against_raster():
    rng = random.Random(7)
    for _ in range(50):
        boxes = []
        for _ in range(rng.randint(0, 10)):
            x0, y0 = rng.randint(0, 999), rng.randint(0, 999)
            boxes.append((x0, y0, rng.randint(x0 + 1, 1000), rng.randint(y0 + 1, 1000)))
        assert union_area(rects(*boxes)) == raster_union_area(boxes)
