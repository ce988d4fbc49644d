"""Category rebalancing and corpus statistics."""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .corpus import DROPPED, FILTER_NAMES, KEPT, Decision, VideoRecord

UNKNOWN_CATEGORY = "__unknown__"

# upper edges in seconds; the last bin is open
DURATION_BINS = (5.0, 10.0, 30.0, 60.0, 120.0, 300.0, 600.0, 1200.0)


def category_of(record: VideoRecord) -> str:
    return record.category if record.category else UNKNOWN_CATEGORY


@dataclass
class CategoryHistogram:
    counts: dict[str, int]
    total: int
    unknown: int = 0

    def share(self, category: str) -> float:
        return self.counts.get(category, 0) / self.total if self.total else 0.0


def category_histogram(records: Iterable[VideoRecord]) -> CategoryHistogram:
    """Exact per-category counts. Records without a category go to ``__unknown__``."""
    counts = Counter(category_of(r) for r in records)
    return CategoryHistogram(dict(sorted(counts.items())), sum(counts.values()), counts.get(UNKNOWN_CATEGORY, 0))


def _cap_fraction(cap: float) -> Fraction:
    frac = Fraction(str(cap))
    if not 0 < frac < 1:
        raise ValueError(f"cap_fraction must be in (0, 1), got {cap}")
    return frac


def _largest_below(cap: Fraction, total: int) -> int:
    # largest integer strictly below cap * total, never negative
    return max(0, math.ceil(cap * total) - 1)


def balance_targets(counts: dict[str, int], cap_fraction: float = 0.01) -> dict[str, int]:
    """Target count for every category that exceeds ``cap_fraction`` of the total.

    Targets are solved jointly against the post-balance total:
    ``target = min(count, largest a with a < cap * final_total)`` where
    ``final_total`` is the untouched mass plus all targets. Starting from the
    original total the iteration is monotone decreasing and stops at the
    fixpoint. Categories at or below the cap get no entry.
    """
    cap = _cap_fraction(cap_fraction)
    total = sum(counts.values())
    over = {c: n for c, n in counts.items() if n > cap * total}
    if not over:
        return {}
    untouched = total - sum(over.values())
    final = total
    while True:
        limit = _largest_below(cap, final)
        targets = {c: min(n, limit) for c, n in over.items()}
        new_final = untouched + sum(targets.values())
        if new_final == final:
            return targets
        final = new_final


@dataclass
class BalanceResult:
    kept: list[VideoRecord]
    dropped: list[VideoRecord]
    targets: dict[str, int]
    emptied: list[str] = field(default_factory=list)


def balance(records: Sequence[VideoRecord], cap_fraction: float = 0.01, seed: int = 0) -> BalanceResult:
    """Downsample majority categories; see :func:`balance_categories`.

    Dropped records are returned with a ``category_balance`` decision so the
    caller can report them.
    """
    hist = category_histogram(records)
    targets = balance_targets(hist.counts, cap_fraction)
    keep_idx: set[int] = set()
    by_cat: dict[str, list[int]] = {}
    for i, r in enumerate(records):
        by_cat.setdefault(category_of(r), []).append(i)
    for cat, idx in by_cat.items():
        if cat in targets:
            rng = random.Random(f"{seed}:{cat}")
            keep_idx.update(rng.sample(idx, targets[cat]))
        else:
            keep_idx.update(idx)

    kept, dropped = [], []
    for i, r in enumerate(records):
        cat = category_of(r)
        if i in keep_idx:
            if cat in targets:
                r = r.with_decision("category_balance", Decision(KEPT, hist.share(cat)))
            kept.append(r)
        else:
            note = f"category {cat} capped at {targets[cat]} of {hist.counts[cat]}"
            dropped.append(r.with_decision("category_balance", Decision(DROPPED, hist.share(cat), note)))
    emptied = sorted(c for c, n in targets.items() if n == 0)
    return BalanceResult(kept, dropped, targets, emptied)


def balance_categories(records: Sequence[VideoRecord], cap_fraction: float = 0.01, seed: int = 0) -> list[VideoRecord]:
    """Keep a subset in which no originally over-represented category reaches ``cap_fraction``.

    Sampling is uniform without replacement and reproducible for a given
    ``seed``; kept records stay in input order.
    """
    return balance(records, cap_fraction, seed).kept


@dataclass
class StatsReport:
    total: int
    categories: list[tuple[str, int, float]]
    duration_histogram: list[tuple[str, int]]
    languages: dict[str, int]
    filter_drops: dict[str, int]
    top_k: list[tuple[str, int, float]]

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "categories": [{"category": c, "count": n, "share": s} for c, n, s in self.categories],
            "duration_histogram": [{"bin": b, "count": n} for b, n in self.duration_histogram],
            "languages": self.languages,
            "filter_drops": self.filter_drops,
            "top_k": [{"category": c, "count": n, "share": s} for c, n, s in self.top_k],
        }


def _duration_bin_labels() -> list[str]:
    labels = []
    lo = 0.0
    for hi in DURATION_BINS:
        labels.append(f"[{lo:g},{hi:g})")
        lo = hi
    labels.append(f"[{lo:g},inf)")
    return labels


def dataset_report(records: Sequence[VideoRecord], top_k: int = 10) -> StatsReport:
    if not records:
        return StatsReport(0, [], [], {}, {}, [])
    hist = category_histogram(records)
    total = hist.total
    cats = sorted(((c, n, n / total) for c, n in hist.counts.items()), key=lambda t: (-t[1], t[0]))

    labels = _duration_bin_labels()
    bins = [0] * len(labels)
    for r in records:
        i = 0
        while i < len(DURATION_BINS) and r.duration_s >= DURATION_BINS[i]:
            i += 1
        bins[i] += 1

    languages = dict(sorted(Counter(r.language for r in records).items()))
    drops = {name: 0 for name in FILTER_NAMES}
    for r in records:
        for name, dec in r.filter_status.items():
            if dec.dropped:
                drops[name] = drops.get(name, 0) + 1
    drops = {k: v for k, v in drops.items() if v}
    return StatsReport(total, cats, list(zip(labels, bins)), languages, drops, cats[:top_k])


def category_table(report: StatsReport) -> list[tuple[str, int, float]]:
    """Flat (category, count, share) rows for CSV output and plotting."""
    return list(report.categories)

