"""First-fit-decreasing sequence packing with block-diagonal causal masks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence


@dataclass
class Composite:
    items: list[tuple[Hashable, int]] = field(default_factory=list)

    @property
    def length(self) -> int:
        return sum(n for _, n in self.items)

    @property
    def sample_ids(self) -> list:
        return [sid for sid, _ in self.items]

    @property
    def lengths(self) -> list[int]:
        return [n for _, n in self.items]


@dataclass
class PackingPlan:
    composites: list[Composite]
    budget: int

    def __len__(self) -> int:
        return len(self.composites)


@dataclass(frozen=True)
class MaskDescriptor:
    """Block-diagonal causal mask as half-open segment intervals."""

    total_len: int
    segment_bounds: tuple[tuple[int, int], ...]

    def segment_of(self, pos: int) -> int:
        for k, (lo, hi) in enumerate(self.segment_bounds):
            if lo <= pos < hi:
                return k
        raise IndexError(f"position {pos} outside [0, {self.total_len})")

    def allows(self, i: int, j: int) -> bool:
        """Whether query position ``i`` may attend to key position ``j``."""
        return j <= i and self.segment_of(i) == self.segment_of(j)

    def allowed_pairs(self) -> int:
        return sum((hi - lo) * (hi - lo + 1) // 2 for lo, hi in self.segment_bounds)

    def position_ids(self) -> list[int]:
        """Positions restarting at 0 for every segment."""
        return [p - lo for lo, hi in self.segment_bounds for p in range(lo, hi)]


def first_fit_index(residuals: Sequence[int], length: int) -> int:
    """Index of the first bin with room for ``length``, or -1 if a new bin is needed."""
    for i, room in enumerate(residuals):
        if room >= length:
            return i
    return -1


def pack_sequences(lengths: Iterable[tuple[Hashable, int]], budget: int) -> PackingPlan:
    """Pack ``(sample_id, length)`` pairs into composites of at most ``budget`` tokens.

    Samples are placed longest first (ties broken by sample id) into the first
    composite with enough room. Samples are never split.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    items = list(lengths)
    for sid, n in items:
        if n > budget:
            raise ValueError(f"sample {sid!r} has length {n} > budget {budget}")
        if n < 1:
            raise ValueError(f"sample {sid!r} has non-positive length {n}")
    items.sort(key=lambda it: (-it[1], it[0]))

    composites: list[Composite] = []
    residuals: list[int] = []
    for sid, n in items:
        i = first_fit_index(residuals, n)
        if i < 0:
            composites.append(Composite())
            residuals.append(budget)
            i = len(composites) - 1
        composites[i].items.append((sid, n))
        residuals[i] -= n
    return PackingPlan(composites, budget)


def build_mask(composite: Composite) -> MaskDescriptor:
    if not composite.items:
        raise ValueError("composite is empty")
    bounds = []
    pos = 0
    for _, n in composite.items:
        bounds.append((pos, pos + n))
        pos += n
    return MaskDescriptor(pos, tuple(bounds))


def utilization(plan: PackingPlan) -> float:
    """Fraction of the allocated ``len(composites) * budget`` tokens that hold samples."""
    if not plan.composites:
        raise ValueError("empty plan")
    used = sum(c.length for c in plan.composites)
    return used / (len(plan.composites) * plan.budget)


def plan_rows(plan: PackingPlan, prefix: str = "") -> list[dict]:
    """One output row per composite: id, ordered sample ids, lengths and segment bounds."""
    rows = []
    for k, comp in enumerate(plan.composites):
        mask = build_mask(comp)
        rows.append(
            {
                "composite_id": f"{prefix}{k:06d}",
                "sample_ids": comp.sample_ids,
                "lengths": comp.lengths,
                "segment_bounds": [list(b) for b in mask.segment_bounds],
            }
        )
    return rows
