from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vidcurate.balance import (
    UNKNOWN_CATEGORY,
    balance,
    balance_categories,
    balance_targets,
    category_histogram,
    category_table,
    dataset_report,
)
from vidcurate.corpus import Decision, VideoRecord


def rec(i, category, duration=10.0, language="en"):
    return VideoRecord(f"r{i:05d}", f"/m/{i}.mp4", duration, 25.0, 64, 64, category, language, "test")


def skewed_corpus():
    records = [rec(i, "A") for i in range(500)]
    for c in range(100):
        records += [rec(500 + 5 * c + k, f"c{c:03d}") for k in range(5)]
    return records


def test_skewed_fixture_targets():
    hist = category_histogram(skewed_corpus())
    assert balance_targets(hist.counts, 0.01) == {"A": 5}


def test_skewed_fixture_balanced():
    records = skewed_corpus()
    kept = balance_categories(records, 0.01, seed=3)
    counts = Counter(r.category for r in kept)
    assert len(kept) == 505
    assert counts["A"] == 5
    assert Fraction(counts["A"], len(kept)) == Fraction(5, 505)
    assert Fraction(counts["A"], len(kept)) < Fraction(1, 100)
    for c in range(100):
        assert counts[f"c{c:03d}"] == 5


def test_balanced_input_untouched():
    records = [rec(5 * c + k, f"c{c}") for c in range(100) for k in range(5)]
    res = balance(records, 0.01, seed=0)
    assert res.kept == records and res.dropped == [] and res.targets == {}


def test_dropped_records_are_annotated():
    res = balance(skewed_corpus(), 0.01, seed=1)
    assert len(res.dropped) == 495
    d = res.dropped[0].filter_status["category_balance"]
    assert d.decision == "dropped" and d.score == pytest.approx(0.5)
    kept_a = [r for r in res.kept if r.category == "A"]
    assert all(r.filter_status["category_balance"].decision == "kept" for r in kept_a)


def test_same_seed_same_output_and_seeds_differ():
    records = skewed_corpus()
    a = [r.to_dict() for r in balance_categories(records, 0.01, seed=11)]
    b = [r.to_dict() for r in balance_categories(records, 0.01, seed=11)]
    c = [r.to_dict() for r in balance_categories(records, 0.01, seed=12)]
    assert a == b
    assert a != c


def test_kept_records_stay_in_input_order():
    records = skewed_corpus()
    ids = [r.id for r in balance_categories(records, 0.01, seed=5)]
    assert ids == sorted(ids)


def test_cap_forces_empty_category():
    # two categories at 50%: nothing can stay below a 10% share of what remains
    records = [rec(i, "A") for i in range(10)] + [rec(10 + i, "B") for i in range(10)]
    res = balance(records, 0.1, seed=0)
    assert res.kept == [] and res.emptied == ["A", "B"]


def test_missing_category_goes_to_unknown():
    records = [rec(0, None), rec(1, ""), rec(2, "x")]
    hist = category_histogram(records)
    assert hist.counts == {UNKNOWN_CATEGORY: 2, "x": 1}
    assert hist.unknown == 2


def test_cap_validation():
    with pytest.raises(ValueError):
        balance_targets({"a": 1}, 0)
    with pytest.raises(ValueError):
        balance_targets({"a": 1}, 1.0)


counts_st = st.dictionaries(st.text("abcdefgh", min_size=1, max_size=3), st.integers(1, 300), min_size=1, max_size=12)
caps = st.sampled_from([0.01, 0.05, 0.1, 0.2, 0.25, 0.3, 0.5, 0.75])


@settings(max_examples=300)
@given(counts_st, caps)
def test_targets_invariants(counts, cap):
    targets = balance_targets(counts, cap)
    total = sum(counts.values())
    final = sum(targets.get(c, n) for c, n in counts.items())
    capf = Fraction(str(cap))
    for c, n in counts.items():
        if c in targets:
            # only categories originally above the cap are touched
            assert n > capf * total
            assert 0 <= targets[c] <= n
            if final:
                assert targets[c] < capf * final
            # maximal: one more record would reach the cap
            assert targets[c] == n or targets[c] + 1 >= capf * final
        else:
            assert n <= capf * total


@settings(max_examples=50, deadline=None)
@given(counts_st, caps, st.integers(0, 1000))
def test_balance_preserves_small_categories(counts, cap, seed):
    records = []
    for c, n in sorted(counts.items()):
        records += [rec(len(records), c) for _ in range(n)]
    res = balance(records, cap, seed)
    before, after = Counter(r.category for r in records), Counter(r.category for r in res.kept)
    for c, n in before.items():
        if c not in res.targets:
            assert after[c] == n
        else:
            assert after[c] == res.targets[c]
    assert len(res.kept) + len(res.dropped) == len(records)


def test_dataset_report():
    records = [rec(0, "a", 3.0, "zh"), rec(1, "a", 7.0), rec(2, "b", 45.0), rec(3, None, 5000.0)]
    records[2] = records[2].with_decision("text_coverage", Decision("dropped", 0.4))
    rep = dataset_report(records, top_k=2)
    assert rep.total == 4
    assert rep.categories == [("a", 2, 0.5), (UNKNOWN_CATEGORY, 1, 0.25), ("b", 1, 0.25)]
    assert rep.top_k == rep.categories[:2]
    bins = dict(rep.duration_histogram)
    assert bins["[0,5)"] == 1 and bins["[5,10)"] == 1 and bins["[30,60)"] == 1 and bins["[1200,inf)"] == 1
    assert sum(bins.values()) == 4
    assert rep.languages == {"en": 3, "zh": 1}
    assert rep.filter_drops == {"text_coverage": 1}
    assert category_table(rep) == rep.categories
    assert rep.to_dict()["categories"][0] == {"category": "a", "count": 2, "share": 0.5}


def test_dataset_report_empty():
    assert dataset_report([]).total == 0
