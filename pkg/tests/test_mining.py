import math
from itertools import combinations

import numpy as np
import pytest

from footlab.errors import FormatError
from footlab.mining import (
    AssociationRule,
    Entry,
    apriori,
    build_entries,
    conviction,
    generate_rules,
    load_manual_rules,
    read_rules_file,
    write_rules_file,
)


def entry(items, start=0.0, end=10.0, player="p1", match="m1", half=1):
    return Entry(
        items=frozenset(items), match_id=match, player=player, interval=(start, end), half=half
    )


def entries_of(*item_lists):
    return [entry(items, start=i * 20.0, end=i * 20.0 + 10.0) for i, items in enumerate(item_lists)]


# --- brute-force oracle -------------------------------------------------------


def brute_force_itemsets(entries, min_support):
    """Enumerate every non-empty subset of the item universe and count."""
    universe = sorted({item for e in entries for item in e.items})
    total = len(entries)
    out = {}
    for size in range(1, len(universe) + 1):
        for combo in combinations(universe, size):
            cset = set(combo)
            count = sum(1 for e in entries if cset <= e.items)
            if count / total >= min_support:
                out[combo] = count / total
    return out


def random_corpus(rng, max_items=10, max_entries=50):
    n_items = int(rng.integers(2, max_items + 1))
    items = [f"i{i}" for i in range(n_items)]
    n_entries = int(rng.integers(1, max_entries + 1))
    lists = []
    for _ in range(n_entries):
        size = int(rng.integers(1, n_items + 1))
        lists.append(rng.choice(items, size=size, replace=False).tolist())
    return entries_of(*lists)


def test_apriori_hand_corpus():
    es = entries_of(["A", "B"], ["A", "B"], ["A", "C"])
    result = {it.items: it.support for it in apriori(es, 0.6)}
    assert result == {
        ("A",): 1.0,
        ("B",): pytest.approx(2 / 3),
        ("A", "B"): pytest.approx(2 / 3),
    }


def test_apriori_min_support_one_disjoint_entries():
    es = entries_of(["A"], ["B"], ["C"])
    assert apriori(es, 1.0) == []


def test_apriori_matches_brute_force():
    rng = np.random.default_rng(101)
    for _ in range(40):
        es = random_corpus(rng)
        min_support = float(rng.uniform(0.05, 0.9))
        mined = {it.items: it.support for it in apriori(es, min_support)}
        oracle = brute_force_itemsets(es, min_support)
        assert mined.keys() == oracle.keys()
        for items in mined:
            assert mined[items] == pytest.approx(oracle[items], abs=1e-12)


def test_apriori_downward_closure():
    rng = np.random.default_rng(7)
    es = random_corpus(rng)
    mined = {it.items for it in apriori(es, 0.2)}
    for items in mined:
        for r in range(1, len(items)):
            for sub in combinations(items, r):
                assert sub in mined


def test_apriori_output_sorted_and_validated():
    es = entries_of(["B", "A"], ["A"])
    out = apriori(es, 0.4)
    assert [it.items for it in out] == [("A",), ("B",), ("A", "B")]
    with pytest.raises(ValueError):
        apriori([], 0.5)
    with pytest.raises(ValueError):
        apriori(es, 0.0)


# --- rules ----------------------------------------------------------------------


def test_generate_rules_hand_corpus():
    es = entries_of(["A", "B"], ["A", "B"], ["A", "C"], ["B", "C"])
    itemsets = apriori(es, 0.25)
    rules = generate_rules(itemsets, es, min_confidence=0.0)
    rule = next(
        r for r in rules if r.antecedent == ("A",) and r.consequent == ("B",)
    )
    assert rule.support == pytest.approx(0.5)
    assert rule.confidence == pytest.approx(2 / 3)
    assert rule.conviction == pytest.approx(0.75)


def test_rule_metric_invariants():
    rng = np.random.default_rng(55)
    es = random_corpus(rng, max_items=8, max_entries=40)
    itemsets = apriori(es, 0.1)
    support = {it.items: it.support for it in itemsets}
    for rule in generate_rules(itemsets, es, min_confidence=0.0):
        assert rule.antecedent and rule.consequent
        assert not set(rule.antecedent) & set(rule.consequent)
        assert rule.confidence >= rule.support - 1e-12
        assert rule.conviction >= 0
        joint = tuple(sorted(rule.antecedent + rule.consequent))
        assert rule.confidence == pytest.approx(
            support[joint] / support[rule.antecedent], abs=1e-12
        )


def test_independent_items_conviction_near_one():
    rng = np.random.default_rng(99)
    lists = []
    for _ in range(10000):
        items = ["base"]
        if rng.random() < 0.5:
            items.append("X")
        if rng.random() < 0.4:
            items.append("Y")
        lists.append(items)
    es = entries_of(*lists)
    rules = generate_rules(apriori(es, 0.05), es, min_confidence=0.0)
    rule = next(r for r in rules if r.antecedent == ("X",) and r.consequent == ("Y",))
    assert 0.95 <= rule.conviction <= 1.05


def test_conviction_identities():
    # exceptionless rules get the +inf sentinel
    assert conviction(0.5, 1.0) == math.inf
    # reference rule check: confidence 0.90036 and conviction 1.95564 imply
    # consequent support 1 - 1.95564*(1 - 0.90036) = 0.80514
    implied = 1 - 1.95564 * (1 - 0.90036)
    assert implied == pytest.approx(0.80514, abs=1e-4)
    assert conviction(0.80514, 0.90036) == pytest.approx(1.95564, abs=1e-3)


def test_generate_rules_sorted_by_confidence():
    es = entries_of(["A", "B"], ["A", "B"], ["A", "C"], ["B", "C"], ["B", "A"])
    rules = generate_rules(apriori(es, 0.2), es, min_confidence=0.0)
    confidences = [r.confidence for r in rules]
    assert confidences == sorted(confidences, reverse=True)


def test_generate_rules_rejects_inconsistent_inputs():
    es = entries_of(["A", "B"], ["A", "B"])
    itemsets = apriori(es, 0.5)
    other = entries_of(["A", "B"], ["C"])
    with pytest.raises(ValueError):
        generate_rules(itemsets, other, min_confidence=0.0)


# --- entries ----------------------------------------------------------------------


class Row:
    def __init__(self, description=None, activity_class=None, start_s=0.0, end_s=1.0,
                 match_id="m1", player="p1", team="t1", half=1):
        if description is not None:
            self.description = description
        else:
            self.activity_class = activity_class
        self.start_s = start_s
        self.end_s = end_s
        self.match_id = match_id
        self.player = player
        self.team = team
        self.half = half


def test_build_entries_overlap_logic():
    rows = [
        Row(description="Pass", start_s=0.0, end_s=2.0),
        Row(description="Reception", start_s=3.0, end_s=4.0),
    ]
    entries = build_entries(rows, window_s=10.0, step_s=5.0)
    assert entries[0].items == frozenset({"Pass", "Reception"})


def test_build_entries_set_semantics():
    rows = [
        Row(description="Pass", start_s=0.0, end_s=2.0),
        Row(description="Pass", start_s=3.0, end_s=5.0),
    ]
    entries = build_entries(rows, window_s=10.0, step_s=10.0)
    assert entries[0].items == frozenset({"Pass"})


def test_build_entries_scope_partition():
    rows = [
        Row(description="Pass", player="A", start_s=0.0, end_s=2.0),
        Row(activity_class="Kicking", player="B", start_s=1.0, end_s=2.0),
    ]
    per_player = build_entries(rows, window_s=10.0, step_s=5.0, scope="per-player")
    assert all(len(e.items) == 1 for e in per_player)
    per_match = build_entries(rows, window_s=10.0, step_s=5.0, scope="per-match")
    assert any(e.items == frozenset({"Pass", "Kicking"}) for e in per_match)


def test_build_entries_shift_invariance():
    rows = [
        Row(description="Pass", start_s=3.0, end_s=5.0),
        Row(activity_class="Running", start_s=6.0, end_s=9.0),
        Row(description="Shot", start_s=14.0, end_s=15.0),
    ]
    base = build_entries(rows, window_s=8.0, step_s=4.0)
    delta = 1234.5
    shifted_rows = [
        Row(
            description=getattr(r, "description", None),
            activity_class=getattr(r, "activity_class", None),
            start_s=r.start_s + delta,
            end_s=r.end_s + delta,
        )
        for r in rows
    ]
    shifted = build_entries(shifted_rows, window_s=8.0, step_s=4.0)
    assert [e.items for e in base] == [e.items for e in shifted]
    for a, b in zip(base, shifted):
        assert b.interval[0] - a.interval[0] == pytest.approx(delta)


def test_build_entries_validation():
    with pytest.raises(ValueError):
        build_entries([], window_s=0.0, step_s=1.0)
    with pytest.raises(ValueError):
        build_entries([], window_s=5.0, step_s=6.0)


# --- manual rules ---------------------------------------------------------------


def test_load_manual_rules():
    text = """
# expert rules
{Pass} -> {Kicking} : High
{Header} -> {Jumping} : Medium
{Offensive moves} -> {Running} : Medium
{Shielding} -> {Standing still} : Low
"""
    rules = load_manual_rules(text)
    assert len(rules) == 4
    first = rules[0]
    assert first.antecedent == ("Pass",)
    assert first.consequent == ("Kicking",)
    assert first.confidence == 0.9
    assert first.origin == "manual"
    assert first.qualitative_confidence == "High"
    assert first.support is None and first.conviction is None
    assert rules[1].confidence == 0.6
    assert rules[3].confidence == 0.3


def test_manual_rule_errors():
    with pytest.raises(FormatError):
        load_manual_rules("{A} -> {A} : High")
    with pytest.raises(FormatError):
        load_manual_rules("{A} -> {B} : Sky-high")
    with pytest.raises(FormatError):
        load_manual_rules("A implies B")
    with pytest.raises(FormatError):
        load_manual_rules("{} -> {B} : Low")


def test_manual_rule_multi_item_antecedent():
    rules = load_manual_rules("{Reception; Construction} -> {Pass} : High")
    assert rules[0].antecedent == ("Construction", "Reception")


# --- rules file round trip -------------------------------------------------------


def test_rules_file_round_trip():
    es = entries_of(["A", "B"], ["A", "B"], ["A", "C"], ["B", "C"])
    mined = generate_rules(apriori(es, 0.25), es, min_confidence=0.0)
    manual = load_manual_rules("{Pass} -> {Kicking} : High")
    exceptionless = AssociationRule(
        antecedent=("Q",), consequent=("R",), confidence=1.0,
        support=0.5, conviction=math.inf, origin="mined",
    )
    rules = mined + manual + [exceptionless]
    data = write_rules_file(rules)
    assert b"inf" in data
    back = read_rules_file(data)
    assert back == rules
    with pytest.raises(FormatError):
        read_rules_file(b"not|a|rules|file\n")
