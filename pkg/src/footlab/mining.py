"""Temporal entry building, Apriori itemset mining, and association rules.

An entry is the set of episode descriptions and activity class names that
co-occur inside one sliding window of a match. Rules are mined from
frequent itemsets or loaded from a hand-written document.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

from .errors import FormatError

LEVEL_CONFIDENCE = {"High": 0.9, "Medium": 0.6, "Low": 0.3}


@dataclass(frozen=True)
class Entry:
    items: frozenset[str]
    match_id: str
    player: str | None
    interval: tuple[float, float]
    half: int

    def __post_init__(self):
        if not self.items:
            raise ValueError("entry items must be non-empty")
        if self.interval[0] >= self.interval[1]:
            raise ValueError("entry interval must have positive length")


@dataclass(frozen=True)
class Itemset:
    items: tuple[str, ...]  # sorted
    support: float


@dataclass(frozen=True)
class AssociationRule:
    antecedent: tuple[str, ...]  # sorted, disjoint from consequent
    consequent: tuple[str, ...]
    confidence: float
    support: float | None = None
    conviction: float | None = None
    origin: str = "mined"
    qualitative_confidence: str | None = None

    def __post_init__(self):
        if not self.antecedent or not self.consequent:
            raise ValueError("rule sides must be non-empty")
        if set(self.antecedent) & set(self.consequent):
            raise ValueError("antecedent and consequent must be disjoint")


def _scope_key(row, scope: str):
    if scope == "per-player":
        return getattr(row, "player", None)
    if scope == "per-team":
        return getattr(row, "team", None)
    if scope == "per-match":
        return None
    raise ValueError(f"unknown scope {scope!r}")


def _row_item(row) -> str:
    # episodes carry a description, activity rows an activity class
    if hasattr(row, "description"):
        return row.description
    return row.activity_class


def build_entries(
    rows: Sequence, window_s: float, step_s: float, scope: str = "per-player"
) -> list[Entry]:
    """Windows of item sets per (match, half, scope key).

    A row belongs to window [t, t+window_s) when row.start_s < t+window_s
    and row.end_s >= t. Empty windows are dropped; duplicate descriptions
    inside one window collapse (set semantics).
    """
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    if not 0 < step_s <= window_s:
        raise ValueError("step_s must be in (0, window_s]")

    groups: dict[tuple, list] = {}
    for row in rows:
        half = getattr(row, "half", None)
        if half is None:
            half = getattr(row, "period_id")
        key = (row.match_id, half, _scope_key(row, scope))
        groups.setdefault(key, []).append(row)

    entries = []
    for (match_id, half, scope_key), group in sorted(groups.items(), key=lambda kv: str(kv[0])):
        t0 = min(r.start_s for r in group)
        t_max = max(r.end_s for r in group)
        k = 0
        while True:
            start = t0 + k * step_s
            if start > t_max:
                break
            k += 1
            end = start + window_s
            items = frozenset(
                _row_item(r) for r in group if r.start_s < end and r.end_s >= start
            )
            if items:
                entries.append(
                    Entry(
                        items=items,
                        match_id=match_id,
                        player=scope_key if scope == "per-player" else None,
                        interval=(start, end),
                        half=half,
                    )
                )
    return entries


def apriori(entries: Sequence[Entry], min_support: float) -> list[Itemset]:
    """All itemsets with support >= min_support, level-wise with pruning.

    Candidates come from joining frequent (k-1)-itemsets that share their
    first k-2 items; any candidate with an infrequent subset is pruned
    before counting. Output is sorted by (size, items).
    """
    if not entries:
        raise ValueError("apriori requires a non-empty entry list")
    if not 0 < min_support <= 1:
        raise ValueError("min_support must be in (0, 1]")
    total = len(entries)
    sets = [e.items for e in entries]

    counts: dict[tuple[str, ...], int] = {}
    for s in sets:
        for item in s:
            counts[(item,)] = counts.get((item,), 0) + 1
    frequent = {
        items: c for items, c in counts.items() if c / total >= min_support
    }
    result = dict(frequent)
    level = sorted(frequent)
    k = 2
    while level:
        prev = set(level)
        candidates = []
        for i in range(len(level)):
            for j in range(i + 1, len(level)):
                a, b = level[i], level[j]
                if a[: k - 2] != b[: k - 2]:
                    # sorted level: no later pair can share the prefix either
                    break
                cand = tuple(sorted(set(a) | set(b)))
                if all(tuple(sub) in prev for sub in combinations(cand, k - 1)):
                    candidates.append(cand)
        if not candidates:
            break
        cand_sets = [(c, frozenset(c)) for c in candidates]
        counts = {}
        for s in sets:
            for cand, cset in cand_sets:
                if cset <= s:
                    counts[cand] = counts.get(cand, 0) + 1
        level = sorted(c for c, n in counts.items() if n / total >= min_support)
        for c in level:
            result[c] = counts[c]
        k += 1
    return [
        Itemset(items=items, support=result[items] / total)
        for items in sorted(result, key=lambda it: (len(it), it))
    ]


def conviction(consequent_support: float, confidence: float) -> float:
    """(1 - support(Y)) / (1 - confidence); +inf for exceptionless rules."""
    if confidence >= 1.0:
        return math.inf
    return (1.0 - consequent_support) / (1.0 - confidence)


def generate_rules(
    itemsets: Sequence[Itemset], entries: Sequence[Entry], min_confidence: float
) -> list[AssociationRule]:
    """Rules X -> Z\\X for every frequent Z with at least 2 items.

    support = support(Z); confidence = support(Z)/support(X);
    conviction from the consequent support. Output is sorted by
    confidence descending, then antecedent/consequent items.
    """
    if not entries:
        raise ValueError("entries must be non-empty")
    support = {it.items: it.support for it in itemsets}
    total = len(entries)
    # recount singleton supports: cheap, and catches itemsets mined elsewhere
    singles: dict[str, int] = {}
    for e in entries:
        for item in e.items:
            singles[item] = singles.get(item, 0) + 1
    for items, s in support.items():
        if len(items) == 1 and abs(s - singles.get(items[0], 0) / total) > 1e-12:
            raise ValueError(f"support of {items} does not match the given entries")
        if abs(s * total - round(s * total)) > 1e-6:
            raise ValueError(f"support of {items} is not consistent with {total} entries")

    rules = []
    for itemset in itemsets:
        z = itemset.items
        if len(z) < 2:
            continue
        for r in range(1, len(z)):
            for x in combinations(z, r):
                y = tuple(sorted(set(z) - set(x)))
                if x not in support or y not in support:
                    raise ValueError(f"itemsets are missing a subset of {z}")
                conf = itemset.support / support[x]
                if conf < min_confidence:
                    continue
                rules.append(
                    AssociationRule(
                        antecedent=tuple(sorted(x)),
                        consequent=y,
                        confidence=conf,
                        support=itemset.support,
                        conviction=conviction(support[y], conf),
                        origin="mined",
                    )
                )
    rules.sort(key=lambda rule: (-rule.confidence, rule.antecedent, rule.consequent))
    return rules


_MANUAL_RULE_RE = re.compile(r"^\{(?P<x>[^{}]*)\}\s*->\s*\{(?P<y>[^{}]*)\}\s*:\s*(?P<level>\S+)$")


def _split_items(raw: str) -> tuple[str, ...]:
    items = [part.strip() for part in re.split(r"[;,]", raw) if part.strip()]
    return tuple(sorted(set(items)))


def load_manual_rules(
    text: str, level_confidence: dict[str, float] | None = None
) -> list[AssociationRule]:
    """Parse hand-written rules, one ``{...} -> {...} : Level`` per line.

    Items split on ';' or ','. Level names map to numeric confidence for
    thresholding (High 0.9, Medium 0.6, Low 0.3 by default); support and
    conviction stay absent.
    """
    levels = level_confidence or LEVEL_CONFIDENCE
    rules = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        m = _MANUAL_RULE_RE.match(stripped)
        if not m:
            raise FormatError(f"line {line_no}: cannot parse rule {stripped!r}", row=line_no)
        x = _split_items(m.group("x"))
        y = _split_items(m.group("y"))
        level = m.group("level")
        if level not in levels:
            raise FormatError(f"line {line_no}: unknown level {level!r}", row=line_no)
        if not x or not y:
            raise FormatError(f"line {line_no}: empty itemset", row=line_no)
        if set(x) & set(y):
            raise FormatError(
                f"line {line_no}: antecedent and consequent overlap", row=line_no
            )
        rules.append(
            AssociationRule(
                antecedent=x,
                consequent=y,
                confidence=levels[level],
                origin="manual",
                qualitative_confidence=level,
            )
        )
    return rules


def write_rules_file(rules: Sequence[AssociationRule]) -> bytes:
    """Pipe-delimited rules table; items ';'-joined, +inf rendered ``inf``."""
    lines = ["antecedent|consequent|support|confidence|conviction|origin|level"]
    for r in rules:

        def fmt(v: float | None) -> str:
            if v is None:
                return ""
            if math.isinf(v):
                return "inf"
            return repr(v)

        lines.append(
            "|".join(
                [
                    ";".join(r.antecedent),
                    ";".join(r.consequent),
                    fmt(r.support),
                    fmt(r.confidence),
                    fmt(r.conviction),
                    r.origin,
                    r.qualitative_confidence or "",
                ]
            )
        )
    return ("\n".join(lines) + "\n").encode()


def read_rules_file(data: bytes) -> list[AssociationRule]:
    lines = data.decode().splitlines()
    if not lines or lines[0] != "antecedent|consequent|support|confidence|conviction|origin|level":
        raise FormatError("unrecognized rules file header")
    rules = []
    for row_no, line in enumerate(lines[1:], start=1):
        if not line.strip():
            continue
        parts = line.split("|")
        if len(parts) != 7:
            raise FormatError(f"row {row_no}: expected 7 fields, got {len(parts)}", row=row_no)
        ant, cons, sup, conf, conv, origin, level = parts

        def num(token: str) -> float | None:
            if token == "":
                return None
            if token == "inf":
                return math.inf
            try:
                return float(token)
            except ValueError:
                raise FormatError(f"row {row_no}: bad number {token!r}", row=row_no) from None

        confidence = num(conf)
        if confidence is None:
            raise FormatError(f"row {row_no}: confidence is required", row=row_no)
        rules.append(
            AssociationRule(
                antecedent=tuple(sorted(filter(None, ant.split(";")))),
                consequent=tuple(sorted(filter(None, cons.split(";")))),
                confidence=confidence,
                support=num(sup),
                conviction=num(conv),
                origin=origin,
                qualitative_confidence=level or None,
            )
        )
    return rules
