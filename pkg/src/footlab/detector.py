"""Rule-based detection of suspicious annotation windows.

A warning is raised when an entry contains a rule's antecedent but not its
whole consequent. Annotators tune sensitivity through thresholds on the
rule metrics; raising any threshold can only shrink the active rule set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import FormatError
from .mining import AssociationRule, Entry, apriori, generate_rules


@dataclass(frozen=True)
class Thresholds:
    min_support: float | None = None
    min_confidence: float | None = None
    min_conviction: float | None = None

    def __post_init__(self):
        for name in ("min_support", "min_confidence"):
            v = getattr(self, name)
            if v is not None and not 0 <= v <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.min_conviction is not None and self.min_conviction < 0:
            raise ValueError("min_conviction must be >= 0")


@dataclass
class Warning:
    match_id: str
    player: str | None
    start_s: float
    end_s: float
    half: int
    rule: AssociationRule
    present_items: set[str]
    missing_items: set[str]
    severity: float
    state: str = "open"
    warning_id: int | None = None


def active_rules(
    rules: Sequence[AssociationRule], thresholds: Thresholds
) -> list[AssociationRule]:
    """Rules whose present metrics satisfy every present threshold.

    A metric the rule does not carry (manual rules lack support and
    conviction) passes its threshold by definition.
    """

    def passes(rule: AssociationRule) -> bool:
        if thresholds.min_support is not None and rule.support is not None:
            if rule.support < thresholds.min_support:
                return False
        if thresholds.min_confidence is not None:
            if rule.confidence < thresholds.min_confidence:
                return False
        if thresholds.min_conviction is not None and rule.conviction is not None:
            if rule.conviction < thresholds.min_conviction:
                return False
        return True

    return [r for r in rules if passes(r)]


def find_violations(
    entries: Sequence[Entry], rules: Sequence[AssociationRule], thresholds: Thresholds
) -> list[tuple[Entry, AssociationRule]]:
    """(entry, rule) pairs where the antecedent holds but the consequent fails."""
    active = active_rules(rules, thresholds)
    out = []
    for entry in entries:
        for rule in active:
            if set(rule.antecedent) <= entry.items and not set(rule.consequent) <= entry.items:
                out.append((entry, rule))
    return out


def detect(
    entries: Sequence[Entry], rules: Sequence[AssociationRule], thresholds: Thresholds
) -> list[Warning]:
    """Violations merged per (rule, match, half, player) over touching intervals.

    Merged warnings keep the intersection of the violating entries' items,
    so the rule antecedent stays present and the missing consequent stays
    missing. Output is sorted by start time, then severity descending.
    """
    violations = find_violations(entries, rules, thresholds)
    groups: dict[tuple, list[Entry]] = {}
    rule_by_key: dict[tuple, AssociationRule] = {}
    for entry, rule in violations:
        key = (rule.antecedent, rule.consequent, rule.origin, entry.match_id, entry.half, entry.player)
        groups.setdefault(key, []).append(entry)
        rule_by_key[key] = rule

    warnings = []
    for key, group in groups.items():
        rule = rule_by_key[key]
        group.sort(key=lambda e: e.interval)
        run: list[Entry] = []
        run_end = -float("inf")
        for entry in group + [None]:  # type: ignore[list-item]
            if run and (entry is None or entry.interval[0] > run_end):
                present = frozenset.intersection(*(e.items for e in run))
                warnings.append(
                    Warning(
                        match_id=run[0].match_id,
                        player=run[0].player,
                        start_s=run[0].interval[0],
                        end_s=run_end,
                        half=run[0].half,
                        rule=rule,
                        present_items=set(present),
                        missing_items=set(rule.consequent) - set(present),
                        severity=rule.confidence,
                    )
                )
                run = []
                run_end = -float("inf")
            if entry is not None:
                run.append(entry)
                run_end = max(run_end, entry.interval[1])
    warnings.sort(key=lambda w: (w.start_s, -w.severity, w.rule.antecedent, w.rule.consequent))
    return warnings


def _metric_to_doc(v: float | None) -> float | str | None:
    if v is None:
        return None
    if math.isinf(v):
        return "inf"
    return v


def _metric_from_doc(v) -> float | None:
    if v is None:
        return None
    if v == "inf":
        return math.inf
    return float(v)


def warning_to_doc(w: Warning) -> dict:
    """Stable field names, shared by the warnings export and the HTTP API."""
    return {
        "warning_id": w.warning_id,
        "match_id": w.match_id,
        "player": w.player,
        "start_s": w.start_s,
        "end_s": w.end_s,
        "half": w.half,
        "rule": {
            "antecedent": list(w.rule.antecedent),
            "consequent": list(w.rule.consequent),
            "support": _metric_to_doc(w.rule.support),
            "confidence": w.rule.confidence,
            "conviction": _metric_to_doc(w.rule.conviction),
            "origin": w.rule.origin,
            "level": w.rule.qualitative_confidence,
        },
        "present_items": sorted(w.present_items),
        "missing_items": sorted(w.missing_items),
        "severity": w.severity,
        "state": w.state,
    }


def warning_from_doc(doc: dict) -> Warning:
    try:
        rule = AssociationRule(
            antecedent=tuple(doc["rule"]["antecedent"]),
            consequent=tuple(doc["rule"]["consequent"]),
            confidence=float(doc["rule"]["confidence"]),
            support=_metric_from_doc(doc["rule"].get("support")),
            conviction=_metric_from_doc(doc["rule"].get("conviction")),
            origin=doc["rule"].get("origin", "mined"),
            qualitative_confidence=doc["rule"].get("level"),
        )
        return Warning(
            warning_id=doc.get("warning_id"),
            match_id=doc["match_id"],
            player=doc.get("player"),
            start_s=float(doc["start_s"]),
            end_s=float(doc["end_s"]),
            half=int(doc["half"]),
            rule=rule,
            present_items=set(doc["present_items"]),
            missing_items=set(doc["missing_items"]),
            severity=float(doc["severity"]),
            state=doc.get("state", "open"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad warning document: {exc}") from None


def write_warnings_file(warnings: Sequence[Warning]) -> bytes:
    return json.dumps([warning_to_doc(w) for w in warnings], indent=2, sort_keys=True).encode()


def read_warnings_file(data: bytes) -> list[Warning]:
    try:
        docs = json.loads(data.decode())
    except (ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"bad warnings payload: {exc}") from None
    if not isinstance(docs, list):
        raise FormatError("warnings payload must be a list")
    return [warning_from_doc(d) for d in docs]


@dataclass
class BenchmarkResult:
    recall: float
    false_positive_rate: float
    corrupted_count: int
    flagged_corrupted: int
    clean_count: int
    flagged_clean: int
    rules_mined: int
    vacuous_recall: bool = False
    no_active_rules: bool = False


@dataclass
class CorpusParams:
    n_entries: int = 2000
    n_rules: int = 10
    rule_confidence: float = 0.9
    antecedent_rate: float = 0.12
    n_noise_items: int = 10
    noise_rate: float = 0.12
    min_support: float = 0.02
    min_confidence: float = 0.6
    seed: int = 0


def _synthesize_entries(params: CorpusParams, rng: np.random.Generator) -> tuple[list[Entry], list[tuple[str, str]]]:
    """Entries planted with n_rules single-item implications ant_i -> cons_i."""
    planted = [(f"ant{i}", f"cons{i}") for i in range(params.n_rules)]
    noise = [f"noise{i}" for i in range(params.n_noise_items)]
    entries = []
    for e in range(params.n_entries):
        items = set()
        for ant, cons in planted:
            if rng.random() < params.antecedent_rate:
                items.add(ant)
                if rng.random() < params.rule_confidence:
                    items.add(cons)
        for item in noise:
            if rng.random() < params.noise_rate:
                items.add(item)
        if not items:
            items.add(noise[int(rng.integers(len(noise)))])
        # non-touching intervals so merging cannot span entries
        entries.append(
            Entry(
                items=frozenset(items),
                match_id="bench",
                player=f"p{e % 4}",
                interval=(e * 20.0, e * 20.0 + 10.0),
                half=1,
            )
        )
    return entries, planted


def seeded_error_benchmark(
    corpus_params: CorpusParams, corruption_rate: float, thresholds: Thresholds
) -> BenchmarkResult:
    """Plant rules, corrupt a fraction of entries, measure detector recall.

    Mining runs on the clean corpus; detection runs on the corrupted one.
    An entry counts as corrupted when deleting planted consequents actually
    removed one while its antecedent stayed present. Recall is measured
    over those entries, the false-positive rate over the untouched ones.
    """
    if not 0 <= corruption_rate < 1:
        raise ValueError("corruption_rate must be in [0, 1)")
    rng = np.random.Generator(np.random.PCG64(corpus_params.seed))
    clean, planted = _synthesize_entries(corpus_params, rng)

    itemsets = apriori(clean, corpus_params.min_support)
    mined = generate_rules(itemsets, clean, corpus_params.min_confidence)
    active = active_rules(mined, thresholds)

    consequents = {cons for _, cons in planted}
    antecedent_of = {cons: ant for ant, cons in planted}
    n_corrupt = int(round(corruption_rate * len(clean)))
    corrupt_ids = set(rng.choice(len(clean), size=n_corrupt, replace=False).tolist()) if n_corrupt else set()

    corrupted_corpus = []
    truly_corrupted = set()
    for i, entry in enumerate(clean):
        items = set(entry.items)
        if i in corrupt_ids:
            removable = {
                c for c in items & consequents if antecedent_of[c] in items
            }
            if removable:
                items -= removable
                truly_corrupted.add(i)
        if not items:
            items = {"noise0"}
        corrupted_corpus.append(replace(entry, items=frozenset(items)))

    index_of = {id(entry): i for i, entry in enumerate(corrupted_corpus)}
    flagged = set()
    for entry, _rule in find_violations(corrupted_corpus, active, thresholds):
        flagged.add(index_of[id(entry)])

    flagged_corrupted = len(flagged & truly_corrupted)
    clean_ids = set(range(len(clean))) - truly_corrupted
    flagged_clean = len(flagged & clean_ids)
    vacuous = len(truly_corrupted) == 0
    recall = 1.0 if vacuous else flagged_corrupted / len(truly_corrupted)
    fpr = flagged_clean / len(clean_ids) if clean_ids else 0.0
    return BenchmarkResult(
        recall=recall,
        false_positive_rate=fpr,
        corrupted_count=len(truly_corrupted),
        flagged_corrupted=flagged_corrupted,
        clean_count=len(clean_ids),
        flagged_clean=flagged_clean,
        rules_mined=len(mined),
        vacuous_recall=vacuous,
        no_active_rules=len(active) == 0,
    )
