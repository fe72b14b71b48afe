"""Association-rule recommender: Apriori mining, single-consequent rules."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from typing import IO, Iterable, Sequence

from ctxrec.domain import is_virtual
from ctxrec.errors import InputError, ItemsetLimitError, ThresholdError

FORMAT_TAG = "# ctxrec-ar 1"
DEFAULT_MAX_ITEMSETS = 1_000_000


def choose_thresholds(sessions: Sequence[Iterable[str]]) -> tuple[float, float]:
    """Default (min_support, min_confidence) for a training set.

    min_support is the support of the ceil(m/2)-th most frequent of the m
    actual items, the largest value that keeps at least half of them;
    min_confidence is the support of the third most frequent actual item.
    """
    n = len(sessions)
    counts = Counter(t for s in sessions for t in set(s) if not is_virtual(t))
    if len(counts) < 3:
        raise ThresholdError(f"need at least 3 distinct items, got {len(counts)}")
    ranked = sorted(counts.values(), reverse=True)
    keep = math.ceil(0.5 * len(ranked))
    return ranked[keep - 1] / n, ranked[2] / n


def _min_count(min_support: float, n: int) -> int:
    """Smallest count c with c / n >= min_support."""
    c = max(0, math.ceil(min_support * n))
    while c > 0 and (c - 1) / n >= min_support:
        c -= 1
    while c / n < min_support:
        c += 1
    return c


def mine_itemset_counts(sessions: Sequence[Iterable[str]], min_support: float,
                        max_itemsets: int | None = DEFAULT_MAX_ITEMSETS) -> dict[tuple[str, ...], int]:
    """Level-wise Apriori. Keys are sorted token tuples, values absolute counts."""
    if not 0 < min_support <= 1:
        raise ValueError(f"min_support must be in (0, 1], got {min_support}")
    n = len(sessions)
    if n == 0:
        return {}
    min_count = _min_count(min_support, n)
    transactions = [frozenset(s) for s in sessions]

    singles = Counter(t for s in transactions for t in s)
    level = {(t,): c for t, c in singles.items() if c >= min_count}
    frequent: dict[tuple[str, ...], int] = dict(level)
    frequent_tokens = {t for (t,) in level}
    transactions = [tuple(sorted(s & frequent_tokens)) for s in transactions]

    k = 2
    while level:
        if max_itemsets is not None and len(frequent) > max_itemsets:
            raise ItemsetLimitError(f"more than {max_itemsets} frequent itemsets")
        candidates = _candidates(sorted(level), level)
        if not candidates:
            break
        counts = dict.fromkeys(candidates, 0)
        for t in transactions:
            if len(t) < k:
                continue
            if math.comb(len(t), k) <= len(candidates):
                for sub in combinations(t, k):
                    if sub in counts:
                        counts[sub] += 1
            else:
                ts = set(t)
                for cand in candidates:
                    if ts.issuperset(cand):
                        counts[cand] += 1
        level = {c: v for c, v in counts.items() if v >= min_count}
        frequent.update(level)
        k += 1
    if max_itemsets is not None and len(frequent) > max_itemsets:
        raise ItemsetLimitError(f"more than {max_itemsets} frequent itemsets")
    return frequent


def _candidates(prev: list[tuple[str, ...]], prev_set) -> list[tuple[str, ...]]:
    """Join (k-1)-itemsets sharing a (k-2)-prefix, then prune by downward closure."""
    out = []
    for i, a in enumerate(prev):
        for b in prev[i + 1:]:
            if a[:-1] != b[:-1]:
                break
            cand = a + (b[-1],)
            if all(cand[:j] + cand[j + 1:] in prev_set for j in range(len(cand) - 2)):
                out.append(cand)
    return out


def mine_frequent_itemsets(sessions: Sequence[Iterable[str]], min_support: float,
                           max_itemsets: int | None = DEFAULT_MAX_ITEMSETS) -> dict[frozenset[str], float]:
    n = len(sessions)
    counts = mine_itemset_counts(sessions, min_support, max_itemsets)
    return {frozenset(k): c / n for k, c in counts.items()}


@dataclass(frozen=True)
class Rule:
    antecedent: frozenset[str]
    consequent: str
    support: float
    confidence: float

    def __post_init__(self):
        if self.consequent in self.antecedent:
            raise ValueError("consequent must not appear in the antecedent")
        if is_virtual(self.consequent):
            raise ValueError(f"virtual consequent {self.consequent!r}")

    def __str__(self):
        lhs = ",".join(sorted(self.antecedent))
        return f"{{{lhs}}} -> {self.consequent} (sup={self.support:.4f}, conf={self.confidence:.4f})"


def generate_rules(itemsets: dict[frozenset[str], float], min_confidence: float,
                   n_sessions: int | None = None) -> list[Rule]:
    """All rules X\\{y} -> y with y an actual item, |X| >= 2, confidence >= min_confidence.

    Given ``n_sessions`` the confidence is taken from the integer counts, so it is
    the correctly rounded value of count(X) / count(X\\{y}).
    """
    rules = []
    for itemset, support in itemsets.items():
        if len(itemset) < 2:
            continue
        for y in itemset:
            if is_virtual(y):
                continue
            antecedent = itemset - {y}
            if n_sessions:
                confidence = round(support * n_sessions) / round(itemsets[antecedent] * n_sessions)
            else:
                confidence = support / itemsets[antecedent]
            if confidence >= min_confidence:
                rules.append(Rule(antecedent, y, support, confidence))
    rules.sort(key=lambda r: (-r.confidence, -r.support, r.consequent, sorted(r.antecedent)))
    return rules


@dataclass
class RuleModel:
    rules: list[Rule]
    min_support: float
    min_confidence: float
    by_antecedent: dict[frozenset[str], list[Rule]] = field(init=False, repr=False)

    def __post_init__(self):
        self.by_antecedent = {}
        for r in self.rules:
            self.by_antecedent.setdefault(r.antecedent, []).append(r)
        self.max_antecedent = max((len(a) for a in self.by_antecedent), default=0)

    def fired(self, observables: frozenset[str]) -> Iterable[Rule]:
        """Rules whose antecedent is contained in ``observables``."""
        m = min(self.max_antecedent, len(observables))
        n_subsets = sum(math.comb(len(observables), i) for i in range(1, m + 1))
        if n_subsets < len(self.by_antecedent):
            obs = sorted(observables)
            for size in range(1, m + 1):
                for sub in combinations(obs, size):
                    yield from self.by_antecedent.get(frozenset(sub), ())
        else:
            for antecedent, rules in self.by_antecedent.items():
                if antecedent <= observables:
                    yield from rules


def train_rule_model(sessions: Sequence[Iterable[str]], min_support: float | None = None,
                     min_confidence: float | None = None,
                     max_itemsets: int | None = DEFAULT_MAX_ITEMSETS) -> RuleModel:
    if min_support is None or min_confidence is None:
        s, c = choose_thresholds(sessions)
        min_support = s if min_support is None else min_support
        min_confidence = c if min_confidence is None else min_confidence
    itemsets = mine_frequent_itemsets(sessions, min_support, max_itemsets)
    return RuleModel(generate_rules(itemsets, min_confidence, len(sessions)), min_support, min_confidence)


def scored_topn(model: RuleModel, observables: Iterable[str], n: int) -> list[tuple[str, float]]:
    """Fire contained rules; keep each consequent's best (confidence, support); rank."""
    if n < 1:
        raise ValueError("N must be at least 1")
    observables = frozenset(observables)
    best: dict[str, tuple[float, float]] = {}
    for r in model.fired(observables):
        if r.consequent in observables:
            continue
        key = (r.confidence, r.support)
        if r.consequent not in best or key > best[r.consequent]:
            best[r.consequent] = key
    ranked = sorted(best.items(), key=lambda kv: (-kv[1][0], -kv[1][1], kv[0]))
    return [(item, conf) for item, (conf, _) in ranked[:n]]


def recommend_topn(model: RuleModel, observables: Iterable[str], n: int) -> list[str]:
    return [item for item, _ in scored_topn(model, observables, n)]


def save_model(model: RuleModel, fh: IO[str]) -> None:
    fh.write(f"{FORMAT_TAG}\n")
    fh.write(f"# min_support={model.min_support!r}\tmin_confidence={model.min_confidence!r}\n")
    for r in model.rules:
        tokens = sorted(r.antecedent) + [r.consequent]
        if any(ch in t for t in tokens for ch in ",\t\n"):
            raise InputError(f"rule tokens cannot be serialized: {tokens!r}")
        fh.write(f"{','.join(sorted(r.antecedent))}\t{r.consequent}\t{r.support!r}\t{r.confidence!r}\n")


def load_model(fh: IO[str]) -> RuleModel:
    lines = fh.read().splitlines()
    try:
        if not lines or lines[0] != FORMAT_TAG:
            raise InputError("not an association-rule model file")
        fields = dict(kv.split("=", 1) for kv in lines[1][2:].split("\t"))
        rules = []
        for line in lines[2:]:
            lhs, rhs, sup, conf = line.split("\t")
            rules.append(Rule(frozenset(lhs.split(",")), rhs, float(sup), float(conf)))
        return RuleModel(rules, float(fields["min_support"]), float(fields["min_confidence"]))
    except (IndexError, ValueError, KeyError) as exc:
        raise InputError(f"corrupt rule model file: {exc}") from exc


class ARRecommender:
    name = "ar"

    def __init__(self, min_support: float | None = None, min_confidence: float | None = None,
                 max_itemsets: int | None = DEFAULT_MAX_ITEMSETS):
        self.min_support = min_support
        self.min_confidence = min_confidence
        self.max_itemsets = max_itemsets
        self.model: RuleModel | None = None

    def fit(self, sessions: Sequence[Iterable[str]], users: Sequence[str] | None = None) -> "ARRecommender":
        self.model = train_rule_model(sessions, self.min_support, self.min_confidence, self.max_itemsets)
        return self

    def recommend(self, observables: Iterable[str], n: int) -> list[str]:
        return recommend_topn(self.model, observables, n)

    def recommend_scored(self, observables: Iterable[str], n: int) -> list[tuple[str, float]]:
        return scored_topn(self.model, observables, n)
