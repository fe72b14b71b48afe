import io
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxrec.ar import (
    ARRecommender,
    Rule,
    RuleModel,
    choose_thresholds,
    generate_rules,
    load_model,
    mine_frequent_itemsets,
    mine_itemset_counts,
    recommend_topn,
    save_model,
)
from ctxrec.errors import ItemsetLimitError, ThresholdError
from oracles import brute_force_itemsets, exhaustive_rules, random_sessions


def _sessions_with_supports(n, supports):
    """n sessions where token t occurs in the first supports[t]*n sessions."""
    out = [set() for _ in range(n)]
    for t, s in supports.items():
        for i in range(round(s * n)):
            out[i].add(t)
    return [frozenset(s) for s in out]


def test_thresholds_formula():
    sessions = _sessions_with_supports(10, {"a": 0.8, "b": 0.6, "c": 0.5, "d": 0.2})
    # ceil(4 / 2) = 2nd most frequent keeps exactly half of the items
    assert choose_thresholds(sessions) == (0.6, 0.5)


def test_thresholds_uniform():
    sessions = _sessions_with_supports(10, {"a": 0.4, "b": 0.4, "c": 0.4, "d": 0.4})
    assert choose_thresholds(sessions) == (0.4, 0.4)


def test_thresholds_third_item():
    sessions = _sessions_with_supports(10, {"a": 0.9, "b": 0.9, "c": 0.1})
    assert choose_thresholds(sessions)[1] == 0.1


def test_thresholds_ignore_virtual_items():
    sessions = _sessions_with_supports(10, {"a": 0.8, "b": 0.6, "c": 0.5, "ctx:d=1": 1.0})
    assert choose_thresholds(sessions) == (0.6, 0.5)
    with pytest.raises(ThresholdError):
        choose_thresholds(_sessions_with_supports(4, {"a": 1.0, "b": 0.5}))


def test_mining_toy(toy_sessions):
    got = mine_frequent_itemsets(toy_sessions, 0.6)
    assert got == {frozenset("A"): 1.0, frozenset("B"): 2 / 3, frozenset("AB"): 2 / 3}
    assert mine_frequent_itemsets(toy_sessions, 1.0) == {frozenset("A"): 1.0}


def test_mining_above_max_support_is_empty():
    sessions = [frozenset("AB"), frozenset("C")]
    assert mine_frequent_itemsets(sessions, 0.51) == {}


def test_itemset_cap():
    sessions = [frozenset("ABCDEFGH")] * 4
    with pytest.raises(ItemsetLimitError):
        mine_itemset_counts(sessions, 0.5, max_itemsets=100)
    assert len(mine_itemset_counts(sessions, 0.5, max_itemsets=255)) == 255


def test_rules_toy(toy_sessions):
    rules = generate_rules(mine_frequent_itemsets(toy_sessions, 0.6), 0.7)
    assert rules == [Rule(frozenset("B"), "A", 2 / 3, 1.0)]


def test_rules_never_have_virtual_consequents():
    itemsets = {frozenset({"A"}): 0.5, frozenset({"ctx:day=05"}): 0.5, frozenset({"A", "ctx:day=05"}): 0.5}
    rules = generate_rules(itemsets, 0.0)
    assert [(set(r.antecedent), r.consequent) for r in rules] == [({"ctx:day=05"}, "A")]
    with pytest.raises(ValueError):
        Rule(frozenset({"A"}), "ctx:day=05", 0.5, 1.0)


def test_zero_confidence_emits_every_rule(toy_sessions):
    itemsets = mine_frequent_itemsets(toy_sessions, 0.3)
    rules = generate_rules(itemsets, 0.0)
    assert len(rules) == 4  # B->A, A->B, C->A, A->C


def _model(*rules):
    return RuleModel([Rule(frozenset(a), c, s, conf) for a, c, s, conf in rules], 0.1, 0.1)


def test_recommend_fires_contained_rules():
    assert recommend_topn(_model((["B"], "A", 0.5, 1.0)), {"B"}, 1) == ["A"]
    model = _model((["B"], "A", 0.5, 0.6), (["B", "ctx:day=05"], "C", 0.3, 0.9))
    assert recommend_topn(model, {"B", "ctx:day=05"}, 2) == ["C", "A"]
    assert recommend_topn(model, {"B"}, 2) == ["A"]
    assert recommend_topn(model, {"Z"}, 2) == []


def test_recommend_dedup_and_ties():
    model = _model((["B"], "A", 0.2, 0.5), (["D"], "A", 0.2, 0.8), (["B"], "C", 0.4, 0.8),
                   (["B"], "E", 0.4, 0.8), (["B"], "D", 0.4, 0.9))
    assert recommend_topn(model, {"B", "D"}, 5) == ["C", "E", "A"]


def test_subset_and_scan_paths_agree():
    rng = random.Random(0)
    sessions = random_sessions(rng, 12, 80, 6)
    rules = generate_rules(mine_frequent_itemsets(sessions, 0.05), 0.0)
    model = RuleModel(rules, 0.05, 0.0)
    for s in sessions:
        obs = frozenset(s)
        by_scan = sorted(map(str, (r for a, rs in model.by_antecedent.items() if a <= obs for r in rs)))
        assert sorted(map(str, model.fired(obs))) == by_scan


def test_serialization_round_trip():
    rng = random.Random(1)
    sessions = random_sessions(rng, 10, 60, 5)
    model = ARRecommender(0.05, 0.1).fit(sessions).model
    buf = io.StringIO()
    save_model(model, buf)
    buf.seek(0)
    again = load_model(buf)
    assert again.rules == model.rules
    assert (again.min_support, again.min_confidence) == (model.min_support, model.min_confidence)


def test_recommender_uses_heuristic_thresholds():
    sessions = _sessions_with_supports(10, {"a": 0.8, "b": 0.6, "c": 0.5, "d": 0.2})
    rec = ARRecommender().fit(sessions)
    assert (rec.model.min_support, rec.model.min_confidence) == (0.6, 0.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0.05, 0.1, 0.2, 0.3]))
def test_apriori_matches_brute_force(seed, min_support):
    rng = random.Random(seed)
    sessions = random_sessions(rng, rng.randint(3, 10), rng.randint(1, 30), 6)
    got = mine_frequent_itemsets(sessions, min_support)
    assert got == brute_force_itemsets(sessions, min_support)
    for x, sup in got.items():
        for t in x:
            if len(x) > 1:
                assert got[x - {t}] >= sup
    rules = generate_rules(got, 0.2)
    assert {(r.antecedent, r.consequent, r.support, r.confidence) for r in rules} == exhaustive_rules(got, 0.2)
    n = len(sessions)
    counts = mine_itemset_counts(sessions, min_support)
    for r in rules:
        x = tuple(sorted(r.antecedent | {r.consequent}))
        a = tuple(sorted(r.antecedent))
        assert Fraction(counts[x], counts[a]) * Fraction(counts[a], n) == Fraction(counts[x], n)
        assert r.confidence * got[r.antecedent] == pytest.approx(r.support, rel=1e-12)
        assert not r.consequent.startswith("ctx:")
