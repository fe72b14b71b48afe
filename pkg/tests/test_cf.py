import io
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxrec.cf import (
    CFRecommender,
    build_similarity_model,
    cosine_similarity,
    load_model,
    recommend_topn,
    save_model,
    score_candidate,
    scored_topn,
)
from ctxrec.errors import CtxRecError
from oracles import exhaustive_topn, naive_cosine_matrix, random_sessions

SQRT6 = 2 / math.sqrt(6)
SQRT3 = 1 / math.sqrt(3)


def test_cosine_examples():
    assert cosine_similarity({1, 2, 3}, {1, 2, 3}) == 1.0
    assert cosine_similarity({1}, {2}) == 0.0
    assert cosine_similarity({1, 2}, {2, 3}) == pytest.approx(0.5)
    with pytest.raises(CtxRecError):
        cosine_similarity(set(), {1})


def test_toy_matrix(toy_sessions):
    m = build_similarity_model(toy_sessions)
    assert m.sim("A", "B") == pytest.approx(0.8164965809277261, abs=1e-12)
    assert m.sim("A", "C") == pytest.approx(0.5773502691896258, abs=1e-12)
    assert "C" not in m.neighbors["B"]
    assert m.sim("B", "C") == 0.0
    assert m.sim("A", "A") == 1.0


def test_virtual_rows():
    m = build_similarity_model([{"A", "ctx:day=05"}, {"B", "ctx:day=05"}])
    assert m.sim("A", "ctx:day=05") == pytest.approx(1 / math.sqrt(2))
    assert m.sim("A", "B") == 0.0


def test_single_session_single_token():
    m = build_similarity_model([{"A"}])
    assert m.tokens == ["A"]
    assert list(m.pairs()) == []


def test_scores(toy_sessions):
    m = build_similarity_model(toy_sessions)
    assert score_candidate(m, "A", {"B"}) == pytest.approx(SQRT6)
    assert score_candidate(m, "A", {"B", "C"}) == pytest.approx((SQRT6 + SQRT3) / 2)
    assert score_candidate(m, "B", {"C"}) == 0.0
    assert score_candidate(m, "unknown", {"A"}) == 0.0


def test_knn_truncation(toy_sessions):
    m = build_similarity_model(toy_sessions)
    assert score_candidate(m, "A", {"B", "C"}, k=1) == pytest.approx(SQRT6 / 2)


def test_recommend_examples(toy_sessions):
    m = build_similarity_model(toy_sessions)
    assert recommend_topn(m, {"B"}, 1) == ["A"]
    assert recommend_topn(m, {"A", "B", "C"}, 3) == []


def test_only_actual_items_recommended():
    sessions = [{"A", "B", "ctx:day=05"}, {"A", "ctx:day=05"}, {"C", "ctx:day=06"}]
    m = build_similarity_model(sessions)
    recs = recommend_topn(m, {"B", "ctx:day=05"}, 10)
    assert recs == ["A"]
    assert not any(r.startswith("ctx:") for r in recs)


def test_ties_break_by_token():
    m = build_similarity_model([{"O", "Z"}, {"O", "M"}])
    assert recommend_topn(m, {"O"}, 2) == ["M", "Z"]


def test_user_level_vectors():
    m = build_similarity_model([{"A"}, {"B"}], keys=["u1", "u1"])
    assert m.sim("A", "B") == 1.0


def test_serialization_round_trip():
    rng = random.Random(3)
    sessions = random_sessions(rng, 30, 120, 6)
    m = build_similarity_model(sessions)
    buf = io.StringIO()
    save_model(m, buf)
    buf.seek(0)
    again = load_model(buf)
    assert sorted(again.pairs()) == sorted(m.pairs())
    for s in sessions[:40]:
        obs = set(list(s)[:2])
        assert scored_topn(again, obs, 5) == scored_topn(m, obs, 5)


def test_recommender_wrapper(toy_sessions):
    rec = CFRecommender().fit(toy_sessions)
    assert rec.recommend({"B"}, 1) == ["A"]
    assert rec.recommend_scored({"B"}, 1)[0][1] == pytest.approx(SQRT6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_oracle_equivalence_property(seed):
    rng = random.Random(seed)
    sessions = random_sessions(rng, rng.randint(2, 20), rng.randint(1, 40), 5)
    m = build_similarity_model(sessions)
    tokens, naive = naive_cosine_matrix(sessions)
    assert sorted(m.tokens) == tokens
    stored = {(min(a, b), max(a, b)): s for a, b, s in m.pairs()}
    assert stored.keys() == naive.keys()
    for key, value in naive.items():
        assert abs(stored[key] - value) <= 1e-9
        a, b = key
        assert m.sim(a, b) == m.sim(b, a)
        assert 0 < value <= 1 + 1e-12
    obs = frozenset(rng.sample(tokens, rng.randint(1, min(4, len(tokens)))))
    k = rng.choice([None, 1, 2])
    assert recommend_topn(m, obs, 5, k) == exhaustive_topn(sessions, obs, 5, k)


@given(st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_adding_virtual_observable_only_touches_its_row(seed):
    rng = random.Random(seed)
    sessions = random_sessions(rng, 15, 40, 5)
    m = build_similarity_model(sessions)
    actual = [t for t in m.tokens if not t.startswith("ctx:")]
    virtual = [t for t in m.tokens if t.startswith("ctx:")]
    if not virtual or len(actual) < 2:
        return
    obs = {actual[0]}
    v = virtual[0]
    for cand in actual[1:]:
        base = score_candidate(m, cand, obs)
        with_v = score_candidate(m, cand, obs | {v})
        assert with_v * 2 == pytest.approx(base + m.sim(cand, v), abs=1e-12)
        assert score_candidate(m, cand, (obs | {v}) - {v}) == base
