"""Item-based collaborative filtering over binary session vectors."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from typing import IO, Hashable, Iterable, Sequence

from ctxrec.domain import is_virtual
from ctxrec.errors import CtxRecError, InputError

FORMAT_TAG = "# ctxrec-cf 1"


def cosine_similarity(a: set, b: set) -> float:
    """Cosine of two binary vectors given as sets of their non-zero positions."""
    if not a or not b:
        raise CtxRecError("similarity is undefined for an empty occurrence set")
    return _cosine(len(a & b), len(a), len(b))


def _cosine(together: int, n_a: int, n_b: int) -> float:
    # sqrt of one correctly rounded rational: equal exact cosines give equal floats
    return math.sqrt(together * together / (n_a * n_b))


@dataclass
class SimilarityModel:
    """Sparse symmetric token-token cosine matrix.

    ``neighbors[t]`` maps every token co-occurring with ``t`` to their
    similarity; pairs that never co-occur are absent (similarity 0) and the
    unit diagonal is implicit.
    """

    tokens: list[str]
    neighbors: dict[str, dict[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}
        for t in self.tokens:
            self.neighbors.setdefault(t, {})

    def sim(self, a: str, b: str) -> float:
        if a == b:
            return 1.0 if a in self.index else 0.0
        return self.neighbors.get(a, {}).get(b, 0.0)

    def pairs(self):
        """Stored entries as (token_i, token_j, similarity) with index(i) < index(j)."""
        for a in self.tokens:
            ia = self.index[a]
            for b, s in self.neighbors[a].items():
                if ia < self.index[b]:
                    yield a, b, s

    @property
    def actual_tokens(self) -> list[str]:
        return [t for t in self.tokens if not is_virtual(t)]

    def is_virtual(self, token: str) -> bool:
        return is_virtual(token)


def build_similarity_model(sessions: Sequence[Iterable[str]],
                           keys: Sequence[Hashable] | None = None) -> SimilarityModel:
    """Cosine similarities between all co-occurring tokens.

    Vector positions are sessions by default; passing ``keys`` (e.g. user ids,
    one per session) merges sessions sharing a key into one position.
    """
    if keys is None:
        columns = [frozenset(s) for s in sessions]
    else:
        merged: dict[Hashable, set] = {}
        for key, s in zip(keys, sessions, strict=True):
            merged.setdefault(key, set()).update(s)
        columns = list(merged.values())

    tokens: dict[str, None] = {}
    for col in columns:
        for t in sorted(col):
            tokens.setdefault(t, None)
    occurrences: Counter[str] = Counter()
    together: Counter[tuple[str, str]] = Counter()
    for col in columns:
        col = sorted(col)
        occurrences.update(col)
        together.update(combinations(col, 2))

    model = SimilarityModel(list(tokens))
    for (a, b), c in together.items():
        s = _cosine(c, occurrences[a], occurrences[b])
        model.neighbors[a][b] = s
        model.neighbors[b][a] = s
    return model


def _contributions(model: SimilarityModel, observables: Iterable[str], k: int | None):
    sims: dict[str, list[float]] = defaultdict(list)
    for o in sorted(observables):
        for cand, s in model.neighbors.get(o, {}).items():
            sims[cand].append(s)
    if k is not None:
        for cand, vals in sims.items():
            if len(vals) > k:
                sims[cand] = sorted(vals, reverse=True)[:k]
    return sims


def score_candidate(model: SimilarityModel, candidate: str, observables: Iterable[str],
                    k: int | None = None) -> float:
    """Mean similarity of ``candidate`` to the observables (missing pairs count 0).

    With ``k`` only the k most similar observables contribute; the divisor
    stays |O| so ranking is unaffected by the choice.
    """
    observables = set(observables)
    if not observables:
        return 0.0
    vals = [model.sim(candidate, o) for o in observables if o != candidate]
    vals = [v for v in vals if v > 0]
    if k is not None:
        vals = sorted(vals, reverse=True)[:k]
    return math.fsum(vals) / len(observables)


def scored_topn(model: SimilarityModel, observables: Iterable[str], n: int,
                k: int | None = None) -> list[tuple[str, float]]:
    if n < 1:
        raise ValueError("N must be at least 1")
    observables = frozenset(observables)
    if not observables:
        return []
    scores = []
    for cand, vals in _contributions(model, observables, k).items():
        if cand in observables or is_virtual(cand):
            continue
        s = math.fsum(vals) / len(observables)
        if s > 0:
            scores.append((cand, s))
    scores.sort(key=lambda cs: (-cs[1], cs[0]))
    return scores[:n]


def recommend_topn(model: SimilarityModel, observables: Iterable[str], n: int,
                   k: int | None = None) -> list[str]:
    return [c for c, _ in scored_topn(model, observables, n, k)]


def save_model(model: SimilarityModel, fh: IO[str]) -> None:
    for t in model.tokens:
        if "\t" in t or "\n" in t:
            raise InputError(f"token {t!r} cannot be serialized")
    fh.write(f"{FORMAT_TAG}\n")
    fh.write(f"tokens\t{len(model.tokens)}\n")
    for t in model.tokens:
        fh.write(f"{t}\n")
    fh.write("pairs\n")
    for a, b, s in model.pairs():
        fh.write(f"{a}\t{b}\t{s!r}\n")


def load_model(fh: IO[str]) -> SimilarityModel:
    lines = iter(fh.read().splitlines())
    try:
        if next(lines) != FORMAT_TAG:
            raise InputError("not a CF similarity model file")
        tag, count = next(lines).split("\t")
        if tag != "tokens":
            raise InputError("missing token table")
        tokens = [next(lines) for _ in range(int(count))]
        if next(lines) != "pairs":
            raise InputError("missing pairs section")
        model = SimilarityModel(tokens)
        for line in lines:
            a, b, s = line.split("\t")
            model.neighbors[a][b] = model.neighbors[b][a] = float(s)
    except (StopIteration, ValueError, KeyError) as exc:
        raise InputError(f"corrupt CF model file: {exc}") from exc
    return model


class CFRecommender:
    """Fit/recommend wrapper used by the evaluation and strategy layers."""

    name = "cf"

    def __init__(self, k: int | None = None, user_vectors: bool = False):
        self.k = k
        self.user_vectors = user_vectors
        self.model: SimilarityModel | None = None

    def fit(self, sessions: Sequence[Iterable[str]], users: Sequence[str] | None = None) -> "CFRecommender":
        keys = users if self.user_vectors else None
        self.model = build_similarity_model(sessions, keys)
        return self

    def recommend(self, observables: Iterable[str], n: int) -> list[str]:
        return recommend_topn(self.model, observables, n, self.k)

    def recommend_scored(self, observables: Iterable[str], n: int) -> list[tuple[str, float]]:
        return scored_topn(self.model, observables, n, self.k)
