"""All-but-one evaluation protocol, metrics and report files."""

from __future__ import annotations

import csv
import hashlib
import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

from ctxrec.davi import DaviConfig, augment_session, observables_with_context
from ctxrec.domain import ITEM_ATTRIBUTE, Dataset, DimensionRegistry, Session, item_attribute_context
from ctxrec.errors import EvaluationError, SplitError

REPORT_FIELDS = ("method", "dims", "N", "recall", "precision", "f1", "cases", "skipped", "seed", "split")


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary parts (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256("\x1f".join(map(str, parts)).encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class EvalSplit:
    train: tuple[Session, ...]
    test: tuple[Session, ...]
    seed: int

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        for part in (self.train, self.test):
            h.update("\n".join(s.session_id for s in part).encode())
            h.update(b"\x00")
        return h.hexdigest()[:16]


def split_sessions(sessions: Dataset | Sequence[Session], ratio: float = 0.8, seed: int = 0) -> EvalSplit:
    """Seeded shuffle, then the first round(ratio * n) sessions train."""
    if isinstance(sessions, Dataset):
        sessions = sessions.sessions
    if not 0 < ratio < 1:
        raise SplitError(f"ratio must be in (0, 1), got {ratio}")
    if len(sessions) < 2:
        raise SplitError("need at least 2 sessions to split")
    order = list(range(len(sessions)))
    random.Random(seed).shuffle(order)
    cut = min(max(round(ratio * len(sessions)), 1), len(sessions) - 1)
    return EvalSplit(tuple(sessions[i] for i in order[:cut]),
                     tuple(sessions[i] for i in order[cut:]), seed)


@dataclass(frozen=True)
class HiddenCase:
    session_id: str
    observables: frozenset[str]
    hidden: str
    active_context: Mapping[str, frozenset[str]]
    user_id: str | None = None


def hide_one(session: Session, seed: int, config: DaviConfig | None = None,
             registry: DimensionRegistry | None = None,
             catalog: Mapping[str, Mapping[str, str]] | None = None) -> HiddenCase | None:
    """Hide one uniformly chosen item; None (skip) for sessions with < 2 items.

    Item-attribute context is recomputed from the remaining items so the
    hidden item's attributes never reach the observables.
    """
    if len(session.items) < 2:
        return None
    rng = random.Random(derive_seed(seed, session.session_id))
    i = rng.randrange(len(session.items))
    hidden = session.items[i]
    observed = session.items[:i] + session.items[i + 1:]

    context = dict(session.context)
    if config is not None:
        context = {d: v for d, v in context.items() if d in config.active_dimensions}
    item_dims = registry.of_source(ITEM_ATTRIBUTE) if registry is not None else []
    item_dims = [d for d in item_dims if d in context]
    for d in item_dims:
        del context[d]
    if item_dims:
        context.update(item_attribute_context(observed, item_dims, catalog or {}))
    return HiddenCase(session.session_id, frozenset(observed), hidden, context, session.user_id)


def metrics_for_case(recommendations: Sequence[str], hidden: str, n: int) -> tuple[float, float]:
    rec = list(recommendations)[:n]
    if not rec:
        return 0.0, 0.0
    hit = 1.0 if hidden in rec else 0.0
    return hit, hit / len(rec)


def f1(recall: float, precision: float) -> float:
    if recall + precision == 0:
        return 0.0
    return 2 * recall * precision / (recall + precision)


@dataclass(frozen=True)
class MetricsAtN:
    n: int
    recall: float
    precision: float
    f1: float


@dataclass
class EvalReport:
    rows: list[MetricsAtN]
    cases: int
    skipped: int
    seed: int | None = None
    split: str | None = None
    hits: dict[int, list[int]] = field(default_factory=dict, repr=False)

    def at(self, n: int) -> MetricsAtN:
        for row in self.rows:
            if row.n == n:
                return row
        raise KeyError(n)

    def f1_at(self, n: int) -> float:
        return self.at(n).f1

    def records(self, method: str, dims: Iterable[str]) -> list[dict]:
        dims = "+".join(dims) or "none"
        return [{"method": method, "dims": dims, "N": r.n, "recall": r.recall, "precision": r.precision,
                 "f1": r.f1, "cases": self.cases, "skipped": self.skipped, "seed": self.seed,
                 "split": self.split}
                for r in self.rows]


def make_cases(sessions: Iterable[Session], seed: int, config: DaviConfig | None = None,
               registry: DimensionRegistry | None = None, catalog=None) -> tuple[list[HiddenCase], int]:
    cases, skipped = [], 0
    for s in sessions:
        case = hide_one(s, seed, config, registry, catalog)
        if case is None:
            skipped += 1
        else:
            cases.append(case)
    return cases, skipped


def evaluate_cases(recommender, cases: Sequence[HiddenCase], config: DaviConfig, n_values: Sequence[int],
                   skipped: int = 0, per_user: bool = False, threads: int = 1) -> EvalReport:
    """Macro-averaged recall/precision per N; F1 is taken from the averages."""
    if not cases:
        raise EvaluationError("no evaluable test cases")
    n_values = sorted(set(n_values))
    n_max = n_values[-1]

    def run(case: HiddenCase) -> list[str]:
        return recommender.recommend(observables_with_context(case.observables, case.active_context, config),
                                     n_max)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rec_lists = list(pool.map(run, cases))
    else:
        rec_lists = [run(c) for c in cases]

    groups: dict[str, list[int]] = {}
    for i, case in enumerate(cases):
        key = (case.user_id or case.session_id) if per_user else case.session_id
        groups.setdefault(key, []).append(i)

    rows, hits = [], {}
    for n in n_values:
        per_case = [metrics_for_case(rec, case.hidden, n) for rec, case in zip(rec_lists, cases)]
        hits[n] = [int(r) for r, _ in per_case]
        if per_user:
            rs = [sum(per_case[i][0] for i in idx) / len(idx) for idx in groups.values()]
            ps = [sum(per_case[i][1] for i in idx) / len(idx) for idx in groups.values()]
        else:
            rs = [r for r, _ in per_case]
            ps = [p for _, p in per_case]
        recall = sum(rs) / len(rs)
        precision = sum(ps) / len(ps)
        rows.append(MetricsAtN(n, recall, precision, f1(recall, precision)))
    return EvalReport(rows, len(cases), skipped, hits=hits)


def evaluate(recommender, split: EvalSplit, config: DaviConfig, n_values: Sequence[int],
             registry: DimensionRegistry | None = None, catalog=None, per_user: bool = False,
             threads: int = 1) -> EvalReport:
    """Evaluate an already-fitted recommender on the split's test sessions."""
    cases, skipped = make_cases(split.test, split.seed, config, registry, catalog)
    report = evaluate_cases(recommender, cases, config, n_values, skipped, per_user, threads)
    report.seed = split.seed
    report.split = split.digest
    return report


def train_and_evaluate(recommender, split: EvalSplit, config: DaviConfig, n_values: Sequence[int],
                       dataset: Dataset | None = None, **kwargs) -> EvalReport:
    """Fit on the augmented training sessions, then evaluate on test."""
    recommender.fit([augment_session(s, config) for s in split.train],
                    [s.user_id or s.session_id for s in split.train])
    registry = dataset.dimensions if dataset is not None else None
    catalog = dataset.item_catalog if dataset is not None else None
    return evaluate(recommender, split, config, n_values, registry, catalog, **kwargs)


def write_jsonl(records: Iterable[dict], fh: IO[str]) -> None:
    for rec in records:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


def write_csv(records: Iterable[dict], fh: IO[str]) -> None:
    writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow(rec)
