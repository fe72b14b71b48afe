"""Choosing which context dimensions to inject, plus the Combined Reduction baseline.

Selection always happens on a validation carve-out of the training sessions;
the chosen configuration is then refit on the full training set and scored
once on the untouched test sessions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Iterable, Mapping, Sequence

from ctxrec.ar import ARRecommender
from ctxrec.cf import CFRecommender
from ctxrec.davi import NO_CONTEXT, DaviConfig, augment_session
from ctxrec.domain import Dataset, Session, decode_virtual_item, is_virtual
from ctxrec.errors import CtxRecError, ResourceLimitError
from ctxrec.evaluation import (
    EvalReport,
    EvalSplit,
    derive_seed,
    evaluate,
    evaluate_cases,
    make_cases,
    split_sessions,
)

logger = logging.getLogger(__name__)

ALGORITHMS = {"cf": CFRecommender, "ar": ARRecommender}
VALIDATION_FRACTION = 0.25
MIN_SEGMENT_SESSIONS = 30


def recommender_factory(name: str, **knobs) -> Callable:
    try:
        cls = ALGORITHMS[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r} (choose from {sorted(ALGORITHMS)})") from None
    return partial(cls, **{k: v for k, v in knobs.items() if v is not None})


def fit(algorithm: Callable, sessions: Sequence[Session], config: DaviConfig = NO_CONTEXT):
    rec = algorithm()
    rec.fit([augment_session(s, config) for s in sessions], [s.user_id or s.session_id for s in sessions])
    return rec


def validation_split(train: Sequence[Session], seed: int,
                     fraction: float = VALIDATION_FRACTION) -> tuple[tuple[Session, ...], tuple[Session, ...]]:
    inner = split_sessions(train, 1 - fraction, derive_seed(seed, "validation"))
    return inner.train, inner.test


@dataclass
class StrategyResult:
    strategy: str
    dimensions: tuple[str, ...]
    report: EvalReport | None
    details: dict = field(default_factory=dict)
    error: str | None = None

    def f1_cell(self, n: int = 1) -> str:
        """Table cell: F1@n with three decimals, or '-' after a resource-limit abort."""
        return "-" if self.report is None else f"{self.report.f1_at(n):.3f}"


class _Scorer:
    """F1@n of a fitted recommender on a fixed set of hidden cases."""

    def __init__(self, sessions, seed, n, dataset: Dataset | None = None):
        registry = dataset.dimensions if dataset else None
        catalog = dataset.item_catalog if dataset else None
        self.n = n
        self.cases, self.skipped = make_cases(sessions, seed, None, registry, catalog)

    def __call__(self, recommender, config: DaviConfig = NO_CONTEXT) -> float:
        return evaluate_cases(recommender, self.cases, config, [self.n]).f1_at(self.n)


# Single dimensions and best context.

@dataclass
class SweepResult:
    baseline: EvalReport
    by_dimension: dict[str, EvalReport | None]
    errors: dict[str, str] = field(default_factory=dict)


def sweep_single_dimensions(dataset: Dataset, algorithm: Callable, dims: Iterable[str],
                            n_values: Sequence[int], seed: int, ratio: float = 0.8,
                            split: EvalSplit | None = None) -> SweepResult:
    """Baseline plus one DaVI run per dimension, all on the same split."""
    split = split or split_sessions(dataset, ratio, seed)
    baseline = evaluate(fit(algorithm, split.train), split, NO_CONTEXT, n_values,
                        dataset.dimensions, dataset.item_catalog)
    result = SweepResult(baseline, {})
    for d in dims:
        config = DaviConfig((d,)).validate(dataset.dimensions)
        try:
            result.by_dimension[d] = evaluate(fit(algorithm, split.train, config), split, config, n_values,
                                              dataset.dimensions, dataset.item_catalog)
        except ResourceLimitError as exc:
            logger.warning("dimension %s aborted: %s", d, exc)
            result.by_dimension[d] = None
            result.errors[d] = str(exc)
    return result


def best_context(scores: Mapping[str, EvalReport | float | None], n_select: int = 1) -> str:
    """Dimension with the highest F1@n_select; ties go to the smallest name."""
    def value(v):
        return v.f1_at(n_select) if isinstance(v, EvalReport) else v

    ranked = sorted(((-value(v), d) for d, v in scores.items() if v is not None))
    if not ranked:
        raise ValueError("no dimension scores to choose from")
    return ranked[0][1]


# Forward selection.

def greedy_forward_selection(dims: Iterable[str], objective: Callable[[tuple[str, ...]], float]):
    """Add the best remaining dimension while it strictly improves the objective.

    Returns (selected dimensions, [(dimensions, score), ...] accepted steps).
    """
    remaining = sorted(set(dims))
    selected: tuple[str, ...] = ()
    current = objective(selected)
    trace = [(selected, current)]
    while remaining:
        scored = sorted((-objective(selected + (d,)), d) for d in remaining)
        best_score, best = -scored[0][0], scored[0][1]
        if not best_score > current:
            break
        selected += (best,)
        current = best_score
        remaining.remove(best)
        trace.append((selected, current))
    return list(selected), trace


def davi_objective(train: Sequence[Session], validation: Sequence[Session], algorithm: Callable,
                   n_select: int, seed: int, dataset: Dataset | None = None):
    scorer = _Scorer(validation, seed, n_select, dataset)
    cache: dict[tuple[str, ...], float] = {}

    def objective(dims: tuple[str, ...]) -> float:
        key = tuple(sorted(dims))
        if key not in cache:
            config = DaviConfig(key)
            try:
                cache[key] = scorer(fit(algorithm, train, config), config)
            except ResourceLimitError as exc:
                logger.warning("dimensions %s aborted: %s", key, exc)
                cache[key] = float("-inf")
        return cache[key]

    return objective


def forward_select(train: Sequence[Session], validation: Sequence[Session], dims: Iterable[str],
                   algorithm: Callable, n_select: int = 1, seed: int = 0,
                   dataset: Dataset | None = None) -> list[str]:
    objective = davi_objective(train, validation, algorithm, n_select, seed, dataset)
    return greedy_forward_selection(dims, objective)[0]


# Combined Reduction.

@dataclass
class SegmentModel:
    dimension: str
    value: str
    model: object
    f1: float
    baseline_f1: float | None = None

    @property
    def label(self) -> tuple[str, str]:
        return self.dimension, self.value


def segment_sessions(sessions: Iterable[Session], dimension: str, value: str) -> list[Session]:
    return [s for s in sessions if value in s.context.get(dimension, ())]


def combined_reduction_train(train: Sequence[Session], validation: Sequence[Session], dims: Iterable[str],
                             algorithm: Callable, n_select: int = 1, seed: int = 0,
                             min_segment_sessions: int = MIN_SEGMENT_SESSIONS,
                             score: Callable | None = None, dataset: Dataset | None = None):
    """Fit the context-free model and keep the segment models that beat it.

    ``score(model, sessions)`` gives F1@n_select on the given validation
    sessions; each segment is compared with the traditional model on the
    validation sessions of that same segment.
    """
    if score is None:
        def score(model, sessions):
            return _Scorer(sessions, seed, n_select, dataset)(model)

    traditional = fit(algorithm, train)
    segments, skipped = [], 0
    for d in dims:
        values = sorted({v for s in train for v in s.context.get(d, ())})
        for v in values:
            seg_train = segment_sessions(train, d, v)
            seg_val = segment_sessions(validation, d, v)
            if len(seg_train) < min_segment_sessions or not seg_val:
                skipped += 1
                continue
            try:
                model = fit(algorithm, seg_train)
                seg_f1 = score(model, seg_val)
                base_f1 = score(traditional, seg_val)
            except CtxRecError as exc:  # tiny segments can fail threshold selection or yield no cases
                logger.info("segment %s=%s skipped: %s", d, v, exc)
                skipped += 1
                continue
            if seg_f1 > base_f1:
                segments.append(SegmentModel(d, v, model, seg_f1, base_f1))
    logger.info("combined reduction: %d segments retained, %d skipped", len(segments), skipped)
    return traditional, segments


def combined_reduction_recommend(traditional, segments: Sequence[SegmentModel], observables: Iterable[str],
                                 active_context: Mapping[str, Iterable[str]], n: int) -> list[str]:
    matching = [s for s in segments if s.value in active_context.get(s.dimension, ())]
    if not matching:
        return traditional.recommend(observables, n)
    best = min(matching, key=lambda s: (-s.f1, s.dimension, s.value))
    return best.model.recommend(observables, n)


class CombinedReductionRecommender:
    """Routes each request to its best matching segment model.

    The active context arrives as virtual tokens inside the observables and
    is stripped before the plain (context-free) models see them.
    """

    name = "combined"

    def __init__(self, traditional, segments: Sequence[SegmentModel]):
        self.traditional = traditional
        self.segments = list(segments)

    def recommend(self, observables: Iterable[str], n: int) -> list[str]:
        items, context = [], {}
        for t in observables:
            if is_virtual(t):
                v = decode_virtual_item(t)
                context.setdefault(v.dimension, set()).add(v.value)
            else:
                items.append(t)
        return combined_reduction_recommend(self.traditional, self.segments, frozenset(items), context, n)


# Whole strategies, as run by the CLI and the comparison table.

STRATEGIES = ("baseline", "best", "forward", "all", "combined")


def run_strategy(strategy: str, dataset: Dataset, algorithm: Callable, dims: Sequence[str],
                 n_values: Sequence[int], seed: int, ratio: float = 0.8, n_select: int = 1,
                 min_segment_sessions: int = MIN_SEGMENT_SESSIONS, threads: int = 1,
                 per_user: bool = False) -> StrategyResult:
    """Run one strategy end to end: select on validation, refit on train, score on test.

    ``strategy`` is one of STRATEGIES or ``single:<dimension>``.
    """
    dims = list(dims)
    for d in dims:
        dataset.dimensions[d]
    split = split_sessions(dataset, ratio, seed)
    details: dict = {"seed": seed, "split": split.digest}

    def final(config: DaviConfig, recommender=None) -> EvalReport:
        recommender = recommender or fit(algorithm, split.train, config)
        return evaluate(recommender, split, config, n_values, dataset.dimensions, dataset.item_catalog,
                        per_user=per_user, threads=threads)

    try:
        if strategy == "baseline":
            chosen: tuple[str, ...] = ()
            report = final(NO_CONTEXT)
        elif strategy.startswith("single:"):
            chosen = (strategy.split(":", 1)[1],)
            report = final(DaviConfig(chosen).validate(dataset.dimensions))
        elif strategy == "all":
            chosen = tuple(dims)
            report = final(DaviConfig(chosen))
        elif strategy == "best":
            fit_part, val = validation_split(split.train, seed)
            objective = davi_objective(fit_part, val, algorithm, n_select, seed, dataset)
            scores = {d: objective((d,)) for d in dims}
            details["validation_f1"] = scores
            chosen = (best_context({d: s for d, s in scores.items() if s != float("-inf")}, n_select),)
            report = final(DaviConfig(chosen))
        elif strategy == "forward":
            fit_part, val = validation_split(split.train, seed)
            objective = davi_objective(fit_part, val, algorithm, n_select, seed, dataset)
            selected, trace = greedy_forward_selection(dims, objective)
            details["trace"] = [{"dims": list(d), "f1": f} for d, f in trace]
            chosen = tuple(selected)
            report = final(DaviConfig(chosen))
        elif strategy == "combined":
            fit_part, val = validation_split(split.train, seed)
            _, segments = combined_reduction_train(fit_part, val, dims, algorithm, n_select, seed,
                                                   min_segment_sessions, dataset=dataset)
            # Refit traditional and retained segment models on the full training set.
            traditional = fit(algorithm, split.train)
            refit = [SegmentModel(s.dimension, s.value, fit(algorithm, segment_sessions(split.train, *s.label)),
                                  s.f1, s.baseline_f1) for s in segments]
            details["segments"] = [{"dimension": s.dimension, "value": s.value, "f1": s.f1,
                                    "baseline_f1": s.baseline_f1} for s in segments]
            chosen = tuple(dims)
            report = final(DaviConfig(chosen), CombinedReductionRecommender(traditional, refit))
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
    except ResourceLimitError as exc:
        logger.warning("strategy %s aborted: %s", strategy, exc)
        return StrategyResult(strategy, tuple(dims), None, details, str(exc))
    return StrategyResult(strategy, chosen, report, details)


def davi_all_together(dataset: Dataset, algorithm: Callable, dims: Sequence[str], n_values: Sequence[int],
                      seed: int, ratio: float = 0.8) -> StrategyResult:
    return run_strategy("all", dataset, algorithm, dims, n_values, seed, ratio)


def comparison_table(dataset: Dataset, algorithms: Mapping[str, Callable], dims: Sequence[str], seed: int,
                     ratio: float = 0.8, n_select: int = 1, **kwargs) -> list[dict]:
    """Rows = methods, columns = algorithms, cells = F1@n_select ('-' on abort)."""
    labels = {"baseline": "user x item", "best": "DaVI (best context)", "forward": "DaVI (forward selection)",
              "all": "DaVI (all together)", "combined": "Combined Reduction"}
    rows = []
    for strategy in STRATEGIES:
        row = {"method": labels[strategy]}
        for name, algorithm in algorithms.items():
            res = run_strategy(strategy, dataset, algorithm, dims, [n_select], seed, ratio, n_select, **kwargs)
            row[name] = res.f1_cell(n_select)
        rows.append(row)
    return rows
