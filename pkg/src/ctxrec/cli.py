"""Command-line entry point: ``ctxrec {ingest,evaluate,sweep,compare,train,recommend}``.

Exit codes: 0 success, 2 input error, 3 resource limit.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ctxrec import ar, cf
from ctxrec.davi import DaviConfig, augment_dataset, observables_with_context
from ctxrec.domain import Dataset
from ctxrec.errors import CtxRecError, InputError, ResourceLimitError
from ctxrec.evaluation import split_sessions, write_csv, write_jsonl
from ctxrec.ingestion import load_dataset, read_dataset, save_dataset
from ctxrec.strategies import (
    STRATEGIES,
    comparison_table,
    recommender_factory,
    run_strategy,
    sweep_single_dimensions,
)

logger = logging.getLogger("ctxrec")

EXIT_OK, EXIT_INPUT, EXIT_RESOURCE = 0, 2, 3


@dataclass
class RunConfig:
    dataset: str
    out: str
    algorithm: str = "cf"
    strategy: str = "baseline"
    dimensions: list[str] = field(default_factory=list)
    n_max: int = 10
    ratio: float = 0.8
    seed: int = 0
    n_select: int = 1
    k: int | None = None
    user_vectors: bool = False
    min_support: float | None = None
    min_confidence: float | None = None
    max_itemsets: int = ar.DEFAULT_MAX_ITEMSETS
    min_segment_sessions: int = 30
    per_user: bool = False

    @property
    def n_values(self) -> list[int]:
        return list(range(1, self.n_max + 1))

    def algorithm_factory(self, name: str | None = None):
        name = name or self.algorithm
        if name == "cf":
            return recommender_factory("cf", k=self.k, user_vectors=self.user_vectors)
        return recommender_factory("ar", min_support=self.min_support, min_confidence=self.min_confidence,
                                   max_itemsets=self.max_itemsets)

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        names = {f for f in cls.__dataclass_fields__}
        values = {k: v for k, v in vars(args).items() if k in names and v is not None}
        return cls(**values)


def default_threads() -> int:
    env = os.environ.get("CTXREC_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _dims_arg(text: str) -> list[str]:
    return [d.strip() for d in text.split(",") if d.strip()]


def _open_dataset(path: str) -> Dataset:
    try:
        with open(path, encoding="utf-8") as fh:
            return read_dataset(fh)
    except OSError as exc:
        raise InputError(f"cannot read dataset {path}: {exc}") from exc


def _resolve_dims(cfg: RunConfig, dataset: Dataset) -> list[str]:
    dims = cfg.dimensions or list(dataset.dimensions)
    for d in dims:
        dataset.dimensions[d]
    return dims


def _write_reports(out: Path, records: list[dict], summary: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.jsonl", "w", encoding="utf-8", newline="") as fh:
        write_jsonl(records, fh)
    with open(out / "report.csv", "w", encoding="utf-8", newline="") as fh:
        write_csv(records, fh)
    with open(out / "summary.json", "w", encoding="utf-8", newline="") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


# Commands.

def cmd_ingest(args) -> int:
    try:
        log = open(args.log, encoding="utf-8")
        catalog = open(args.catalog, encoding="utf-8") if args.catalog else None
    except OSError as exc:
        raise InputError(str(exc)) from exc
    errors: list = []
    with log:
        try:
            dataset = load_dataset(log, catalog, args.dims, args.sessionize, args.gap,
                                   int(args.utc_offset_hours * 3600), errors)
        finally:
            if catalog:
                catalog.close()
    for line, reason in errors:
        print(f"{args.log}:{line}: skipped: {reason}", file=sys.stderr)
    with open(args.out, "w", encoding="utf-8") as fh:
        save_dataset(dataset, fh)
    st = dataset.stats
    print(f"accesses\t{st.accesses}")
    print(f"items\t{st.items}")
    print(f"users\t{st.users}")
    print(f"sessions\t{len(dataset.sessions)}")
    print(f"dimensions\t{','.join(dataset.dimensions) or '-'}")
    if errors:
        print(f"skipped_rows\t{len(errors)}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = RunConfig.from_args(args)
    dataset = _open_dataset(cfg.dataset)
    dims = _resolve_dims(cfg, dataset)
    if cfg.strategy not in STRATEGIES and not cfg.strategy.startswith("single:"):
        raise InputError(f"unknown strategy {cfg.strategy!r}")
    res = run_strategy(cfg.strategy, dataset, cfg.algorithm_factory(), dims, cfg.n_values, cfg.seed, cfg.ratio,
                       cfg.n_select, cfg.min_segment_sessions, args.threads, cfg.per_user)
    method = f"{cfg.algorithm}:{cfg.strategy}"
    records = res.report.records(method, res.dimensions) if res.report else [
        {"method": method, "dims": "+".join(res.dimensions), "N": n, "recall": "-", "precision": "-", "f1": "-",
         "cases": 0, "skipped": 0, "seed": cfg.seed, "split": res.details.get("split")} for n in cfg.n_values]
    summary = {"config": asdict(cfg), "strategy": res.strategy, "chosen_dimensions": list(res.dimensions),
               "details": res.details, "error": res.error}
    _write_reports(Path(cfg.out), records, summary)
    if res.report is None:
        print(f"resource limit: {res.error}", file=sys.stderr)
        return EXIT_RESOURCE
    print(f"{method} dims={'+'.join(res.dimensions) or 'none'} split={res.details['split']}")
    for r in res.report.rows:
        print(f"N={r.n}\trecall={r.recall:.4f}\tprecision={r.precision:.4f}\tf1={r.f1:.4f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = RunConfig.from_args(args)
    dataset = _open_dataset(cfg.dataset)
    dims = _resolve_dims(cfg, dataset)
    split = split_sessions(dataset, cfg.ratio, cfg.seed)
    sweep = sweep_single_dimensions(dataset, cfg.algorithm_factory(), dims, cfg.n_values, cfg.seed, split=split)
    records = sweep.baseline.records(f"{cfg.algorithm}:baseline", ())
    for d, report in sweep.by_dimension.items():
        if report is not None:
            records += report.records(f"{cfg.algorithm}:single", (d,))
    _write_reports(Path(cfg.out), records, {"config": asdict(cfg), "errors": sweep.errors, "split": split.digest})
    print(f"baseline\tF1@1={sweep.baseline.f1_at(1):.4f}")
    for d, report in sweep.by_dimension.items():
        print(f"{d}\tF1@1={report.f1_at(1):.4f}" if report else f"{d}\t-")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = RunConfig.from_args(args)
    dataset = _open_dataset(cfg.dataset)
    dims = _resolve_dims(cfg, dataset)
    algorithms = {name: cfg.algorithm_factory(name) for name in args.algorithms}
    rows = comparison_table(dataset, algorithms, dims, cfg.seed, cfg.ratio, cfg.n_select,
                            min_segment_sessions=cfg.min_segment_sessions, threads=args.threads)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "table.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["method", *algorithms], lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    for row in rows:
        print("\t".join(str(row[k]) for k in ["method", *algorithms]))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = RunConfig.from_args(args)
    dataset = _open_dataset(cfg.dataset)
    config = DaviConfig(tuple(cfg.dimensions)).validate(dataset.dimensions)
    sessions = augment_dataset(dataset, config)
    with open(cfg.out, "w", encoding="utf-8") as fh:
        if cfg.algorithm == "cf":
            keys = [s.user_id for s in dataset.sessions] if cfg.user_vectors else None
            cf.save_model(cf.build_similarity_model(sessions, keys), fh)
        else:
            rule_model = ar.train_rule_model(sessions, cfg.min_support, cfg.min_confidence, cfg.max_itemsets)
            ar.save_model(rule_model, fh)
    print(f"wrote {cfg.algorithm} model over {len(sessions)} sessions to {cfg.out}")
    return EXIT_OK


def load_any_model(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            tag = fh.readline().rstrip("\n")
            fh.seek(0)
            if tag == cf.FORMAT_TAG:
                return "cf", cf.load_model(fh)
            if tag == ar.FORMAT_TAG:
                return "ar", ar.load_model(fh)
    except OSError as exc:
        raise InputError(f"cannot read model {path}: {exc}") from exc
    raise InputError(f"{path} is not a ctxrec model file")


def cmd_recommend(args) -> int:
    kind, model = load_any_model(args.model)
    context: dict[str, set[str]] = {}
    for flag in args.context:
        dim, sep, value = flag.partition("=")
        if not sep or not dim:
            raise InputError(f"--context expects dim=value, got {flag!r}")
        context.setdefault(dim, set()).add(value)
    config = DaviConfig(tuple(context))
    observables = observables_with_context(_dims_arg(args.items), context, config)
    if kind == "cf":
        ranked = cf.scored_topn(model, observables, args.N, args.k)
    else:
        ranked = ar.scored_topn(model, observables, args.N)
    for item, score in ranked:
        print(f"{item} {score:.6f}")
    return EXIT_OK


# Argument parsing.

def _add_run_options(p: argparse.ArgumentParser, strategy: bool = True) -> None:
    p.add_argument("--dataset", required=True, help="normalized dataset file from `ctxrec ingest`")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, required=True, help="seed for every random choice")
    p.add_argument("--algorithm", choices=["cf", "ar"], default="cf")
    if strategy:
        p.add_argument("--strategy", default="baseline",
                       help="baseline | single:<dim> | best | forward | all | combined")
    p.add_argument("--dims", dest="dimensions", type=_dims_arg, help="comma-separated dimensions (default: all)")
    p.add_argument("--n-max", type=int, default=10, help="evaluate N = 1..n-max")
    p.add_argument("--ratio", type=float, default=0.8, help="training fraction of sessions")
    p.add_argument("--n-select", type=int, default=1, help="N used by selection strategies")
    p.add_argument("--k", type=int, help="CF neighbourhood size (default: all observables)")
    p.add_argument("--user-vectors", action="store_true", help="CF vectors over users instead of sessions")
    p.add_argument("--min-support", type=float)
    p.add_argument("--min-confidence", type=float)
    p.add_argument("--max-itemsets", type=int, default=ar.DEFAULT_MAX_ITEMSETS)
    p.add_argument("--min-segment-sessions", type=int, default=30)
    p.add_argument("--per-user", action="store_true", help="average metrics per user, then across users")
    p.add_argument("--threads", type=int, default=default_threads())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctxrec", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse an access log (+ catalog) into a dataset file")
    p.add_argument("--log", required=True)
    p.add_argument("--catalog")
    p.add_argument("--out", required=True)
    p.add_argument("--dims", type=_dims_arg, help="restrict registered dimensions")
    p.add_argument("--sessionize", choices=["session_id", "user_timeout"], default="session_id")
    p.add_argument("--gap", type=int, default=1800, help="inactivity gap in seconds (user_timeout)")
    p.add_argument("--utc-offset-hours", type=float, default=0.0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("evaluate", help="run one strategy and write reports")
    _add_run_options(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="baseline plus every single dimension")
    _add_run_options(p, strategy=False)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="F1@1 table of all strategies")
    _add_run_options(p, strategy=False)
    p.add_argument("--algorithms", type=_dims_arg, default=["cf", "ar"])
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("train", help="fit a model on the whole dataset and save it")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="model file")
    p.add_argument("--algorithm", choices=["cf", "ar"], default="cf")
    p.add_argument("--dims", dest="dimensions", type=_dims_arg, default=[])
    p.add_argument("--user-vectors", action="store_true")
    p.add_argument("--min-support", type=float)
    p.add_argument("--min-confidence", type=float)
    p.add_argument("--max-itemsets", type=int, default=ar.DEFAULT_MAX_ITEMSETS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("recommend", help="top-N for one active session")
    p.add_argument("--model", required=True)
    p.add_argument("--items", required=True, help="comma-separated observed items")
    p.add_argument("--context", action="append", default=[], metavar="DIM=VALUE")
    p.add_argument("-N", type=int, default=10)
    p.add_argument("--k", type=int)
    p.set_defaults(func=cmd_recommend)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ResourceLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (CtxRecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
