"""Access-log and item-catalog parsing, temporal context, sessionization."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import replace
from datetime import datetime, timedelta, timezone
from functools import partial
from itertools import groupby
from typing import IO, Iterable, Sequence

from ctxrec.domain import (
    ITEM_ATTRIBUTE,
    SESSION_ATTRIBUTE,
    TEMPORAL,
    Access,
    ContextDimension,
    Dataset,
    DatasetStats,
    DimensionRegistry,
    Session,
    build_dataset,
)
from ctxrec.errors import IngestError

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("session_id", "user_id", "item_id")
CONTEXT_PREFIX = "ctx_"
TEMPORAL_DIMENSIONS = ("day", "month", "week_day", "work_day", "hour", "work_hour")
WEEK_DAYS = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday")
WORK_HOURS = range(8, 18)
DEFAULT_GAP_SECONDS = 1800


def parse_timestamp(text: str) -> int:
    """ISO-8601 (naive means UTC) or integer epoch seconds -> epoch seconds."""
    text = text.strip()
    if text.lstrip("-").isdigit():
        return int(text)
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def parse_access_log(stream: IO[str], errors: list[tuple[int, str]] | None = None) -> list[Access]:
    """Read the access-log CSV. Bad rows are skipped and reported into ``errors``."""
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise IngestError("access log is empty (header row required)") from None
    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise IngestError(f"access log is missing mandatory column {col!r}")
    pos = {name: i for i, name in enumerate(header)}
    ts_pos = pos.get("timestamp")
    ctx_cols = [(name[len(CONTEXT_PREFIX):], i) for name, i in pos.items()
                if name.startswith(CONTEXT_PREFIX) and len(name) > len(CONTEXT_PREFIX)]
    known = set(REQUIRED_COLUMNS) | {"timestamp"} | {CONTEXT_PREFIX + c for c, _ in ctx_cols}
    unknown = [h for h in header if h not in known]
    if unknown:
        logger.warning("ignoring unknown access-log columns: %s", ", ".join(unknown))

    errors = errors if errors is not None else []
    accesses = []
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(header):
            errors.append((line, f"expected {len(header)} fields, got {len(row)}"))
            continue
        if any("," in f for f in row):
            errors.append((line, "field contains a comma"))
            continue
        sid, uid, item = (row[pos[c]].strip() for c in REQUIRED_COLUMNS)
        if not (sid and uid and item):
            errors.append((line, "empty session_id, user_id or item_id"))
            continue
        if item.startswith("ctx:"):
            raise IngestError(f"line {line}: item id {item!r} uses the reserved prefix 'ctx:'")
        ts = None
        if ts_pos is not None and row[ts_pos].strip():
            try:
                ts = parse_timestamp(row[ts_pos])
            except ValueError:
                errors.append((line, f"malformed timestamp {row[ts_pos]!r}"))
                continue
        raw = {name: row[i].strip() for name, i in ctx_cols if row[i].strip()}
        accesses.append(Access(sid, uid, item, ts, raw))
    if errors:
        logger.warning("skipped %d malformed access-log rows (first at line %d: %s)",
                       len(errors), errors[0][0], errors[0][1])
    return accesses


def derive_temporal_contexts(timestamp: int, utc_offset_seconds: int = 0) -> dict[str, str]:
    """Temporal dimension values for one instant.

    Numeric values are zero-padded so string order equals numeric order.
    Hours run 00-23; the working window is [08:00, 18:00).
    """
    dt = datetime.fromtimestamp(timestamp, tz=timezone.utc) + timedelta(seconds=utc_offset_seconds)
    week_day = WEEK_DAYS[dt.weekday()]
    return {
        "day": f"{dt.day:02d}",
        "month": f"{dt.month:02d}",
        "week_day": week_day,
        "work_day": "weekend" if dt.weekday() >= 5 else "weekday",
        "hour": f"{dt.hour:02d}",
        "work_hour": "work" if dt.hour in WORK_HOURS else "nonwork",
    }


def load_item_catalog(stream: IO[str], warnings: list[str] | None = None) -> dict[str, dict[str, str]]:
    """Long-format ``item_id,attribute,value`` CSV -> {item: {attribute: value}}."""
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["item_id", "attribute", "value"]:
        raise IngestError(f"item catalog header must be item_id,attribute,value (got {header!r})")
    catalog: dict[str, dict[str, str]] = {}
    for row in reader:
        if not row:
            continue
        if len(row) != 3:
            raise IngestError(f"catalog line {reader.line_num}: expected 3 fields, got {len(row)}")
        item, attr, value = (f.strip() for f in row)
        attrs = catalog.setdefault(item, {})
        if attr in attrs:
            msg = f"catalog line {reader.line_num}: {item}.{attr} overwritten ({attrs[attr]!r} -> {value!r})"
            logger.warning(msg)
            if warnings is not None:
                warnings.append(msg)
        attrs[attr] = value
    return catalog


def assign_timeout_sessions(accesses: Sequence[Access], gap_seconds: int = DEFAULT_GAP_SECONDS) -> list[Access]:
    """Re-key accesses into ``<user>#<k>`` sessions split at inactivity gaps."""
    if any(a.timestamp is None for a in accesses):
        raise IngestError("timeout sessionization requires a timestamp on every access")
    order = sorted(range(len(accesses)), key=lambda i: (accesses[i].user_id, accesses[i].timestamp, i))
    out = []
    for user, idx in groupby(order, key=lambda i: accesses[i].user_id):
        k, last = 0, None
        for i in idx:
            a = accesses[i]
            if last is not None and a.timestamp - last > gap_seconds:
                k += 1
            last = a.timestamp
            out.append(replace(a, session_id=f"{user}#{k}"))
    return out


def sessionize(accesses: Sequence[Access], mode: str = "session_id",
               gap_seconds: int = DEFAULT_GAP_SECONDS) -> list[Session]:
    if mode == "user_timeout":
        accesses = assign_timeout_sessions(accesses, gap_seconds)
    elif mode != "session_id":
        raise ValueError(f"unknown sessionization mode {mode!r}")
    return list(build_dataset(accesses).sessions)


def infer_dimensions(accesses: Sequence[Access], catalog, names: Iterable[str] | None = None) -> DimensionRegistry:
    """Registry of every dimension the inputs can supply, optionally restricted to ``names``."""
    dims = []
    if accesses and all(a.timestamp is not None for a in accesses):
        dims += [ContextDimension(n, TEMPORAL) for n in TEMPORAL_DIMENSIONS]
    session_names = sorted({k for a in accesses for k in a.raw_context})
    dims += [ContextDimension(n, SESSION_ATTRIBUTE) for n in session_names]
    taken = {d.name for d in dims}
    item_names = sorted({k for attrs in catalog.values() for k in attrs} - taken)
    dims += [ContextDimension(n, ITEM_ATTRIBUTE) for n in item_names]
    registry = DimensionRegistry(dims)
    if names is not None:
        registry = registry.subset(names)
    return registry


def load_dataset(log: IO[str], catalog: IO[str] | None = None, dimensions: Iterable[str] | None = None,
                 mode: str = "session_id", gap_seconds: int = DEFAULT_GAP_SECONDS,
                 utc_offset_seconds: int = 0, errors: list | None = None) -> Dataset:
    accesses = parse_access_log(log, errors)
    if not accesses:
        raise IngestError("access log has no valid rows")
    item_catalog = load_item_catalog(catalog) if catalog is not None else {}
    if mode == "user_timeout":
        accesses = assign_timeout_sessions(accesses, gap_seconds)
    elif mode != "session_id":
        raise ValueError(f"unknown sessionization mode {mode!r}")
    registry = infer_dimensions(accesses, item_catalog, dimensions)
    temporal = partial(derive_temporal_contexts, utc_offset_seconds=utc_offset_seconds)
    return build_dataset(accesses, item_catalog, registry, temporal)


# Normalized dataset file (JSON).

def dataset_to_json(dataset: Dataset) -> dict:
    return {
        "format": "ctxrec-dataset/1",
        "dimensions": [{"name": d.name, "source": d.source} for d in dataset.dimensions.values()],
        "stats": {"accesses": dataset.stats.accesses, "items": dataset.stats.items,
                  "users": dataset.stats.users},
        "catalog": dataset.item_catalog,
        "sessions": [
            {"id": s.session_id, "user": s.user_id, "items": list(s.items), "accesses": s.n_accesses,
             "context": {d: sorted(v) for d, v in s.context.items()}}
            for s in dataset.sessions
        ],
    }


def dataset_from_json(data: dict) -> Dataset:
    if data.get("format") != "ctxrec-dataset/1":
        raise IngestError("not a ctxrec dataset file")
    dims = DimensionRegistry(ContextDimension(d["name"], d["source"]) for d in data["dimensions"])
    sessions = tuple(
        Session(s["id"], tuple(s["items"]), {d: frozenset(v) for d, v in s["context"].items()},
                s["user"], s["accesses"])
        for s in data["sessions"]
    )
    stats = DatasetStats(**data["stats"])
    ds = Dataset(sessions, data["catalog"], dims, stats)
    if ds.recount() != stats:
        raise IngestError("dataset file stats do not match its sessions")
    return ds


def save_dataset(dataset: Dataset, fh: IO[str]) -> None:
    json.dump(dataset_to_json(dataset), fh, sort_keys=True)
    fh.write("\n")


def read_dataset(fh: IO[str]) -> Dataset:
    try:
        return dataset_from_json(json.load(fh))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise IngestError(f"unreadable dataset file: {exc}") from exc
