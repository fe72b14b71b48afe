"""Core data model: item tokens, virtual items, sessions, datasets."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from ctxrec.errors import EncodingError, IngestError, RegistryError

logger = logging.getLogger(__name__)

VIRTUAL_PREFIX = "ctx:"

TEMPORAL = "temporal"
ITEM_ATTRIBUTE = "item_attribute"
SESSION_ATTRIBUTE = "session_attribute"
SOURCES = (TEMPORAL, ITEM_ATTRIBUTE, SESSION_ATTRIBUTE)


def is_virtual(token: str) -> bool:
    return token.startswith(VIRTUAL_PREFIX)


def check_item_id(item: str) -> str:
    if not item:
        raise IngestError("empty item id")
    if is_virtual(item):
        raise IngestError(f"item id {item!r} uses the reserved prefix {VIRTUAL_PREFIX!r}")
    return item


@dataclass(frozen=True, order=True)
class VirtualItem:
    dimension: str
    value: str

    @property
    def encoded(self) -> str:
        return f"{VIRTUAL_PREFIX}{self.dimension}={self.value}"

    def __str__(self) -> str:
        return self.encoded


def encode_virtual_item(dimension: str, value: str, registry: "DimensionRegistry | None" = None) -> str:
    """Encode a (dimension, value) context pair as an item token.

    The dimension name may not contain ``=``; the value may, since decoding
    splits on the first ``=`` only.
    """
    if "=" in dimension or not dimension:
        raise EncodingError(f"invalid dimension name {dimension!r}")
    if registry is not None and dimension not in registry:
        raise RegistryError(f"dimension {dimension!r} is not registered")
    return VirtualItem(dimension, value).encoded


def decode_virtual_item(token: str) -> VirtualItem:
    if not is_virtual(token):
        raise EncodingError(f"{token!r} is not a virtual item")
    dimension, sep, value = token[len(VIRTUAL_PREFIX):].partition("=")
    if not sep or not dimension:
        raise EncodingError(f"malformed virtual item {token!r}")
    return VirtualItem(dimension, value)


@dataclass(frozen=True)
class ContextDimension:
    name: str
    source: str
    domain: frozenset[str] | None = None

    def __post_init__(self):
        if not self.name or "=" in self.name:
            raise EncodingError(f"invalid dimension name {self.name!r}")
        if self.source not in SOURCES:
            raise RegistryError(f"unknown dimension source {self.source!r}")


class DimensionRegistry(Mapping[str, ContextDimension]):
    """Ordered, name-unique collection of context dimensions."""

    def __init__(self, dimensions: Iterable[ContextDimension] = ()):
        self._dims: dict[str, ContextDimension] = {}
        for dim in dimensions:
            if dim.name in self._dims:
                raise RegistryError(f"duplicate dimension {dim.name!r}")
            self._dims[dim.name] = dim

    def __getitem__(self, name: str) -> ContextDimension:
        try:
            return self._dims[name]
        except KeyError:
            raise RegistryError(f"dimension {name!r} is not registered") from None

    def __iter__(self):
        return iter(self._dims)

    def __len__(self) -> int:
        return len(self._dims)

    def __repr__(self) -> str:
        return f"DimensionRegistry({list(self._dims.values())!r})"

    def of_source(self, source: str) -> list[str]:
        return [d.name for d in self._dims.values() if d.source == source]

    def subset(self, names: Iterable[str]) -> "DimensionRegistry":
        return DimensionRegistry(self[n] for n in names)


@dataclass(frozen=True)
class Access:
    session_id: str
    user_id: str
    item: str
    timestamp: int | None = None
    raw_context: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Session:
    session_id: str
    items: tuple[str, ...]
    context: Mapping[str, frozenset[str]] = field(default_factory=dict)
    user_id: str | None = None
    n_accesses: int = 0

    def __post_init__(self):
        if not self.items:
            raise ValueError(f"session {self.session_id!r} has no items")
        if len(set(self.items)) != len(self.items):
            raise ValueError(f"session {self.session_id!r} has duplicate items")
        if self.n_accesses == 0:
            object.__setattr__(self, "n_accesses", len(self.items))


@dataclass(frozen=True)
class DatasetStats:
    accesses: int
    items: int
    users: int


@dataclass(frozen=True)
class Dataset:
    sessions: tuple[Session, ...]
    item_catalog: Mapping[str, Mapping[str, str]]
    dimensions: DimensionRegistry
    stats: DatasetStats

    @classmethod
    def from_sessions(cls, sessions, item_catalog=None, dimensions=None) -> "Dataset":
        sessions = tuple(sessions)
        return cls(sessions, item_catalog or {}, dimensions or DimensionRegistry(),
                   compute_stats(sessions))

    def recount(self) -> DatasetStats:
        return compute_stats(self.sessions)


def compute_stats(sessions: Iterable[Session]) -> DatasetStats:
    n_accesses = 0
    items: set[str] = set()
    users: set[str] = set()
    for s in sessions:
        n_accesses += s.n_accesses
        items.update(s.items)
        users.add(s.user_id if s.user_id is not None else s.session_id)
    return DatasetStats(n_accesses, len(items), len(users))


def item_attribute_context(items: Iterable[str], dimensions: Iterable[str],
                           catalog: Mapping[str, Mapping[str, str]],
                           missing: list[str] | None = None) -> dict[str, frozenset[str]]:
    """Union of catalog attribute values over ``items`` for each dimension.

    Items absent from the catalog contribute nothing; their ids are appended
    to ``missing`` when a list is supplied.
    """
    dimensions = list(dimensions)
    values: dict[str, set[str]] = {d: set() for d in dimensions}
    for item in items:
        attrs = catalog.get(item)
        if attrs is None:
            if missing is not None:
                missing.append(item)
            continue
        for d in dimensions:
            if d in attrs:
                values[d].add(attrs[d])
    return {d: frozenset(v) for d, v in values.items() if v}


TemporalFn = Callable[[int], Mapping[str, str]]


def build_dataset(accesses: Iterable[Access], catalog: Mapping[str, Mapping[str, str]] | None = None,
                  dims: DimensionRegistry | None = None,
                  temporal: TemporalFn | None = None) -> Dataset:
    """Group accesses by session id and attach per-session context.

    ``temporal`` maps an epoch timestamp to temporal dimension values; it is
    required only when ``dims`` holds temporal dimensions.
    """
    catalog = catalog or {}
    dims = dims if dims is not None else DimensionRegistry()
    temporal_dims = dims.of_source(TEMPORAL)
    item_dims = dims.of_source(ITEM_ATTRIBUTE)
    session_dims = dims.of_source(SESSION_ATTRIBUTE)
    if temporal_dims and temporal is None:
        raise RegistryError("temporal dimensions requested without a temporal derivation")

    grouped: dict[str, dict] = {}
    for a in accesses:
        if not a.session_id or not a.user_id:
            raise IngestError(f"access without session or user id: {a!r}")
        check_item_id(a.item)
        g = grouped.get(a.session_id)
        if g is None:
            g = grouped[a.session_id] = {"user": a.user_id, "items": {}, "n": 0,
                                        "ctx": {d: set() for d in temporal_dims + session_dims}}
        g["items"].setdefault(a.item, None)
        g["n"] += 1
        if temporal_dims:
            if a.timestamp is None:
                raise IngestError(f"temporal dimensions need timestamps (session {a.session_id!r})")
            derived = temporal(a.timestamp)
            for d in temporal_dims:
                g["ctx"][d].add(derived[d])
        for d in session_dims:
            if d in a.raw_context:
                g["ctx"][d].add(a.raw_context[d])

    missing: list[str] = []
    sessions = []
    for sid, g in grouped.items():
        context = {d: frozenset(v) for d, v in g["ctx"].items() if v}
        if item_dims:
            context.update(item_attribute_context(g["items"], item_dims, catalog, missing))
        ordered = {d: context[d] for d in dims if d in context}
        sessions.append(Session(sid, tuple(g["items"]), ordered, g["user"], g["n"]))
    if missing:
        logger.warning("%d item references missing from catalog (e.g. %r); context omitted",
                       len(missing), sorted(set(missing))[:3])
    return Dataset.from_sessions(sessions, catalog, dims)
