"""Inject context dimensions as virtual items into sessions and observables."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from ctxrec.domain import Dataset, DimensionRegistry, Session, encode_virtual_item
from ctxrec.errors import RegistryError


@dataclass(frozen=True)
class DaviConfig:
    active_dimensions: tuple[str, ...] = ()

    def __post_init__(self):
        dims = tuple(self.active_dimensions)
        if len(set(dims)) != len(dims):
            raise RegistryError(f"duplicate dimensions in {dims!r}")
        object.__setattr__(self, "active_dimensions", dims)

    def validate(self, registry: DimensionRegistry) -> "DaviConfig":
        for d in self.active_dimensions:
            registry[d]
        return self

    @property
    def label(self) -> str:
        return "+".join(self.active_dimensions) or "none"


NO_CONTEXT = DaviConfig()


def virtual_tokens(context: Mapping[str, Iterable[str]], config: DaviConfig) -> list[str]:
    return [encode_virtual_item(d, v)
            for d in config.active_dimensions
            for v in sorted(context.get(d, ()))]


def augment_session(session: Session, config: DaviConfig) -> frozenset[str]:
    return frozenset(session.items).union(virtual_tokens(session.context, config))


def augment_dataset(dataset: Dataset | Iterable[Session], config: DaviConfig) -> list[frozenset[str]]:
    sessions = dataset.sessions if isinstance(dataset, Dataset) else dataset
    return [augment_session(s, config) for s in sessions]


def observables_with_context(observed_items: Iterable[str], active_context: Mapping[str, Iterable[str]],
                             config: DaviConfig) -> frozenset[str]:
    """The observable set O: observed items plus the active session's virtual items.

    Item-attribute entries of ``active_context`` must come from
    ``observed_items`` alone (see ``evaluation.hide_one``).
    """
    return frozenset(observed_items).union(virtual_tokens(active_context, config))
