import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ctxrec.domain import (  # noqa: E402
    ITEM_ATTRIBUTE,
    SESSION_ATTRIBUTE,
    ContextDimension,
    Dataset,
    DimensionRegistry,
    Session,
)


@pytest.fixture
def toy_sessions():
    return [frozenset("AB"), frozenset("AB"), frozenset("AC")]


@pytest.fixture
def band_dataset():
    """Sessions with an item-attribute dimension (band) and a session dimension (day)."""
    catalog = {"A": {"band": "X"}, "B": {"band": "Y"}, "C": {"band": "X"}}
    dims = DimensionRegistry([ContextDimension("day", SESSION_ATTRIBUTE),
                              ContextDimension("band", ITEM_ATTRIBUTE)])
    sessions = [
        Session("s1", ("A", "B"), {"day": frozenset({"05"}), "band": frozenset({"X", "Y"})}, "u1"),
        Session("s2", ("A", "C"), {"day": frozenset({"06"}), "band": frozenset({"X"})}, "u2"),
    ]
    return Dataset.from_sessions(sessions, catalog, dims)
