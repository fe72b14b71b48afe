import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctxrec.domain import (
    ITEM_ATTRIBUTE,
    SESSION_ATTRIBUTE,
    Access,
    ContextDimension,
    DimensionRegistry,
    VirtualItem,
    build_dataset,
    decode_virtual_item,
    encode_virtual_item,
)
from ctxrec.errors import EncodingError, IngestError, RegistryError

dim_names = st.text(min_size=1).filter(lambda s: "=" not in s)


def test_encode_examples():
    assert encode_virtual_item("day", "05") == "ctx:day=05"
    assert encode_virtual_item("band", "Xutos") == "ctx:band=Xutos"
    assert decode_virtual_item(encode_virtual_item("hour", "14")) == VirtualItem("hour", "14")


def test_encode_rejects_bad_dimension_names():
    with pytest.raises(EncodingError):
        encode_virtual_item("a=b", "1")
    registry = DimensionRegistry([ContextDimension("day", "temporal")])
    with pytest.raises(RegistryError):
        encode_virtual_item("hour", "14", registry)
    assert encode_virtual_item("day", "01", registry) == "ctx:day=01"


def test_value_may_contain_equals_sign():
    assert decode_virtual_item(encode_virtual_item("q", "a=b")) == VirtualItem("q", "a=b")


@given(dim_names, st.text(), dim_names, st.text())
def test_encoding_is_injective(d1, v1, d2, v2):
    same = encode_virtual_item(d1, v1) == encode_virtual_item(d2, v2)
    assert same == ((d1, v1) == (d2, v2))


@given(dim_names, st.text())
def test_round_trip(d, v):
    assert decode_virtual_item(encode_virtual_item(d, v)) == VirtualItem(d, v)


def test_registry_rejects_duplicates_and_bad_names():
    with pytest.raises(RegistryError):
        DimensionRegistry([ContextDimension("day", "temporal"), ContextDimension("day", "temporal")])
    with pytest.raises(EncodingError):
        ContextDimension("a=b", "temporal")


def _acc(sid, item, user="u1", **ctx):
    return Access(sid, user, item, None, ctx)


def test_grouping_and_dedup():
    ds = build_dataset([_acc("s1", "A"), _acc("s1", "A"), _acc("s1", "B"), _acc("s2", "C", "u2")])
    assert [s.session_id for s in ds.sessions] == ["s1", "s2"]
    assert ds.sessions[0].items == ("A", "B")
    assert ds.stats.accesses == 4
    assert ds.stats.items == 3
    assert ds.stats.users == 2
    assert ds.recount() == ds.stats


def test_three_accesses_two_sessions():
    ds = build_dataset([_acc("s1", "A"), _acc("s1", "B"), _acc("s2", "A")])
    assert len(ds.sessions) == 2


def test_item_attribute_context_is_union_over_items():
    dims = DimensionRegistry([ContextDimension("band", ITEM_ATTRIBUTE)])
    catalog = {"A": {"band": "X"}, "B": {"band": "Y"}}
    ds = build_dataset([_acc("s1", "A"), _acc("s1", "B")], catalog, dims)
    assert ds.sessions[0].context["band"] == {"X", "Y"}


def test_catalog_miss_warns_and_omits(caplog):
    dims = DimensionRegistry([ContextDimension("band", ITEM_ATTRIBUTE)])
    ds = build_dataset([_acc("s1", "Z")], {}, dims)
    assert "band" not in ds.sessions[0].context
    assert "missing from catalog" in caplog.text


def test_session_attribute_values_are_unioned():
    dims = DimensionRegistry([ContextDimension("intention", SESSION_ATTRIBUTE)])
    ds = build_dataset([_acc("s1", "A", intention="cheaper"), _acc("s1", "B", intention="closer")], {}, dims)
    assert ds.sessions[0].context["intention"] == {"cheaper", "closer"}


def test_reserved_prefix_rejected():
    with pytest.raises(IngestError):
        build_dataset([_acc("s1", "ctx:day=01")])


@given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("ABCDE"), st.sampled_from("uv")), min_size=1))
def test_stats_match_recount(rows):
    ds = build_dataset([_acc(s, i, u) for s, i, u in rows])
    assert ds.stats.accesses == len(rows)
    assert ds.stats.items == len({i for _, i, _ in rows})
    assert sum(s.n_accesses for s in ds.sessions) == len(rows)
