from __future__ import annotations

import copy
import json

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from oracles import apply_patch
from sb3repair import patch as P
from sb3repair.builder import Sprite, build_project, change_x, repeat, when_flag
from sb3repair.project import ProjectDocument
from strategies import JSON, doc_and_patch


def _run(doc, ops):
    try:
        return "ok", P.apply_to_value(doc, P.patch_from_ops(ops))
    except P.ApplicationFailure as exc:
        return "error", (exc.index, exc.cause)


# RFC 6902 appendix A, abridged
RFC_CASES = [
    ({"foo": "bar"}, [{"op": "add", "path": "/baz", "value": "qux"}], {"baz": "qux", "foo": "bar"}),
    ({"foo": ["bar", "baz"]}, [{"op": "add", "path": "/foo/1", "value": "qux"}], {"foo": ["bar", "qux", "baz"]}),
    ({"baz": "qux", "foo": "bar"}, [{"op": "remove", "path": "/baz"}], {"foo": "bar"}),
    ({"foo": ["bar", "qux", "baz"]}, [{"op": "remove", "path": "/foo/1"}], {"foo": ["bar", "baz"]}),
    ({"baz": "qux", "foo": "bar"}, [{"op": "replace", "path": "/baz", "value": "boo"}], {"baz": "boo", "foo": "bar"}),
    (
        {"foo": {"bar": "baz", "waldo": "fred"}, "qux": {"corge": "grault"}},
        [{"op": "move", "from": "/foo/waldo", "path": "/qux/thud"}],
        {"foo": {"bar": "baz"}, "qux": {"corge": "grault", "thud": "fred"}},
    ),
    ({"foo": ["all", "grass", "cows", "eat"]}, [{"op": "move", "from": "/foo/1", "path": "/foo/3"}], {"foo": ["all", "cows", "eat", "grass"]}),
    ({"foo": "bar"}, [{"op": "add", "path": "/child", "value": {"grandchild": {}}}], {"foo": "bar", "child": {"grandchild": {}}}),
    ({"foo": ["bar"]}, [{"op": "add", "path": "/foo/-", "value": ["abc", "def"]}], {"foo": ["bar", ["abc", "def"]]}),
    ({"/": 9, "~1": 10}, [{"op": "test", "path": "/~01", "value": 10}], {"/": 9, "~1": 10}),
    ({"foo": None}, [{"op": "add", "path": "/foo", "value": 1}], {"foo": 1}),
]


@pytest.mark.parametrize("doc, ops, expected", RFC_CASES)
def test_rfc_examples(doc, ops, expected):
    assert _run(doc, ops) == ("ok", expected)


@pytest.mark.parametrize(
    "doc, ops, cause",
    [
        ({"foo": "bar"}, [{"op": "add", "path": "/baz/bat", "value": "qux"}], "missing"),
        ({"baz": "qux"}, [{"op": "test", "path": "/baz", "value": "bar"}], "test_failed"),
        ({"/": 9, "~1": 10}, [{"op": "test", "path": "/~01", "value": "10"}], "test_failed"),
        ({"foo": ["bar", "baz"]}, [{"op": "add", "path": "/foo/3", "value": 1}], "bad_index"),
        ({"foo": ["bar"]}, [{"op": "remove", "path": "/foo/01"}], "bad_index"),
        ({"foo": 1}, [{"op": "add", "path": "/foo/x", "value": 1}], "not_container"),
        ({"foo": {}}, [{"op": "move", "from": "/foo", "path": "/foo/x"}], "invalid_target"),
        ({"foo": 1}, [{"op": "remove", "path": ""}], "invalid_target"),
        ({"a": 1}, [{"op": "copy", "from": "/b", "path": "/c"}], "missing"),
        ({"a": True}, [{"op": "test", "path": "/a", "value": 1}], "test_failed"),
    ],
)
def test_failure_causes(doc, ops, cause):
    assert _run(doc, ops) == ("error", (0, cause))
    assert apply_patch(doc, ops) == ("error", (0, cause))


def test_apply_is_atomic_and_does_not_mutate():
    doc = {"a": [1, 2], "b": {"c": 1}}
    before = copy.deepcopy(doc)
    ops = [{"op": "add", "path": "/a/-", "value": 3}, {"op": "remove", "path": "/zzz"}]
    with pytest.raises(P.ApplicationFailure) as info:
        P.apply_to_value(doc, P.patch_from_ops(ops))
    assert info.value.index == 1 and info.value.cause == "missing"
    assert info.value.document == before
    assert doc == before


def test_added_values_are_not_aliased():
    value = {"x": [1]}
    out = P.apply_to_value({}, P.patch_from_ops([{"op": "add", "path": "/v", "value": value}]))
    out["v"]["x"].append(2)
    assert value == {"x": [1]}


def test_numbers_compare_as_json():
    assert P.json_equal(1, 1.0)
    assert not P.json_equal(True, 1)
    assert not P.json_equal("1", 1)
    assert P.json_equal({"a": [1.0]}, {"a": [1]})


@settings(max_examples=400, deadline=None, suppress_health_check=list(HealthCheck))
@given(doc_and_patch())
def test_matches_reference_applier(pair):
    doc, ops = pair
    got = _run(doc, ops)
    expected = apply_patch(doc, ops)
    assert got[0] == expected[0]
    if got[0] == "ok":
        assert P.json_equal(got[1], expected[1])
    else:
        assert got[1] == expected[1]


@settings(max_examples=200)
@given(JSON)
def test_empty_patch_is_identity(doc):
    assert P.json_equal(P.apply_to_value(doc, P.PatchDocument(())), doc)


@settings(max_examples=200, suppress_health_check=list(HealthCheck))
@given(doc_and_patch())
def test_add_then_remove_of_fresh_key_is_identity(pair):
    doc, _ = pair
    if not isinstance(doc, dict) or "__fresh__" in doc:
        return
    ops = [{"op": "add", "path": "/__fresh__", "value": 1}, {"op": "remove", "path": "/__fresh__"}]
    assert P.json_equal(P.apply_to_value(doc, P.patch_from_ops(ops)), doc)


# -- extraction ---------------------------------------------------------------------------


def test_extract_bare_array_and_wrapped_object():
    ops = [{"op": "replace", "path": "/a", "value": 1}]
    assert P.extract_patch(json.dumps(ops)).to_json() == ops
    assert P.extract_patch(json.dumps({"ops": ops})).to_json() == ops


def test_extract_prefers_fenced_block():
    inline = [{"op": "remove", "path": "/x"}]
    fenced = [{"op": "add", "path": "/y", "value": 2}]
    text = f"Maybe {json.dumps(inline)}? Final:\n```json\n{json.dumps(fenced)}\n```"
    assert P.extract_patch(text).to_json() == fenced


def test_extract_skips_non_patch_json():
    text = 'Context {"targets": []} then [1, 2] and finally [{"op": "test", "path": "", "value": {}}]'
    assert len(P.extract_patch(text)) == 1


@pytest.mark.parametrize("text", ["", "no json here", "[1, 2, 3]", '{"op": "add"}', "```json\n[{\"op\": \n```"])
def test_extraction_failures(text):
    with pytest.raises(P.ExtractionFailure):
        P.extract_patch(text)


def test_empty_list_is_a_valid_noop_patch():
    assert P.extract_patch("[]").is_noop


# -- schema ------------------------------------------------------------------------------


def _ops(n):
    return P.patch_from_ops([{"op": "test", "path": "", "value": {}}] * n)


def test_budget_message_names_cap_and_count():
    with pytest.raises(P.BudgetExceeded) as info:
        P.validate(_ops(5), P.PatchSchema(3))
    assert "operation budget 3, received 5" in str(info.value)
    assert P.validate(_ops(3), P.PatchSchema(3))


@pytest.mark.parametrize(
    "op, error",
    [
        ({"op": "frobnicate", "path": "/a"}, P.ForbiddenKind),
        ({"op": "add", "path": "/a"}, P.MalformedOperation),
        ({"op": "move", "path": "/a"}, P.MalformedOperation),
        ({"op": "remove", "path": "a"}, P.MalformedOperation),
        ({"op": "remove", "path": 3}, P.MalformedOperation),
        ({"op": "remove", "path": "/meta/x"}, P.ForbiddenPath),
        ({"op": "copy", "from": "/meta", "path": "/targets/0"}, P.ForbiddenPath),
    ],
)
def test_schema_violations(op, error):
    schema = P.PatchSchema(5, allowed_path_prefixes=("/targets",))
    with pytest.raises(error):
        P.validate(P.patch_from_ops([op]), schema)


def test_schema_violations_are_one_family():
    for cls in (P.BudgetExceeded, P.ForbiddenKind, P.ForbiddenPath, P.MalformedOperation):
        assert issubclass(cls, P.SchemaViolation)


def test_json_schema_carries_the_cap():
    schema = P.PatchSchema(4).to_json_schema()
    assert schema["maxItems"] == 4
    assert set(schema["items"]["properties"]["op"]["enum"]) == P.KINDS


def test_normalize_drops_stray_fields_and_canonicalizes_pointers():
    raw = P.patch_from_ops([{"op": "remove", "path": "/a~1b", "value": 5, "note": "x"}])
    assert P.normalize(raw).to_json() == [{"op": "remove", "path": "/a~1b"}]


@settings(max_examples=100)
@given(st.lists(st.sampled_from(["add", "remove", "replace", "test"]), max_size=6))
def test_normalize_is_idempotent(kinds):
    ops = P.patch_from_ops([{"op": k, "path": "/x", "value": 1} for k in kinds])
    once = P.normalize(ops)
    assert P.normalize(once) == once


# -- projects ----------------------------------------------------------------------------


def test_apply_to_project_validates_result():
    project = ProjectDocument(build_project([Sprite("Cat", scripts=[when_flag(repeat(2, change_x(1)))])]))
    with pytest.raises(P.ApplicationFailure) as info:
        P.apply(project, P.patch_from_ops([{"op": "replace", "path": "/targets/0/isStage", "value": False}]))
    assert info.value.cause == "invalid_project"
    fixed = P.apply(project, P.patch_from_ops([{"op": "replace", "path": "/targets/1/x", "value": 7}]))
    assert fixed.sprites[0]["x"] == 7
    assert project.sprites[0]["x"] == 0
