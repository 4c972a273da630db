"""Reference JSON Pointer resolver and JSON Patch applier used as test oracles.

Written independently of the package: documents are never mutated, every
operation rebuilds the spine of the path it touches. Failures are reported
with the same cause vocabulary as the package (missing, not_container,
bad_index, test_failed, invalid_target).
"""
from __future__ import annotations

import re
from typing import Any

_TOKEN = re.compile(r"(?:[^~]|~[01])*")
_INDEX = re.compile(r"0|[1-9][0-9]*")


class OracleFailure(Exception):
    def __init__(self, cause: str):
        super().__init__(cause)
        self.cause = cause


def parse_pointer(text: str) -> list[str]:
    if text == "":
        return []
    if not text.startswith("/"):
        raise ValueError(f"pointer must start with '/': {text!r}")
    tokens = text[1:].split("/")
    for t in tokens:
        if not _TOKEN.fullmatch(t):
            raise ValueError(f"bad escape in {t!r}")
    return [t.replace("~1", "/").replace("~0", "~") for t in tokens]


def format_pointer(tokens: list[str]) -> str:
    return "".join("/" + t.replace("~", "~0").replace("/", "~1") for t in tokens)


def _step(node: Any, token: str) -> Any:
    if isinstance(node, dict):
        if token in node:
            return node[token]
        raise OracleFailure("missing")
    if isinstance(node, list):
        if _INDEX.fullmatch(token) and int(token) < len(node):
            return node[int(token)]
        raise OracleFailure("bad_index")
    raise OracleFailure("not_container")


def resolve(doc: Any, pointer: str) -> Any:
    """Value at ``pointer``; raises KeyError when it does not exist."""
    node = doc
    for token in parse_pointer(pointer):
        try:
            node = _step(node, token)
        except OracleFailure:
            raise KeyError(pointer) from None
    return node


def _parent(doc: Any, tokens: list[str]) -> Any:
    node = doc
    for token in tokens[:-1]:
        try:
            node = _step(node, token)
        except OracleFailure:
            raise OracleFailure("missing") from None
    if not isinstance(node, (dict, list)):
        raise OracleFailure("not_container")
    return node


def _read(doc: Any, tokens: list[str]) -> Any:
    if not tokens:
        return doc
    return _step(_parent(doc, tokens), tokens[-1])


def _rebuild(doc: Any, tokens: list[str], new_parent: Any) -> Any:
    """Copy of ``doc`` with the container at ``tokens`` swapped for ``new_parent``."""
    if not tokens:
        return new_parent
    head, rest = tokens[0], tokens[1:]
    if isinstance(doc, dict):
        return {**doc, head: _rebuild(doc[head], rest, new_parent)}
    i = int(head)
    return doc[:i] + [_rebuild(doc[i], rest, new_parent)] + doc[i + 1 :]


def _with_parent(doc: Any, tokens: list[str], change) -> Any:
    parent = _parent(doc, tokens)
    return _rebuild(doc, tokens[:-1], change(parent, tokens[-1]))


def _add(doc: Any, tokens: list[str], value: Any) -> Any:
    if not tokens:
        return value

    def change(parent: Any, token: str) -> Any:
        if isinstance(parent, dict):
            return {**parent, token: value}
        if token == "-":
            return parent + [value]
        if not _INDEX.fullmatch(token) or int(token) > len(parent):
            raise OracleFailure("bad_index")
        i = int(token)
        return parent[:i] + [value] + parent[i:]

    return _with_parent(doc, tokens, change)


def _remove(doc: Any, tokens: list[str]) -> Any:
    if not tokens:
        raise OracleFailure("invalid_target")
    _read(doc, tokens)

    def change(parent: Any, token: str) -> Any:
        if isinstance(parent, dict):
            return {k: v for k, v in parent.items() if k != token}
        i = int(token)
        return parent[:i] + parent[i + 1 :]

    return _with_parent(doc, tokens, change)


def _replace(doc: Any, tokens: list[str], value: Any) -> Any:
    _read(doc, tokens)
    if not tokens:
        return value

    def change(parent: Any, token: str) -> Any:
        if isinstance(parent, dict):
            return {**parent, token: value}
        i = int(token)
        return parent[:i] + [value] + parent[i + 1 :]

    return _with_parent(doc, tokens, change)


def json_equal(a: Any, b: Any) -> bool:
    a_bool, b_bool = isinstance(a, bool), isinstance(b, bool)
    if a_bool or b_bool:
        return a_bool and b_bool and a is b
    a_num = isinstance(a, (int, float))
    b_num = isinstance(b, (int, float))
    if a_num or b_num:
        return a_num and b_num and float(a) == float(b)
    if isinstance(a, str) or isinstance(b, str):
        return isinstance(a, str) and isinstance(b, str) and a == b
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(json_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return set(a) == set(b) and all(json_equal(a[k], b[k]) for k in a)
    return False


def apply_op(doc: Any, op: dict[str, Any]) -> Any:
    kind = op["op"]
    path = parse_pointer(op["path"])
    if kind == "add":
        return _add(doc, path, op["value"])
    if kind == "remove":
        return _remove(doc, path)
    if kind == "replace":
        return _replace(doc, path, op["value"])
    if kind == "test":
        if not json_equal(_read(doc, path), op["value"]):
            raise OracleFailure("test_failed")
        return doc
    src = parse_pointer(op["from"])
    if kind == "copy":
        return _add(doc, path, _read(doc, src))
    if kind == "move":
        if src == path:
            _read(doc, src)
            return doc
        if path[: len(src)] == src:
            raise OracleFailure("invalid_target")
        value = _read(doc, src)
        return _add(_remove(doc, src), path, value)
    raise OracleFailure("invalid_target")


def apply_patch(doc: Any, ops: list[dict[str, Any]]) -> tuple[str, Any]:
    """``("ok", result)`` or ``("error", (op index, cause))``; all-or-nothing."""
    current = doc
    for i, op in enumerate(ops):
        try:
            current = apply_op(current, op)
        except OracleFailure as exc:
            return "error", (i, exc.cause)
    return "ok", current
