"""Bounded RFC 6902 patches: extraction from model text, validation, application."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from typing import Any, Iterable, Sequence

from .pointer import JsonPointer, PointerError, array_index
from .project import InvalidProject, ProjectDocument

KINDS = frozenset({"add", "remove", "replace", "move", "copy", "test"})
NEEDS_VALUE = frozenset({"add", "replace", "test"})
NEEDS_FROM = frozenset({"move", "copy"})

_ABSENT: Any = type("_Absent", (), {"__repr__": lambda self: "<absent>"})()

_FENCE = re.compile(r"```[ \t]*([A-Za-z0-9_+-]*)[^\n]*\n(.*?)```", re.DOTALL)


class PatchError(Exception):
    pass


class ExtractionFailure(PatchError):
    pass


class SchemaViolation(PatchError):
    pass


class BudgetExceeded(SchemaViolation):
    def __init__(self, cap: int, received: int):
        super().__init__(f"operation budget {cap}, received {received}")
        self.cap = cap
        self.received = received


class ForbiddenKind(SchemaViolation):
    pass


class ForbiddenPath(SchemaViolation):
    pass


class MalformedOperation(SchemaViolation):
    pass


class ApplicationFailure(PatchError):
    """Raised when an operation cannot be applied.

    ``document`` is the untouched input, so callers never observe a
    partially patched tree.
    """

    def __init__(self, index: int, cause: str, detail: str, document: Any = None):
        super().__init__(f"op {index}: {cause}: {detail}")
        self.index = index
        self.cause = cause
        self.detail = detail
        self.document = document


@dataclass(frozen=True)
class PatchOperation:
    kind: str
    path: str
    value: Any = _ABSENT
    from_: str | None = None
    extra: tuple[tuple[str, Any], ...] = ()

    @property
    def has_value(self) -> bool:
        return self.value is not _ABSENT

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "PatchOperation":
        extra = tuple((k, v) for k, v in obj.items() if k not in ("op", "path", "value", "from"))
        return cls(
            kind=obj.get("op"),
            path=obj.get("path"),
            value=obj.get("value", _ABSENT),
            from_=obj.get("from"),
            extra=extra,
        )

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"op": self.kind, "path": self.path}
        if self.has_value:
            out["value"] = self.value
        if self.from_ is not None:
            out["from"] = self.from_
        out.update(self.extra)
        return out


@dataclass(frozen=True)
class PatchDocument:
    ops: tuple[PatchOperation, ...] = ()

    @classmethod
    def from_json(cls, value: Any) -> "PatchDocument":
        if isinstance(value, dict):
            value = value["ops"]
        return cls(tuple(PatchOperation.from_json(o) for o in value))

    def to_json(self) -> list[dict[str, Any]]:
        return [op.to_json() for op in self.ops]

    @property
    def is_noop(self) -> bool:
        return not self.ops

    def __len__(self) -> int:
        return len(self.ops)


@dataclass(frozen=True)
class PatchSchema:
    max_ops: int
    allowed_kinds: frozenset[str] = KINDS
    allowed_path_prefixes: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.max_ops < 1:
            raise ValueError("max_ops must be >= 1")

    def to_json_schema(self) -> dict[str, Any]:
        """JSON-schema style constraint handed to the model alongside the prompt."""
        op_item = {
            "type": "object",
            "required": ["op", "path"],
            "properties": {
                "op": {"enum": sorted(self.allowed_kinds)},
                "path": {"type": "string"},
                "from": {"type": "string"},
                "value": {},
            },
            "additionalProperties": False,
        }
        if self.allowed_path_prefixes:
            op_item["properties"]["path"]["pattern"] = "^(" + "|".join(
                re.escape(p) for p in self.allowed_path_prefixes
            ) + ")"
        return {"type": "array", "maxItems": self.max_ops, "items": op_item}


# -- extraction ---------------------------------------------------------------


def _patch_shaped(value: Any) -> bool:
    if isinstance(value, dict):
        ops = value.get("ops")
        return isinstance(ops, list) and all(isinstance(o, dict) and "op" in o for o in ops)
    return isinstance(value, list) and all(isinstance(o, dict) and "op" in o for o in value)


def _is_empty(value: Any) -> bool:
    return value == [] or (isinstance(value, dict) and value.get("ops") == [])


def _scan(text: str) -> Any:
    """First non-empty patch-shaped value, else the first empty one that is not nested in other JSON."""
    decoder = json.JSONDecoder()
    empty: Any = _ABSENT
    covered = 0  # end of the outermost JSON value decoded so far
    for i, ch in enumerate(text):
        if ch not in "[{":
            continue
        try:
            value, end = decoder.raw_decode(text, i)
        except json.JSONDecodeError:
            continue
        nested = i < covered
        covered = max(covered, end)
        if not _patch_shaped(value):
            continue
        if not _is_empty(value):
            return value
        if empty is _ABSENT and not nested:
            empty = value
    return empty


def extract_patch(raw: str) -> PatchDocument:
    """First patch-shaped JSON value in ``raw``; fenced blocks win over inline JSON."""
    if not isinstance(raw, str):
        raise ExtractionFailure("response is not text")
    for match in _FENCE.finditer(raw):
        found = _scan(match.group(2))
        if found is not _ABSENT:
            return PatchDocument.from_json(found)
    found = _scan(raw)
    if found is _ABSENT:
        raise ExtractionFailure("no JSON patch found in response")
    return PatchDocument.from_json(found)


# -- validation and normalization ----------------------------------------------


def _check_pointer(text: Any, index: int, field_name: str) -> JsonPointer:
    if not isinstance(text, str):
        raise MalformedOperation(f"op {index}: {field_name} must be a string")
    try:
        return JsonPointer.parse(text)
    except PointerError as exc:
        raise MalformedOperation(f"op {index}: {exc}") from None


def validate(patch: PatchDocument, schema: PatchSchema) -> PatchDocument:
    if len(patch.ops) > schema.max_ops:
        raise BudgetExceeded(schema.max_ops, len(patch.ops))
    prefixes = [JsonPointer.parse(p) for p in schema.allowed_path_prefixes or ()]
    for i, op in enumerate(patch.ops):
        if op.kind not in schema.allowed_kinds:
            raise ForbiddenKind(f"op {i}: kind {op.kind!r} not allowed")
        targets = [_check_pointer(op.path, i, "path")]
        if op.kind in NEEDS_VALUE and not op.has_value:
            raise MalformedOperation(f"op {i}: {op.kind} requires a value")
        if op.kind in NEEDS_FROM:
            if op.from_ is None:
                raise MalformedOperation(f"op {i}: {op.kind} requires from")
            targets.append(_check_pointer(op.from_, i, "from"))
        if prefixes:
            for ptr in targets:
                if not any(p.is_prefix_of(ptr) for p in prefixes):
                    raise ForbiddenPath(f"op {i}: path {str(ptr)!r} outside allowed prefixes")
    return patch


def normalize(patch: PatchDocument) -> PatchDocument:
    ops = []
    for op in patch.ops:
        path = str(JsonPointer.parse(op.path))
        from_ = str(JsonPointer.parse(op.from_)) if op.kind in NEEDS_FROM else None
        value = op.value if op.kind in NEEDS_VALUE else _ABSENT
        ops.append(replace(op, path=path, from_=from_, value=value, extra=()))
    return PatchDocument(tuple(ops))


# -- application --------------------------------------------------------------


def clone(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: clone(v) for k, v in value.items()}
    if isinstance(value, list):
        return [clone(v) for v in value]
    return value


def json_equal(a: Any, b: Any) -> bool:
    """JSON value equality: booleans never equal numbers, 1 equals 1.0."""
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return a == b
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(json_equal(a[k], b[k]) for k in a)
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(json_equal(x, y) for x, y in zip(a, b))
    if type(a) is not type(b):
        return False
    return a == b


class _Fail(Exception):
    def __init__(self, cause: str, detail: str):
        self.cause = cause
        self.detail = detail


def _container(root: list, ptr: JsonPointer) -> Any:
    parent = ptr.parent.resolve(root[0], _ABSENT)
    if parent is _ABSENT:
        raise _Fail("missing", f"parent of {ptr} does not exist")
    if not isinstance(parent, (dict, list)):
        raise _Fail("not_container", f"parent of {ptr} is not a container")
    return parent


def _get(root: list, ptr: JsonPointer) -> Any:
    if not ptr.segments:
        return root[0]
    parent = _container(root, ptr)
    token = ptr.last
    if isinstance(parent, dict):
        if token not in parent:
            raise _Fail("missing", f"{ptr} does not exist")
        return parent[token]
    idx = array_index(token)
    if idx is None or idx >= len(parent):
        raise _Fail("bad_index", f"{ptr}: bad array index")
    return parent[idx]


def _add(root: list, ptr: JsonPointer, value: Any) -> None:
    if not ptr.segments:
        root[0] = value
        return
    parent = _container(root, ptr)
    token = ptr.last
    if isinstance(parent, dict):
        parent[token] = value
        return
    if token == "-":
        parent.append(value)
        return
    idx = array_index(token)
    if idx is None or idx > len(parent):
        raise _Fail("bad_index", f"{ptr}: bad array index")
    parent.insert(idx, value)


def _remove(root: list, ptr: JsonPointer) -> Any:
    if not ptr.segments:
        raise _Fail("invalid_target", "cannot remove the document root")
    value = _get(root, ptr)
    parent = _container(root, ptr)
    if isinstance(parent, dict):
        del parent[ptr.last]
    else:
        del parent[array_index(ptr.last)]
    return value


def _apply_op(root: list, op: PatchOperation) -> None:
    path = JsonPointer.parse(op.path)
    kind = op.kind
    if kind == "add":
        _add(root, path, clone(op.value))
    elif kind == "remove":
        _remove(root, path)
    elif kind == "replace":
        _get(root, path)
        if not path.segments:
            root[0] = clone(op.value)
        else:
            parent = _container(root, path)
            key = path.last if isinstance(parent, dict) else array_index(path.last)
            parent[key] = clone(op.value)
    elif kind == "move":
        src = JsonPointer.parse(op.from_)
        if src == path:
            _get(root, src)
            return
        if src.is_prefix_of(path):
            raise _Fail("invalid_target", f"cannot move {src} into its own child {path}")
        _add(root, path, _remove(root, src))
    elif kind == "copy":
        src = JsonPointer.parse(op.from_)
        _add(root, path, clone(_get(root, src)))
    elif kind == "test":
        if not json_equal(_get(root, path), op.value):
            raise _Fail("test_failed", f"value at {path} differs")
    else:
        raise _Fail("invalid_target", f"unknown op {kind!r}")


def apply_to_value(document: Any, ops: Sequence[PatchOperation] | PatchDocument) -> Any:
    """Apply ``ops`` in order to any JSON value; the input is never mutated."""
    if isinstance(ops, PatchDocument):
        ops = ops.ops
    root = [clone(document)]
    for i, op in enumerate(ops):
        try:
            _apply_op(root, op)
        except _Fail as exc:
            raise ApplicationFailure(i, exc.cause, exc.detail, document) from None
    return root[0]


def apply(project: ProjectDocument, patch: PatchDocument) -> ProjectDocument:
    result = apply_to_value(project.root, patch)
    try:
        return ProjectDocument(result)
    except InvalidProject as exc:
        raise ApplicationFailure(max(len(patch.ops) - 1, 0), "invalid_project", str(exc), project.root) from None


def patch_from_ops(ops: Iterable[dict[str, Any]]) -> PatchDocument:
    return PatchDocument(tuple(PatchOperation.from_json(o) for o in ops))
