"""Loading, addressing and repacking of .sb3 project archives.

An .sb3 file is a zip archive whose executable logic lives in the
``project.json`` entry; every other entry (costumes, sounds) is treated as an
opaque asset and carried through untouched.
"""
from __future__ import annotations

import io
import json
import math
import zipfile
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping

from .pointer import JsonPointer

PROJECT_ENTRY = "project.json"
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)
# integral floats below this magnitude are written in integer form
_INT_FORM_LIMIT = 2**53


class ProjectError(Exception):
    pass


class NotAnArchive(ProjectError):
    pass


class MissingProjectJson(ProjectError):
    pass


class MalformedJson(ProjectError):
    pass


class InvalidProject(ProjectError):
    pass


def _reject_duplicates(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in pairs:
        if key in out:
            raise MalformedJson(f"duplicate object key {key!r}")
        out[key] = value
    return out


def _reject_constant(name: str) -> Any:
    raise MalformedJson(f"non-finite number {name} is not valid JSON")


def parse_json(data: bytes | str) -> Any:
    """Strict JSON parse: duplicate keys and NaN/Infinity are errors."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise MalformedJson(f"not UTF-8: {exc}") from None
    try:
        return json.loads(data, object_pairs_hook=_reject_duplicates, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise MalformedJson(str(exc)) from None


def _normalize_numbers(value: Any) -> Any:
    if isinstance(value, bool) or value is None or isinstance(value, (str, int)):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise InvalidProject(f"non-finite number {value!r}")
        if value.is_integer() and abs(value) < _INT_FORM_LIMIT:
            return int(value)
        return value
    if isinstance(value, dict):
        return {k: _normalize_numbers(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_normalize_numbers(v) for v in value]
    raise InvalidProject(f"not a JSON value: {type(value).__name__}")


def canonical_dumps(value: Any) -> bytes:
    """Deterministic JSON bytes for any JSON value tree.

    Object keys are sorted, separators carry no whitespace and numbers use
    the shortest round-trip form (integral floats collapse to integers).
    """
    return json.dumps(
        _normalize_numbers(value),
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    ).encode("utf-8")


@dataclass(frozen=True, eq=False)
class ProjectDocument:
    """A project.json tree. Treat ``root`` as read-only; edits build new documents."""

    root: Any

    def __post_init__(self) -> None:
        validate_project(self.root)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProjectDocument):
            return NotImplemented
        return canonical_serialize(self) == canonical_serialize(other)

    def __hash__(self) -> int:
        return hash(canonical_serialize(self))

    @classmethod
    def from_json(cls, data: bytes | str) -> "ProjectDocument":
        return cls(parse_json(data))

    @property
    def targets(self) -> list[dict[str, Any]]:
        return self.root["targets"]

    @property
    def stage(self) -> dict[str, Any]:
        return next(t for t in self.targets if t.get("isStage") is True)

    @property
    def sprites(self) -> list[dict[str, Any]]:
        return [t for t in self.targets if t.get("isStage") is not True]


def validate_project(root: Any) -> None:
    if not isinstance(root, dict):
        raise InvalidProject("project root must be an object")
    targets = root.get("targets")
    if not isinstance(targets, list):
        raise InvalidProject('project root must have a "targets" array')
    stages = sum(1 for t in targets if isinstance(t, dict) and t.get("isStage") is True)
    if stages != 1:
        raise InvalidProject(f"expected exactly one stage target, found {stages}")


def canonical_serialize(project: ProjectDocument) -> bytes:
    return canonical_dumps(project.root)


def resolve_pointer(project: ProjectDocument | Any, ptr: JsonPointer | str, default: Any = None) -> Any:
    """Value at ``ptr`` or ``default`` when the location is absent."""
    if isinstance(ptr, str):
        ptr = JsonPointer.parse(ptr)
    root = project.root if isinstance(project, ProjectDocument) else project
    return ptr.resolve(root, default)


@dataclass(frozen=True)
class Sb3Archive:
    entries: Mapping[str, bytes]
    project: ProjectDocument
    compression: Mapping[str, int] = field(default_factory=dict)

    @property
    def assets(self) -> dict[str, bytes]:
        return {k: v for k, v in self.entries.items() if k != PROJECT_ENTRY}


def load_archive(data: bytes) -> Sb3Archive:
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except (zipfile.BadZipFile, OSError, ValueError) as exc:
        raise NotAnArchive(str(exc)) from None
    entries: dict[str, bytes] = {}
    compression: dict[str, int] = {}
    with zf:
        names = [info.filename for info in zf.infolist()]
        if names.count(PROJECT_ENTRY) != 1:
            if PROJECT_ENTRY not in names:
                raise MissingProjectJson("archive has no project.json entry")
            raise MalformedJson("archive has more than one project.json entry")
        for info in zf.infolist():
            if info.is_dir():
                continue
            try:
                entries[info.filename] = zf.read(info)
            except (zipfile.BadZipFile, OSError) as exc:
                raise NotAnArchive(f"{info.filename}: {exc}") from None
            compression[info.filename] = info.compress_type
    project = ProjectDocument.from_json(entries[PROJECT_ENTRY])
    return Sb3Archive(MappingProxyType(entries), project, MappingProxyType(compression))


def _write_entry(zf: zipfile.ZipFile, name: str, payload: bytes, compress_type: int) -> None:
    info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
    info.compress_type = compress_type
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def repack(archive: Sb3Archive, project: ProjectDocument) -> bytes:
    """Zip bytes with ``project`` as project.json and all assets unchanged.

    Entry order follows the input archive. Output is deterministic: fixed
    timestamps, stored assets and deflated project.json.
    """
    if not isinstance(project, ProjectDocument):
        raise InvalidProject("repack expects a ProjectDocument")
    validate_project(project.root)
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        for name, payload in archive.entries.items():
            if name == PROJECT_ENTRY:
                _write_entry(zf, name, canonical_serialize(project), zipfile.ZIP_DEFLATED)
            else:
                _write_entry(zf, name, payload, zipfile.ZIP_STORED)
    return buf.getvalue()


def build_archive(project: ProjectDocument | dict[str, Any], assets: Mapping[str, bytes] | None = None) -> bytes:
    """Create a fresh .sb3 from a project tree and optional asset payloads."""
    if not isinstance(project, ProjectDocument):
        project = ProjectDocument(project)
    entries = {PROJECT_ENTRY: b""}
    entries.update(assets or {})
    shell = Sb3Archive(entries, project)
    return repack(shell, project)
