"""RFC 6901 JSON Pointer parsing, escaping and evaluation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable

_MISSING = object()


class PointerError(ValueError):
    """Raised for syntactically invalid pointer strings."""


def escape_token(token: str) -> str:
    # order matters: "~" must be escaped before "/" introduces new tildes
    return token.replace("~", "~0").replace("/", "~1")


def unescape_token(token: str) -> str:
    i = token.find("~")
    while i != -1:
        if i + 1 >= len(token) or token[i + 1] not in "01":
            raise PointerError(f"invalid escape in token {token!r}")
        i = token.find("~", i + 2)
    return token.replace("~1", "/").replace("~0", "~")


@dataclass(frozen=True)
class JsonPointer:
    segments: tuple[str, ...] = ()

    @classmethod
    def parse(cls, text: str) -> "JsonPointer":
        if not isinstance(text, str):
            raise PointerError(f"pointer must be a string, got {type(text).__name__}")
        if text == "":
            return cls(())
        if not text.startswith("/"):
            raise PointerError(f"pointer must start with '/': {text!r}")
        return cls(tuple(unescape_token(t) for t in text[1:].split("/")))

    @classmethod
    def from_segments(cls, segments: Iterable[Any]) -> "JsonPointer":
        return cls(tuple(str(s) for s in segments))

    def __str__(self) -> str:
        return "".join("/" + escape_token(s) for s in self.segments)

    @property
    def parent(self) -> "JsonPointer":
        return JsonPointer(self.segments[:-1])

    @property
    def last(self) -> str:
        return self.segments[-1]

    def child(self, token: Any) -> "JsonPointer":
        return JsonPointer(self.segments + (str(token),))

    def is_prefix_of(self, other: "JsonPointer") -> bool:
        n = len(self.segments)
        return other.segments[:n] == self.segments

    def resolve(self, doc: Any, default: Any = _MISSING) -> Any:
        """Evaluate the pointer against ``doc``.

        Returns ``default`` when any step is missing; raises ``KeyError``
        if no default was given.
        """
        node = doc
        for seg in self.segments:
            if isinstance(node, dict):
                if seg not in node:
                    break
                node = node[seg]
            elif isinstance(node, list):
                idx = array_index(seg)
                if idx is None or idx >= len(node):
                    break
                node = node[idx]
            else:
                break
        else:
            return node
        if default is _MISSING:
            raise KeyError(str(self))
        return default


def array_index(token: str) -> int | None:
    """Strict RFC 6901 array index: no sign, no leading zeros."""
    if not token or not token.isdigit() or not token.isascii():
        return None
    if len(token) > 1 and token[0] == "0":
        return None
    return int(token)
