"""Prompt construction, wire payload assembly and model transports."""
from __future__ import annotations

import base64
import json
import math
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import httpx

from .accounting import Pricing
from .controller import MULTIMODAL, RepairPlan, ScheduleSignal
from .patch import PatchSchema
from .vm.snapshot import StageSnapshot

PPM = "image/x-portable-pixmap"
IMAGE_SUFFIXES = {".png": "image/png", ".jpg": "image/jpeg", ".jpeg": "image/jpeg", ".svg": "image/svg+xml", ".gif": "image/gif"}
RESPONSES_STYLE = "responses_style"
CHAT_STYLE = "chat_style"
TRANSPORT_RETRIES = 2

SYSTEM_PROMPT = """You repair Scratch 3 projects by editing their project.json.
Reply with a JSON Patch (RFC 6902) only: a JSON array of operation objects,
each with "op", "path" and, where required, "value" or "from".
Paths are JSON Pointers into project.json. Do not include explanations."""


class RequestFailure(Exception):
    def __init__(self, message: str, attempts: int = 1, status: int | None = None):
        super().__init__(message)
        self.attempts = attempts
        self.status = status


@dataclass(frozen=True)
class Attachment:
    data: bytes
    media_type: str
    width: int | None
    height: int | None
    origin: str  # probe_snapshot | project_asset


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    response_schema: dict[str, Any]
    attachments: tuple[Attachment, ...] = ()
    images_available: int = 0


@dataclass(frozen=True)
class RemoteTransport:
    base_url: str
    credential_env: str | None = None
    timeout_s: float = 60.0
    max_retries: int = TRANSPORT_RETRIES


@dataclass(frozen=True)
class ScriptedTransport:
    fixture_path: str

    def __post_init__(self) -> None:
        if not self.fixture_path:
            raise ValueError("scripted transport requires a fixture file")


@dataclass(frozen=True)
class ModelEndpoint:
    model_id: str
    request_style: str
    transport: RemoteTransport | ScriptedTransport
    pricing: Pricing = field(default_factory=Pricing)

    def __post_init__(self) -> None:
        if self.request_style not in (RESPONSES_STYLE, CHAT_STYLE):
            raise ValueError(f"unknown request style {self.request_style!r}")

    @property
    def is_scripted(self) -> bool:
        return isinstance(self.transport, ScriptedTransport)

    def to_json(self) -> dict[str, Any]:
        if isinstance(self.transport, ScriptedTransport):
            transport: dict[str, Any] = {"kind": "scripted", "fixture_path": self.transport.fixture_path}
        else:
            transport = {
                "kind": "remote",
                "base_url": self.transport.base_url,
                "credential_env": self.transport.credential_env,
                "timeout_s": self.transport.timeout_s,
                "max_retries": self.transport.max_retries,
            }
        return {
            "model_id": self.model_id,
            "request_style": self.request_style,
            "transport": transport,
            "pricing": self.pricing.to_json(),
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any], pricing_table: Mapping[str, Pricing] | None = None, base_dir: Path | None = None) -> "ModelEndpoint":
        t = obj["transport"]
        if t.get("kind") == "scripted":
            path = Path(t["fixture_path"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            transport: RemoteTransport | ScriptedTransport = ScriptedTransport(str(path))
        else:
            transport = RemoteTransport(
                base_url=t["base_url"],
                credential_env=t.get("credential_env"),
                timeout_s=float(t.get("timeout_s", 60.0)),
                max_retries=int(t.get("max_retries", TRANSPORT_RETRIES)),
            )
        model_id = obj["model_id"]
        if "pricing" in obj:
            pricing = Pricing.from_json(obj["pricing"])
        elif pricing_table and model_id in pricing_table:
            pricing = pricing_table[model_id]
        else:
            pricing = Pricing()
        return cls(model_id, obj.get("request_style", RESPONSES_STYLE), transport, pricing)


@dataclass(frozen=True)
class ModelResponse:
    raw_text: str
    input_tokens: int
    output_tokens: int
    latency_ms: float
    transport_ok: bool = True
    tokens_estimated: bool = False

    def to_json(self) -> dict[str, Any]:
        return {
            "raw_text": self.raw_text,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "latency_ms": self.latency_ms,
            "transport_ok": self.transport_ok,
            "tokens_estimated": self.tokens_estimated,
        }


@dataclass(frozen=True)
class PayloadAudit:
    images_available: int = 0
    images_sent: int = 0
    image_bytes_sent: int = 0
    text_bytes_sent: int = 0

    def to_json(self) -> dict[str, int]:
        return {
            "images_available": self.images_available,
            "images_sent": self.images_sent,
            "image_bytes_sent": self.image_bytes_sent,
            "text_bytes_sent": self.text_bytes_sent,
        }


# -- prompt -------------------------------------------------------------------------


def response_schema(plan: RepairPlan) -> dict[str, Any]:
    array = PatchSchema(plan.max_patch_ops).to_json_schema()
    return {
        "type": "object",
        "required": ["ops"],
        "properties": {"ops": array},
        "additionalProperties": False,
    }


def asset_attachments(assets: Mapping[str, bytes]) -> list[Attachment]:
    out = []
    for name, data in assets.items():
        media = IMAGE_SUFFIXES.get(Path(name).suffix.lower())
        if media:
            out.append(Attachment(data, media, None, None, "project_asset"))
    return out


def build_prompt(
    case_description: str,
    signal: ScheduleSignal,
    plan: RepairPlan,
    retry_feedback: str | None = None,
    snapshots: Sequence[StageSnapshot] = (),
    assets: Mapping[str, bytes] | None = None,
    localization_hints: Sequence[str] = (),
) -> PromptBundle:
    available = [Attachment(s.encoded, PPM, s.width, s.height, "probe_snapshot") for s in snapshots]
    if not available and assets:
        available = asset_attachments(assets)
    attachments: tuple[Attachment, ...] = ()
    if plan.evidence == MULTIMODAL:
        attachments = tuple(available[: plan.max_snapshots])

    parts = [
        f"Runtime probe signal: {signal.summary()}.",
        f"Return at most {plan.max_patch_ops} patch operations.",
    ]
    if localization_hints:
        parts.append("Localization hints: " + "; ".join(localization_hints) + ".")
        parts.append("Stay local to the hinted blocks unless the evidence indicates a broader change.")
    else:
        parts.append("Keep the edit local: prefer changing a single block, argument or broadcast link.")
    if attachments:
        parts.append(f"{len(attachments)} stage image(s) from the buggy run are attached.")
    parts.append("Case:\n" + case_description)
    if retry_feedback:
        parts.append("Previous attempt feedback:\n" + retry_feedback)
    return PromptBundle(
        system_text=SYSTEM_PROMPT,
        user_text="\n\n".join(parts),
        response_schema=response_schema(plan),
        attachments=attachments,
        images_available=len(available),
    )


def to_png_attachment(att: Attachment) -> Attachment:
    if att.media_type != PPM:
        return att
    from PIL import Image

    import io

    img = Image.open(io.BytesIO(att.data))
    out = io.BytesIO()
    img.convert("RGB").save(out, format="PNG")
    return replace(att, data=out.getvalue(), media_type="image/png")


def prepare_for_transport(bundle: PromptBundle, endpoint: ModelEndpoint) -> PromptBundle:
    """Remote providers get PNG images; scripted runs keep the raw snapshots."""
    if endpoint.is_scripted or not bundle.attachments:
        return bundle
    return replace(bundle, attachments=tuple(to_png_attachment(a) for a in bundle.attachments))


# -- wire payloads ---------------------------------------------------------------------


def assemble_request(bundle: PromptBundle, style: str, model_id: str = "") -> dict[str, Any]:
    schema = bundle.response_schema
    if style == RESPONSES_STYLE:
        content: list[dict[str, Any]] = [{"type": "input_text", "text": bundle.user_text}]
        for att in bundle.attachments:
            content.append(
                {
                    "type": "input_image",
                    "media_type": att.media_type,
                    "image_base64": base64.b64encode(att.data).decode("ascii"),
                }
            )
        return {
            "model": model_id,
            "input": [
                {"role": "system", "content": [{"type": "input_text", "text": bundle.system_text}]},
                {"role": "user", "content": content},
            ],
            "text": {"format": {"type": "json_schema", "name": "json_patch", "schema": schema, "strict": True}},
        }
    if style == CHAT_STYLE:
        user: list[dict[str, Any]] = [{"type": "text", "text": bundle.user_text}]
        for att in bundle.attachments:
            b64 = base64.b64encode(att.data).decode("ascii")
            user.append({"type": "image_url", "image_url": {"url": f"data:{att.media_type};base64,{b64}"}})
        return {
            "model": model_id,
            "messages": [
                {"role": "system", "content": bundle.system_text},
                {"role": "user", "content": user},
            ],
            "response_format": {
                "type": "json_schema",
                "json_schema": {"name": "json_patch", "schema": schema, "strict": True},
            },
        }
    raise ValueError(f"unknown request style {style!r}")


def payload_contents(payload: Mapping[str, Any]) -> tuple[list[str], list[bytes]]:
    """Decode the texts and image bytes carried by a payload of either style."""
    texts: list[str] = []
    images: list[bytes] = []
    if "input" in payload:
        for message in payload["input"]:
            for rec in message["content"]:
                if rec["type"] == "input_text":
                    texts.append(rec["text"])
                elif rec["type"] == "input_image":
                    images.append(base64.b64decode(rec["image_base64"]))
    else:
        for message in payload["messages"]:
            content = message["content"]
            if isinstance(content, str):
                texts.append(content)
                continue
            for rec in content:
                if rec["type"] == "text":
                    texts.append(rec["text"])
                elif rec["type"] == "image_url":
                    url = rec["image_url"]["url"]
                    images.append(base64.b64decode(url.split(",", 1)[1]))
    return texts, images


def _schema_of(payload: Mapping[str, Any]) -> Any:
    if "text" in payload:
        return payload["text"]["format"]["schema"]
    return payload["response_format"]["json_schema"]["schema"]


def audit_payload(payload: Mapping[str, Any], images_available: int) -> PayloadAudit:
    texts, images = payload_contents(payload)
    schema_bytes = len(json.dumps(_schema_of(payload), sort_keys=True, separators=(",", ":")).encode())
    return PayloadAudit(
        images_available=max(images_available, len(images)),
        images_sent=len(images),
        image_bytes_sent=sum(len(i) for i in images),
        text_bytes_sent=sum(len(t.encode("utf-8")) for t in texts) + schema_bytes,
    )


def estimate_tokens(text_bytes: int) -> int:
    return math.ceil(text_bytes / 4)


# -- transports -----------------------------------------------------------------------


class ScriptedFixture:
    """Responses keyed by (case id, attempt, plan id); ``"*"`` or null acts as a wildcard."""

    def __init__(self, entries: list[dict[str, Any]]):
        self.entries = entries

    @classmethod
    def load(cls, path: str | Path) -> "ScriptedFixture":
        data = json.loads(Path(path).read_text())
        if isinstance(data, dict):
            data = data["responses"]
        return cls(list(data))

    def lookup(self, case_id: str, attempt: int, plan_id: str) -> dict[str, Any] | None:
        best, best_score = None, -1
        for entry in self.entries:
            score = 0
            if entry.get("case_id") not in (case_id, "*", None):
                continue
            score += 4 if entry.get("case_id") == case_id else 0
            if entry.get("attempt") not in (attempt, "*", None):
                continue
            score += 2 if entry.get("attempt") == attempt else 0
            if entry.get("plan_id") not in (plan_id, "*", None):
                continue
            score += 1 if entry.get("plan_id") == plan_id else 0
            if score > best_score:
                best, best_score = entry, score
        return best


_FIXTURE_CACHE: dict[tuple[str, int, int], ScriptedFixture] = {}


def _fixture(path: str) -> ScriptedFixture:
    st = os.stat(path)
    key = (os.path.abspath(path), st.st_mtime_ns, st.st_size)
    fixture = _FIXTURE_CACHE.get(key)
    if fixture is None:
        fixture = _FIXTURE_CACHE[key] = ScriptedFixture.load(path)
    return fixture


def _call_scripted(transport: ScriptedTransport, audit: PayloadAudit, key: tuple[str, int, str]) -> ModelResponse:
    entry = _fixture(transport.fixture_path).lookup(*key)
    if entry is None:
        raise RequestFailure(f"no scripted response for {key}")
    if entry.get("request_failure"):
        raise RequestFailure(str(entry["request_failure"]), status=entry.get("status"))
    return ModelResponse(
        raw_text=entry.get("response_text", ""),
        input_tokens=estimate_tokens(audit.text_bytes_sent),
        output_tokens=int(entry.get("output_tokens", estimate_tokens(len(entry.get("response_text", "").encode())))),
        latency_ms=float(entry.get("latency_ms", 0.0)),
        tokens_estimated=True,
    )


def _response_text(style: str, body: Mapping[str, Any]) -> str:
    if style == RESPONSES_STYLE:
        if isinstance(body.get("output_text"), str):
            return body["output_text"]
        chunks = []
        for item in body.get("output", []):
            for part in item.get("content", []) or []:
                if isinstance(part, dict) and isinstance(part.get("text"), str):
                    chunks.append(part["text"])
        return "".join(chunks)
    choices = body.get("choices") or [{}]
    content = (choices[0].get("message") or {}).get("content")
    if isinstance(content, list):
        return "".join(p.get("text", "") for p in content if isinstance(p, dict))
    return content or ""


def _usage(style: str, body: Mapping[str, Any]) -> tuple[int, int] | None:
    usage = body.get("usage")
    if not isinstance(usage, dict):
        return None
    if style == RESPONSES_STYLE:
        keys = ("input_tokens", "output_tokens")
    else:
        keys = ("prompt_tokens", "completion_tokens")
    if all(isinstance(usage.get(k), int) for k in keys):
        return usage[keys[0]], usage[keys[1]]
    return None


def _call_remote(
    endpoint: ModelEndpoint,
    payload: Mapping[str, Any],
    audit: PayloadAudit,
    client: httpx.Client | None,
    sleep=time.sleep,
) -> ModelResponse:
    transport = endpoint.transport
    assert isinstance(transport, RemoteTransport)
    headers = {"Content-Type": "application/json"}
    if transport.credential_env:
        token = os.environ.get(transport.credential_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
    own_client = client is None
    client = client or httpx.Client(timeout=transport.timeout_s)
    last_error = "no attempt made"
    status = None
    tries = 0
    try:
        for tries in range(1, transport.max_retries + 2):
            started = time.perf_counter()
            try:
                resp = client.post(transport.base_url, json=payload, headers=headers)
            except httpx.HTTPError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                status = None
            else:
                status = resp.status_code
                if resp.status_code < 300:
                    try:
                        body = resp.json()
                    except ValueError:
                        raise RequestFailure("provider returned non-JSON body", tries, status) from None
                    latency = (time.perf_counter() - started) * 1000.0
                    usage = _usage(endpoint.request_style, body)
                    text = _response_text(endpoint.request_style, body)
                    if usage is None:
                        return ModelResponse(
                            text, estimate_tokens(audit.text_bytes_sent), estimate_tokens(len(text.encode())), latency, True, True
                        )
                    return ModelResponse(text, usage[0], usage[1], latency)
                last_error = f"HTTP {resp.status_code}"
                if resp.status_code not in (408, 409, 429) and resp.status_code < 500:
                    break
            if tries <= transport.max_retries:
                sleep(min(0.25 * 2 ** (tries - 1), 2.0))
    finally:
        if own_client:
            client.close()
    raise RequestFailure(f"request failed after {tries} tries: {last_error}", tries, status)


def call_model(
    endpoint: ModelEndpoint,
    payload: Mapping[str, Any],
    *,
    images_available: int = 0,
    key: tuple[str, int, str] = ("", 0, ""),
    client: httpx.Client | None = None,
) -> tuple[ModelResponse, PayloadAudit]:
    """Send ``payload``; ``key`` is (case id, attempt, plan id) for scripted lookups.

    The audit is returned even when the request fails, via ``RequestFailure.audit``.
    """
    audit = audit_payload(payload, images_available)
    try:
        if isinstance(endpoint.transport, ScriptedTransport):
            response = _call_scripted(endpoint.transport, audit, key)
        else:
            response = _call_remote(endpoint, payload, audit, client)
    except RequestFailure as exc:
        exc.audit = audit  # type: ignore[attr-defined]
        raise
    return response, audit
