"""One repair trajectory: probe once, then plan, generate, apply and verify per attempt."""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any, Callable

from . import patch as patchlib
from .accounting import CostLedger, EnergyReport, EnergyTracker, IoFailure, TraceEvent, TraceWriter
from .controller import ControllerConfig, RepairPlan, ScheduleSignal, compute_signals, decide_plan
from .gateway import (
    ModelEndpoint,
    PayloadAudit,
    RequestFailure,
    assemble_request,
    build_prompt,
    call_model,
    prepare_for_transport,
)
from .project import Sb3Archive, canonical_dumps, load_archive, repack
from .vm.verifier import (
    GoldFailsSuite,
    ProbeReport,
    TestSuite,
    VerdictReport,
    full_verify,
    precheck,
    probe,
)

LAYERS = ("request", "extraction", "schema", "application", "precheck", "strict_verify")
SUCCESS = "success"
# fields that depend on wall-clock time or host power and are excluded from replay comparisons
WALL_CLOCK_FIELDS = frozenset({"duration_ms", "total_energy_wh", "energy", "wall_ms", "timestamp", "latency_ms"})


class FixtureError(Exception):
    def __init__(self, case: str, reason: str):
        super().__init__(f"invalid case fixture {case}: {reason}")
        self.case = case
        self.reason = reason


@dataclass
class RepairCase:
    case_id: str
    buggy: Sb3Archive
    gold: Sb3Archive
    suite: TestSuite
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def description(self) -> str:
        return str(self.metadata.get("description", ""))

    @property
    def localization_hints(self) -> list[str]:
        hints = self.metadata.get("localization_hints") or []
        return [str(h) for h in hints]


def load_case(path: str | Path, check_gold: bool = True, strict_ticks: int = 120) -> RepairCase:
    """Load a case directory (buggy.sb3, gold.sb3, suite.json, optional meta.json)."""
    from .vm.verifier import strict_schedule

    path = Path(path)
    case_id = path.name
    try:
        buggy = load_archive((path / "buggy.sb3").read_bytes())
        gold = load_archive((path / "gold.sb3").read_bytes())
        suite = TestSuite.from_json(json.loads((path / "suite.json").read_text()))
        meta_path = path / "meta.json"
        metadata = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    except FileNotFoundError as exc:
        raise FixtureError(case_id, f"missing file {Path(exc.filename).name}") from None
    except Exception as exc:
        raise FixtureError(case_id, f"{type(exc).__name__}: {exc}") from None
    case_id = str(metadata.get("case_id", case_id))
    if check_gold:
        verdict = full_verify(gold.project, suite, strict_schedule(strict_ticks))
        if not verdict.overall_pass:
            raise FixtureError(case_id, f"gold fails checks {verdict.failing_checks}")
    return RepairCase(case_id, buggy, gold, suite, metadata)


@dataclass
class AttemptRecord:
    attempt_index: int
    plan_id: str
    evidence: str
    max_patch_ops: int
    payload_audit: PayloadAudit
    outcome: str
    patch_op_count: int | None = None
    patch_noop: bool = False
    verdicts: dict[str, Any] = field(default_factory=dict)
    failure_detail: dict[str, Any] = field(default_factory=dict)
    cost_usd: Decimal = Decimal(0)
    input_tokens: int = 0
    output_tokens: int = 0
    duration_ms: float = 0.0
    candidate_path: str | None = None

    @property
    def applied(self) -> bool:
        return self.patch_op_count is not None and self.outcome not in ("request", "extraction", "schema", "application")

    def to_json(self) -> dict[str, Any]:
        return {
            "attempt_index": self.attempt_index,
            "plan_id": self.plan_id,
            "evidence": self.evidence,
            "max_patch_ops": self.max_patch_ops,
            "payload_audit": self.payload_audit.to_json(),
            "outcome": self.outcome,
            "patch_op_count": self.patch_op_count,
            "patch_noop": self.patch_noop,
            "verdicts": self.verdicts,
            "failure_detail": self.failure_detail,
            "cost_usd": str(self.cost_usd),
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "duration_ms": self.duration_ms,
            "candidate_path": self.candidate_path,
        }


@dataclass
class TrajectoryRecord:
    case_id: str
    model_id: str
    mode: str
    attempts: list[AttemptRecord]
    generation_success: bool
    strict_success: bool
    total_cost_usd: Decimal
    total_energy_wh: float
    images_sent_total: int
    image_bytes_total: int
    images_available_total: int
    probe: dict[str, Any]
    signal: dict[str, Any]
    energy: dict[str, Any] = field(default_factory=dict)
    cost_lines: list[dict[str, Any]] = field(default_factory=list)
    duration_ms: float = 0.0
    trace: list[TraceEvent] = field(default_factory=list, repr=False, compare=False)

    @property
    def final_outcome(self) -> str | None:
        return self.attempts[-1].outcome if self.attempts else None

    def to_json(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "model_id": self.model_id,
            "mode": self.mode,
            "attempts": [a.to_json() for a in self.attempts],
            "attempt_count": len(self.attempts),
            "generation_success": self.generation_success,
            "strict_success": self.strict_success,
            "final_outcome": self.final_outcome,
            "total_cost_usd": str(self.total_cost_usd),
            "total_energy_wh": self.total_energy_wh,
            "images_sent_total": self.images_sent_total,
            "image_bytes_total": self.image_bytes_total,
            "images_available_total": self.images_available_total,
            "probe": self.probe,
            "signal": self.signal,
            "energy": self.energy,
            "cost_lines": self.cost_lines,
            "duration_ms": self.duration_ms,
        }


def stable_view(record_json: Any) -> Any:
    """Copy of a record with wall-clock dependent fields removed."""
    if isinstance(record_json, dict):
        return {k: stable_view(v) for k, v in record_json.items() if k not in WALL_CLOCK_FIELDS}
    if isinstance(record_json, list):
        return [stable_view(v) for v in record_json]
    return record_json


# -- failure classification and retry feedback -----------------------------------------


def classify_failure(error: Any) -> str:
    if isinstance(error, RequestFailure):
        return "request"
    if isinstance(error, patchlib.ExtractionFailure):
        return "extraction"
    if isinstance(error, patchlib.SchemaViolation):
        return "schema"
    if isinstance(error, patchlib.ApplicationFailure):
        return "application"
    if isinstance(error, VerdictReport):
        return "precheck" if error.stage == "precheck" else "strict_verify"
    raise TypeError(f"cannot classify {error!r}")


def _failure_detail(error: Any) -> dict[str, Any]:
    detail: dict[str, Any] = {"message": str(error) if not isinstance(error, VerdictReport) else ""}
    if isinstance(error, patchlib.BudgetExceeded):
        detail.update(kind="budget", cap=error.cap, received=error.received)
    elif isinstance(error, patchlib.ForbiddenKind):
        detail.update(kind="forbidden_kind")
    elif isinstance(error, patchlib.ForbiddenPath):
        detail.update(kind="forbidden_path")
    elif isinstance(error, patchlib.SchemaViolation):
        detail.update(kind="malformed")
    elif isinstance(error, patchlib.ApplicationFailure):
        detail.update(op_index=error.index, cause=error.cause, message=error.detail)
    elif isinstance(error, VerdictReport):
        detail.update(
            stage=error.stage,
            failing_checks=error.failing_checks,
            first_divergence_tick=error.first_divergence_tick,
        )
    return detail


def build_retry_context(prior: AttemptRecord) -> str:
    layer = prior.outcome
    d = prior.failure_detail
    if layer == "request":
        return "Failure layer: request. The previous request did not complete; reply with the JSON patch only."
    if layer == "extraction":
        return (
            "Failure layer: extraction. No JSON patch could be found in the previous reply. "
            "Output a bare JSON array of patch operations with no prose and no code fences."
        )
    if layer == "schema":
        if d.get("kind") == "budget":
            return (
                f"Failure layer: schema. The previous patch exceeded the operation budget "
                f"{d['cap']}, received {d['received']}. Return at most {d['cap']} operations."
            )
        return f"Failure layer: schema. The previous patch was rejected: {d.get('message', '')}."
    if layer == "application":
        return (
            f"Failure layer: application. Operation {d.get('op_index')} could not be applied "
            f"({d.get('cause')}: {d.get('message')}). Check that every path exists in project.json."
        )
    if layer in ("precheck", "strict_verify"):
        stage = "precheck" if layer == "precheck" else "strict verification"
        checks = ", ".join(d.get("failing_checks") or []) or "none reported"
        text = f"Failure layer: {layer}. The candidate failed {stage}; failing checks: {checks}."
        if d.get("first_divergence_tick") is not None:
            text += f" The candidate first diverges from the reference at tick {d['first_divergence_tick']}."
        return text
    return ""


# -- the loop ------------------------------------------------------------------------


def _case_description(case: RepairCase, plan: RepairPlan) -> str:
    lines = []
    if case.description:
        lines.append(case.description)
    project = canonical_dumps(case.buggy.project.root).decode("utf-8")
    if plan.verbosity == "compact":
        targets = [
            {k: t.get(k) for k in ("name", "isStage", "variables", "blocks") if k in t}
            for t in case.buggy.project.targets
        ]
        project = canonical_dumps({"targets": targets}).decode("utf-8")
    lines.append("project.json:\n" + project)
    return "\n".join(lines)


def _elide_images(payload: Any) -> Any:
    """Trace-friendly payload: image data replaced by length and digest."""
    if isinstance(payload, dict):
        out = {}
        for k, v in payload.items():
            if k == "image_base64" or (k == "url" and isinstance(v, str) and v.startswith("data:")):
                data = v.split(",", 1)[-1].encode()
                out[k] = {"elided_base64_chars": len(data), "sha256": hashlib.sha256(data).hexdigest()}
            else:
                out[k] = _elide_images(v)
        return out
    if isinstance(payload, list):
        return [_elide_images(v) for v in payload]
    return payload


def run_trajectory(
    case: RepairCase,
    endpoint: ModelEndpoint,
    config: ControllerConfig,
    out_dir: str | Path | None = None,
    energy: EnergyTracker | None = None,
    clock: Callable[[], float] = time.perf_counter,
) -> TrajectoryRecord:
    out = Path(out_dir) if out_dir is not None else None
    writer = TraceWriter(out / "trace.jsonl" if out else None)
    tracker = energy or EnergyTracker("stub", power_w=10.0)
    ledger = CostLedger(endpoint.pricing)
    started = clock()
    tracker.start()
    try:
        record = _loop(case, endpoint, config, out, writer, ledger, clock)
    except IoFailure as exc:
        tracker.stop()
        writer.mark_partial(f"io failure: {exc}")
        raise
    except BaseException:
        tracker.stop()
        writer.mark_partial("aborted")
        raise
    report: EnergyReport = tracker.stop()
    record.total_energy_wh = report.total_wh
    record.energy = report.to_json()
    record.duration_ms = (clock() - started) * 1000.0
    summary = {
        "generation_success": record.generation_success,
        "strict_success": record.strict_success,
        "attempt_count": len(record.attempts),
        "outcomes": [a.outcome for a in record.attempts],
        "total_cost_usd": str(record.total_cost_usd),
        "total_energy_wh": record.total_energy_wh,
        "images_sent_total": record.images_sent_total,
        "image_bytes_total": record.image_bytes_total,
    }
    writer.write("summary", summary)
    writer.close()
    if out is not None:
        (out / "record.json").write_text(json.dumps(record.to_json(), indent=2, sort_keys=True))
    record.trace = writer.events
    return record


def _loop(
    case: RepairCase,
    endpoint: ModelEndpoint,
    config: ControllerConfig,
    out: Path | None,
    writer: TraceWriter,
    ledger: CostLedger,
    clock: Callable[[], float],
) -> TrajectoryRecord:
    report: ProbeReport = probe(case.buggy.project, case.gold.project, case.suite, config.probe_schedule)
    signal: ScheduleSignal = compute_signals(report, config)
    snapshot_paths = []
    if out is not None:
        for snap in report.snapshots:
            snapshot_paths.append(str(snap.write(out / "snapshots" / f"probe-tick-{snap.tick:04d}.ppm").relative_to(out)))
    writer.write("probe", {"report": report.summary(), "signal": signal.to_json(), "snapshots": snapshot_paths})

    attempts: list[AttemptRecord] = []
    feedback: str | None = None
    generation_success = strict_success = False
    for index in range(config.max_attempts):
        attempt_started = clock()
        plan = decide_plan(config, signal, index)
        writer.write("attempt_start", {"attempt": index, "plan": plan.to_json()})
        bundle = build_prompt(
            _case_description(case, plan),
            signal,
            plan,
            retry_feedback=feedback,
            snapshots=report.snapshots,
            assets=case.buggy.assets,
            localization_hints=case.localization_hints,
        )
        bundle = prepare_for_transport(bundle, endpoint)
        payload = assemble_request(bundle, endpoint.request_style, endpoint.model_id)
        writer.write("request", {"attempt": index, "style": endpoint.request_style, "payload": _elide_images(payload)})
        attempt = _attempt(case, endpoint, plan, index, bundle, payload, writer, ledger, out)
        attempt.duration_ms = (clock() - attempt_started) * 1000.0
        attempts.append(attempt)
        writer.write("attempt_end", {"attempt": index, "outcome": attempt.outcome, "cost_usd": str(attempt.cost_usd)})
        generation_success = generation_success or attempt.applied
        if attempt.outcome == SUCCESS:
            strict_success = True
            break
        feedback = build_retry_context(attempt)

    return TrajectoryRecord(
        case_id=case.case_id,
        model_id=endpoint.model_id,
        mode=config.mode,
        attempts=attempts,
        generation_success=generation_success,
        strict_success=strict_success,
        total_cost_usd=ledger.total_usd,
        total_energy_wh=0.0,
        images_sent_total=sum(a.payload_audit.images_sent for a in attempts),
        image_bytes_total=sum(a.payload_audit.image_bytes_sent for a in attempts),
        images_available_total=max((a.payload_audit.images_available for a in attempts), default=0),
        probe=report.summary(),
        signal=signal.to_json(),
        cost_lines=[line.to_json() for line in ledger.lines],
    )


def _attempt(
    case: RepairCase,
    endpoint: ModelEndpoint,
    plan: RepairPlan,
    index: int,
    bundle,
    payload: dict[str, Any],
    writer: TraceWriter,
    ledger: CostLedger,
    out: Path | None,
) -> AttemptRecord:
    def finish(outcome: str, audit: PayloadAudit, error: Any = None, **extra: Any) -> AttemptRecord:
        rec = AttemptRecord(
            attempt_index=index,
            plan_id=plan.id,
            evidence=plan.evidence,
            max_patch_ops=plan.max_patch_ops,
            payload_audit=audit,
            outcome=outcome,
            failure_detail=_failure_detail(error) if error is not None else {},
            **extra,
        )
        line = ledger.lines[-1] if ledger.lines and ledger.lines[-1].attempt_index == index else None
        if line is not None:
            rec.cost_usd = line.usd
            rec.input_tokens = line.input_tokens
            rec.output_tokens = line.output_tokens
        return rec

    try:
        response, audit = call_model(
            endpoint, payload, images_available=bundle.images_available, key=(case.case_id, index, plan.id)
        )
    except RequestFailure as exc:
        audit = getattr(exc, "audit", PayloadAudit())
        ledger.charge(index, 0, 0, audit.images_sent)
        writer.write("response", {"attempt": index, "ok": False, "error": str(exc), "layer": "request"})
        return finish("request", audit, exc)
    ledger.charge(index, response.input_tokens, response.output_tokens, audit.images_sent)
    writer.write("response", {"attempt": index, "ok": True, **response.to_json(), "audit": audit.to_json()})

    try:
        extracted = patchlib.extract_patch(response.raw_text)
        schema = patchlib.PatchSchema(plan.max_patch_ops)
        normalized = patchlib.normalize(patchlib.validate(extracted, schema))
    except (patchlib.ExtractionFailure, patchlib.SchemaViolation) as exc:
        layer = classify_failure(exc)
        writer.write("parse", {"attempt": index, "ok": False, "layer": layer, "error": str(exc)})
        return finish(layer, audit, exc)
    writer.write(
        "parse", {"attempt": index, "ok": True, "ops": normalized.to_json(), "noop": normalized.is_noop}
    )

    try:
        candidate = patchlib.apply(case.buggy.project, normalized)
    except patchlib.ApplicationFailure as exc:
        writer.write("apply", {"attempt": index, "ok": False, "layer": "application", "op_index": exc.index, "cause": exc.cause, "error": exc.detail})
        return finish("application", audit, exc, patch_op_count=None)
    candidate_path = None
    if out is not None:
        target = out / "candidates" / f"attempt-{index}.sb3"
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(repack(case.buggy, candidate))
        candidate_path = str(target.relative_to(out))
    writer.write("apply", {"attempt": index, "ok": True, "candidate": candidate_path, "op_count": len(normalized)})
    applied = {"patch_op_count": len(normalized), "patch_noop": normalized.is_noop, "candidate_path": candidate_path}

    verdicts: dict[str, Any] = {}
    if plan.precheck_enabled:
        pre = precheck(candidate, case.suite, plan.precheck_schedule)
        verdicts["precheck"] = pre.to_json()
        writer.write("precheck", {"attempt": index, **pre.to_json()})
        if not pre.overall_pass:
            return finish("precheck", audit, pre, verdicts=verdicts, **applied)
    strict = full_verify(candidate, case.suite, plan.strict_schedule, gold=case.gold.project)
    verdicts["strict"] = strict.to_json()
    writer.write("verify", {"attempt": index, **strict.to_json()})
    if not strict.overall_pass:
        return finish("strict_verify", audit, strict, verdicts=verdicts, **applied)
    return finish(SUCCESS, audit, verdicts=verdicts, **applied)


__all__ = [
    "AttemptRecord",
    "FixtureError",
    "GoldFailsSuite",
    "LAYERS",
    "RepairCase",
    "TrajectoryRecord",
    "build_retry_context",
    "classify_failure",
    "load_case",
    "run_trajectory",
    "stable_view",
]
