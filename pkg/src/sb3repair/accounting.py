"""Per-trajectory cost ledger, host-side energy tracking and JSONL trace writer."""
from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any, Callable, Mapping

MILLION = Decimal(1_000_000)


@dataclass(frozen=True)
class Pricing:
    usd_per_1m_input_tokens: Decimal = Decimal(0)
    usd_per_1m_output_tokens: Decimal = Decimal(0)
    usd_per_image: Decimal = Decimal(0)

    def __post_init__(self) -> None:
        for name in ("usd_per_1m_input_tokens", "usd_per_1m_output_tokens", "usd_per_image"):
            value = Decimal(str(getattr(self, name)))
            if value < 0:
                raise ValueError(f"{name} must be non-negative")
            object.__setattr__(self, name, value)

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "Pricing":
        image = obj.get("usd_per_image")
        return cls(
            Decimal(str(obj.get("usd_per_1M_input_tokens", 0))),
            Decimal(str(obj.get("usd_per_1M_output_tokens", 0))),
            Decimal(str(image if image is not None else 0)),
        )

    def to_json(self) -> dict[str, str]:
        return {
            "usd_per_1M_input_tokens": str(self.usd_per_1m_input_tokens),
            "usd_per_1M_output_tokens": str(self.usd_per_1m_output_tokens),
            "usd_per_image": str(self.usd_per_image),
        }


def load_pricing_table(path: str | Path) -> dict[str, Pricing]:
    table = json.loads(Path(path).read_text())
    return {model_id: Pricing.from_json(entry) for model_id, entry in table.items()}


def price_attempt(input_tokens: int, output_tokens: int, images: int, pricing: Pricing) -> Decimal:
    return (
        Decimal(input_tokens) * pricing.usd_per_1m_input_tokens / MILLION
        + Decimal(output_tokens) * pricing.usd_per_1m_output_tokens / MILLION
        + Decimal(images) * pricing.usd_per_image
    )


@dataclass
class CostLine:
    attempt_index: int
    input_tokens: int
    output_tokens: int
    images: int
    usd: Decimal

    def to_json(self) -> dict[str, Any]:
        return {
            "attempt_index": self.attempt_index,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "images": self.images,
            "usd": str(self.usd),
        }


@dataclass
class CostLedger:
    pricing: Pricing
    lines: list[CostLine] = field(default_factory=list)

    def charge(self, attempt_index: int, input_tokens: int, output_tokens: int, images: int) -> CostLine:
        usd = price_attempt(input_tokens, output_tokens, images, self.pricing)
        line = CostLine(attempt_index, input_tokens, output_tokens, images, usd)
        self.lines.append(line)
        return line

    @property
    def total_usd(self) -> Decimal:
        return sum((line.usd for line in self.lines), Decimal(0))


# -- energy -------------------------------------------------------------------


class SamplerUnavailable(RuntimeError):
    pass


class BracketError(RuntimeError):
    pass


@dataclass
class EnergyReport:
    method: str
    total_wh: float
    wall_ms: float
    samples: int
    power_w: float | None = None
    fallback_reason: str | None = None

    def to_json(self) -> dict[str, Any]:
        out = {"method": self.method, "total_wh": self.total_wh, "wall_ms": self.wall_ms, "samples": self.samples}
        if self.power_w is not None:
            out["configured_power_w"] = self.power_w
        if self.fallback_reason:
            out["fallback_reason"] = self.fallback_reason
        return out


def stub_energy_wh(wall_ms: float, power_w: float) -> float:
    return wall_ms * power_w / 3_600_000


class RaplPowerSource:
    """Package power from the Linux powercap energy counter (microjoules)."""

    def __init__(self, path: str = "/sys/class/powercap/intel-rapl:0/energy_uj"):
        self.path = path
        try:
            self._read()
        except OSError as exc:
            raise SamplerUnavailable(f"{path}: {exc}") from None

    def _read(self) -> int:
        with open(self.path) as fh:
            return int(fh.read().strip())

    def energy_j(self) -> float:
        return self._read() / 1e6


class EnergyTracker:
    """Start/stop bracket around one trajectory.

    ``method="stub"`` multiplies wall time by ``power_w``. ``method="sampled"``
    polls ``source`` every ``interval_s``: a callable returning instantaneous
    watts, or an object with ``energy_j()`` returning a cumulative counter.
    When no source can be opened the tracker falls back to the stub and says so.
    """

    def __init__(
        self,
        method: str = "stub",
        power_w: float = 10.0,
        interval_s: float = 0.05,
        source: Any = None,
        clock: Callable[[], float] = time.perf_counter,
    ):
        if method not in ("stub", "sampled"):
            raise ValueError(f"unknown energy method {method!r}")
        self.method = method
        self.power_w = power_w
        self.interval_s = interval_s
        self.source = source
        self.clock = clock
        self._start: float | None = None
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()
        self._samples = 0
        self._joules = 0.0
        self._fallback: str | None = None

    def start(self) -> None:
        if self._start is not None:
            raise BracketError("energy bracket already open")
        self._start = self.clock()
        if self.method == "sampled":
            try:
                if self.source is None:
                    self.source = RaplPowerSource()
            except SamplerUnavailable as exc:
                self._fallback = str(exc)
                return
            self._stop.clear()
            self._thread = threading.Thread(target=self._poll, daemon=True)
            self._thread.start()

    def _poll(self) -> None:
        counter = hasattr(self.source, "energy_j")
        last_t = self.clock()
        last_v = self.source.energy_j() if counter else float(self.source())
        while not self._stop.wait(self.interval_s):
            now = self.clock()
            if counter:
                value = self.source.energy_j()
                self._joules += max(value - last_v, 0.0)
            else:
                value = float(self.source())
                self._joules += 0.5 * (value + last_v) * (now - last_t)
            last_t, last_v = now, value
            self._samples += 1

    def stop(self) -> EnergyReport:
        if self._start is None:
            raise BracketError("energy bracket not open")
        wall_ms = (self.clock() - self._start) * 1000.0
        self._start = None
        if self._thread is not None:
            self._stop.set()
            self._thread.join()
            self._thread = None
            return EnergyReport("sampled", self._joules / 3600.0, wall_ms, self._samples)
        return EnergyReport(
            "stub",
            stub_energy_wh(wall_ms, self.power_w),
            wall_ms,
            0,
            power_w=self.power_w,
            fallback_reason=self._fallback,
        )

    def __enter__(self) -> "EnergyTracker":
        self.start()
        return self

    def __exit__(self, *exc: Any) -> None:
        if self._start is not None:
            self.report = self.stop()


# -- tracing ----------------------------------------------------------------------


class TraceError(RuntimeError):
    pass


class IoFailure(TraceError):
    pass


EVENT_KINDS = (
    "probe",
    "attempt_start",
    "request",
    "response",
    "parse",
    "apply",
    "precheck",
    "verify",
    "attempt_end",
    "summary",
    "partial",
)


@dataclass
class TraceEvent:
    seq: int
    kind: str
    timestamp: float
    payload: Any

    def to_json(self) -> dict[str, Any]:
        return {"seq": self.seq, "kind": self.kind, "timestamp": self.timestamp, "payload": self.payload}


class TraceWriter:
    """Append-only, single-writer JSONL trace for one trajectory.

    With ``path=None`` events are only kept in memory (``self.events``).
    """

    def __init__(self, path: str | Path | None, clock: Callable[[], float] = time.time):
        self.path = Path(path) if path is not None else None
        self.clock = clock
        self.events: list[TraceEvent] = []
        self._fh = None
        if self.path is not None:
            if self.path.exists() and self.path.stat().st_size > 0:
                raise TraceError(f"trace {self.path} already exists; traces are append-only and single-writer")
            self.path.parent.mkdir(parents=True, exist_ok=True)
            try:
                self._fh = open(self.path, "x", encoding="utf-8")
            except FileExistsError:
                raise TraceError(f"trace {self.path} already exists") from None
        self._seq = 0
        self.closed = False

    def write(self, kind: str, payload: Any) -> TraceEvent:
        if self.closed:
            raise TraceError("trace writer is closed")
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown trace event kind {kind!r}")
        event = TraceEvent(self._seq, kind, self.clock(), payload)
        if self._fh is not None:
            line = json.dumps(event.to_json(), ensure_ascii=False, sort_keys=True, default=str)
            try:
                self._fh.write(line + "\n")
                if kind == "summary":
                    self._fh.flush()
                    os.fsync(self._fh.fileno())
            except OSError as exc:
                raise IoFailure(str(exc)) from exc
        self.events.append(event)
        self._seq += 1
        return event

    def mark_partial(self, reason: str) -> None:
        try:
            self.write("partial", {"reason": reason})
        except (TraceError, OSError):
            pass
        self.close()

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            if self._fh is not None:
                self._fh.close()

    def __enter__(self) -> "TraceWriter":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()


def write_event(writer: TraceWriter, kind: str, payload: Any) -> TraceEvent:
    return writer.write(kind, payload)


def read_trace(path: str | Path) -> list[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
