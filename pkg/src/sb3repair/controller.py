"""Scheduling signals and repair-plan selection for the four controller modes."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .vm.verifier import (
    ProbeReport,
    RunSchedule,
    derive_seeds,
    precheck_schedule,
    probe_schedule,
    strict_schedule,
)

MODES = ("text_only", "always_on", "fixed", "heuristic")
TEXT_ONLY = "text_only"
MULTIMODAL = "multimodal"
_FORCED_SNAPSHOTS = 2


class AttemptsExhausted(Exception):
    pass


@dataclass(frozen=True)
class ScheduleSignal:
    divergence: str  # early | mid | late | none
    mismatch: str  # local | broad
    stability: str  # stable | unstable
    pass_gap: float

    def to_json(self) -> dict[str, Any]:
        return {
            "divergence": self.divergence,
            "mismatch": self.mismatch,
            "stability": self.stability,
            "pass_gap": self.pass_gap,
        }

    def summary(self) -> str:
        return (
            f"divergence={self.divergence}, mismatch={self.mismatch}, "
            f"stability={self.stability}, pass_gap={self.pass_gap:.2f}"
        )


@dataclass(frozen=True)
class RepairPlan:
    id: str
    evidence: str
    max_patch_ops: int
    precheck_enabled: bool = True
    strict_schedule: RunSchedule = field(default_factory=strict_schedule)
    precheck_schedule: RunSchedule = field(default_factory=precheck_schedule)
    max_snapshots: int = 0
    verbosity: str = "compact"

    def __post_init__(self) -> None:
        if self.evidence not in (TEXT_ONLY, MULTIMODAL):
            raise ValueError(f"unknown evidence policy {self.evidence!r}")
        if self.max_patch_ops < 1:
            raise ValueError("max_patch_ops must be positive")
        if self.evidence == TEXT_ONLY and self.max_snapshots != 0:
            raise ValueError("text-only plans cannot carry snapshots")

    @property
    def rank(self) -> tuple[int, int]:
        return (self.evidence == MULTIMODAL, self.max_patch_ops)

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "evidence": self.evidence,
            "max_patch_ops": self.max_patch_ops,
            "precheck_enabled": self.precheck_enabled,
            "strict_schedule": self.strict_schedule.to_json(),
            "precheck_schedule": self.precheck_schedule.to_json(),
            "max_snapshots": self.max_snapshots,
            "verbosity": self.verbosity,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "RepairPlan":
        kwargs: dict[str, Any] = {
            "id": obj["id"],
            "evidence": obj["evidence"],
            "max_patch_ops": int(obj["max_patch_ops"]),
            "precheck_enabled": bool(obj.get("precheck_enabled", True)),
            "max_snapshots": int(obj.get("max_snapshots", 0)),
            "verbosity": obj.get("verbosity", "compact"),
        }
        if "strict_schedule" in obj:
            kwargs["strict_schedule"] = RunSchedule.from_json(obj["strict_schedule"])
        if "precheck_schedule" in obj:
            kwargs["precheck_schedule"] = RunSchedule.from_json(obj["precheck_schedule"])
        return cls(**kwargs)


def default_ladder() -> tuple[RepairPlan, ...]:
    return (
        RepairPlan("P0", TEXT_ONLY, 3),
        RepairPlan("P1", TEXT_ONLY, 5),
        RepairPlan("P2", MULTIMODAL, 8, max_snapshots=2, verbosity="detailed"),
        RepairPlan("P3", MULTIMODAL, 12, max_snapshots=4, strict_schedule=strict_schedule(180), verbosity="detailed"),
    )


@dataclass(frozen=True)
class Thresholds:
    early_tick_max: int = 5
    broad_mismatch_min: float = 0.5
    # any nonzero instability counts as unstable
    instability_min: float = 1e-12

    def to_json(self) -> dict[str, Any]:
        return {
            "early_tick_max": self.early_tick_max,
            "broad_mismatch_min": self.broad_mismatch_min,
            "instability_min": self.instability_min,
        }


@dataclass(frozen=True)
class ControllerConfig:
    mode: str = "heuristic"
    thresholds: Thresholds = field(default_factory=Thresholds)
    plan_ladder: tuple[RepairPlan, ...] = field(default_factory=default_ladder)
    fixed_plan_id: str = "P2"
    max_attempts: int = 3
    probe_schedule: RunSchedule = field(default_factory=probe_schedule)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown controller mode {self.mode!r}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be positive")
        self.plan(self.fixed_plan_id)
        ranks = [p.rank for p in self.plan_ladder]
        if ranks != sorted(ranks):
            raise ValueError("plan ladder must be ordered by (evidence, max_patch_ops)")
        if not self.text_plans() or not self.multimodal_plans():
            raise ValueError("plan ladder needs at least one text-only and one multimodal plan")

    def plan(self, plan_id: str) -> RepairPlan:
        for p in self.plan_ladder:
            if p.id == plan_id:
                return p
        raise ValueError(f"no plan named {plan_id!r} in ladder")

    @property
    def fixed_plan(self) -> RepairPlan:
        return self.plan(self.fixed_plan_id)

    def text_plans(self) -> list[RepairPlan]:
        return [p for p in self.plan_ladder if p.evidence == TEXT_ONLY]

    def multimodal_plans(self) -> list[RepairPlan]:
        return [p for p in self.plan_ladder if p.evidence == MULTIMODAL]

    def with_mode(self, mode: str) -> "ControllerConfig":
        return replace(self, mode=mode)

    def with_seed(self, seed: int) -> "ControllerConfig":
        """Copy whose probe, precheck and strict schedules draw seeds from ``seed``."""

        def reseed(schedule: RunSchedule, salt: int) -> RunSchedule:
            return replace(schedule, seeds=derive_seeds(seed ^ salt, schedule.reruns))

        ladder = tuple(
            replace(p, strict_schedule=reseed(p.strict_schedule, 2), precheck_schedule=reseed(p.precheck_schedule, 1))
            for p in self.plan_ladder
        )
        return replace(self, plan_ladder=ladder, probe_schedule=reseed(self.probe_schedule, 0))

    def to_json(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "thresholds": self.thresholds.to_json(),
            "plan_ladder": [p.to_json() for p in self.plan_ladder],
            "fixed_plan": self.fixed_plan_id,
            "max_attempts": self.max_attempts,
            "probe_schedule": self.probe_schedule.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "ControllerConfig":
        kwargs: dict[str, Any] = {}
        if "mode" in obj:
            kwargs["mode"] = obj["mode"]
        if "thresholds" in obj:
            kwargs["thresholds"] = Thresholds(**obj["thresholds"])
        if "plan_ladder" in obj:
            kwargs["plan_ladder"] = tuple(RepairPlan.from_json(p) for p in obj["plan_ladder"])
        if "fixed_plan" in obj:
            fixed = obj["fixed_plan"]
            kwargs["fixed_plan_id"] = fixed["id"] if isinstance(fixed, dict) else fixed
        if "max_attempts" in obj:
            kwargs["max_attempts"] = int(obj["max_attempts"])
        if "probe_schedule" in obj:
            kwargs["probe_schedule"] = RunSchedule.from_json(obj["probe_schedule"])
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "ControllerConfig":
        return cls.from_json(json.loads(Path(path).read_text()))


def compute_signals(report: ProbeReport, config: ControllerConfig) -> ScheduleSignal:
    th = config.thresholds
    tick = report.first_divergence_tick
    if report.mismatch_rate == 0 or tick is None:
        divergence = "none"
    elif tick <= th.early_tick_max:
        divergence = "early"
    elif tick <= config.probe_schedule.ticks / 2:
        divergence = "mid"
    else:
        divergence = "late"
    return ScheduleSignal(
        divergence=divergence,
        mismatch="broad" if report.mismatch_rate >= th.broad_mismatch_min else "local",
        stability="unstable" if report.rerun_instability >= th.instability_min else "stable",
        pass_gap=1.0 - report.buggy_pass_rate,
    )


def should_escalate(signal: ScheduleSignal) -> bool:
    return signal.divergence == "early" or signal.mismatch == "broad" or signal.stability == "unstable"


def _force_multimodal(plan: RepairPlan) -> RepairPlan:
    if plan.evidence == MULTIMODAL:
        return plan
    return replace(
        plan,
        id=f"{plan.id}+mm",
        evidence=MULTIMODAL,
        max_snapshots=max(plan.max_snapshots, _FORCED_SNAPSHOTS),
    )


def decide_plan(config: ControllerConfig, signal: ScheduleSignal, attempt: int) -> RepairPlan:
    """Plan for ``attempt`` (0-based); a pure function of its arguments."""
    if attempt < 0:
        raise ValueError("attempt must be non-negative")
    if attempt >= config.max_attempts:
        raise AttemptsExhausted(f"attempt {attempt} >= max_attempts {config.max_attempts}")
    mode = config.mode
    if mode == "text_only":
        return min(config.text_plans(), key=lambda p: p.max_patch_ops)
    if mode == "fixed":
        return config.fixed_plan
    if mode == "always_on":
        ladder = config.plan_ladder
        return _force_multimodal(ladder[min(attempt, len(ladder) - 1)])
    # heuristic: climb within the chosen tier, never step down
    tier = config.multimodal_plans() if should_escalate(signal) else config.text_plans()
    return tier[min(attempt, len(tier) - 1)]
