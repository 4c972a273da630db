"""Black-box suite evaluation: probe, precheck and strict verification."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from .. import kernels
from ..project import ProjectDocument
from .interpreter import ExecutionTrace, VmState, compare_values, execute
from .snapshot import StageSnapshot, capture_snapshot

PREDICATES = ("variable_equals", "sprite_in_box", "broadcast_seen", "costume_is")


class VerifierError(Exception):
    pass


class SuiteError(VerifierError):
    pass


class GoldFailsSuite(VerifierError):
    def __init__(self, failing: list[str]):
        super().__init__(f"gold project fails checks: {', '.join(failing)}")
        self.failing = failing


def derive_seeds(base: int, count: int) -> tuple[int, ...]:
    state = base & kernels.pure.MASK64
    out = []
    for _ in range(count):
        state, value = kernels.pure.splitmix64(state)
        out.append(value)
    return tuple(out)


@dataclass(frozen=True)
class RunSchedule:
    ticks: int
    reruns: int = 1
    seeds: tuple[int, ...] = ()
    snapshot_ticks: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.ticks < 1 or self.reruns < 1:
            raise ValueError("ticks and reruns must be positive")
        if not self.seeds:
            object.__setattr__(self, "seeds", derive_seeds(0, self.reruns))
        if len(self.seeds) != self.reruns:
            raise ValueError(f"expected {self.reruns} seeds, got {len(self.seeds)}")
        bad = [t for t in self.snapshot_ticks if not 0 <= t <= self.ticks]
        if bad:
            raise ValueError(f"snapshot ticks outside [0, {self.ticks}]: {bad}")

    def to_json(self) -> dict[str, Any]:
        return {
            "ticks": self.ticks,
            "reruns": self.reruns,
            "seeds": list(self.seeds),
            "snapshot_ticks": list(self.snapshot_ticks),
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "RunSchedule":
        return cls(
            ticks=int(obj["ticks"]),
            reruns=int(obj.get("reruns", 1)),
            seeds=tuple(int(s) for s in obj.get("seeds", ())),
            snapshot_ticks=tuple(int(t) for t in obj.get("snapshot_ticks", ())),
        )


def probe_schedule() -> RunSchedule:
    # no explicit snapshot ticks: the probe picks representative ones itself
    return RunSchedule(ticks=60, reruns=2)


def precheck_schedule() -> RunSchedule:
    return RunSchedule(ticks=30, reruns=1)


def strict_schedule(ticks: int = 120) -> RunSchedule:
    return RunSchedule(ticks=ticks, reruns=2)


@dataclass(frozen=True)
class Check:
    id: str
    predicate: dict[str, Any]
    at_tick: int | None = None  # None means "final state of the run"

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "Check":
        at = obj.get("at", "final")
        if at == "final" or at is None:
            at_tick = None
        elif isinstance(at, dict) and "tick" in at:
            at_tick = int(at["tick"])
        elif isinstance(at, int) and not isinstance(at, bool):
            at_tick = at
        else:
            raise SuiteError(f"check {obj.get('id')!r}: bad eval point {at!r}")
        pred = obj.get("predicate")
        if not isinstance(pred, dict) or pred.get("type") not in PREDICATES:
            raise SuiteError(f"check {obj.get('id')!r}: unknown predicate {pred!r}")
        return cls(id=str(obj["id"]), predicate=dict(pred), at_tick=at_tick)

    def to_json(self) -> dict[str, Any]:
        at: Any = "final" if self.at_tick is None else {"tick": self.at_tick}
        return {"id": self.id, "at": at, "predicate": self.predicate}


@dataclass(frozen=True)
class TestSuite:
    __test__ = False  # not a pytest class

    checks: tuple[Check, ...]

    def __post_init__(self) -> None:
        ids = [c.id for c in self.checks]
        if len(set(ids)) != len(ids):
            raise SuiteError("check ids must be unique")

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "TestSuite":
        return cls(tuple(Check.from_json(c) for c in obj["checks"]))

    def to_json(self) -> dict[str, Any]:
        return {"checks": [c.to_json() for c in self.checks]}

    def validate_against(self, schedule: RunSchedule) -> None:
        late = [c.id for c in self.checks if c.at_tick is not None and not 0 <= c.at_tick <= schedule.ticks]
        if late:
            raise SuiteError(f"checks evaluated outside the run schedule: {late}")


def _eval_predicate(pred: dict[str, Any], state: VmState) -> bool:
    kind = pred["type"]
    if kind == "variable_equals":
        name = pred["variable"]
        if name not in state.variables:
            return False
        return compare_values(state.variables[name], pred["value"]) == 0
    if kind == "sprite_in_box":
        sprite = state.sprites.get(pred["sprite"])
        if sprite is None:
            return False
        return (
            pred.get("x_min", -240) <= sprite.x <= pred.get("x_max", 240)
            and pred.get("y_min", -180) <= sprite.y <= pred.get("y_max", 180)
        )
    if kind == "broadcast_seen":
        return str(pred["message"]).lower() in state.broadcasts_seen
    if kind == "costume_is":
        sprite = state.sprites.get(pred["sprite"])
        if sprite is None:
            return False
        want = pred["costume"]
        if isinstance(want, str):
            names = pred.get("_costume_names") or {}
            return names.get(want) == sprite.costume_index
        return sprite.costume_index == int(want)
    raise SuiteError(f"unknown predicate {kind!r}")


def _costume_names(project: ProjectDocument) -> dict[str, dict[str, int]]:
    out = {}
    for t in project.sprites:
        costumes = t.get("costumes") if isinstance(t.get("costumes"), list) else []
        out[str(t.get("name", ""))] = {
            c.get("name"): i for i, c in enumerate(costumes) if isinstance(c, dict)
        }
    return out


def evaluate_checks(suite: TestSuite, trace: ExecutionTrace, project: ProjectDocument) -> dict[str, bool | None]:
    """Per-check verdicts for one run; ``None`` marks checks beyond the run's horizon."""
    last = len(trace.states) - 1
    names = None
    out: dict[str, bool | None] = {}
    for check in suite.checks:
        tick = last if check.at_tick is None else check.at_tick
        if tick > last:
            out[check.id] = None
            continue
        pred = check.predicate
        if pred["type"] == "costume_is" and isinstance(pred.get("costume"), str):
            if names is None:
                names = _costume_names(project)
            pred = dict(pred, _costume_names=names.get(pred["sprite"], {}))
        out[check.id] = _eval_predicate(pred, trace.states[tick])
    return out


@dataclass
class VerdictReport:
    stage: str
    per_check: dict[str, list[bool | None]]
    overall_pass: bool
    seeds: tuple[int, ...] = ()
    first_divergence_tick: int | None = None

    @property
    def failing_checks(self) -> list[str]:
        return [cid for cid, runs in self.per_check.items() if any(v is False for v in runs)]

    def to_json(self) -> dict[str, Any]:
        return {
            "stage": self.stage,
            "overall_pass": self.overall_pass,
            "per_check": self.per_check,
            "failing_checks": self.failing_checks,
            "seeds": list(self.seeds),
            "first_divergence_tick": self.first_divergence_tick,
        }


def run_suite(project: ProjectDocument, suite: TestSuite, schedule: RunSchedule, stage: str) -> tuple[VerdictReport, list[ExecutionTrace]]:
    per_check: dict[str, list[bool | None]] = {c.id: [] for c in suite.checks}
    traces = []
    for seed in schedule.seeds:
        trace = execute(project, schedule.ticks, seed, schedule.snapshot_ticks)
        traces.append(trace)
        for cid, verdict in evaluate_checks(suite, trace, project).items():
            per_check[cid].append(verdict)
    overall = all(v is not False for runs in per_check.values() for v in runs)
    return VerdictReport(stage, per_check, overall, tuple(schedule.seeds)), traces


def precheck(candidate: ProjectDocument, suite: TestSuite, schedule: RunSchedule | None = None) -> VerdictReport:
    """Short single-run screen; checks beyond its horizon are not evaluated."""
    return run_suite(candidate, suite, schedule or precheck_schedule(), "precheck")[0]


def full_verify(
    candidate: ProjectDocument,
    suite: TestSuite,
    schedule: RunSchedule | None = None,
    gold: ProjectDocument | None = None,
) -> VerdictReport:
    schedule = schedule or strict_schedule()
    report, traces = run_suite(candidate, suite, schedule, "strict")
    if gold is not None and not report.overall_pass:
        gold_traces = [execute(gold, schedule.ticks, s) for s in schedule.seeds]
        report.first_divergence_tick = compare_traces(traces, gold_traces)[2]
    return report


# -- probe -----------------------------------------------------------------------


def observation_columns(states: Iterable[VmState]) -> list[tuple[str, str]]:
    cols: dict[tuple[str, str], None] = {}
    for state in states:
        for name in state.sprites:
            cols[("sprite", f"{name}.x")] = None
            cols[("sprite", f"{name}.y")] = None
            cols[("sprite", f"{name}.costume")] = None
        for name in state.variables:
            cols[("var", name)] = None
    return list(cols)


_MISSING_CODE = -1
_ABSENT = object()


def _observe(state: VmState, column: tuple[str, str]) -> Any:
    kind, key = column
    if kind == "var":
        return state.variables.get(key, _ABSENT)
    name, _, attr = key.rpartition(".")
    sprite = state.sprites.get(name)
    if sprite is None:
        return _ABSENT
    return {"x": sprite.x, "y": sprite.y, "costume": sprite.costume_index}[attr]


def _intern(value: Any, table: dict[Any, int]) -> int:
    if value is _ABSENT:
        return _MISSING_CODE
    if isinstance(value, bool):
        key: Any = ("b", value)
    elif isinstance(value, (int, float)):
        key = ("n", float(value))
    else:
        key = ("s", str(value))
    code = table.get(key)
    if code is None:
        code = table[key] = len(table)
    return code


def observation_grid(states: list[VmState], columns: list[tuple[str, str]], table: dict[Any, int]) -> np.ndarray:
    grid = np.empty((len(states), len(columns)), dtype=np.int64)
    for i, state in enumerate(states):
        grid[i] = [_intern(_observe(state, c), table) for c in columns]
    return grid


def compare_traces(buggy: list[ExecutionTrace], gold: list[ExecutionTrace]) -> tuple[int, int, int | None]:
    """``(differing samples, total samples, first differing tick)`` over paired runs."""
    diff = total = 0
    first: int | None = None
    table: dict[Any, int] = {}
    for b, g in zip(buggy, gold):
        n = min(len(b.states), len(g.states))
        columns = observation_columns(b.states[:n] + g.states[:n])
        if not columns:
            continue
        count, row = kernels.count_mismatches(
            observation_grid(b.states[:n], columns, table),
            observation_grid(g.states[:n], columns, table),
        )
        diff += int(count)
        total += n * len(columns)
        if row >= 0:
            tick = b.states[int(row)].tick
            first = tick if first is None else min(first, tick)
    return diff, total, first


@dataclass
class ProbeReport:
    buggy_pass_rate: float
    mismatch_rate: float
    rerun_instability: float
    first_divergence_tick: int | None
    snapshots: list[StageSnapshot] = field(default_factory=list)
    failing_checks: list[str] = field(default_factory=list)
    inert_opcodes: list[str] = field(default_factory=list)

    def summary(self) -> dict[str, Any]:
        return {
            "buggy_pass_rate": self.buggy_pass_rate,
            "mismatch_rate": self.mismatch_rate,
            "rerun_instability": self.rerun_instability,
            "first_divergence_tick": self.first_divergence_tick,
            "snapshot_count": len(self.snapshots),
            "failing_checks": list(self.failing_checks),
            "inert_opcodes": list(self.inert_opcodes),
        }


def representative_ticks(ticks: int, first_divergence: int | None) -> list[int]:
    """Tick 1, the first divergence from gold (when there is one) and the last tick."""
    chosen = {1, ticks}
    if first_divergence is not None:
        chosen.add(first_divergence)
    return sorted(chosen)


def probe(
    buggy: ProjectDocument,
    gold: ProjectDocument,
    suite: TestSuite,
    budget: RunSchedule | None = None,
) -> ProbeReport:
    budget = budget or probe_schedule()
    gold_report, gold_traces = run_suite(gold, suite, budget, "probe")
    if not gold_report.overall_pass:
        raise GoldFailsSuite(gold_report.failing_checks)
    report, traces = run_suite(buggy, suite, budget, "probe")

    verdicts = [v for runs in report.per_check.values() for v in runs if v is not None]
    pass_rate = sum(verdicts) / len(verdicts) if verdicts else 1.0
    evaluated = [runs for runs in report.per_check.values() if any(v is not None for v in runs)]
    unstable = sum(1 for runs in evaluated if len(set(runs)) > 1)
    instability = unstable / len(evaluated) if evaluated else 0.0

    diff, total, first = compare_traces(traces, gold_traces)
    mismatch = diff / total if total else 0.0
    if diff == 0:
        first = None

    if budget.snapshot_ticks:
        ticks = sorted(set(budget.snapshot_ticks))
    else:
        ticks = representative_ticks(budget.ticks, compare_traces(traces[:1], gold_traces[:1])[2])
    snapshots = [traces[0].snapshots.get(t) or capture_snapshot(traces[0].states[t]) for t in ticks]
    return ProbeReport(
        buggy_pass_rate=pass_rate,
        mismatch_rate=mismatch,
        rerun_instability=instability,
        first_divergence_tick=first,
        snapshots=snapshots,
        failing_checks=report.failing_checks,
        inert_opcodes=traces[0].inert_opcodes if traces else [],
    )
