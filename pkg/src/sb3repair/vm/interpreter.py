"""Deterministic tick-based interpreter for a subset of Scratch 3 blocks.

Execution model
---------------
A run lasts ``ticks`` frames. ``trace.states[0]`` is the initial world and
``trace.states[t]`` the world after frame ``t``. Green-flag scripts start in
frame 1. Within a frame every live thread runs, in start order, until it
yields; loops yield once per iteration, ``wait`` yields for
``round(seconds * 30)`` frames (at least one). Broadcasts sent in frame ``t``
start their receivers at the beginning of frame ``t + 1``; a receiver that
is still running is restarted.

``pick random`` draws from a splitmix64 stream keyed by the run seed, the
sprite, the script's index among its target's top-level scripts and a per
script call count, so adding a script never shifts another script's draws.
``VmState.rng_state`` holds the run seed.

Unsupported opcodes execute as inert no-ops and are listed in
``trace.inert_opcodes``. Sprite positions are clamped to the stage box
[-240, 240] x [-180, 180].
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator

from .. import kernels
from ..project import ProjectDocument

STAGE_W = 240
STAGE_H = 180
MASK64 = kernels.pure.MASK64
GAMMA = 0x9E3779B97F4A7C15
FPS = 30


@dataclass(frozen=True)
class SpriteState:
    x: float
    y: float
    direction: float
    costume_index: int
    visible: bool


@dataclass(frozen=True)
class VmState:
    tick: int
    sprites: dict[str, SpriteState]
    variables: dict[str, Any]
    pending_broadcasts: tuple[str, ...]
    rng_state: int
    broadcasts_seen: frozenset[str] = frozenset()

    def sprite_names(self) -> list[str]:
        return list(self.sprites)


@dataclass
class ExecutionTrace:
    seed: int
    states: list[VmState]
    snapshots: dict[int, Any] = field(default_factory=dict)
    inert_opcodes: list[str] = field(default_factory=list)
    broadcast_log: list[tuple[int, str]] = field(default_factory=list)

    @property
    def final(self) -> VmState:
        return self.states[-1]


class _StopThread(Exception):
    pass


class _StopAll(Exception):
    pass


def to_number(value: Any) -> float | int:
    if isinstance(value, bool):
        return 1 if value else 0
    if isinstance(value, (int, float)):
        if isinstance(value, float) and math.isnan(value):
            return 0
        return value
    if isinstance(value, str):
        text = value.strip()
        if not text:
            return 0
        try:
            num = float(text)
        except ValueError:
            return 0
        return 0 if math.isnan(num) else num
    return 0


def normalize_number(num: float | int) -> float | int:
    if isinstance(num, float) and math.isfinite(num) and num.is_integer():
        return int(num)
    return num


def _numeric_like(value: Any) -> bool:
    if isinstance(value, bool):
        return False
    if isinstance(value, (int, float)):
        return not (isinstance(value, float) and math.isnan(value))
    if isinstance(value, str):
        text = value.strip()
        if not text:
            return False
        try:
            return not math.isnan(float(text))
        except ValueError:
            return False
    return False


def compare_values(a: Any, b: Any) -> int:
    """Scratch comparison: numeric when both sides look numeric, else case-insensitive text."""
    if _numeric_like(a) and _numeric_like(b):
        na, nb = float(to_number(a)), float(to_number(b))
        return (na > nb) - (na < nb)
    sa = to_text(a).lower()
    sb = to_text(b).lower()
    return (sa > sb) - (sa < sb)


def to_text(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        value = normalize_number(value)
    return str(value)


def to_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return value != 0
    if isinstance(value, str):
        return value not in ("", "0") and value.lower() != "false"
    return False


def wrap_direction(d: float) -> float:
    d = ((d + 179) % 360) - 179
    return normalize_number(d)


def _clamp(v: float, lo: float, hi: float) -> float | int:
    return normalize_number(round(min(max(v, lo), hi), 8))


class _Target:
    """Mutable runtime view of one project target."""

    def __init__(self, raw: dict[str, Any]):
        self.raw = raw
        self.name = str(raw.get("name", ""))
        self.is_stage = raw.get("isStage") is True
        blocks = raw.get("blocks")
        self.blocks: dict[str, Any] = blocks if isinstance(blocks, dict) else {}
        costumes = raw.get("costumes")
        self.costumes: list[Any] = costumes if isinstance(costumes, list) else []
        self.x = _clamp(to_number(raw.get("x", 0)), -STAGE_W, STAGE_W)
        self.y = _clamp(to_number(raw.get("y", 0)), -STAGE_H, STAGE_H)
        self.direction = wrap_direction(to_number(raw.get("direction", 90)))
        self.costume = int(to_number(raw.get("currentCostume", 0)))
        self.visible = raw.get("visible", True) is not False
        self._scripts: dict[str, int] | None = None
        # variable id -> [name, value]
        self.vars: dict[str, list[Any]] = {}
        variables = raw.get("variables")
        if isinstance(variables, dict):
            for vid, entry in variables.items():
                if isinstance(entry, list) and entry:
                    value = entry[1] if len(entry) > 1 else 0
                    self.vars[str(vid)] = [str(entry[0]), value]

    def costume_count(self) -> int:
        return max(1, len(self.costumes))

    def script_index(self, hat_id: str) -> int:
        if self._scripts is None:
            self._scripts = {
                bid: i
                for i, bid in enumerate(
                    b for b, blk in self.blocks.items() if isinstance(blk, dict) and blk.get("topLevel") is True
                )
            }
        return self._scripts.get(hat_id, -1)

    def costume_index_by_name(self, name: str) -> int | None:
        for i, c in enumerate(self.costumes):
            if isinstance(c, dict) and c.get("name") == name:
                return i
        return None

    def sprite_state(self) -> SpriteState:
        return SpriteState(self.x, self.y, self.direction, self.costume, self.visible)


def _name_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "big")


class _Thread:
    __slots__ = ("target", "hat_id", "gen", "done", "message")

    def __init__(self, target: _Target, hat_id: str, gen: Iterator[None], message: str | None):
        self.target = target
        self.hat_id = hat_id
        self.gen = gen
        self.done = False
        self.message = message


class Interpreter:
    """One run of a project. Use :func:`execute` rather than this class directly."""

    def __init__(self, project: ProjectDocument, seed: int):
        self.targets = [_Target(t) for t in project.targets if isinstance(t, dict)]
        self.stage = next(t for t in self.targets if t.is_stage)
        self.sprites = [t for t in self.targets if not t.is_stage]
        self.rng_state = seed & MASK64
        self._draws: dict[tuple[str, int], int] = {}
        self.tick = 0
        self.threads: list[_Thread] = []
        self.pending: list[str] = []
        self.seen: set[str] = set()
        self.broadcast_log: list[tuple[int, str]] = []
        self.inert: list[str] = []
        self._inert_seen: set[str] = set()
        self._depth = 0
        self.current: _Thread | None = None

    # -- bookkeeping -----------------------------------------------------

    def _note_inert(self, opcode: Any) -> None:
        key = str(opcode)
        if key not in self._inert_seen:
            self._inert_seen.add(key)
            self.inert.append(key)

    def _random(self) -> int:
        """Draw keyed by (seed, sprite, script index, call count) so scripts do not share a stream."""
        th = self.current
        name = th.target.name if th is not None else ""
        script = th.target.script_index(th.hat_id) if th is not None else -1
        count = self._draws.get((name, script), 0)
        self._draws[(name, script)] = count + 1
        key = kernels.splitmix64(self.rng_state ^ _name_key(name))[1]
        key = kernels.splitmix64(key ^ (script & MASK64))[1]
        return kernels.splitmix64((key + count * GAMMA) & MASK64)[1]

    def state(self) -> VmState:
        sprites = {t.name: t.sprite_state() for t in self.sprites}
        variables: dict[str, Any] = {}
        for entry in self.stage.vars.values():
            variables[entry[0]] = entry[1]
        for t in self.sprites:
            for entry in t.vars.values():
                variables[f"{t.name}.{entry[0]}"] = entry[1]
        return VmState(
            tick=self.tick,
            sprites=sprites,
            variables=variables,
            pending_broadcasts=tuple(self.pending),
            rng_state=self.rng_state,
            broadcasts_seen=frozenset(self.seen),
        )

    # -- variables -------------------------------------------------------

    def _lookup_var(self, target: _Target, field_value: Any) -> list[Any] | None:
        name, vid = None, None
        if isinstance(field_value, list):
            name = field_value[0] if field_value else None
            vid = field_value[1] if len(field_value) > 1 else None
        elif isinstance(field_value, str):
            name = field_value
        for scope in (target, self.stage):
            if vid is not None and str(vid) in scope.vars:
                return scope.vars[str(vid)]
        for scope in (target, self.stage):
            for entry in scope.vars.values():
                if entry[0] == name:
                    return entry
        return None

    # -- inputs and reporters ----------------------------------------------

    def _field(self, block: dict[str, Any], name: str) -> Any:
        fields = block.get("fields")
        if isinstance(fields, dict):
            value = fields.get(name)
            if isinstance(value, list):
                return value[0] if value else None
            return value
        return None

    def _input(self, target: _Target, block: dict[str, Any], name: str, default: Any = "") -> Any:
        inputs = block.get("inputs")
        if not isinstance(inputs, dict) or name not in inputs:
            return default
        entry = inputs[name]
        if not isinstance(entry, list) or len(entry) < 2:
            return default
        value = entry[1]
        if isinstance(value, str):
            return self._report(target, value)
        if isinstance(value, list) and value:
            kind = value[0]
            if kind in (4, 5, 6, 7, 8, 9, 10):
                return value[1] if len(value) > 1 else default
            if kind == 11:
                return value[1] if len(value) > 1 else default
            if kind == 12:
                var = self._lookup_var(target, value[1:3])
                return var[1] if var else 0
            return default
        return default

    def _report(self, target: _Target, block_id: str) -> Any:
        block = target.blocks.get(block_id)
        if not isinstance(block, dict):
            self._note_inert("<missing reporter>")
            return ""
        self._depth += 1
        try:
            if self._depth > 200:
                self._note_inert("<reporter depth>")
                return ""
            op = block.get("opcode")
            fn = _REPORTERS.get(op)
            if fn is None:
                self._note_inert(op)
                return ""
            return fn(self, target, block)
        finally:
            self._depth -= 1

    def _num(self, target: _Target, block: dict[str, Any], name: str) -> float | int:
        return to_number(self._input(target, block, name, 0))

    # -- statements ------------------------------------------------------

    def _substack(self, target: _Target, block: dict[str, Any], name: str) -> str | None:
        inputs = block.get("inputs")
        if isinstance(inputs, dict):
            entry = inputs.get(name)
            if isinstance(entry, list) and len(entry) > 1 and isinstance(entry[1], str):
                return entry[1]
        return None

    def run_stack(self, target: _Target, block_id: str | None) -> Iterator[None]:
        visited = 0
        while block_id is not None:
            block = target.blocks.get(block_id)
            if not isinstance(block, dict):
                self._note_inert("<missing block>")
                return
            visited += 1
            if visited > 10_000:
                self._note_inert("<stack too long>")
                return
            op = block.get("opcode")
            fn = _STATEMENTS.get(op)
            if fn is None:
                self._note_inert(op)
            else:
                result = fn(self, target, block)
                if result is not None:
                    yield from result
            nxt = block.get("next")
            block_id = nxt if isinstance(nxt, str) else None

    def _start(self, target: _Target, hat_id: str, message: str | None = None) -> None:
        hat = target.blocks[hat_id]
        nxt = hat.get("next")
        gen = self.run_stack(target, nxt if isinstance(nxt, str) else None)
        for th in self.threads:
            if th.target is target and th.hat_id == hat_id and not th.done:
                th.gen = gen
                th.message = message
                return
        self.threads.append(_Thread(target, hat_id, gen, message))

    def _hats(self, opcode: str) -> list[tuple[_Target, str, dict[str, Any]]]:
        out = []
        for target in self.targets:
            for bid, block in target.blocks.items():
                if isinstance(block, dict) and block.get("opcode") == opcode and block.get("topLevel", True):
                    out.append((target, bid, block))
        return out

    def broadcast(self, message: str) -> None:
        key = message.lower()
        self.pending.append(message)
        self.seen.add(key)
        self.broadcast_log.append((self.tick, message))

    def receivers_running(self, message: str) -> bool:
        key = message.lower()
        if any(m.lower() == key for m in self.pending):
            return True
        return any(not th.done and th.message is not None and th.message.lower() == key for th in self.threads)

    def step(self) -> None:
        self.tick += 1
        if self.tick == 1:
            for target, bid, _ in self._hats("event_whenflagclicked"):
                self._start(target, bid)
        if self.pending:
            queued, self.pending = self.pending, []
            receivers = self._hats("event_whenbroadcastreceived")
            for message in queued:
                for target, bid, hat in receivers:
                    name = self._field(hat, "BROADCAST_OPTION")
                    if isinstance(name, str) and name.lower() == message.lower():
                        self._start(target, bid, message)
        for th in list(self.threads):
            if th.done:
                continue
            self.current = th
            try:
                next(th.gen)
            except StopIteration:
                th.done = True
            except _StopThread:
                th.done = True
            except _StopAll:
                for other in self.threads:
                    other.done = True
                self.pending.clear()
                break
            except RecursionError:
                self._note_inert("<recursion>")
                th.done = True
        self.threads = [th for th in self.threads if not th.done]


# -- statement handlers --------------------------------------------------------

Handler = Callable[[Interpreter, _Target, dict], Any]


def _move_to(target: _Target, x: float, y: float) -> None:
    target.x = _clamp(x, -STAGE_W, STAGE_W)
    target.y = _clamp(y, -STAGE_H, STAGE_H)


def _movesteps(vm: Interpreter, t: _Target, b: dict) -> None:
    steps = vm._num(t, b, "STEPS")
    rad = math.radians(90 - t.direction)
    _move_to(t, t.x + steps * math.cos(rad), t.y + steps * math.sin(rad))


def _gotoxy(vm: Interpreter, t: _Target, b: dict) -> None:
    _move_to(t, vm._num(t, b, "X"), vm._num(t, b, "Y"))


def _changexby(vm: Interpreter, t: _Target, b: dict) -> None:
    _move_to(t, t.x + vm._num(t, b, "DX"), t.y)


def _changeyby(vm: Interpreter, t: _Target, b: dict) -> None:
    _move_to(t, t.x, t.y + vm._num(t, b, "DY"))


def _setx(vm: Interpreter, t: _Target, b: dict) -> None:
    _move_to(t, vm._num(t, b, "X"), t.y)


def _sety(vm: Interpreter, t: _Target, b: dict) -> None:
    _move_to(t, t.x, vm._num(t, b, "Y"))


def _turnright(vm: Interpreter, t: _Target, b: dict) -> None:
    t.direction = wrap_direction(t.direction + vm._num(t, b, "DEGREES"))


def _turnleft(vm: Interpreter, t: _Target, b: dict) -> None:
    t.direction = wrap_direction(t.direction - vm._num(t, b, "DEGREES"))


def _pointindirection(vm: Interpreter, t: _Target, b: dict) -> None:
    t.direction = wrap_direction(vm._num(t, b, "DIRECTION"))


def _show(vm: Interpreter, t: _Target, b: dict) -> None:
    t.visible = True


def _hide(vm: Interpreter, t: _Target, b: dict) -> None:
    t.visible = False


def _nextcostume(vm: Interpreter, t: _Target, b: dict) -> None:
    t.costume = (t.costume + 1) % t.costume_count()


def _switchcostume(vm: Interpreter, t: _Target, b: dict) -> None:
    value = vm._input(t, b, "COSTUME", None)
    if value is None:
        return
    if isinstance(value, str):
        idx = t.costume_index_by_name(value)
        if idx is not None:
            t.costume = idx
            return
        if not _numeric_like(value):
            return
    n = int(math.floor(to_number(value) + 0.5))
    t.costume = (n - 1) % t.costume_count()


def _setvariable(vm: Interpreter, t: _Target, b: dict) -> None:
    var = vm._lookup_var(t, (b.get("fields") or {}).get("VARIABLE"))
    if var is None:
        vm._note_inert("<unknown variable>")
        return
    value = vm._input(t, b, "VALUE", "")
    if isinstance(value, float):
        value = normalize_number(value)
    var[1] = value


def _changevariable(vm: Interpreter, t: _Target, b: dict) -> None:
    var = vm._lookup_var(t, (b.get("fields") or {}).get("VARIABLE"))
    if var is None:
        vm._note_inert("<unknown variable>")
        return
    var[1] = normalize_number(to_number(var[1]) + vm._num(t, b, "VALUE"))


def _noop(vm: Interpreter, t: _Target, b: dict) -> None:
    return None


def _broadcast(vm: Interpreter, t: _Target, b: dict) -> None:
    vm.broadcast(to_text(vm._input(t, b, "BROADCAST_INPUT", "")))


def _broadcastandwait(vm: Interpreter, t: _Target, b: dict) -> Iterator[None]:
    message = to_text(vm._input(t, b, "BROADCAST_INPUT", ""))
    vm.broadcast(message)

    def waiter() -> Iterator[None]:
        yield
        while vm.receivers_running(message):
            yield

    return waiter()


def _wait(vm: Interpreter, t: _Target, b: dict) -> Iterator[None]:
    frames = max(1, int(math.floor(float(vm._num(t, b, "DURATION")) * FPS + 0.5)))

    def waiter() -> Iterator[None]:
        for _ in range(frames):
            yield

    return waiter()


def _condition(vm: Interpreter, t: _Target, b: dict) -> bool:
    return to_bool(vm._input(t, b, "CONDITION", False))


def _wait_until(vm: Interpreter, t: _Target, b: dict) -> Iterator[None]:
    def waiter() -> Iterator[None]:
        while not _condition(vm, t, b):
            yield

    return waiter()


def _repeat(vm: Interpreter, t: _Target, b: dict) -> Iterator[None]:
    times = int(math.floor(float(vm._num(t, b, "TIMES")) + 0.5))
    body = vm._substack(t, b, "SUBSTACK")

    def loop() -> Iterator[None]:
        for _ in range(max(times, 0)):
            yield from vm.run_stack(t, body)
            yield

    return loop()


def _forever(vm: Interpreter, t: _Target, b: dict) -> Iterator[None]:
    body = vm._substack(t, b, "SUBSTACK")

    def loop() -> Iterator[None]:
        while True:
            yield from vm.run_stack(t, body)
            yield

    return loop()


def _repeat_until(vm: Interpreter, t: _Target, b: dict) -> Iterator[None]:
    body = vm._substack(t, b, "SUBSTACK")

    def loop() -> Iterator[None]:
        while not _condition(vm, t, b):
            yield from vm.run_stack(t, body)
            yield

    return loop()


def _if(vm: Interpreter, t: _Target, b: dict) -> Iterator[None] | None:
    if _condition(vm, t, b):
        return vm.run_stack(t, vm._substack(t, b, "SUBSTACK"))
    return None


def _if_else(vm: Interpreter, t: _Target, b: dict) -> Iterator[None]:
    branch = "SUBSTACK" if _condition(vm, t, b) else "SUBSTACK2"
    return vm.run_stack(t, vm._substack(t, b, branch))


def _stop(vm: Interpreter, t: _Target, b: dict) -> None:
    option = vm._field(b, "STOP_OPTION")
    if option == "all":
        raise _StopAll()
    if option in ("other scripts in sprite", "other scripts in stage"):
        for th in vm.threads:
            if th.target is t and th is not vm.current:
                th.done = True
        return None
    raise _StopThread()


_STATEMENTS: dict[str, Handler] = {
    "motion_movesteps": _movesteps,
    "motion_gotoxy": _gotoxy,
    "motion_changexby": _changexby,
    "motion_changeyby": _changeyby,
    "motion_setx": _setx,
    "motion_sety": _sety,
    "motion_turnright": _turnright,
    "motion_turnleft": _turnleft,
    "motion_pointindirection": _pointindirection,
    "looks_show": _show,
    "looks_hide": _hide,
    "looks_nextcostume": _nextcostume,
    "looks_switchcostumeto": _switchcostume,
    "looks_say": _noop,
    "looks_think": _noop,
    "data_setvariableto": _setvariable,
    "data_changevariableby": _changevariable,
    "data_showvariable": _noop,
    "data_hidevariable": _noop,
    "event_broadcast": _broadcast,
    "event_broadcastandwait": _broadcastandwait,
    "control_wait": _wait,
    "control_wait_until": _wait_until,
    "control_repeat": _repeat,
    "control_forever": _forever,
    "control_repeat_until": _repeat_until,
    "control_if": _if,
    "control_if_else": _if_else,
    "control_stop": _stop,
}


# -- reporters ---------------------------------------------------------------


def _arith(op: Callable[[float, float], float]) -> Handler:
    def report(vm: Interpreter, t: _Target, b: dict) -> Any:
        try:
            result = op(vm._num(t, b, "NUM1"), vm._num(t, b, "NUM2"))
        except ZeroDivisionError:
            return 0
        if isinstance(result, float) and math.isnan(result):
            return 0
        return normalize_number(result)

    return report


def _divide(a: float, b: float) -> float:
    if b == 0:
        if a == 0:
            return 0
        return math.inf if a > 0 else -math.inf
    return a / b


def _mod(a: float, b: float) -> float:
    if b == 0:
        return 0
    return a - b * math.floor(a / b)


def _random_report(vm: Interpreter, t: _Target, b: dict) -> Any:
    lo_raw = vm._input(t, b, "FROM", 1)
    hi_raw = vm._input(t, b, "TO", 10)
    lo, hi = to_number(lo_raw), to_number(hi_raw)
    if lo > hi:
        lo, hi = hi, lo
    draw = vm._random()
    integral = float(lo).is_integer() and float(hi).is_integer() and not (
        ("." in to_text(lo_raw)) or ("." in to_text(hi_raw))
    )
    if integral:
        span = int(hi) - int(lo) + 1
        return int(lo) + draw % span
    return normalize_number(lo + (draw >> 11) * (1.0 / (1 << 53)) * (hi - lo))


def _cmp(pred: Callable[[int], bool]) -> Handler:
    def report(vm: Interpreter, t: _Target, b: dict) -> bool:
        return pred(compare_values(vm._input(t, b, "OPERAND1", ""), vm._input(t, b, "OPERAND2", "")))

    return report


def _and(vm: Interpreter, t: _Target, b: dict) -> bool:
    return to_bool(vm._input(t, b, "OPERAND1", False)) and to_bool(vm._input(t, b, "OPERAND2", False))


def _or(vm: Interpreter, t: _Target, b: dict) -> bool:
    return to_bool(vm._input(t, b, "OPERAND1", False)) or to_bool(vm._input(t, b, "OPERAND2", False))


def _not(vm: Interpreter, t: _Target, b: dict) -> bool:
    return not to_bool(vm._input(t, b, "OPERAND", False))


def _join(vm: Interpreter, t: _Target, b: dict) -> str:
    return to_text(vm._input(t, b, "STRING1", "")) + to_text(vm._input(t, b, "STRING2", ""))


def _round(vm: Interpreter, t: _Target, b: dict) -> int:
    return int(math.floor(float(vm._num(t, b, "NUM")) + 0.5))


def _variable_report(vm: Interpreter, t: _Target, b: dict) -> Any:
    var = vm._lookup_var(t, (b.get("fields") or {}).get("VARIABLE"))
    return var[1] if var else 0


def _menu(field_name: str) -> Handler:
    def report(vm: Interpreter, t: _Target, b: dict) -> Any:
        value = vm._field(b, field_name)
        return "" if value is None else value

    return report


def _costume_number_name(vm: Interpreter, t: _Target, b: dict) -> Any:
    if vm._field(b, "NUMBER_NAME") == "name":
        costume = t.costumes[t.costume] if t.costume < len(t.costumes) else None
        return costume.get("name", "") if isinstance(costume, dict) else ""
    return t.costume + 1


_REPORTERS: dict[str, Handler] = {
    "operator_add": _arith(lambda a, b: a + b),
    "operator_subtract": _arith(lambda a, b: a - b),
    "operator_multiply": _arith(lambda a, b: a * b),
    "operator_divide": _arith(_divide),
    "operator_mod": _arith(_mod),
    "operator_random": _random_report,
    "operator_gt": _cmp(lambda c: c > 0),
    "operator_lt": _cmp(lambda c: c < 0),
    "operator_equals": _cmp(lambda c: c == 0),
    "operator_and": _and,
    "operator_or": _or,
    "operator_not": _not,
    "operator_join": _join,
    "operator_round": _round,
    "data_variable": _variable_report,
    "motion_xposition": lambda vm, t, b: t.x,
    "motion_yposition": lambda vm, t, b: t.y,
    "motion_direction": lambda vm, t, b: t.direction,
    "looks_costume": _menu("COSTUME"),
    "looks_costumenumbername": _costume_number_name,
    "event_broadcast_menu": _menu("BROADCAST_OPTION"),
    "sensing_timer": lambda vm, t, b: normalize_number(round(vm.tick / FPS, 6)),
}


def supported_opcodes() -> frozenset[str]:
    hats = {"event_whenflagclicked", "event_whenbroadcastreceived"}
    return frozenset(_STATEMENTS) | frozenset(_REPORTERS) | hats


def execute(project: ProjectDocument, ticks: int, seed: int, snapshot_ticks: tuple[int, ...] = ()) -> ExecutionTrace:
    """Run ``project`` for ``ticks`` frames; fully determined by ``(project, ticks, seed)``."""
    from .snapshot import capture_snapshot

    vm = Interpreter(project, seed)
    wanted = set(snapshot_ticks)
    states = [vm.state()]
    snapshots = {}
    if 0 in wanted:
        snapshots[0] = capture_snapshot(states[0])
    for _ in range(ticks):
        vm.step()
        state = vm.state()
        states.append(state)
        if vm.tick in wanted:
            snapshots[vm.tick] = capture_snapshot(state)
    return ExecutionTrace(
        seed=seed,
        states=states,
        snapshots=snapshots,
        inert_opcodes=list(vm.inert),
        broadcast_log=list(vm.broadcast_log),
    )
