"""Synthetic repair cases, scripted model fixtures and archive fixtures.

Each case pairs a gold project with a buggy variant that differs only in leaf
values, so the exact repair is a short list of ``replace`` operations computed
by :func:`leaf_diff`. Cases are split between probe signals that escalate
(early divergence, broad mismatch, rerun instability) and ones that do not.
"""
from __future__ import annotations

import json
import random as _random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from .builder import (
    Sprite,
    add,
    broadcast,
    broadcast_wait,
    change_var,
    change_x,
    change_y,
    forever,
    gt,
    random,
    repeat,
    repeat_until,
    set_var,
    switch_costume,
    var,
    wait,
    when_broadcast,
    when_flag,
    x_position,
    build_project,
)
from .pointer import JsonPointer
from .project import build_archive

BEHAVIORS = ("fix", "fix_fenced", "prose", "bloated", "oversized", "bad_path", "noop", "wrong", "request")


@dataclass
class CaseSpec:
    case_id: str
    description: str
    gold: dict[str, Any]
    buggy: dict[str, Any]
    checks: list[dict[str, Any]]
    escalates: bool
    hints: list[str] = field(default_factory=list)
    # a patch that applies cleanly but leaves the bug in place
    wrong_patch: list[dict[str, Any]] = field(default_factory=list)

    @property
    def fix(self) -> list[dict[str, Any]]:
        return leaf_diff(self.buggy, self.gold)


def leaf_diff(a: Any, b: Any, path: tuple[str, ...] = ()) -> list[dict[str, Any]]:
    """``replace`` ops turning ``a`` into ``b`` for structurally parallel trees."""
    if isinstance(a, dict) and isinstance(b, dict) and a.keys() == b.keys():
        return [op for k in a for op in leaf_diff(a[k], b[k], path + (k,))]
    if isinstance(a, list) and isinstance(b, list) and len(a) == len(b):
        return [op for i, (x, y) in enumerate(zip(a, b)) for op in leaf_diff(x, y, path + (str(i),))]
    if a == b and type(a) is type(b):
        return []
    return [{"op": "replace", "path": str(JsonPointer(path)), "value": b}]


def _at(tick: int, pred: dict[str, Any], cid: str) -> dict[str, Any]:
    return {"id": cid, "at": {"tick": tick}, "predicate": pred}


def _final(pred: dict[str, Any], cid: str) -> dict[str, Any]:
    return {"id": cid, "at": "final", "predicate": pred}


def _var_eq(name: str, value: Any) -> dict[str, Any]:
    return {"type": "variable_equals", "variable": name, "value": value}


def _box(sprite: str, x0: float, x1: float, y0: float = -180, y1: float = 180) -> dict[str, Any]:
    return {"type": "sprite_in_box", "sprite": sprite, "x_min": x0, "x_max": x1, "y_min": y0, "y_max": y1}


def _wrong_sign() -> CaseSpec:
    def make(dx: int) -> dict[str, Any]:
        return build_project([Sprite("Cat", scripts=[when_flag(repeat(5, change_x(dx)))])])

    return CaseSpec(
        "c01_wrong_sign",
        "The cat should walk 50 steps to the right when the flag is clicked.",
        make(10),
        make(-10),
        [_at(3, _box("Cat", 25, 35), "walks_right"), _final(_box("Cat", 45, 55), "ends_at_50")],
        escalates=True,
        hints=["Cat: repeat loop under the green flag"],
    )


def _late_score() -> CaseSpec:
    def make(score: int) -> dict[str, Any]:
        return build_project(
            [Sprite("Judge", scripts=[when_flag(set_var("score", 0), wait(1), set_var("score", score))])],
            variables={"score": 0},
        )

    return CaseSpec(
        "c02_late_score",
        "After one second the judge should award a score of 5.",
        make(5),
        make(4),
        [_at(40, _var_eq("score", 5), "score_awarded"), _at(90, _var_eq("score", 5), "score_kept")],
        escalates=False,
        hints=["Judge: set score after the wait"],
    )


def _wrong_message() -> CaseSpec:
    def make(msg: str) -> dict[str, Any]:
        sender = Sprite("Button", scripts=[when_flag(wait(1.5), broadcast(msg))], x=-100)
        mover = Sprite("Ball", scripts=[when_broadcast("go", repeat(4, change_x(10)))])
        return build_project([sender, mover], broadcasts=["go", "halt"])

    return CaseSpec(
        "c03_wrong_message",
        "The button should tell the ball to go after one and a half seconds.",
        make("go"),
        make("halt"),
        [
            _at(70, {"type": "broadcast_seen", "message": "go"}, "go_sent"),
            _at(100, _box("Ball", 35, 45), "ball_moved"),
        ],
        escalates=False,
    )


def _random_coins() -> CaseSpec:
    names = ["coin1", "coin2", "coin3", "coin4"]

    def make(hi: int) -> dict[str, Any]:
        body = [set_var(n, random(0, hi)) for n in names]
        return build_project([Sprite("Dealer", scripts=[when_flag(*body)])], variables={n: 0 for n in names})

    return CaseSpec(
        "c04_random_coins",
        "The dealer should reset every coin to heads (0); instead the coins are flipped at random.",
        make(0),
        make(1),
        [_final(_var_eq(n, 0), f"{n}_heads") for n in names],
        escalates=True,
    )


def _wrong_costume() -> CaseSpec:
    def make(name: str) -> dict[str, Any]:
        s = Sprite("Hero", scripts=[when_flag(switch_costume(name))], costumes=["idle", "happy", "sad"])
        return build_project([s])

    return CaseSpec(
        "c05_wrong_costume",
        "The hero should look happy from the start.",
        make("happy"),
        make("sad"),
        [_final({"type": "costume_is", "sprite": "Hero", "costume": "happy"}, "looks_happy")],
        escalates=True,
        hints=["Hero: costume switch under the green flag"],
    )


def _late_loop_count() -> CaseSpec:
    def make(times: int) -> dict[str, Any]:
        return build_project([Sprite("Bird", scripts=[when_flag(wait(2), repeat(times, change_y(5)))])])

    return CaseSpec(
        "c06_loop_count",
        "After two seconds the bird should rise 50 pixels.",
        make(10),
        make(12),
        [_at(100, _box("Bird", -1, 1, 49, 51), "rises_50")],
        escalates=False,
    )


def _broad_drift() -> CaseSpec:
    def make(speed: int) -> dict[str, Any]:
        fleet = [
            Sprite(name, scripts=[when_flag(forever(change_x(var("speed")), change_y(var("speed"))))], y=y)
            for name, y in (("Ship1", -60), ("Ship2", 0), ("Ship3", 60))
        ]
        fleet[0].scripts.insert(0, when_flag(set_var("speed", speed)))
        return build_project(fleet, variables={"speed": 0})

    gold = make(3)
    return CaseSpec(
        "c07_broad_drift",
        "The whole fleet should drift up and to the right at 3 pixels per frame.",
        gold,
        make(-3),
        [_at(20, _box("Ship2", 50, 70), "fleet_right"), _at(100, _box("Ship3", 230, 240), "fleet_at_edge")],
        escalates=True,
    )


def _late_increment() -> CaseSpec:
    def make(step: int) -> dict[str, Any]:
        script = when_flag(set_var("score", 0), wait(1), repeat(3, change_var("score", step)))
        return build_project([Sprite("Counter", scripts=[script])], variables={"score": 0})

    return CaseSpec(
        "c08_late_increment",
        "One second in, the counter should add 2 points three times.",
        make(2),
        make(3),
        [_at(80, _var_eq("score", 6), "score_six")],
        escalates=False,
    )


def _stop_condition() -> CaseSpec:
    def make(limit: int) -> dict[str, Any]:
        script = when_flag(repeat_until(gt(x_position(), limit), change_x(5)))
        return build_project([Sprite("Car", scripts=[script])])

    return CaseSpec(
        "c09_stop_condition",
        "The car should keep driving until it has passed x = 100.",
        make(100),
        make(60),
        [_at(40, _box("Car", 104, 106), "stops_after_100"), _at(90, _box("Car", 104, 106), "stays_put")],
        escalates=False,
    )


def _broadcast_and_wait() -> CaseSpec:
    def make(done: int) -> dict[str, Any]:
        boss = Sprite("Boss", scripts=[when_flag(set_var("done", 0), wait(1), broadcast_wait("step"), set_var("done", done))])
        worker = Sprite("Worker", scripts=[when_broadcast("step", repeat(4, change_x(add(5, 5))))])
        return build_project([boss, worker], variables={"done": 0}, broadcasts=["step"])

    return CaseSpec(
        "c10_broadcast_wait",
        "The boss should mark the job done (1) once the worker has finished its four steps.",
        make(1),
        make(2),
        [_at(60, _var_eq("done", 1), "done_flag"), _at(60, _box("Worker", 39, 41), "worker_moved")],
        escalates=False,
    )


CASE_BUILDERS: tuple[Callable[[], CaseSpec], ...] = (
    _wrong_sign,
    _late_score,
    _wrong_message,
    _random_coins,
    _wrong_costume,
    _late_loop_count,
    _broad_drift,
    _late_increment,
    _stop_condition,
    _broadcast_and_wait,
)


def case_specs() -> list[CaseSpec]:
    specs = [build() for build in CASE_BUILDERS]
    for spec in specs:
        # rewriting the stage layer order applies cleanly but repairs nothing
        spec.wrong_patch = [{"op": "replace", "path": "/targets/0/layerOrder", "value": 0}]
    return specs


# -- scripted responses ------------------------------------------------------------


def response_text(behavior: str, spec: CaseSpec) -> dict[str, Any]:
    """Fixture entry body (without its key) that makes an attempt behave as named."""
    fix = spec.fix
    pad = [{"op": "test", "path": "/targets/0/isStage", "value": True}]
    if behavior == "fix":
        return {"response_text": json.dumps(fix)}
    if behavior == "fix_fenced":
        return {"response_text": "Here is the repair:\n```json\n" + json.dumps({"ops": fix}, indent=1) + "\n```\n"}
    if behavior == "prose":
        return {"response_text": "The loop direction looks wrong; flip the sign of the step."}
    if behavior == "bloated":
        # 5 ops: over the smallest text budget (3), within every larger one
        return {"response_text": json.dumps(pad * (5 - len(fix)) + fix)}
    if behavior == "oversized":
        return {"response_text": json.dumps(pad * 13 + fix)}
    if behavior == "bad_path":
        return {"response_text": json.dumps([{"op": "replace", "path": "/targets/9/blocks/x", "value": 1}])}
    if behavior == "noop":
        return {"response_text": json.dumps(pad)}
    if behavior == "wrong":
        return {"response_text": json.dumps(spec.wrong_patch)}
    if behavior == "request":
        return {"request_failure": "scripted transport error", "status": 503}
    raise ValueError(f"unknown behavior {behavior!r}")


def build_fixture(specs: list[CaseSpec], plan: Mapping[str, list[str]]) -> list[dict[str, Any]]:
    """Scripted fixture from per-case behavior sequences (one entry per attempt).

    The last behavior repeats for any later attempt.
    """
    by_id = {s.case_id: s for s in specs}
    entries = []
    for case_id, behaviors in plan.items():
        spec = by_id[case_id]
        for attempt, behavior in enumerate(behaviors):
            entries.append({"case_id": case_id, "attempt": attempt, **response_text(behavior, spec)})
        entries.append({"case_id": case_id, "attempt": "*", **response_text(behaviors[-1], spec)})
    return entries


# two scripted "models" with different failure habits
MODEL_BEHAVIORS: dict[str, dict[str, list[str]]] = {
    "scripted-alpha": {
        "c01_wrong_sign": ["bloated", "fix"],
        "c02_late_score": ["fix"],
        "c03_wrong_message": ["prose", "fix_fenced"],
        "c04_random_coins": ["fix"],
        "c05_wrong_costume": ["bad_path", "noop", "fix"],
        "c06_loop_count": ["noop", "wrong", "noop"],
        "c07_broad_drift": ["fix_fenced"],
        "c08_late_increment": ["request", "fix"],
        "c09_stop_condition": ["prose"],
        "c10_broadcast_wait": ["wrong", "fix"],
    },
    "scripted-beta": {
        "c01_wrong_sign": ["noop", "fix"],
        "c02_late_score": ["bloated", "fix"],
        "c03_wrong_message": ["fix"],
        "c04_random_coins": ["prose", "bloated"],
        "c05_wrong_costume": ["fix"],
        "c06_loop_count": ["bad_path"],
        "c07_broad_drift": ["oversized", "fix"],
        "c08_late_increment": ["fix_fenced"],
        "c09_stop_condition": ["noop", "fix"],
        "c10_broadcast_wait": ["request"],
    },
}

PRICING = {
    "scripted-alpha": {"usd_per_1M_input_tokens": "0.15", "usd_per_1M_output_tokens": "0.60", "usd_per_image": "0.0002"},
    "scripted-beta": {"usd_per_1M_input_tokens": "0.10", "usd_per_1M_output_tokens": "0.40", "usd_per_image": "0.0001"},
}
STYLES = {"scripted-alpha": "responses_style", "scripted-beta": "chat_style"}


def write_case(spec: CaseSpec, directory: Path) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "gold.sb3").write_bytes(build_archive(spec.gold))
    (directory / "buggy.sb3").write_bytes(build_archive(spec.buggy))
    (directory / "suite.json").write_text(json.dumps({"checks": spec.checks}, indent=2))
    meta = {"description": spec.description, "localization_hints": spec.hints}
    (directory / "meta.json").write_text(json.dumps(meta, indent=2))
    return directory


def write_corpus(root: str | Path, behaviors: Mapping[str, Mapping[str, list[str]]] | None = None) -> Path:
    """Write cases/, fixtures/, pricing.json and matrix.json under ``root``; returns matrix.json."""
    root = Path(root)
    specs = case_specs()
    for spec in specs:
        write_case(spec, root / "cases" / spec.case_id)
    behaviors = behaviors or MODEL_BEHAVIORS
    endpoints = []
    for model_id, plan in behaviors.items():
        path = root / "fixtures" / f"{model_id}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps({"responses": build_fixture(specs, plan)}, indent=1))
        endpoints.append(
            {
                "model_id": model_id,
                "request_style": STYLES.get(model_id, "responses_style"),
                "transport": {"kind": "scripted", "fixture_path": f"fixtures/{model_id}.json"},
            }
        )
    (root / "pricing.json").write_text(json.dumps({m: PRICING[m] for m in behaviors if m in PRICING}, indent=2))
    matrix = {
        "endpoints": endpoints,
        "modes": ["text_only", "always_on", "fixed", "heuristic"],
        "cases_dir": "cases",
        "pricing_file": "pricing.json",
        "seed": 0,
        "output_dir": "out",
        "parallelism": 4,
        "energy": {"method": "stub", "power_w": 10.0},
    }
    path = root / "matrix.json"
    path.write_text(json.dumps(matrix, indent=2))
    return path


# -- archive fixtures ---------------------------------------------------------------


def archive_fixtures(count: int = 20, seed: int = 0) -> list[bytes]:
    """``count`` archives with a mix of svg, png and wav assets of varied sizes."""
    rng = _random.Random(seed)
    specs = case_specs()
    out = []
    for i in range(count):
        project = specs[i % len(specs)].gold
        assets: dict[str, bytes] = {}
        for j in range(rng.randint(1, 5)):
            kind = rng.choice(["svg", "png", "wav"])
            size = rng.choice([0, 1, 17, 512, 4096, 70_000])
            data = bytes(rng.getrandbits(8) for _ in range(size))
            if kind == "svg":
                data = b"<svg xmlns='http://www.w3.org/2000/svg'>" + data.hex().encode()[: size] + b"</svg>"
            assets[f"{i:02d}{j:02d}{rng.getrandbits(32):08x}.{kind}"] = data
        out.append(build_archive(project, assets))
    return out
