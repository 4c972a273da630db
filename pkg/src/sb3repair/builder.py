"""Compact constructors for project.json trees in the supported block subset.

Used by the synthetic case corpus and by tests::

    sprite = Sprite("Cat", scripts=[when_flag(repeat(5, change_x(10)))])
    project = build_project([sprite], variables={"score": 0})
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass
class Block:
    opcode: str
    inputs: dict[str, Any] = field(default_factory=dict)
    fields: dict[str, Any] = field(default_factory=dict)
    substacks: dict[str, list["Block"]] = field(default_factory=dict)


@dataclass
class Sprite:
    name: str
    scripts: list[list[Block]] = field(default_factory=list)
    x: float = 0
    y: float = 0
    direction: float = 90
    costumes: list[str] = field(default_factory=lambda: ["costume1"])
    current_costume: int = 0
    visible: bool = True
    variables: dict[str, Any] = field(default_factory=dict)


# -- statements -----------------------------------------------------------------


def when_flag(*body: Block) -> list[Block]:
    return [Block("event_whenflagclicked"), *body]


def when_broadcast(message: str, *body: Block) -> list[Block]:
    return [Block("event_whenbroadcastreceived", fields={"BROADCAST_OPTION": [message, f"bc_{message}"]}), *body]


def change_x(dx: Any) -> Block:
    return Block("motion_changexby", {"DX": dx})


def change_y(dy: Any) -> Block:
    return Block("motion_changeyby", {"DY": dy})


def set_x(x: Any) -> Block:
    return Block("motion_setx", {"X": x})


def set_y(y: Any) -> Block:
    return Block("motion_sety", {"Y": y})


def goto(x: Any, y: Any) -> Block:
    return Block("motion_gotoxy", {"X": x, "Y": y})


def move(steps: Any) -> Block:
    return Block("motion_movesteps", {"STEPS": steps})


def turn_right(deg: Any) -> Block:
    return Block("motion_turnright", {"DEGREES": deg})


def point(direction: Any) -> Block:
    return Block("motion_pointindirection", {"DIRECTION": direction})


def show() -> Block:
    return Block("looks_show")


def hide() -> Block:
    return Block("looks_hide")


def next_costume() -> Block:
    return Block("looks_nextcostume")


def switch_costume(name: str) -> Block:
    return Block("looks_switchcostumeto", {"COSTUME": Block("looks_costume", fields={"COSTUME": [name, None]})})


def set_var(name: str, value: Any) -> Block:
    return Block("data_setvariableto", {"VALUE": value}, {"VARIABLE": [name, f"var_{name}"]})


def change_var(name: str, value: Any) -> Block:
    return Block("data_changevariableby", {"VALUE": value}, {"VARIABLE": [name, f"var_{name}"]})


def broadcast(message: str) -> Block:
    return Block("event_broadcast", {"BROADCAST_INPUT": ("broadcast", message)})


def broadcast_wait(message: str) -> Block:
    return Block("event_broadcastandwait", {"BROADCAST_INPUT": ("broadcast", message)})


def wait(seconds: Any) -> Block:
    return Block("control_wait", {"DURATION": seconds})


def wait_until(cond: Block) -> Block:
    return Block("control_wait_until", {"CONDITION": cond})


def repeat(times: Any, *body: Block) -> Block:
    return Block("control_repeat", {"TIMES": times}, substacks={"SUBSTACK": list(body)})


def forever(*body: Block) -> Block:
    return Block("control_forever", substacks={"SUBSTACK": list(body)})


def repeat_until(cond: Block, *body: Block) -> Block:
    return Block("control_repeat_until", {"CONDITION": cond}, substacks={"SUBSTACK": list(body)})


def if_(cond: Block, *body: Block) -> Block:
    return Block("control_if", {"CONDITION": cond}, substacks={"SUBSTACK": list(body)})


def if_else(cond: Block, then: list[Block], otherwise: list[Block]) -> Block:
    return Block("control_if_else", {"CONDITION": cond}, substacks={"SUBSTACK": then, "SUBSTACK2": otherwise})


def stop(option: str = "this script") -> Block:
    return Block("control_stop", fields={"STOP_OPTION": [option, None]})


def raw(opcode: str, **inputs: Any) -> Block:
    return Block(opcode, dict(inputs))


# -- reporters ------------------------------------------------------------------


def var(name: str) -> tuple[str, str]:
    return ("var", name)


def random(lo: Any, hi: Any) -> Block:
    return Block("operator_random", {"FROM": lo, "TO": hi})


def _binop(opcode: str, a_key: str, b_key: str):
    def make(a: Any, b: Any) -> Block:
        return Block(opcode, {a_key: a, b_key: b})

    return make


add = _binop("operator_add", "NUM1", "NUM2")
sub = _binop("operator_subtract", "NUM1", "NUM2")
mul = _binop("operator_multiply", "NUM1", "NUM2")
eq = _binop("operator_equals", "OPERAND1", "OPERAND2")
gt = _binop("operator_gt", "OPERAND1", "OPERAND2")
lt = _binop("operator_lt", "OPERAND1", "OPERAND2")


def x_position() -> Block:
    return Block("motion_xposition")


# -- compilation ----------------------------------------------------------------


class _Compiler:
    def __init__(self, prefix: str):
        self.prefix = prefix
        self.blocks: dict[str, Any] = {}
        self.counter = 0

    def _new_id(self) -> str:
        self.counter += 1
        return f"{self.prefix}{self.counter}"

    def _input(self, value: Any, parent: str, name: str) -> list[Any]:
        if isinstance(value, Block):
            bid = self._block(value, parent)
            if value.opcode in ("looks_costume",):
                self.blocks[bid]["shadow"] = True
                return [1, bid]
            return [3, bid, [10, ""]]
        if isinstance(value, tuple) and value[0] == "var":
            return [3, [12, value[1], f"var_{value[1]}"], [10, ""]]
        if isinstance(value, tuple) and value[0] == "broadcast":
            return [1, [11, value[1], f"bc_{value[1]}"]]
        if isinstance(value, bool):
            return [1, [10, "true" if value else "false"]]
        if isinstance(value, (int, float)):
            return [1, [4, str(value)]]
        return [1, [10, str(value)]]

    def _block(self, block: Block, parent: str | None, top: bool = False) -> str:
        bid = self._new_id()
        entry: dict[str, Any] = {
            "opcode": block.opcode,
            "next": None,
            "parent": parent,
            "inputs": {},
            "fields": dict(block.fields),
            "shadow": False,
            "topLevel": top,
        }
        if top:
            entry["x"] = 0
            entry["y"] = 0
        self.blocks[bid] = entry
        for name, value in block.inputs.items():
            entry["inputs"][name] = self._input(value, bid, name)
        for name, body in block.substacks.items():
            if body:
                entry["inputs"][name] = [2, self.stack(body, bid)]
        return bid

    def stack(self, blocks: list[Block], parent: str | None, top: bool = False) -> str:
        ids = []
        prev = parent
        for i, block in enumerate(blocks):
            bid = self._block(block, prev, top=top and i == 0)
            if ids:
                self.blocks[ids[-1]]["next"] = bid
            ids.append(bid)
            prev = bid
        return ids[0]


def _costume(name: str) -> dict[str, Any]:
    return {"name": name, "assetId": f"{name}-asset", "md5ext": f"{name}-asset.svg", "dataFormat": "svg"}


def _variables(values: dict[str, Any]) -> dict[str, list[Any]]:
    return {f"var_{name}": [name, value] for name, value in values.items()}


def build_project(
    sprites: list[Sprite],
    variables: dict[str, Any] | None = None,
    broadcasts: list[str] | None = None,
    stage_scripts: list[list[Block]] | None = None,
) -> dict[str, Any]:
    """project.json tree with a stage (global variables) and the given sprites."""
    messages = list(broadcasts or [])
    stage_comp = _Compiler("stage_")
    for script in stage_scripts or []:
        stage_comp.stack(script, None, top=True)
    targets = [
        {
            "isStage": True,
            "name": "Stage",
            "variables": _variables(variables or {}),
            "lists": {},
            "broadcasts": {f"bc_{m}": m for m in messages},
            "blocks": stage_comp.blocks,
            "currentCostume": 0,
            "costumes": [_costume("backdrop1")],
            "sounds": [],
            "layerOrder": 0,
        }
    ]
    for layer, sprite in enumerate(sprites, start=1):
        comp = _Compiler(f"{sprite.name}_")
        for script in sprite.scripts:
            comp.stack(script, None, top=True)
        targets.append(
            {
                "isStage": False,
                "name": sprite.name,
                "variables": _variables(sprite.variables),
                "lists": {},
                "broadcasts": {},
                "blocks": comp.blocks,
                "currentCostume": sprite.current_costume,
                "costumes": [_costume(c) for c in sprite.costumes],
                "sounds": [],
                "layerOrder": layer,
                "visible": sprite.visible,
                "x": sprite.x,
                "y": sprite.y,
                "size": 100,
                "direction": sprite.direction,
                "draggable": False,
                "rotationStyle": "all around",
            }
        )
    return {
        "targets": targets,
        "monitors": [],
        "extensions": [],
        "meta": {"semver": "3.0.0", "vm": "0.2.0", "agent": "sb3repair"},
    }
