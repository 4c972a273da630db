from __future__ import annotations

from hypothesis import given, settings
from hypothesis import strategies as st

from sb3repair.builder import (
    Sprite,
    add,
    broadcast,
    broadcast_wait,
    build_project,
    change_var,
    change_x,
    change_y,
    eq,
    forever,
    goto,
    gt,
    hide,
    if_,
    if_else,
    lt,
    move,
    mul,
    next_costume,
    point,
    random,
    raw,
    repeat,
    repeat_until,
    set_var,
    stop,
    sub,
    switch_costume,
    turn_right,
    var,
    wait,
    wait_until,
    when_broadcast,
    when_flag,
    x_position,
)
from sb3repair.project import ProjectDocument
from sb3repair.vm import execute
from sb3repair.vm.interpreter import compare_values, supported_opcodes, to_number, wrap_direction


def run(sprites, ticks=20, seed=0, variables=None, broadcasts=None, stage_scripts=None):
    project = ProjectDocument(build_project(sprites, variables=variables, broadcasts=broadcasts, stage_scripts=stage_scripts))
    return execute(project, ticks, seed)


def xs(trace, name="S"):
    return [s.sprites[name].x for s in trace.states]


def values(trace, var_name):
    # set-variable stores literals as text, like the editor does
    return [to_number(s.variables[var_name]) for s in trace.states]


def test_inert_program_keeps_initial_state():
    trace = run([Sprite("S", x=5, y=-3)], ticks=10)
    assert len(trace.states) == 11
    assert all(s.sprites == trace.states[0].sprites for s in trace.states)
    assert [s.tick for s in trace.states] == list(range(11))


def test_repeat_yields_once_per_iteration():
    trace = run([Sprite("S", scripts=[when_flag(repeat(5, change_x(10)))])], ticks=8)
    assert xs(trace) == [0, 10, 20, 30, 40, 50, 50, 50, 50]


def test_straight_line_code_runs_in_one_frame():
    trace = run([Sprite("S", scripts=[when_flag(change_x(1), change_x(2), change_y(3))])], ticks=2)
    assert xs(trace) == [0, 3, 3]
    assert trace.states[1].sprites["S"].y == 3


def test_wait_frames():
    # 0.1 s = 3 frames: set in frame 1, wait covers frames 1-3, continues in frame 4
    trace = run([Sprite("S", scripts=[when_flag(wait(0.1), set_var("v", 1))])], variables={"v": 0}, ticks=6)
    assert values(trace, "v") == [0, 0, 0, 0, 1, 1, 1]
    # very short waits still take one frame
    trace = run([Sprite("S", scripts=[when_flag(wait(0), set_var("v", 1))])], variables={"v": 0}, ticks=3)
    assert values(trace, "v") == [0, 0, 1, 1]


def test_broadcast_starts_receivers_next_frame():
    sender = Sprite("A", scripts=[when_flag(broadcast("go"))])
    receiver = Sprite("B", scripts=[when_broadcast("go", change_x(5))])
    trace = run([sender, receiver], ticks=3, broadcasts=["go"])
    assert xs(trace, "B") == [0, 0, 5, 5]
    assert "go" in trace.states[1].broadcasts_seen
    assert trace.broadcast_log == [(1, "go")]


def test_running_receiver_restarts():
    sender = Sprite("A", scripts=[when_flag(broadcast("go"), wait(0.1), broadcast("go"))])
    receiver = Sprite("B", scripts=[when_broadcast("go", repeat(10, change_x(1)))])
    trace = run([sender, receiver], ticks=20, broadcasts=["go"])
    # first run covers frames 2-4 (x=3); the rebroadcast in frame 4 restarts it for 10 more steps
    assert trace.broadcast_log == [(1, "go"), (4, "go")]
    assert xs(trace, "B")[4] == 3
    assert trace.final.sprites["B"].x == 13


def test_broadcast_and_wait_blocks_until_receivers_finish():
    boss = Sprite("Boss", scripts=[when_flag(broadcast_wait("step"), set_var("done", 1))])
    worker = Sprite("W", scripts=[when_broadcast("step", repeat(3, change_x(1)))])
    trace = run([boss, worker], ticks=10, variables={"done": 0}, broadcasts=["step"])
    done_at = values(trace, "done").index(1)
    finished_at = xs(trace, "W").index(3)
    assert done_at > finished_at


def test_clamping_and_rounding():
    trace = run([Sprite("S", scripts=[when_flag(goto(1000, -1000))])], ticks=1)
    assert (trace.final.sprites["S"].x, trace.final.sprites["S"].y) == (240, -180)
    trace = run([Sprite("S", scripts=[when_flag(point(45), move(10))])], ticks=1)
    s = trace.final.sprites["S"]
    assert abs(s.x - 7.07106781) < 1e-8 and abs(s.y - 7.07106781) < 1e-8


def test_direction_wraps():
    assert wrap_direction(270) == -90
    assert wrap_direction(-180) == 180
    trace = run([Sprite("S", scripts=[when_flag(turn_right(200))])], ticks=1)
    assert trace.final.sprites["S"].direction == -70


def test_costumes_and_visibility():
    s = Sprite("S", scripts=[when_flag(switch_costume("c"), next_costume(), hide())], costumes=["a", "b", "c"])
    trace = run([s], ticks=1)
    assert trace.final.sprites["S"].costume_index == 0  # c -> wraps to a
    assert trace.final.sprites["S"].visible is False


def test_conditionals_and_operators():
    script = when_flag(
        set_var("a", add(2, mul(3, 4))),
        if_else(gt(var("a"), 10), [set_var("b", "big")], [set_var("b", "small")]),
        if_(eq(var("b"), "BIG"), set_var("c", sub(var("a"), 1))),
        if_(lt(var("a"), 0), set_var("c", -1)),
    )
    trace = run([Sprite("S", scripts=[script])], variables={"a": 0, "b": "", "c": 0}, ticks=1)
    assert trace.final.variables == {"a": 14, "b": "big", "c": 13}
    assert isinstance(trace.final.variables["b"], str)


def test_repeat_until_and_wait_until():
    mover = Sprite("S", scripts=[when_flag(repeat_until(gt(x_position(), 12), change_x(5)))])
    watcher = Sprite("T", scripts=[when_flag(wait_until(gt(var("v"), 0)), change_x(1))])
    setter = Sprite("U", scripts=[when_flag(wait(0.1), set_var("v", 1))])
    trace = run([mover, watcher, setter], variables={"v": 0}, ticks=10)
    assert trace.final.sprites["S"].x == 15
    assert xs(trace, "T").index(1) > values(trace, "v").index(1) - 1


def test_forever_runs_until_schedule_end():
    trace = run([Sprite("S", scripts=[when_flag(forever(change_x(1)))])], ticks=30)
    assert trace.final.sprites["S"].x == 30


def test_stop_blocks():
    a = Sprite("S", scripts=[when_flag(change_x(1), stop("this script"), change_x(100))])
    assert run([a], ticks=2).final.sprites["S"].x == 1
    b = Sprite("S", scripts=[when_flag(forever(change_x(1))), when_flag(wait(0.1), stop("all"))])
    assert run([b], ticks=20).final.sprites["S"].x == 4
    c = Sprite("S", scripts=[when_flag(forever(change_x(1))), when_flag(wait(0.1), stop("other scripts in sprite"), change_y(1))])
    final = run([c], ticks=20).final.sprites["S"]
    assert final.x == 4 and final.y == 1


def test_local_and_global_variables():
    s = Sprite("S", scripts=[when_flag(change_var("mine", 2), change_var("g", 1))], variables={"mine": 1})
    trace = run([s], variables={"g": 10}, ticks=1)
    assert trace.final.variables == {"g": 11, "S.mine": 3}


def test_unsupported_opcodes_are_inert_and_recorded():
    s = Sprite("S", scripts=[when_flag(raw("pen_penDown"), change_x(3), raw("sound_play"))])
    trace = run([s], ticks=1)
    assert trace.final.sprites["S"].x == 3
    assert trace.inert_opcodes == ["pen_penDown", "sound_play"]
    assert "pen_penDown" not in supported_opcodes()


def test_scratch_value_coercions():
    assert to_number("  12 ") == 12
    assert to_number("abc") == 0
    assert to_number(True) == 1
    assert compare_values("10", 9) > 0
    assert compare_values("abc", "ABC") == 0
    assert compare_values("10", "9a") < 0


def test_random_is_deterministic_per_seed_and_in_range():
    s = Sprite("S", scripts=[when_flag(repeat(20, change_var("total", random(1, 6)), set_var("last", random(1, 6))))])
    a = run([s], variables={"total": 0, "last": 0}, ticks=25, seed=7)
    b = run([s], variables={"total": 0, "last": 0}, ticks=25, seed=7)
    c = run([s], variables={"total": 0, "last": 0}, ticks=25, seed=8)
    assert a.states == b.states
    assert values(a, "total") != values(c, "total")
    assert 20 <= a.final.variables["total"] <= 120
    assert all(1 <= v <= 6 for v in values(a, "last")[1:])


def test_random_streams_are_keyed_per_script():
    draw = Sprite("S", scripts=[when_flag(repeat(5, change_var("a", random(1, 1000))))])
    extra = Sprite("T", scripts=[when_flag(repeat(5, change_var("b", random(1, 1000))))])
    alone = run([draw], variables={"a": 0, "b": 0}, ticks=6, seed=3)
    together = run([draw, extra], variables={"a": 0, "b": 0}, ticks=6, seed=3)
    assert values(alone, "a") == values(together, "a")


def test_random_decimal_bounds():
    s = Sprite("S", scripts=[when_flag(repeat(30, set_var("r", random(0, 0.5)), if_(gt(var("r"), 0.5), set_var("bad", 1))))])
    trace = run([s], variables={"r": 0, "bad": 0}, ticks=31, seed=1)
    rs = values(trace, "r")[1:]
    assert to_number(trace.final.variables["bad"]) == 0
    assert any(isinstance(r, float) and 0 < r < 0.5 for r in rs)


@settings(max_examples=40, deadline=None)
@given(st.integers(-20, 20), st.integers(1, 12), st.integers(0, 2**64 - 1))
def test_execution_is_a_pure_function(step, times, seed):
    s = Sprite("S", scripts=[when_flag(repeat(times, change_x(step), change_var("n", random(0, 3))))])
    project = ProjectDocument(build_project([s], variables={"n": 0}))
    first = execute(project, 15, seed, (0, 5, 15))
    second = execute(project, 15, seed, (0, 5, 15))
    assert first.states == second.states
    assert {t: snap.encoded for t, snap in first.snapshots.items()} == {t: snap.encoded for t, snap in second.snapshots.items()}
    assert first.final.sprites["S"].x == max(-240, min(240, step * times))
    assert all(a.tick <= b.tick for a, b in zip(first.states, first.states[1:]))


def test_stage_scripts_run():
    trace = run([Sprite("S")], variables={"v": 0}, stage_scripts=[when_flag(set_var("v", 9))], ticks=1)
    assert to_number(trace.final.variables["v"]) == 9
