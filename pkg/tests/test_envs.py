import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbcd.envs import (ContextSchedule, DriftSpec, GaussianStreamSpec, MazeSpec, ScheduledEnv,
                       maze_step, schedule_context, spec_from_dict, stream_emit)


def test_reward_at_goal():
    spec = MazeSpec(goal=(1.0, 1.0))
    s2, r, terminal = maze_step(spec, np.array([1.0, 1.0]), np.zeros(2))
    assert r == pytest.approx(1.0)
    assert terminal is False


def test_reward_three_four_five():
    assert MazeSpec(goal=(3.0, 4.0)).reward(np.array([0.0, 0.0])) == pytest.approx(-5.0)


def test_zero_action_stays(rng):
    spec = MazeSpec(walls=((0.0, -5.0, 0.0, 2.0),))
    s = rng.uniform(-4, 4, size=2)
    np.testing.assert_array_equal(maze_step(spec, s, np.zeros(2))[0], s)


def test_action_is_clamped():
    spec = MazeSpec()
    s2, _, _ = maze_step(spec, np.zeros(2), np.array([5.0, -5.0]))
    np.testing.assert_allclose(s2, [0.5, -0.5])


def test_wall_blocks_movement():
    spec = MazeSpec(walls=((0.0, -5.0, 0.0, 5.0),))
    s2, _, _ = maze_step(spec, np.array([-0.2, 0.0]), np.array([1.0, 0.0]))
    assert s2[0] < 0.0
    assert s2[0] == pytest.approx(-1e-3)


def test_action_sign_flips_motion():
    s2, _, _ = maze_step(MazeSpec(action_sign=-1.0), np.zeros(2), np.array([1.0, 0.0]))
    np.testing.assert_allclose(s2, [-0.5, 0.0])


def test_bounds_respected():
    s2, _, _ = maze_step(MazeSpec(), np.array([4.9, -4.9]), np.array([1.0, -1.0]))
    np.testing.assert_allclose(s2, [5.0, -5.0])


@pytest.mark.parametrize("kwargs", [
    {"goal": (6.0, 0.0)},
    {"walls": ((0.0, 0.0, 7.0, 0.0),)},
    {"bounds": (1.0, -1.0)},
])
def test_invalid_maze(kwargs):
    with pytest.raises(ValueError):
        MazeSpec(**kwargs)


WALLS = ((0.0, -5.0, 0.0, 2.0), (-2.0, 0.0, 5.0, 0.0))


def _side(wall, p):
    x0, y0, x1, y1 = wall
    return np.sign((x1 - x0) * (p[1] - y0) - (y1 - y0) * (p[0] - x0))


def _crosses(wall, p, q):
    x0, y0, x1, y1 = wall
    a, b = _side(wall, p), _side(wall, q)
    c = np.sign((q[0] - p[0]) * (y0 - p[1]) - (q[1] - p[1]) * (x0 - p[0]))
    d = np.sign((q[0] - p[0]) * (y1 - p[1]) - (q[1] - p[1]) * (x1 - p[0]))
    return a * b < 0 and c * d < 0


coord = st.floats(-5.0, 5.0, allow_nan=False)
act = st.floats(-1.5, 1.5, allow_nan=False)


@settings(max_examples=300)
@given(coord, coord, act, act)
def test_collision_never_crosses_wall_or_leaves_arena(x, y, ax, ay):
    spec = MazeSpec(walls=WALLS)
    s = np.array([x, y])
    if any(abs(_side(w, s)) == 0 for w in WALLS):
        return  # starting exactly on a wall line is outside the contract
    s2, _, _ = maze_step(spec, s, np.array([ax, ay]))
    assert np.all(s2 >= -5.0) and np.all(s2 <= 5.0)
    for w in WALLS:
        assert not _crosses(w, s, s2)


def test_maze_is_deterministic(rng):
    spec = MazeSpec(walls=WALLS)
    s, a = rng.uniform(-4, 4, 2), rng.uniform(-1, 1, 2)
    assert np.array_equal(maze_step(spec, s, a)[0], maze_step(spec, s, a)[0])


def test_schedule_boundaries():
    sched = ContextSchedule(((0, "A"), (100, "B")))
    contexts = {"A": "ctx-a", "B": "ctx-b"}
    assert schedule_context(sched, contexts, 99) == "ctx-a"
    assert schedule_context(sched, contexts, 100) == "ctx-b"
    assert sched.change_points == [100]


def test_constant_schedule():
    sched = ContextSchedule.constant("A")
    assert all(sched.context_name(t) == "A" for t in (0, 10, 10_000))
    assert sched.change_points == []


@pytest.mark.parametrize("entries", [(), ((5, "A"),), ((0, "A"), (10, "B"), (10, "A"))])
def test_invalid_schedule(entries):
    with pytest.raises(ValueError):
        ContextSchedule(entries)


def test_fast_switch_alternates_every_25():
    sched = ContextSchedule.from_segments([("A", 100), ("B", 100)]).alternating(["A", "B"], 25, 200, 300)
    names = [sched.context_name(t) for t in range(200, 300)]
    for k in range(4):
        block = names[25 * k:25 * (k + 1)]
        assert len(set(block)) == 1
        assert block[0] == ("A" if k % 2 == 0 else "B")
    assert sched.change_points == [100, 200, 225, 250, 275]
    assert sched.context_name(400) == sched.context_name(299)


def test_random_schedule_is_seeded():
    a = ContextSchedule.random(["A", "B", "C"], 6, 10, 20, np.random.default_rng(3))
    b = ContextSchedule.random(["A", "B", "C"], 6, 10, 20, np.random.default_rng(3))
    assert a == b
    names = [z for _, z in a.entries]
    assert all(x != y for x, y in zip(names, names[1:]))


def test_schedule_json_roundtrip():
    sched = ContextSchedule.from_segments([("A", 4000), ("B", 4000), ("A", 2000)])
    again = ContextSchedule.from_json(sched.to_json())
    assert again == sched
    assert json.loads(sched.to_json()) == [[0, "A"], [4000, "B"], [8000, "A"]]


def test_stream_zero_variance_emits_mean(rng):
    ctx = {"s": GaussianStreamSpec(mean=(1.5, -2.0), var=(0.0, 0.0))}
    np.testing.assert_array_equal(stream_emit(ctx, ContextSchedule.constant("s"), 0, rng), [1.5, -2.0])


def test_stream_sample_mean():
    rng = np.random.default_rng(5)
    ctx = {"a": GaussianStreamSpec(mean=(0.0,), var=(1.0,)), "b": GaussianStreamSpec(mean=(3.0,), var=(2.0,))}
    sched = ContextSchedule(((0, "a"), (10, "b")))
    draws = np.array([stream_emit(ctx, sched, 50, rng)[0] for _ in range(100_000)])
    se = np.sqrt(2.0 / len(draws))
    assert abs(draws.mean() - 3.0) < 4 * se


def test_stream_seeded():
    ctx = {"a": GaussianStreamSpec()}
    sched = ContextSchedule.constant("a")
    x = stream_emit(ctx, sched, 0, np.random.default_rng(9))
    y = stream_emit(ctx, sched, 0, np.random.default_rng(9))
    assert np.array_equal(x, y)


def test_stream_rejects_negative_variance():
    with pytest.raises(ValueError):
        GaussianStreamSpec(mean=(0.0,), var=(-1.0,))


def test_spec_from_dict_roundtrip():
    for spec in (MazeSpec(goal=(1.0, 2.0), walls=WALLS), DriftSpec(drift=0.3),
                 GaussianStreamSpec(mean=(1.0,), var=(2.0,))):
        assert spec_from_dict(spec.to_dict()) == spec
    with pytest.raises(ValueError):
        spec_from_dict({"type": "cheetah"})


def test_scheduled_env_switches_context(rng):
    contexts = {"A": MazeSpec(goal=(3.0, 3.0)), "B": MazeSpec(goal=(-3.0, -3.0))}
    env = ScheduledEnv(contexts, ContextSchedule(((0, "A"), (3, "B"))), rng, episode_len=4)
    env.reset()
    seen = []
    for _ in range(4):
        _, _, _, truncated, info = env.step(np.zeros(2))
        seen.append(info["context"])
    assert seen == ["A", "A", "A", "B"]
    assert truncated


def test_scheduled_env_validates(rng):
    with pytest.raises(ValueError):
        ScheduledEnv({"A": MazeSpec()}, ContextSchedule(((0, "A"), (5, "B"))), rng)
    with pytest.raises(ValueError):
        ScheduledEnv({"A": MazeSpec(), "B": DriftSpec()}, ContextSchedule.constant("A"), rng)
