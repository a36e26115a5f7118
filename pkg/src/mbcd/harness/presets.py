"""Named experiment presets.

``maze-reid``
    Arena [-5, 5]^2.  Context A puts the goal top-right behind a vertical
    wall; context B puts it bottom-left behind a horizontal wall.  The
    schedule A -> B -> A checks that the agent spawns exactly one new model
    and later re-identifies A.  The maze is deterministic, so young models
    are confidently wrong in corners and along walls they have not visited;
    a long warm-up lets each model see most of the arena before its
    errors can raise an alarm.

``maze-fast-switch``
    Small arena [-2, 2]^2 with two goals 1.5 apart and no walls.  Each
    context is first visited for a long stretch (so both are learned), then
    the goal alternates every 25 steps.  Goals sit close together so that the
    oracle's per-step reward is positive and reward ratios are meaningful.
    Short episodes spread the start states over the arena so both models
    see most of it; a low threshold with a wide new-context margin keeps the
    delay to a few steps without spawning spurious models.

``drift-switch``
    1-D noisy integrator whose drift jumps; a quick smoke test.

``wind``
    Maze analog of a wind perturbation: same goal, actions flipped.
"""

from __future__ import annotations

MAZE_AGENT = {
    "h": 1000.0,
    "delta": 2.5,
    "shift": "std",
    "ensemble_size": 5,
    "model_hidden": [32, 32],
    "model_lr": 3e-3,
    "model_train_steps": 100,
    "model_batch_size": 128,
    "update_interval": 250,
    "rollouts": 5000,
    "policy_hidden": [64, 64],
    "policy_lr": 3e-3,
    "gamma": 0.9,
    "beta": 0.05,
    "batch_size": 64,
    "mix": 0.5,
    "warmup_steps": 1000,
    "disagreement_threshold": 0.2,
}

PRESETS = {
    "maze-reid": {
        "name": "maze-reid",
        "contexts": {
            "A": {"type": "maze", "goal": [3.5, 3.5], "walls": [[0.0, -5.0, 0.0, 2.0]]},
            "B": {"type": "maze", "goal": [-3.5, -3.5], "walls": [[-2.0, 0.0, 5.0, 0.0]]},
        },
        "schedule": {"segments": [["A", 4000], ["B", 4000], ["A", 2000]]},
        "episode_len": 200,
        "variants": ["mbcd"],
        "seeds": [0, 1, 2, 3, 4, 5, 6],
        "agent": {**MAZE_AGENT, "warmup_steps": 3000},
    },
    "maze-fast-switch": {
        "name": "maze-fast-switch",
        "contexts": {
            "A": {"type": "maze", "goal": [-0.75, 0.0], "bounds": [-2.0, 2.0]},
            "B": {"type": "maze", "goal": [0.75, 0.0], "bounds": [-2.0, 2.0]},
        },
        "schedule": {
            "segments": [["A", 2000], ["B", 2000], ["A", 2000]],
            "alternate": {"names": ["A", "B"], "period": 25, "start": 4000, "end": 6000},
        },
        "episode_len": 50,
        "measure_start": 4000,
        "oracle_pretrain_steps": 2000,
        "variants": ["mbcd", "single-model", "model-free", "oracle"],
        "seeds": [0, 1, 2, 3, 4, 5, 6],
        "agent": {**MAZE_AGENT, "h": 15.0, "delta": 3.0},
    },
    "drift-switch": {
        "name": "drift-switch",
        "contexts": {
            "calm": {"type": "drift", "drift": 0.0},
            "windy": {"type": "drift", "drift": 0.3},
        },
        "schedule": {"segments": [["calm", 600], ["windy", 600]]},
        "episode_len": 100,
        "variants": ["mbcd"],
        "seeds": [0],
        "agent": {**MAZE_AGENT, "h": 50.0, "warmup_steps": 300,
                  "disagreement_threshold": 0.1, "update_interval": 100},
    },
    "wind": {
        "name": "wind",
        "contexts": {
            "still": {"type": "maze", "goal": [3.0, 3.0]},
            "flipped": {"type": "maze", "goal": [3.0, 3.0], "action_sign": -1.0},
        },
        "schedule": {"segments": [["still", 3000], ["flipped", 3000]]},
        "episode_len": 200,
        "variants": ["mbcd"],
        "seeds": [0],
        "agent": dict(MAZE_AGENT),
    },
}
