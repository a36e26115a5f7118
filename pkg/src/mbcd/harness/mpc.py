"""Cross-entropy-method model-predictive control over a learned or given model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CemConfig:
    candidates: int = 1000
    horizon: int = 20
    iterations: int = 8
    elite_frac: float = 0.1
    init_std: float = 1.0
    min_std: float = 0.05

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("planning horizon must be >= 1")
        n_elite = self.n_elite
        if not (1 <= n_elite <= self.candidates):
            raise ValueError("need candidates >= elites >= 1")

    @property
    def n_elite(self) -> int:
        return max(1, int(round(self.elite_frac * self.candidates)))


def refit(candidates, returns, n_elite: int):
    """Mean and std of the ``n_elite`` best candidate sequences."""
    order = np.argsort(-returns, kind="stable")[:n_elite]
    elites = candidates[order]
    return elites.mean(axis=0), elites.std(axis=0)


def rollout_returns(step_fn, s, plans, rng, reward_fn=None):
    """Accumulate predicted reward of each action sequence in ``plans``
    (shape ``(C, H, act_dim)``) starting from state ``s``."""
    n, horizon, _ = plans.shape
    states = np.repeat(np.asarray(s, dtype=float)[None, :], n, axis=0)
    total = np.zeros(n)
    for h in range(horizon):
        a = plans[:, h]
        nxt, r = step_fn(states, a, rng)
        if reward_fn is not None:
            r = reward_fn(states, a, nxt)
        total += r
        states = nxt
    return total


def cem_plan(step_fn, s, act_dim: int, cfg: CemConfig, rng: np.random.Generator,
             reward_fn=None):
    """Optimise an action sequence of shape ``(horizon, act_dim)``.

    The sampling distribution lives in unconstrained space and candidates are
    clipped only for evaluation; refitting on clipped samples would drag the
    mean away from the action bounds, where the best plans often sit.
    """
    mean = np.zeros((cfg.horizon, act_dim))
    std = np.full((cfg.horizon, act_dim), cfg.init_std)
    for _ in range(cfg.iterations):
        raw = mean + std * rng.standard_normal((cfg.candidates, cfg.horizon, act_dim))
        returns = rollout_returns(step_fn, s, np.clip(raw, -1.0, 1.0), rng, reward_fn)
        mean, std = refit(raw, returns, cfg.n_elite)
        std = np.maximum(std, cfg.min_std)
    return np.clip(mean, -1.0, 1.0)


def model_step_fn(model):
    """Adapter turning a ``ContextModel`` into a batched ``step_fn``."""
    def step(states, actions, rng):
        return model.sample_next(np.concatenate([states, actions], axis=-1), rng)
    return step


def mpc_act(model, s, rng: np.random.Generator, cfg: CemConfig = CemConfig(),
            reward_fn=None, act_dim: int | None = None):
    """First action of the CEM-optimised plan.

    ``model`` is either a ``ContextModel`` (its learned reward is used unless
    ``reward_fn`` is given) or a batched ``step_fn(states, actions, rng)``.
    """
    if callable(model) and not hasattr(model, "sample_next"):
        step_fn = model
        if act_dim is None:
            raise ValueError("act_dim is required with a raw step function")
    else:
        step_fn = model_step_fn(model)
        act_dim = model.act_dim
    plan = cem_plan(step_fn, s, act_dim, cfg, rng, reward_fn)
    return np.clip(plan[0], -1.0, 1.0)
