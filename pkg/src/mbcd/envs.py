"""Desk-scale non-stationary environments and context schedules.

A context is a plain parameter object (``MazeSpec``, ``DriftSpec``,
``GaussianStreamSpec``).  A ``ContextSchedule`` maps global step indices to
context names, and ``ScheduledEnv`` steps whichever context is active.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

WALL_BACKOFF = 1e-3


def _cross(u, v):
    return u[0] * v[1] - u[1] * v[0]


@dataclass(frozen=True)
class MazeSpec:
    """Particle maze: 2-D position, 2-D move direction, latent goal.

    ``walls`` holds segments ``(x0, y0, x1, y1)``.  ``action_sign`` flips
    the effect of the action (a malfunction-style context) when negative.
    """

    goal: Tuple[float, float] = (3.5, 3.5)
    walls: Tuple[Tuple[float, float, float, float], ...] = ()
    bounds: Tuple[float, float] = (-5.0, 5.0)
    radius: float = 0.5
    step_scale: float = 0.5
    action_sign: float = 1.0

    obs_dim = 2
    act_dim = 2

    def __post_init__(self):
        object.__setattr__(self, "goal", tuple(float(g) for g in self.goal))
        object.__setattr__(self, "walls", tuple(tuple(float(c) for c in w) for w in self.walls))
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))
        lo, hi = self.bounds
        if not lo < hi:
            raise ValueError("maze bounds must satisfy lo < hi")
        if not all(lo <= g <= hi for g in self.goal):
            raise ValueError(f"goal {self.goal} outside bounds {self.bounds}")
        for w in self.walls:
            if len(w) != 4 or not all(lo <= c <= hi for c in w):
                raise ValueError(f"wall {w} is not a segment inside the bounds")

    def reward(self, s2) -> float:
        dist = float(np.hypot(s2[0] - self.goal[0], s2[1] - self.goal[1]))
        return -dist + (1.0 if dist < self.radius else 0.0)

    def transition(self, s, a, rng=None):
        return maze_step(self, s, a)

    def initial_state(self, rng: np.random.Generator):
        lo, hi = self.bounds
        return rng.uniform(lo + 0.5, hi - 0.5, size=2)

    def to_dict(self) -> dict:
        return {"type": "maze", **asdict(self)}


def maze_step(spec: MazeSpec, s, a):
    """Deterministic maze transition: returns ``(s', r, terminal)``.

    The particle moves by ``step_scale * a`` (``a`` clipped to [-1, 1]^2),
    is kept inside the arena and stops just short of the first wall its path
    would cross.
    """
    s = np.asarray(s, dtype=float)
    a = np.clip(np.asarray(a, dtype=float), -1.0, 1.0) * spec.action_sign
    lo, hi = spec.bounds
    target = np.clip(s + spec.step_scale * a, lo, hi)
    d = target - s
    length = float(np.hypot(d[0], d[1]))
    s2 = target
    if length > 0.0 and spec.walls:
        tau = 1.0
        for x0, y0, x1, y1 in spec.walls:
            e = (x1 - x0, y1 - y0)
            denom = _cross(d, e)
            if denom == 0.0:
                continue
            w = (x0 - s[0], y0 - s[1])
            t_hit = _cross(w, e) / denom
            u_hit = _cross(w, d) / denom
            if 0.0 <= t_hit <= 1.0 and 0.0 <= u_hit <= 1.0:
                tau = min(tau, t_hit)
        if tau < 1.0:
            travel = max(tau * length - WALL_BACKOFF, 0.0)
            s2 = s + d * (travel / length)
    return s2, spec.reward(s2), False


@dataclass(frozen=True)
class DriftSpec:
    """1-D noisy integrator: s' = s + gain * a + drift + noise, r = -|s'|."""

    gain: float = 0.5
    drift: float = 0.0
    noise: float = 0.1
    bound: float = 3.0

    obs_dim = 1
    act_dim = 1

    def transition(self, s, a, rng: np.random.Generator):
        a = np.clip(np.asarray(a, dtype=float), -1.0, 1.0)
        s2 = s + self.gain * a + self.drift + self.noise * rng.standard_normal(1)
        s2 = np.clip(s2, -self.bound, self.bound)
        return s2, float(-abs(s2[0])), False

    def initial_state(self, rng: np.random.Generator):
        return rng.uniform(-1.0, 1.0, size=1)

    def to_dict(self) -> dict:
        return {"type": "drift", **asdict(self)}


@dataclass(frozen=True)
class GaussianStreamSpec:
    """Pure observation stream with no control effect."""

    mean: Tuple[float, ...] = (0.0,)
    var: Tuple[float, ...] = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(m) for m in np.atleast_1d(self.mean)))
        object.__setattr__(self, "var", tuple(float(v) for v in np.atleast_1d(self.var)))
        if len(self.mean) != len(self.var):
            raise ValueError("mean and variance lengths differ")
        if any(v < 0 for v in self.var):
            raise ValueError("variances must be non-negative")

    def to_dict(self) -> dict:
        return {"type": "stream", "mean": list(self.mean), "var": list(self.var)}


def spec_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("type", "maze")
    if kind == "maze":
        return MazeSpec(**d)
    if kind == "drift":
        return DriftSpec(**d)
    if kind == "stream":
        return GaussianStreamSpec(**d)
    raise ValueError(f"unknown context type {kind!r}")


@dataclass(frozen=True)
class ContextSchedule:
    """Ordered change-points ``C_i`` with the context name active from each."""

    entries: Tuple[Tuple[int, str], ...]

    def __post_init__(self):
        entries = tuple((int(c), str(z)) for c, z in self.entries)
        if not entries or entries[0][0] != 0:
            raise ValueError("a schedule must start at step 0")
        starts = [c for c, _ in entries]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("change-points must be strictly increasing")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_starts", starts)

    @classmethod
    def constant(cls, name: str) -> "ContextSchedule":
        return cls(((0, name),))

    @classmethod
    def from_segments(cls, segments: Sequence[Tuple[str, int]]) -> "ContextSchedule":
        """Build from consecutive ``(name, length)`` segments."""
        entries, t = [], 0
        for name, length in segments:
            entries.append((t, name))
            t += int(length)
        return cls(tuple(entries))

    def alternating(self, names: Sequence[str], period: int, start: int, end: int):
        """Copy of this schedule with a cyclic switch every ``period`` steps
        over ``[start, end)``; the context active at ``end`` continues after."""
        if period < 1:
            raise ValueError("period must be >= 1")
        head = [e for e in self.entries if e[0] < start]
        tail_name = self.context_name(end) if end > start else None
        tail = [e for e in self.entries if e[0] > end]
        body = [(t, names[i % len(names)]) for i, t in enumerate(range(start, end, period))]
        entries = head + body
        if tail_name is not None and (not tail or tail[0][0] != end):
            entries.append((end, tail_name))
        entries += tail
        merged: List[Tuple[int, str]] = []
        for c, z in entries:
            if merged and merged[-1][1] == z:
                continue
            merged.append((c, z))
        return ContextSchedule(tuple(merged))

    @classmethod
    def random(cls, pool: Sequence[str], n_segments: int, min_len: int, max_len: int,
               rng: np.random.Generator) -> "ContextSchedule":
        """Seeded random draw: each segment picks a context different from the last."""
        entries, t, prev = [], 0, None
        for _ in range(n_segments):
            choices = [p for p in pool if p != prev] or list(pool)
            name = choices[int(rng.integers(len(choices)))]
            entries.append((t, name))
            t += int(rng.integers(min_len, max_len + 1))
            prev = name
        return cls(tuple(entries))

    @property
    def change_points(self) -> List[int]:
        """Steps at which the active context actually changes (excluding 0)."""
        return [c for (c, z), (_, zp) in zip(self.entries[1:], self.entries[:-1]) if z != zp]

    def context_name(self, t: int) -> str:
        if t < 0:
            raise ValueError("t must be non-negative")
        return self.entries[bisect.bisect_right(self._starts, t) - 1][1]

    def names(self) -> List[str]:
        seen = []
        for _, z in self.entries:
            if z not in seen:
                seen.append(z)
        return seen

    def to_json(self) -> str:
        return json.dumps([[c, z] for c, z in self.entries])

    @classmethod
    def from_json(cls, text: str) -> "ContextSchedule":
        return cls(tuple((int(c), z) for c, z in json.loads(text)))


def schedule_context(schedule: ContextSchedule, contexts: Dict[str, object], t: int):
    """Parameterisation active at step ``t``."""
    return contexts[schedule.context_name(t)]


def stream_emit(contexts: Dict[str, GaussianStreamSpec], schedule: ContextSchedule,
                t: int, rng: np.random.Generator):
    spec = schedule_context(schedule, contexts, t)
    return np.asarray(spec.mean) + np.sqrt(spec.var) * rng.standard_normal(len(spec.mean))


@dataclass
class ScheduledEnv:
    """Episodic environment whose dynamics follow a context schedule.

    Episodes end by truncation after ``episode_len`` steps; the global step
    counter ``t`` keeps running across episodes.
    """

    contexts: Dict[str, object]
    schedule: ContextSchedule
    rng: np.random.Generator
    episode_len: int = 200
    t: int = 0
    episode_step: int = field(default=0, init=False)
    state: np.ndarray = field(default=None, init=False)

    def __post_init__(self):
        missing = [z for z in self.schedule.names() if z not in self.contexts]
        if missing:
            raise ValueError(f"schedule references unknown contexts {missing}")
        dims = {(c.obs_dim, c.act_dim) for c in self.contexts.values()}
        if len(dims) != 1:
            raise ValueError("all contexts must share observation/action dimensions")
        self.obs_dim, self.act_dim = dims.pop()

    @property
    def context_name(self) -> str:
        return self.schedule.context_name(self.t)

    @property
    def spec(self):
        return self.contexts[self.context_name]

    def reset(self):
        self.episode_step = 0
        self.state = self.spec.initial_state(self.rng)
        return self.state.copy()

    def step(self, a):
        s2, r, terminal = self.spec.transition(self.state, a, self.rng)
        info = {"context": self.context_name, "t": self.t}
        self.t += 1
        self.episode_step += 1
        self.state = np.asarray(s2, dtype=float)
        truncated = self.episode_step >= self.episode_len
        return self.state.copy(), float(r), bool(terminal), truncated, info
