"""Experiment configuration: YAML files, presets and ``key=value`` overrides.

Grammar (YAML mapping; every key optional unless noted)::

    preset: maze-reid            # start from a named preset, then override
    name: my-run
    contexts:                    # required unless a preset provides them
      A: {type: maze, goal: [3.5, 3.5], walls: [[0, -5, 0, 2]]}
      B: {type: maze, goal: [-3.5, -3.5]}
    schedule:
      segments: [[A, 4000], [B, 4000], [A, 2000]]
      alternate: {names: [A, B], period: 25, start: 4000, end: 6000}
    episode_len: 200
    total_steps: 10000           # default: end of the last segment
    measure_start: 0             # first step counted by summaries and regret
    variants: [mbcd, single-model, model-free, oracle]
    seeds: [0, 1, 2, 3, 4, 5, 6]
    gamma: 0.99                  # discount used by the regret metric
    oracle_pretrain_steps: 2000  # isolated training per context for the oracle
    agent: {h: 1000, delta: 2.5} # AgentConfig fields
    output_dir: runs/my-run

Overrides use dotted keys, values parsed as YAML: ``agent.h=50``,
``seeds=[0,1]``, ``variants=[mbcd]``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence

import yaml

from ..agent import AgentConfig
from ..envs import ContextSchedule, spec_from_dict
from ..nn import ConfigurationError
from .presets import PRESETS

VARIANTS = ("mbcd", "mbcd-mpc", "single-model", "model-free", "oracle")

# Every baseline is MBCD with a handful of settings changed; nothing else
# distinguishes them at run time.
VARIANT_OVERRIDES: Dict[str, dict] = {
    "mbcd": {},
    "mbcd-mpc": {"action_selection": "mpc"},
    "single-model": {"h": math.inf, "alpha": None},
    "model-free": {"h": math.inf, "alpha": None, "rollouts": 0, "mix": 0.0},
    "oracle": {"h": math.inf, "alpha": None},
}


@dataclass
class ExperimentConfig:
    contexts: Dict[str, dict]
    schedule: dict
    name: str = "experiment"
    episode_len: int = 200
    total_steps: int | None = None
    measure_start: int = 0
    variants: List[str] = field(default_factory=lambda: ["mbcd"])
    seeds: List[int] = field(default_factory=lambda: list(range(7)))
    gamma: float = 0.99
    oracle_pretrain_steps: int | None = None
    agent: dict = field(default_factory=dict)
    output_dir: str = "runs"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigurationError("seeds must be non-empty")
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown:
            raise ConfigurationError(f"unknown variants {unknown}; choose from {list(VARIANTS)}")
        if not self.contexts:
            raise ConfigurationError("no contexts defined")
        self.context_specs = {k: spec_from_dict(v) for k, v in self.contexts.items()}
        self.built_schedule = build_schedule(self.schedule)
        missing = [z for z in self.built_schedule.names() if z not in self.contexts]
        if missing:
            raise ConfigurationError(f"schedule references undefined contexts {missing}")
        if self.total_steps is None:
            self.total_steps = schedule_length(self.schedule)
        if self.total_steps < 0 or not 0 <= self.measure_start:
            raise ConfigurationError("total_steps and measure_start must be >= 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError("gamma must lie in [0, 1]")
        AgentConfig.from_dict(self.agent)  # validate early

    def agent_config(self, variant: str) -> AgentConfig:
        return AgentConfig.from_dict(variant_agent_dict(self.agent, variant))

    def to_dict(self) -> dict:
        return {
            "name": self.name, "contexts": self.contexts, "schedule": self.schedule,
            "episode_len": self.episode_len, "total_steps": self.total_steps,
            "measure_start": self.measure_start, "variants": list(self.variants),
            "seeds": list(self.seeds), "gamma": self.gamma,
            "oracle_pretrain_steps": self.oracle_pretrain_steps, "agent": self.agent,
            "output_dir": self.output_dir,
        }


def variant_agent_dict(agent: dict, variant: str) -> dict:
    """Agent settings for ``variant``: the shared dict plus the variant's overrides."""
    if variant not in VARIANT_OVERRIDES:
        raise ConfigurationError(f"unknown variant {variant!r}")
    merged = dict(agent)
    merged.update(VARIANT_OVERRIDES[variant])
    return merged


def build_schedule(spec: dict) -> ContextSchedule:
    segments = spec.get("segments")
    if not segments:
        raise ConfigurationError("schedule needs at least one segment")
    schedule = ContextSchedule.from_segments([(str(n), int(length)) for n, length in segments])
    alt = spec.get("alternate")
    if alt:
        schedule = schedule.alternating([str(n) for n in alt["names"]], int(alt["period"]),
                                        int(alt["start"]), int(alt["end"]))
    return schedule


def schedule_length(spec: dict) -> int:
    return sum(int(length) for _, length in spec["segments"])


def _set_dotted(d: dict, key: str, value) -> None:
    parts = key.split(".")
    for p in parts[:-1]:
        d = d.setdefault(p, {})
        if not isinstance(d, dict):
            raise ConfigurationError(f"cannot override {key!r}: {p!r} is not a mapping")
    d[parts[-1]] = value


def apply_overrides(raw: dict, overrides: Sequence[str]) -> dict:
    raw = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        _set_dotted(raw, key.strip(), yaml.safe_load(text))
    return raw


def resolve(raw: dict) -> dict:
    """Expand ``preset:`` into a full mapping (the file's keys win)."""
    raw = dict(raw)
    name = raw.pop("preset", None)
    if name is None:
        return raw
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    base = copy.deepcopy(PRESETS[name])
    agent = {**base.get("agent", {}), **raw.pop("agent", {})}
    base.update(raw)
    base["agent"] = agent
    return base


def config_from_dict(raw: dict, overrides: Sequence[str] = ()) -> ExperimentConfig:
    merged = resolve(apply_overrides(raw, [o for o in overrides if o.startswith("preset=")]))
    merged = apply_overrides(merged, [o for o in overrides if not o.startswith("preset=")])
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(merged) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
    return ExperimentConfig(**merged)


def load_config(path=None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    raw = {}
    if path is not None:
        raw = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(raw, dict):
            raise ConfigurationError(f"{path}: top level must be a mapping")
    return config_from_dict(raw, overrides)
