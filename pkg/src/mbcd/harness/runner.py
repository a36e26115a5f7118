"""Run experiment variants over seeds and write JSONL logs plus a CSV summary."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import yaml

from ..agent import MBCDAgent, StepReport
from ..envs import ContextSchedule, ScheduledEnv
from .config import ExperimentConfig
from .metrics import RECORD_VERSION, SUMMARY_COLUMNS, summarize, write_jsonl

logger = logging.getLogger(__name__)


@dataclass
class RunResult:
    variant: str
    seed: int
    records: List[dict]
    summary: dict
    agent: MBCDAgent
    seconds: float = 0.0


def seed_streams(seed: int, n: int) -> List[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def to_record(report: StepReport, context: str) -> dict:
    det = report.detection
    return {
        "v": RECORD_VERSION,
        "t": int(report.t),
        "context": context,
        "z": int(report.z),
        "K": int(report.K),
        "reward": float(report.reward),
        "W": {str(k): float(v) for k, v in report.W.items()},
        "loglik": {str(k): float(v) for k, v in report.loglik.items()},
        "warmup": bool(report.warmup),
        "disagreement": float(report.disagreement),
        "detection": None if det is None else {
            "selected": int(det.selected), "previous": int(det.previous), "new": bool(det.is_new)},
        "done": bool(report.terminal or report.truncated),
    }


def _rollout(agent: MBCDAgent, env: ScheduledEnv, steps: int,
             forced: Optional[Callable[[int], int]] = None,
             records: Optional[List[dict]] = None) -> None:
    s = env.reset()
    for _ in range(steps):
        context = env.context_name
        z = None if forced is None else forced(env.t)
        _, report = agent.step(s, env, forced_context=z)
        if records is not None:
            records.append(to_record(report, context))
        s = report.next_state
        if report.terminal or report.truncated:
            s = env.reset()


def run_variant(cfg: ExperimentConfig, variant: str, seed: int) -> RunResult:
    start = time.perf_counter()
    if variant == "oracle":
        agent, records = _run_oracle(cfg, seed)
    else:
        env_rng, agent_rng = seed_streams(seed, 2)
        env = ScheduledEnv(cfg.context_specs, cfg.built_schedule, env_rng, cfg.episode_len)
        agent = MBCDAgent(env.obs_dim, env.act_dim, cfg.agent_config(variant), agent_rng)
        records = []
        _rollout(agent, env, cfg.total_steps, records=records)
    summary = summarize(records, cfg.built_schedule, cfg.gamma, cfg.measure_start, variant, seed)
    return RunResult(variant, seed, records, summary, agent, time.perf_counter() - start)


def _run_oracle(cfg: ExperimentConfig, seed: int) -> Tuple[MBCDAgent, List[dict]]:
    """Pre-train one agent per context in isolation, then replay the schedule
    from ``measure_start`` switching exactly at every change-point."""
    names = cfg.built_schedule.names()
    rngs = seed_streams(seed, 2 + 2 * len(names))
    env_rng, agent_rng = rngs[:2]
    agent_cfg = cfg.agent_config("oracle")
    pretrain = cfg.oracle_pretrain_steps
    if pretrain is None:
        pretrain = cfg.built_schedule.entries[1][0] if len(cfg.built_schedule.entries) > 1 \
            else cfg.total_steps

    entries = []
    for i, name in enumerate(names):
        solo_env = ScheduledEnv(cfg.context_specs, ContextSchedule.constant(name),
                                rngs[2 + 2 * i], cfg.episode_len)
        solo = MBCDAgent(solo_env.obs_dim, solo_env.act_dim, agent_cfg, rngs[3 + 2 * i])
        _rollout(solo, solo_env, pretrain)
        entry = solo.library.current
        entry.z = i + 1
        entry.model.z = i + 1
        entry.warmed_up = True
        entries.append(entry)

    start = min(cfg.measure_start, cfg.total_steps)
    env = ScheduledEnv(cfg.context_specs, cfg.built_schedule, env_rng, cfg.episode_len, t=start)
    agent = MBCDAgent(env.obs_dim, env.act_dim, agent_cfg, agent_rng)
    agent.library.entries[:] = entries
    agent.t = start
    z_of = {name: i + 1 for i, name in enumerate(names)}
    agent.switch_to(z_of[cfg.built_schedule.context_name(start)])
    records: List[dict] = []
    _rollout(agent, env, cfg.total_steps - start,
             forced=lambda t: z_of[cfg.built_schedule.context_name(t)], records=records)
    return agent, records


def log_path(out_dir, variant: str, seed: int) -> Path:
    return Path(out_dir) / variant / f"seed_{seed}.jsonl"


def write_summary(path, summaries: List[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for s in summaries:
            w.writerow({k: ("" if s[k] is None else s[k]) for k in SUMMARY_COLUMNS})


def run_experiment(cfg: ExperimentConfig, out_dir=None, keep_agents: bool = False,
                   progress: Optional[Callable[[RunResult], None]] = None
                   ) -> Dict[Tuple[str, int], RunResult]:
    """Run every (variant, seed) pair; write logs when ``out_dir`` is given."""
    results: Dict[Tuple[str, int], RunResult] = {}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.yaml").write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
    for variant in cfg.variants:
        for seed in cfg.seeds:
            res = run_variant(cfg, variant, seed)
            logger.info("%s seed %d: %.1fs, measured reward %.2f, K=%s", variant, seed,
                        res.seconds, res.summary["measured_reward"], res.summary["final_K"])
            if out_dir is not None:
                write_jsonl(log_path(out_dir, variant, seed), res.records)
            if not keep_agents:
                res.agent = None
            results[(variant, seed)] = res
            if progress is not None:
                progress(res)
    if out_dir is not None:
        write_summary(out_dir / "summary.csv", [r.summary for r in results.values()])
    return results
