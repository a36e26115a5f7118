"""Metrics computed purely from run logs (lists of JSONL records)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from ..envs import ContextSchedule

RECORD_VERSION = 1


class LogAlignmentError(ValueError):
    """Two logs do not cover the same steps."""


def read_jsonl(path) -> List[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def write_jsonl(path, records: Iterable[dict]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for rec in records:
            f.write(dump_record(rec))
            f.write("\n")


def dump_record(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _window(log: Sequence[dict], start: int | None, end: int | None) -> List[dict]:
    return [r for r in log if (start is None or r["t"] >= start) and (end is None or r["t"] < end)]


def rewards(log: Sequence[dict], start: int | None = None, end: int | None = None) -> np.ndarray:
    return np.array([r["reward"] for r in _window(log, start, end)], dtype=float)


def cumulative_reward(log, start=None, end=None) -> float:
    return float(rewards(log, start, end).sum())


def discounted_return(log, gamma: float, start=None, end=None) -> float:
    r = rewards(log, start, end)
    return float(np.sum(gamma ** np.arange(len(r)) * r))


def aligned_rewards(agent_log, oracle_log, start=None, end=None):
    a = _window(agent_log, start, end)
    o = _window(oracle_log, start, end)
    ta = [r["t"] for r in a]
    to = [r["t"] for r in o]
    if ta != to:
        raise LogAlignmentError(
            f"logs cover different steps (agent {len(ta)} records from {ta[:1]}, "
            f"oracle {len(to)} from {to[:1]})")
    return (np.array([r["reward"] for r in a], dtype=float),
            np.array([r["reward"] for r in o], dtype=float))


def regret(agent_log, oracle_log, gamma: float, start=None, end=None) -> float:
    """Discounted reward the agent lost relative to the oracle.

    Discounting starts at the first aligned step, so ``gamma = 0`` compares
    only that step.
    """
    ra, ro = aligned_rewards(agent_log, oracle_log, start, end)
    disc = np.ones(len(ra)) if gamma == 1.0 else gamma ** np.arange(len(ra))
    return float(np.sum(disc * (ro - ra)))


def regret_curve(agent_log, oracle_log, gamma: float, start=None, end=None) -> np.ndarray:
    ra, ro = aligned_rewards(agent_log, oracle_log, start, end)
    return np.cumsum(gamma ** np.arange(len(ra)) * (ro - ra))


@dataclass
class ChangeRow:
    change_point: int
    detected_at: Optional[int]
    delay: int
    censored: bool
    selected: Optional[str] = None


@dataclass
class DetectionReport:
    rows: List[ChangeRow] = field(default_factory=list)
    false_alarms: List[int] = field(default_factory=list)

    @property
    def delays(self) -> List[int]:
        return [r.delay for r in self.rows]

    @property
    def max_delay(self) -> Optional[int]:
        return max(self.delays) if self.rows else None

    @property
    def mean_delay(self) -> Optional[float]:
        return float(np.mean(self.delays)) if self.rows else None

    @property
    def n_censored(self) -> int:
        return sum(r.censored for r in self.rows)

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "false_alarms": self.false_alarms,
                "max_delay": self.max_delay, "mean_delay": self.mean_delay,
                "censored": self.n_censored}


def detections(log: Sequence[dict]) -> List[dict]:
    return [{"t": r["t"], **r["detection"]} for r in log if r.get("detection")]


def detection_report(log: Sequence[dict], schedule: ContextSchedule) -> DetectionReport:
    """Match each change-point covered by ``log`` to the first detection in its
    window ``[C_i, C_{i+1})``; other detections are false alarms.

    A change with no detection in its window gets a censored delay equal to
    the window length observed in the log.
    """
    report = DetectionReport()
    if not log:
        return report
    first, last = log[0]["t"], log[-1]["t"] + 1
    changes = [c for c in schedule.change_points if first <= c < last]
    events = detections(log)
    bounds = changes + [last]
    matched = set()
    for c, nxt in zip(changes, bounds[1:]):
        hit = next((e for e in events if c <= e["t"] < nxt), None)
        if hit is None:
            report.rows.append(ChangeRow(c, None, nxt - c, True))
        else:
            matched.add(id(hit))
            report.rows.append(ChangeRow(c, hit["t"], hit["t"] - c, False, str(hit["selected"])))
    report.false_alarms = [e["t"] for e in events if id(e) not in matched]
    return report


SUMMARY_COLUMNS = ("variant", "seed", "steps", "total_reward", "measured_steps",
                   "measured_reward", "discounted_return", "final_K", "detections",
                   "false_alarms", "mean_delay", "max_delay", "censored")


def summarize(log: Sequence[dict], schedule: ContextSchedule, gamma: float,
              measure_start: int = 0, variant: str = "", seed: int = 0) -> dict:
    rep = detection_report(log, schedule)
    measured = _window(log, measure_start, None)
    return {
        "variant": variant,
        "seed": seed,
        "steps": len(log),
        "total_reward": cumulative_reward(log),
        "measured_steps": len(measured),
        "measured_reward": cumulative_reward(measured),
        "discounted_return": discounted_return(measured, gamma),
        "final_K": log[-1]["K"] if log else 1,
        "detections": len(detections(log)),
        "false_alarms": len(rep.false_alarms),
        "mean_delay": rep.mean_delay,
        "max_delay": rep.max_delay,
        "censored": rep.n_censored,
    }


def figure_series(log: Sequence[dict]) -> dict:
    """Per-step traces for plotting: rewards, active context, W and log-likelihoods."""
    keys = sorted({k for r in log for k in r["W"]} | {k for r in log for k in r["loglik"]})
    series = {"t": [r["t"] for r in log], "reward": [r["reward"] for r in log],
              "z": [r["z"] for r in log], "K": [r["K"] for r in log],
              "context": [r["context"] for r in log]}
    for k in keys:
        series[f"W_{k}"] = [r["W"].get(k) for r in log]
        series[f"loglik_{k}"] = [r["loglik"].get(k) for r in log]
    return series
