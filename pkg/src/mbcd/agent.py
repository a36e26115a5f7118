"""The MBCD agent: a growing library of per-context models and policies.

Every step the agent acts with the active context's policy, scores the new
transition under every library model, folds the log-likelihood ratios into
the CUSUM bank and switches context when a statistic crosses the threshold.
Detection is suppressed while the active model is still warming up.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .changepoint import NEW, CusumBank, DetectionEvent, DetectorConfig, bank_update, decide_context
from .dynamics import ContextModel
from .gaussian import DiagonalGaussian, diag_log_density
from .harness.mpc import CemConfig, mpc_act
from .nn import ConfigurationError
from .policy import SacPolicy, dyna_rollouts, optimize_step
from .replay import ReplayBuffer

LIBRARY_VERSION = 1


@dataclass
class AgentConfig:
    # detection
    h: float = 100.0
    alpha: Optional[float] = None
    delta: float = 2.0
    shift: str = "variance"
    # dynamics ensemble
    ensemble_size: int = 5
    model_hidden: Tuple[int, ...] = (32, 32)
    model_lr: float = 1e-3
    model_train_steps: int = 200
    model_batch_size: int = 256
    predict_deltas: bool = True
    lv_min: float = -10.0
    lv_max: float = 4.0
    update_interval: int = 250
    rollouts: int = 400
    buffer_capacity: int = 100_000
    model_buffer_capacity: int = 100_000
    # policy
    policy_hidden: Tuple[int, ...] = (64, 64)
    gamma: float = 0.99
    tau: float = 0.005
    beta: float = 0.2
    policy_lr: float = 3e-4
    batch_size: int = 256
    mix: float = 0.95
    updates_per_step: int = 1
    # warm-up
    warmup_steps: int = 1000
    disagreement_threshold: float = 0.05
    copy_critics_on_spawn: bool = True
    # action selection
    action_selection: str = "policy"
    mpc_candidates: int = 200
    mpc_horizon: int = 10
    mpc_iterations: int = 3
    mpc_elite_frac: float = 0.1

    def __post_init__(self):
        self.model_hidden = tuple(self.model_hidden)
        self.policy_hidden = tuple(self.policy_hidden)
        if self.update_interval < 1:
            raise ConfigurationError("update_interval (F) must be >= 1")
        if self.rollouts < 0 or self.warmup_steps < 0:
            raise ConfigurationError("rollouts and warmup_steps must be >= 0")
        if not 0.0 <= self.mix <= 1.0:
            raise ConfigurationError("mix must lie in [0, 1]")
        if self.action_selection not in ("policy", "mpc"):
            raise ConfigurationError(f"unknown action_selection {self.action_selection!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown agent settings: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model_hidden"] = list(self.model_hidden)
        d["policy_hidden"] = list(self.policy_hidden)
        return d

    def detector(self) -> DetectorConfig:
        return DetectorConfig(h=self.h, delta=self.delta, alpha=self.alpha, shift=self.shift)

    def cem(self) -> CemConfig:
        return CemConfig(candidates=self.mpc_candidates, horizon=self.mpc_horizon,
                         iterations=self.mpc_iterations, elite_frac=self.mpc_elite_frac)


@dataclass
class LibraryEntry:
    z: int
    model: ContextModel
    policy: SacPolicy
    created_at: int
    warmed_up: bool = False

    @property
    def buffer(self) -> ReplayBuffer:
        return self.model.buffer


@dataclass
class ModelLibrary:
    entries: List[LibraryEntry] = field(default_factory=list)
    z: int = 1

    @property
    def K(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> List[int]:
        return [e.z for e in self.entries]

    def __getitem__(self, k: int) -> LibraryEntry:
        if not 1 <= k <= self.K:
            raise KeyError(f"context {k} not in library (K={self.K})")
        return self.entries[k - 1]

    @property
    def current(self) -> LibraryEntry:
        return self[self.z]


@dataclass
class StepReport:
    t: int
    z: int
    K: int
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminal: bool
    truncated: bool
    W: Dict[str, float]
    loglik: Dict[str, float]
    warmup: bool
    disagreement: float
    detection: Optional[DetectionEvent] = None
    info: dict = field(default_factory=dict)


class MBCDAgent:
    def __init__(self, obs_dim: int, act_dim: int, config: AgentConfig | None = None,
                 rng: np.random.Generator | None = None, reward_fn=None):
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.config = config or AgentConfig()
        self.rng = rng if rng is not None else np.random.default_rng()
        self.detector = self.config.detector()
        self.reward_fn = reward_fn
        self.t = 0
        self.library = ModelLibrary()
        self._spawn(parent=None)
        self.model_buffer = ReplayBuffer(obs_dim, act_dim, self.config.model_buffer_capacity)
        self.bank = CusumBank.create(self.library.ids, 1)
        self._disagreements: deque = deque(maxlen=self.config.update_interval)

    # -- library ------------------------------------------------------------

    def _new_model(self, z: int) -> ContextModel:
        c = self.config
        return ContextModel(self.obs_dim, self.act_dim, self.rng, z=z,
                            ensemble_size=c.ensemble_size, hidden=c.model_hidden, lr=c.model_lr,
                            predict_deltas=c.predict_deltas, lv_min=c.lv_min, lv_max=c.lv_max,
                            buffer_capacity=c.buffer_capacity)

    def _new_policy(self) -> SacPolicy:
        c = self.config
        return SacPolicy(self.obs_dim, self.act_dim, self.rng, hidden=c.policy_hidden,
                         gamma=c.gamma, tau=c.tau, beta=c.beta, lr=c.policy_lr)

    def _spawn(self, parent: Optional[LibraryEntry]) -> LibraryEntry:
        z = self.library.K + 1
        if parent is None:
            policy = self._new_policy()
        elif self.config.copy_critics_on_spawn:
            policy = parent.policy.copy()
        else:
            policy = self._new_policy()
            policy.actor.load_params(parent.policy.actor.params)
        entry = LibraryEntry(z, self._new_model(z), policy, self.t)
        self.library.entries.append(entry)
        return entry

    @property
    def z(self) -> int:
        return self.library.z

    @property
    def K(self) -> int:
        return self.library.K

    def switch_to(self, k) -> DetectionEvent:
        """Make ``k`` (an existing id or ``"new"``) the active context."""
        prev = self.library.z
        is_new = k == NEW
        if is_new:
            k = self._spawn(self.library.current).z
        elif not (isinstance(k, (int, np.integer)) and 1 <= k <= self.K):
            raise KeyError(f"invalid context {k!r}")
        k = int(k)
        self.bank = CusumBank.create(self.library.ids, k)
        if k != prev:
            self.model_buffer.clear()
            self._disagreements.clear()
        self.library.z = k
        return DetectionEvent(self.t, k, prev, is_new)

    # -- warm-up ------------------------------------------------------------

    def warmup_active(self) -> bool:
        """True while the active model is still inside its warm-up period.

        The period ends the first time both the step count and the disagreement
        condition are met; after that the model never re-enters warm-up, so a
        context change (which inflates disagreement) cannot mask itself.
        """
        entry = self.library.current
        if entry.warmed_up:
            return False
        if self.t - entry.created_at < self.config.warmup_steps:
            return True
        if self._disagreements and math.isfinite(self.config.disagreement_threshold):
            return float(np.mean(self._disagreements)) > self.config.disagreement_threshold
        return False

    # -- acting / learning ----------------------------------------------------

    def act(self, s, deterministic: bool = False):
        entry = self.library.current
        if self.config.action_selection == "mpc":
            return mpc_act(entry.model, s, self.rng, self.config.cem(), reward_fn=self.reward_fn)
        return entry.policy.act(s, self.rng, deterministic=deterministic)

    def observe(self, s, a, r, s2, terminal: bool = False, truncated: bool = False,
                forced_context=None) -> StepReport:
        """Process one real transition (everything after acting in Algorithm 1).

        ``forced_context`` bypasses detection and switches to the given id;
        the zero-delay oracle uses it.
        """
        s, a, s2 = (np.asarray(v, dtype=float) for v in (s, a, s2))
        x = np.concatenate([s, a])
        y = np.concatenate([s2, [r]])
        preds = {e.z: e.model.predict(x) for e in self.library.entries}
        loglik = {str(k): float(diag_log_density(p.mean, p.var, y)) for k, p in preds.items()}
        disagreement = float(preds[self.z].disagreement)
        self._disagreements.append(disagreement)

        warm = self.warmup_active()
        if not warm:
            self.library.current.warmed_up = True
        event = None
        W = self.bank.W
        if forced_context is not None:
            if forced_context != self.z:
                event = self.switch_to(forced_context)
        elif not warm:
            gaussians = {k: DiagonalGaussian(p.mean, p.var) for k, p in preds.items()}
            self.bank, record = bank_update(self.bank, gaussians, y, self.detector, x=x)
            W = self.bank.W
            loglik[NEW] = record.loglik[NEW]
            decided = decide_context(self.bank, self.detector)
            if decided != self.z:
                event = self.switch_to(decided)
        W_report = {str(k): float(v) for k, v in W.items()}

        entry = self.library.current
        entry.buffer.add(s, a, r, s2, terminal)
        self._learn(entry)

        report = StepReport(self.t, self.z, self.K, a, float(r), s2, terminal, truncated,
                            W_report, loglik, warm, disagreement, event)
        self.t += 1
        return report

    def _learn(self, entry: LibraryEntry):
        c = self.config
        if self.t % c.update_interval == 0 and len(entry.buffer) >= c.model_batch_size:
            entry.model.train(c.model_train_steps, c.model_batch_size, self.rng)
            dyna_rollouts(entry.policy, entry.model, entry.buffer, self.model_buffer,
                          c.rollouts, self.rng)
        for _ in range(c.updates_per_step):
            optimize_step(entry.policy, entry.buffer, self.model_buffer, c.mix,
                          c.batch_size, self.rng)

    def step(self, s, env, forced_context=None):
        """Act in ``env`` from state ``s`` and learn from the outcome.

        With ``forced_context`` the agent switches *before* acting, which is
        what makes the oracle's detection delay exactly zero.
        """
        s = np.asarray(s, dtype=float)
        if s.shape != (self.obs_dim,):
            raise ConfigurationError(f"observation shape {s.shape} != ({self.obs_dim},)")
        event = None
        if forced_context is not None and forced_context != self.z:
            event = self.switch_to(forced_context)
        a = self.act(s)
        s2, r, terminal, truncated, info = env.step(a)
        report = self.observe(s, a, r, s2, terminal, truncated, forced_context)
        report.detection = report.detection or event
        report.info = info
        return a, report

    # -- persistence ------------------------------------------------------------

    def save_library(self, directory) -> Path:
        """Write per-context model/policy/buffer dumps plus ``manifest.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = {"version": LIBRARY_VERSION, "K": self.K, "z": self.z, "t": self.t,
                    "obs_dim": self.obs_dim, "act_dim": self.act_dim,
                    "config": self.config.to_dict(), "contexts": []}
        for e in self.library.entries:
            files = {"model": f"model_{e.z}.npz", "policy": f"policy_{e.z}.npz",
                     "buffer": f"buffer_{e.z}.npz"}
            e.model.save(directory / files["model"])
            e.policy.save(directory / files["policy"])
            data = e.buffer.contents()
            np.savez(directory / files["buffer"], **data._asdict())
            manifest["contexts"].append({"z": e.z, "created_at": e.created_at,
                                         "warmed_up": e.warmed_up, **files})
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return directory

    @classmethod
    def load_library(cls, directory, rng: np.random.Generator | None = None) -> "MBCDAgent":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        if manifest.get("version") != LIBRARY_VERSION:
            raise ValueError(f"unsupported library version {manifest.get('version')}")
        config = AgentConfig.from_dict(manifest["config"])
        agent = cls(manifest["obs_dim"], manifest["act_dim"], config, rng)
        agent.library.entries.clear()
        for item in manifest["contexts"]:
            model = ContextModel.load(directory / item["model"], agent.rng)
            model.opt.lr = config.model_lr
            with np.load(directory / item["buffer"]) as f:
                model.buffer = ReplayBuffer(model.obs_dim, model.act_dim, config.buffer_capacity)
                model.buffer.add_batch(f["s"], f["a"], f["r"], f["s2"], f["done"])
            policy = SacPolicy.load(directory / item["policy"])
            agent.library.entries.append(LibraryEntry(item["z"], model, policy, item["created_at"],
                                                      item.get("warmed_up", False)))
        agent.t = manifest["t"]
        agent.library.z = manifest["z"]
        agent.bank = CusumBank.create(agent.library.ids, agent.z)
        return agent
