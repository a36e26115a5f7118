"""Soft actor-critic with Dyna-style one-step model rollouts.

The actor outputs a Gaussian over a pre-squash action which ``tanh`` maps into
``[-1, 1]^act_dim``.  Two critics share one member-stacked network; their
slow-moving target copy is updated by Polyak averaging after every critic step.
The entropy coefficient ``beta`` is fixed.
"""

from __future__ import annotations

import json
import logging

import numpy as np

from .gaussian import LOG_2PI
from .nn import Adam, DenseNetwork, soft_clamp, softplus
from .replay import Batch, ReplayBuffer

logger = logging.getLogger(__name__)

LOG2 = float(np.log(2.0))
CHECKPOINT_VERSION = 1


def _tanh_log_jacobian(u):
    """log(1 - tanh(u)^2), stable for large |u|."""
    return 2.0 * (LOG2 - u - softplus(-2.0 * u))


class SacPolicy:
    def __init__(self, obs_dim: int, act_dim: int, rng: np.random.Generator,
                 hidden=(64, 64), gamma: float = 0.99, tau: float = 0.005,
                 beta: float = 0.2, lr: float = 3e-4, log_std_bounds=(-5.0, 2.0)):
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.gamma, self.tau, self.beta = gamma, tau, beta
        self.log_std_bounds = tuple(log_std_bounds)
        self.actor = DenseNetwork((obs_dim, *hidden, 2 * act_dim), rng)
        self.critic = DenseNetwork((obs_dim + act_dim, *hidden, 1), rng, members=2)
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor.params.size, lr=lr)
        self.critic_opt = Adam(self.critic.params.size, lr=lr)

    def copy(self) -> "SacPolicy":
        other = SacPolicy.__new__(SacPolicy)
        other.__dict__.update(self.__dict__)
        other.actor = self.actor.copy()
        other.critic = self.critic.copy()
        other.critic_target = self.critic_target.copy()
        other.actor_opt = self.actor_opt.copy()
        other.critic_opt = self.critic_opt.copy()
        return other

    # -- acting -------------------------------------------------------------

    def _dist(self, s):
        out, cache = self.actor.forward_cached(s)
        mu = out[..., :self.act_dim]
        log_std, dls = soft_clamp(out[..., self.act_dim:], *self.log_std_bounds)
        return mu, log_std, dls, cache

    def sample(self, s, eps):
        """Reparameterised action and its log-probability for fixed noise."""
        mu, log_std, _, _ = self._dist(s)
        u = mu + np.exp(log_std) * eps
        logp = np.sum(-0.5 * eps * eps - log_std - 0.5 * LOG_2PI
                      - _tanh_log_jacobian(u), axis=-1)
        return np.tanh(u), logp

    def act(self, s, rng: np.random.Generator | None = None, deterministic: bool = False):
        s = np.asarray(s, dtype=float)
        if deterministic:
            mu, _, _, _ = self._dist(s)
            return np.tanh(mu)
        eps = rng.standard_normal(s.shape[:-1] + (self.act_dim,))
        return self.sample(s, eps)[0]

    def q_values(self, s, a):
        """Both critics' estimates, shape ``(2, B)``."""
        return self.critic.forward(np.concatenate([s, a], axis=-1))[..., 0]

    def entropy_estimate(self, s, rng: np.random.Generator, n: int = 64):
        s = np.repeat(np.atleast_2d(s), n, axis=0)
        _, logp = self.sample(s, rng.standard_normal((s.shape[0], self.act_dim)))
        return float(-logp.mean())

    # -- losses -------------------------------------------------------------

    def soft_target(self, batch: Batch, eps_next):
        a2, logp2 = self.sample(batch.s2, eps_next)
        q_next = self.critic_target.forward(np.concatenate([batch.s2, a2], axis=-1))[..., 0]
        soft_v = q_next.min(axis=0) - self.beta * logp2
        return batch.r + self.gamma * (1.0 - batch.done) * soft_v

    def critic_loss_and_grad(self, batch: Batch, eps_next):
        """Sum over the two critics of the mean squared soft Bellman error."""
        y = self.soft_target(batch, eps_next)
        q, cache = self.critic.forward_cached(np.concatenate([batch.s, batch.a], axis=-1))
        diff = q[..., 0] - y
        n = diff.shape[-1]
        loss = float(np.sum(np.mean(diff * diff, axis=-1)))
        grads, _ = self.critic.backward(cache, (2.0 * diff / n)[..., None])
        return loss, grads

    def actor_loss_and_grad(self, batch: Batch, eps):
        """Mean over states of beta * log pi(a|s) - min_i q_i(s, a)."""
        s = batch.s
        n = s.shape[0]
        mu, log_std, dls, cache = self._dist(s)
        std = np.exp(log_std)
        u = mu + std * eps
        a = np.tanh(u)
        logp = np.sum(-0.5 * eps * eps - log_std - 0.5 * LOG_2PI - _tanh_log_jacobian(u), axis=-1)
        q, qcache = self.critic.forward_cached(np.concatenate([s, a], axis=-1))
        q = q[..., 0]
        pick = (q[1] < q[0]).astype(float)
        q_min = np.where(pick > 0, q[1], q[0])
        loss = float(np.mean(self.beta * logp - q_min))

        dq = np.stack([1.0 - pick, pick])[..., None] * (-1.0 / n)
        _, dx = self.critic.backward(qcache, dq, input_grad=True)
        da = dx[..., self.obs_dim:]
        du = da * (1.0 - a * a) + (self.beta / n) * 2.0 * a
        dlog_std = du * std * eps - self.beta / n
        grads, _ = self.actor.backward(cache, np.concatenate([du, dlog_std * dls], axis=-1))
        return loss, grads

    # -- updates ------------------------------------------------------------

    def update_target(self):
        self.critic_target.params *= 1.0 - self.tau
        self.critic_target.params += self.tau * self.critic.params

    def critic_update(self, batch: Batch, rng: np.random.Generator) -> float:
        loss, grads = self.critic_loss_and_grad(
            batch, rng.standard_normal((len(batch), self.act_dim)))
        self.critic_opt.step(self.critic.params, grads)
        self.update_target()
        return loss

    def actor_update(self, batch: Batch, rng: np.random.Generator) -> float:
        loss, grads = self.actor_loss_and_grad(
            batch, rng.standard_normal((len(batch), self.act_dim)))
        self.actor_opt.step(self.actor.params, grads)
        return loss

    # -- persistence ----------------------------------------------------------

    def metadata(self) -> dict:
        return {
            "kind": "sac_policy",
            "version": CHECKPOINT_VERSION,
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "hidden": list(self.actor.sizes[1:-1]),
            "gamma": self.gamma,
            "tau": self.tau,
            "beta": self.beta,
            "lr": self.actor_opt.lr,
            "log_std_bounds": list(self.log_std_bounds),
        }

    def save(self, path) -> None:
        np.savez(path, meta=json.dumps(self.metadata()), actor=self.actor.params,
                 critic=self.critic.params, critic_target=self.critic_target.params)

    @classmethod
    def load(cls, path) -> "SacPolicy":
        with np.load(path) as f:
            meta = json.loads(str(f["meta"]))
            if meta.get("version") != CHECKPOINT_VERSION or meta.get("kind") != "sac_policy":
                raise ValueError(f"unsupported policy checkpoint: {meta}")
            policy = cls(meta["obs_dim"], meta["act_dim"], np.random.default_rng(0),
                         hidden=tuple(meta["hidden"]), gamma=meta["gamma"], tau=meta["tau"],
                         beta=meta["beta"], lr=meta["lr"],
                         log_std_bounds=tuple(meta["log_std_bounds"]))
            policy.actor.load_params(f["actor"])
            policy.critic.load_params(f["critic"])
            policy.critic_target.load_params(f["critic_target"])
        return policy


def dyna_rollouts(policy: SacPolicy, model, source: ReplayBuffer, sink: ReplayBuffer,
                  count: int, rng: np.random.Generator) -> int:
    """Append ``count`` one-step simulated transitions to ``sink``.

    Start states are drawn uniformly from ``source``; actions come from the
    stochastic policy and outcomes from ``model.sample_next``.
    """
    if count <= 0:
        return 0
    if len(source) == 0:
        raise ValueError("rollouts need a non-empty source buffer")
    s = source.sample(count, rng).s
    a = policy.act(s, rng)
    s2, r = model.sample_next(np.concatenate([s, a], axis=-1), rng)
    sink.add_batch(s, a, r, s2)
    return count


def optimize_step(policy: SacPolicy, real: ReplayBuffer, simulated: ReplayBuffer,
                  mix: float, batch_size: int, rng: np.random.Generator):
    """One critic and one actor update on a real/simulated batch mixture.

    ``mix`` is the fraction drawn from ``simulated``; when that buffer is empty
    the whole batch comes from ``real``.
    """
    if len(real) == 0 and len(simulated) == 0:
        raise ValueError("both replay buffers are empty")
    n_sim = int(round(mix * batch_size)) if len(simulated) else 0
    if mix > 0 and len(simulated) == 0 and not getattr(simulated, "_fallback_warned", False):
        logger.warning("simulated buffer empty; training on real data only")
        simulated._fallback_warned = True
    if len(real) == 0:
        n_sim = batch_size
    parts = []
    if batch_size - n_sim > 0:
        parts.append(real.sample(batch_size - n_sim, rng))
    if n_sim > 0:
        parts.append(simulated.sample(n_sim, rng))
    batch = parts[0] if len(parts) == 1 else Batch.concat(*parts)
    critic_loss = policy.critic_update(batch, rng)
    actor_loss = policy.actor_update(batch, rng)
    return critic_loss, actor_loss
