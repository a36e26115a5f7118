"""Per-context probabilistic ensemble dynamics models.

Each member maps a normalised (state, action) input to a diagonal Gaussian over
the standardised joint target (next state, reward).  Member predictions are combined into a
single moment-matched Gaussian, which is the object used for detection
likelihoods and for sampling simulated transitions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gaussian import LOG_2PI, DiagonalGaussian, diag_log_density
from .nn import LOGVAR_MAX, LOGVAR_MIN, Adam, ConfigurationError, DenseNetwork, GaussianHead
from .replay import ReplayBuffer

CHECKPOINT_VERSION = 1


def ensemble_moments(member_means, member_vars):
    """Mean and variance of an equal-weight Gaussian mixture (axis 0 = members)."""
    mu = member_means.mean(axis=0)
    spread = ((member_means - mu) ** 2).mean(axis=0)
    return mu, member_vars.mean(axis=0) + spread


@dataclass
class EnsemblePrediction:
    mean: np.ndarray
    var: np.ndarray
    member_means: np.ndarray
    member_vars: np.ndarray

    def gaussian(self) -> DiagonalGaussian:
        return DiagonalGaussian(self.mean, self.var)

    @property
    def disagreement(self):
        """Variance of member means, averaged over output dimensions."""
        return ((self.member_means - self.mean) ** 2).mean(axis=0).mean(axis=-1)


class Normalizer:
    """Per-feature standardisation of model inputs."""

    def __init__(self, dim: int):
        self.mean = np.zeros(dim)
        self.std = np.ones(dim)

    def fit(self, X):
        X = np.asarray(X, dtype=float)
        self.mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.std = np.where(std < 1e-6, 1.0, std)

    def __call__(self, X):
        return (X - self.mean) / self.std


class ContextModel:
    """Bootstrap ensemble of Gaussian MLPs plus the context's experience D_z."""

    def __init__(self, obs_dim: int, act_dim: int, rng: np.random.Generator, z: int = 1,
                 ensemble_size: int = 5, hidden=(32, 32), lr: float = 1e-3,
                 predict_deltas: bool = True, lv_min: float = LOGVAR_MIN,
                 lv_max: float = LOGVAR_MAX, buffer_capacity: int = 100_000):
        if ensemble_size < 1:
            raise ConfigurationError("ensemble needs at least one member")
        self.obs_dim, self.act_dim, self.z = obs_dim, act_dim, z
        self.target_dim = obs_dim + 1
        self.ensemble_size = ensemble_size
        self.predict_deltas = predict_deltas
        self.net = DenseNetwork((obs_dim + act_dim, *hidden, 2 * self.target_dim), rng,
                                members=ensemble_size)
        self.head = GaussianHead(self.target_dim, lv_min, lv_max)
        self.normalizer = Normalizer(obs_dim + act_dim)
        self.target_normalizer = Normalizer(self.target_dim)
        self.opt = Adam(self.net.params.size, lr=lr)
        self.buffer = ReplayBuffer(obs_dim, act_dim, buffer_capacity)

    @property
    def input_dim(self) -> int:
        return self.obs_dim + self.act_dim

    # -- prediction -----------------------------------------------------------

    def _offset(self, x):
        """Added to a member's mean to express it as an absolute (s', r)."""
        if not self.predict_deltas:
            return 0.0
        s = x[..., :self.obs_dim]
        return np.concatenate([s, np.zeros(s.shape[:-1] + (1,))], axis=-1)

    def member_predictions(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise ConfigurationError(
                f"model input width {x.shape[-1]} != {self.input_dim}")
        out = self.net.forward(self.normalizer(x))
        mean, logvar, _ = self.head(out)
        tn = self.target_normalizer
        return mean * tn.std + tn.mean + self._offset(x), np.exp(logvar) * tn.std ** 2

    def predict(self, x) -> EnsemblePrediction:
        means, vars_ = self.member_predictions(x)
        mu, var = ensemble_moments(means, vars_)
        return EnsemblePrediction(mu, var, means, vars_)

    def log_likelihood(self, x, y):
        p = self.predict(x)
        return diag_log_density(p.mean, p.var, np.asarray(y, dtype=float))

    def disagreement(self, x):
        return self.predict(x).disagreement

    def sample_next(self, x, rng: np.random.Generator):
        """Draw (s', r) from the moment-matched predictive Gaussian."""
        p = self.predict(x)
        y = p.mean + np.sqrt(p.var) * rng.standard_normal(p.mean.shape)
        return y[..., :self.obs_dim], y[..., self.obs_dim]

    # -- training -------------------------------------------------------------

    def targets(self, s, r, s2):
        nxt = s2 - s if self.predict_deltas else s2
        return np.concatenate([nxt, np.asarray(r, dtype=float)[..., None]], axis=-1)

    def loss_and_grad(self, xn, targets):
        """Summed-over-members mean negative log-likelihood and its gradient.

        ``xn`` is normalised input, ``(members, B, in)``; ``targets`` is
        ``(members, B, d)`` in the network's (standardised) target space.
        """
        out, cache = self.net.forward_cached(xn)
        mean, logvar, dlv_draw = self.head(out)
        inv_var = np.exp(-logvar)
        diff = targets - mean
        sq = diff * diff * inv_var
        n = xn.shape[-2]
        per_member = 0.5 * np.sum(LOG_2PI + logvar + sq, axis=-1).mean(axis=-1)
        dmean = -diff * inv_var / n
        dlogvar = 0.5 * (1.0 - sq) / n
        grads, _ = self.net.backward(cache, self.head.backward(dmean, dlogvar, dlv_draw))
        return per_member, grads

    def train(self, steps: int, batch_size: int, rng: np.random.Generator):
        """Fit every member on its own bootstrap resample of D_z.

        Returns the per-step loss trace (mean over members).
        """
        n = len(self.buffer)
        if n == 0:
            raise ValueError("cannot train on an empty buffer")
        data = self.buffer.contents()
        X = np.concatenate([data.s, data.a], axis=-1)
        Y = self.targets(data.s, data.r, data.s2)
        self.normalizer.fit(X)
        self.target_normalizer.fit(Y)
        Xn = self.normalizer(X)
        Y = self.target_normalizer(Y)
        boot = rng.integers(0, n, size=(self.ensemble_size, n))
        rows = np.arange(self.ensemble_size)[:, None]
        batch = min(batch_size, n)
        trace = np.empty(steps)
        for i in range(steps):
            idx = boot[rows, rng.integers(0, n, size=(self.ensemble_size, batch))]
            loss, grads = self.loss_and_grad(Xn[idx], Y[idx])
            self.opt.step(self.net.params, grads)
            trace[i] = loss.mean()
        return trace

    # -- persistence ------------------------------------------------------------

    def metadata(self) -> dict:
        return {
            "kind": "context_model",
            "version": CHECKPOINT_VERSION,
            "z": self.z,
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "ensemble_size": self.ensemble_size,
            "sizes": list(self.net.sizes),
            "lv_min": self.head.lv_min,
            "lv_max": self.head.lv_max,
            "predict_deltas": self.predict_deltas,
        }

    def save(self, path) -> None:
        np.savez(path, meta=json.dumps(self.metadata()), params=self.net.params,
                 norm_mean=self.normalizer.mean, norm_std=self.normalizer.std,
                 target_mean=self.target_normalizer.mean, target_std=self.target_normalizer.std)

    @classmethod
    def load(cls, path, rng: np.random.Generator | None = None) -> "ContextModel":
        with np.load(path) as f:
            meta = json.loads(str(f["meta"]))
            if meta.get("version") != CHECKPOINT_VERSION or meta.get("kind") != "context_model":
                raise ValueError(f"unsupported checkpoint {Path(path).name}: {meta}")
            model = cls(meta["obs_dim"], meta["act_dim"], rng or np.random.default_rng(0),
                        z=meta["z"], ensemble_size=meta["ensemble_size"],
                        hidden=tuple(meta["sizes"][1:-1]), predict_deltas=meta["predict_deltas"],
                        lv_min=meta["lv_min"], lv_max=meta["lv_max"])
            model.net.load_params(f["params"])
            model.normalizer.mean = f["norm_mean"].copy()
            model.normalizer.std = f["norm_std"].copy()
            model.target_normalizer.mean = f["target_mean"].copy()
            model.target_normalizer.std = f["target_std"].copy()
        return model
