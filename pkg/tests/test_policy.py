import logging

import numpy as np
import pytest

from conftest import central_difference, max_rel_error
from mbcd.dynamics import ContextModel
from mbcd.policy import SacPolicy, dyna_rollouts, optimize_step
from mbcd.replay import Batch, ReplayBuffer


def _batch(rng, n=6, obs=3, act=2):
    return Batch(rng.normal(size=(n, obs)), np.tanh(rng.normal(size=(n, act))),
                 rng.normal(size=n), rng.normal(size=(n, obs)),
                 (rng.uniform(size=n) < 0.3).astype(float))


def _small_policy(seed=0):
    rng = np.random.default_rng(seed)
    policy = SacPolicy(3, 2, rng, hidden=(8, 7), beta=0.3, gamma=0.9)
    policy.critic_target.params += 0.1 * rng.normal(size=policy.critic_target.params.shape)
    return policy, rng


def test_critic_gradient_matches_finite_differences():
    policy, rng = _small_policy()
    batch = _batch(rng)
    eps_next = rng.standard_normal((len(batch), 2))

    def loss():
        return policy.critic_loss_and_grad(batch, eps_next)[0]

    _, grads = policy.critic_loss_and_grad(batch, eps_next)
    assert max_rel_error(grads, central_difference(loss, policy.critic.params)) < 1e-4


def test_actor_gradient_matches_finite_differences():
    policy, rng = _small_policy(1)
    batch = _batch(rng)
    eps = rng.standard_normal((len(batch), 2))

    def loss():
        return policy.actor_loss_and_grad(batch, eps)[0]

    _, grads = policy.actor_loss_and_grad(batch, eps)
    assert max_rel_error(grads, central_difference(loss, policy.actor.params)) < 1e-4


def test_actions_in_bounds(rng):
    policy = SacPolicy(2, 3, rng)
    s = rng.normal(scale=10.0, size=(200, 2))
    for a in (policy.act(s, rng), policy.act(s, deterministic=True)):
        assert a.shape == (200, 3)
        assert np.all(np.abs(a) <= 1.0)


def test_log_prob_matches_numerical_density():
    # one-dimensional action: compare logp with the change-of-variables density
    rng = np.random.default_rng(2)
    policy = SacPolicy(1, 1, rng, hidden=(4,))
    s = np.array([[0.4]])
    mu, log_std, _, _ = policy._dist(s)
    eps = np.array([[0.7]])
    a, logp = policy.sample(s, eps)
    u = np.arctanh(a)
    std = np.exp(log_std)
    density_u = np.exp(-0.5 * ((u - mu) / std) ** 2) / (std * np.sqrt(2 * np.pi))
    expected = np.log(density_u / (1 - a ** 2))
    np.testing.assert_allclose(logp, expected[..., 0], rtol=1e-8)


def test_target_update_is_polyak(rng):
    policy = SacPolicy(2, 1, rng, tau=0.1)
    before = policy.critic_target.params.copy()
    policy.critic.params += 1.0
    policy.update_target()
    np.testing.assert_allclose(policy.critic_target.params,
                               0.9 * before + 0.1 * policy.critic.params)


def test_copy_is_independent(rng):
    policy = SacPolicy(2, 1, rng)
    clone = policy.copy()
    clone.actor.params += 1.0
    clone.critic.params += 1.0
    assert not np.allclose(clone.actor.params, policy.actor.params)
    assert not np.allclose(clone.critic.params, policy.critic.params)


def test_save_load_roundtrip(tmp_path, rng):
    policy = SacPolicy(2, 2, rng)
    policy.save(tmp_path / "p.npz")
    loaded = SacPolicy.load(tmp_path / "p.npz")
    s = rng.normal(size=(4, 2))
    np.testing.assert_array_equal(policy.act(s, deterministic=True), loaded.act(s, deterministic=True))
    np.testing.assert_array_equal(policy.critic_target.params, loaded.critic_target.params)


def _buffer(rng, n=300):
    buf = ReplayBuffer(1, 1, 1000)
    s = rng.uniform(-1, 1, size=(n, 1))
    a = rng.uniform(-1, 1, size=(n, 1))
    buf.add_batch(s, a, -np.abs(s + a)[:, 0], s + a)
    return buf


def test_dyna_rollouts_fill_model_buffer(rng):
    real = _buffer(rng)
    sink = ReplayBuffer(1, 1, 1000)
    model = ContextModel(1, 1, rng)
    policy = SacPolicy(1, 1, rng)
    assert dyna_rollouts(policy, model, real, sink, 50, rng) == 50
    assert len(sink) == 50
    assert dyna_rollouts(policy, model, real, sink, 0, rng) == 0
    with pytest.raises(ValueError):
        dyna_rollouts(policy, model, ReplayBuffer(1, 1, 10), sink, 5, rng)


def test_optimize_step_falls_back_to_real_data(rng, caplog):
    real, empty = _buffer(rng), ReplayBuffer(1, 1, 10)
    policy = SacPolicy(1, 1, rng)
    with caplog.at_level(logging.WARNING, logger="mbcd.policy"):
        optimize_step(policy, real, empty, 0.95, 32, rng)
        optimize_step(policy, real, empty, 0.95, 32, rng)
    assert sum("simulated buffer empty" in r.message for r in caplog.records) == 1
    with pytest.raises(ValueError):
        optimize_step(policy, ReplayBuffer(1, 1, 10), empty, 0.5, 32, rng)


def test_sac_learns_one_step_bandit():
    # reward -(a - 0.5)^2 with terminal transitions: the mean action should approach 0.5
    rng = np.random.default_rng(0)
    policy = SacPolicy(1, 1, rng, hidden=(32, 32), beta=0.01, lr=3e-3)
    buf = ReplayBuffer(1, 1, 5000)
    for _ in range(600):
        s = rng.uniform(-1, 1, size=(1, 1))
        a = policy.act(s, rng)
        r = -((a - 0.5) ** 2)[:, 0]
        buf.add_batch(s, a, r, s, np.ones(1))
        optimize_step(policy, buf, ReplayBuffer(1, 1, 1), 0.0, 64, rng)
    a = policy.act(rng.uniform(-1, 1, size=(50, 1)), deterministic=True)
    assert abs(a.mean() - 0.5) < 0.15
