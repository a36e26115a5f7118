import math

import numpy as np
import pytest

from mbcd.agent import AgentConfig, MBCDAgent
from mbcd.changepoint import NEW
from mbcd.envs import ContextSchedule, DriftSpec, ScheduledEnv


def _config(**kw):
    base = dict(h=20.0, ensemble_size=2, model_hidden=(16,), model_train_steps=50,
                model_batch_size=32, update_interval=50, rollouts=20, policy_hidden=(16,),
                batch_size=16, warmup_steps=100, disagreement_threshold=math.inf)
    base.update(kw)
    return AgentConfig(**base)


def _agent(seed=0, **kw):
    return MBCDAgent(1, 1, _config(**kw), np.random.default_rng(seed))


def _drift_env(schedule, seed=0):
    contexts = {"calm": DriftSpec(drift=0.0), "windy": DriftSpec(drift=0.3)}
    return ScheduledEnv(contexts, schedule, np.random.default_rng(seed), episode_len=50)


def _run(agent, env, steps):
    s = env.reset()
    reports = []
    for _ in range(steps):
        _, rep = agent.step(s, env)
        reports.append(rep)
        s = env.reset() if rep.truncated or rep.terminal else rep.next_state
    return reports


def test_alpha_sets_threshold():
    cfg = AgentConfig(alpha=1e-43)
    assert 98.0 <= cfg.detector().h <= 100.0


def test_switch_to_self_is_noop_on_buffers():
    agent = _agent()
    agent.model_buffer.add(np.zeros(1), np.zeros(1), 0.0, np.zeros(1))
    event = agent.switch_to(1)
    assert event.selected == 1 and event.previous == 1 and not event.is_new
    assert len(agent.model_buffer) == 1


def test_switch_to_new_appends_model_and_copies_policy():
    agent = _agent()
    parent = agent.library.current.policy
    event = agent.switch_to(NEW)
    assert event.is_new and agent.K == 2 and agent.z == 2
    child = agent.library.current.policy
    np.testing.assert_array_equal(child.actor.params, parent.actor.params)
    np.testing.assert_array_equal(child.critic.params, parent.critic.params)
    child.actor.params += 1.0
    assert not np.allclose(child.actor.params, parent.actor.params)
    assert set(agent.bank.W) == {1, 2, NEW}
    assert all(v == 0.0 for v in agent.bank.W.values())


def test_switch_clears_model_buffer_and_statistics():
    agent = _agent()
    agent.switch_to(NEW)
    agent.model_buffer.add(np.zeros(1), np.zeros(1), 0.0, np.zeros(1))
    agent.bank.W[1] = 5.0
    agent.switch_to(1)
    assert len(agent.model_buffer) == 0
    assert all(v == 0.0 for v in agent.bank.W.values())


def test_invalid_switch_target():
    agent = _agent()
    for bad in (0, 2, "x"):
        with pytest.raises(KeyError):
            agent.switch_to(bad)


def test_inactive_context_parameters_untouched_during_excursion():
    agent = _agent()
    env = _drift_env(ContextSchedule.constant("calm"))
    _run(agent, env, 120)
    frozen = agent.library[1]
    model_before = frozen.model.net.params.copy()
    actor_before = frozen.policy.actor.params.copy()
    n_before = len(frozen.buffer)
    agent.switch_to(NEW)
    _run(agent, env, 120)
    agent.switch_to(1)
    np.testing.assert_array_equal(frozen.model.net.params, model_before)
    np.testing.assert_array_equal(frozen.policy.actor.params, actor_before)
    assert len(frozen.buffer) == n_before


def test_warmup_right_after_spawn():
    agent = _agent(warmup_steps=10)
    assert agent.warmup_active()
    agent.t = 10
    assert not agent.warmup_active()
    agent.switch_to(NEW)
    assert agent.warmup_active()


def test_no_warmup_when_disabled():
    agent = _agent(warmup_steps=0, disagreement_threshold=math.inf)
    assert not agent.warmup_active()


def test_disagreement_keeps_warmup_until_low():
    agent = _agent(warmup_steps=0, disagreement_threshold=0.1)
    agent._disagreements.extend([1.0, 1.0])
    assert agent.warmup_active()
    agent._disagreements.clear()
    agent._disagreements.extend([0.01, 0.02])
    assert not agent.warmup_active()


def test_warmup_latches_off():
    agent = _agent(warmup_steps=0, disagreement_threshold=0.1)
    env = _drift_env(ContextSchedule.constant("calm"))
    agent._disagreements.append(0.0)
    _run(agent, env, 1)
    assert agent.library.current.warmed_up
    agent._disagreements.extend([5.0] * 10)
    assert not agent.warmup_active()


def test_every_real_transition_lands_in_exactly_one_buffer():
    agent = _agent()
    env = _drift_env(ContextSchedule.from_segments([("calm", 150), ("windy", 150)]))
    _run(agent, env, 300)
    assert sum(len(e.buffer) for e in agent.library.entries) == 300


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_new_context_detected_after_dynamics_change(seed):
    # flipping the action gain changes the dynamics everywhere, unlike a drift
    # that can hide at the state bound
    agent = _agent(seed=seed, warmup_steps=300, shift="std", model_hidden=(32,), ensemble_size=3)
    contexts = {"a": DriftSpec(), "b": DriftSpec(gain=-0.5)}
    schedule = ContextSchedule.from_segments([("a", 500), ("b", 200)])
    env = ScheduledEnv(contexts, schedule, np.random.default_rng(seed), episode_len=50)
    reports = _run(agent, env, 700)
    detections = [r.detection for r in reports if r.detection is not None]
    assert len(detections) == 1
    assert detections[0].is_new and 500 <= detections[0].t < 650
    assert agent.K == 2


def test_forced_context_switches_before_acting():
    agent = _agent()
    agent.switch_to(NEW)
    agent.switch_to(1)
    env = _drift_env(ContextSchedule.constant("calm"))
    s = env.reset()
    _, rep = agent.step(s, env, forced_context=2)
    assert rep.z == 2 and rep.detection is not None and rep.detection.selected == 2
    assert len(agent.library[2].buffer) == 1 and len(agent.library[1].buffer) == 0


def test_observation_shape_checked():
    from mbcd.nn import ConfigurationError

    agent = _agent()
    env = _drift_env(ContextSchedule.constant("calm"))
    env.reset()
    with pytest.raises(ConfigurationError):
        agent.step(np.zeros(2), env)


def test_library_roundtrip(tmp_path):
    agent = _agent()
    env = _drift_env(ContextSchedule.constant("calm"))
    _run(agent, env, 60)
    agent.switch_to(NEW)
    _run(agent, env, 10)
    agent.save_library(tmp_path)
    loaded = MBCDAgent.load_library(tmp_path, np.random.default_rng(0))
    assert (loaded.K, loaded.z, loaded.t) == (agent.K, agent.z, agent.t)
    x = np.array([[0.2, -0.5]])
    for k in (1, 2):
        a, b = agent.library[k], loaded.library[k]
        np.testing.assert_allclose(a.model.predict(x).mean, b.model.predict(x).mean)
        assert len(a.buffer) == len(b.buffer)
        assert a.warmed_up == b.warmed_up
