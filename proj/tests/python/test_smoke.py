"""Smoke tests for the python bindings."""

import math

import pytest

import mergerl


def test_temporal_weights_properties():
    alpha = mergerl.temporal_weights(9)
    assert len(alpha) == 10
    assert abs(sum(alpha) - 1.0) < 1e-12
    assert all(b > a for a, b in zip(alpha, alpha[1:]))
    assert alpha[-1] / alpha[0] == pytest.approx(math.exp(0.5), abs=1e-9)


def test_discounted_return():
    assert mergerl.discounted_return([1.0, 1.0, 1.0], 0.99) == pytest.approx(2.9701, abs=1e-12)
    assert mergerl.discounted_return([3.0, 9.0], 0.0) == 3.0


def test_scenario_generation_is_deterministic():
    cfg = mergerl.ScenarioConfig()
    a = mergerl.generate_scenario(cfg, 7)
    b = mergerl.generate_scenario(cfg, 7)
    assert len(a) == 16
    assert all(v.length == 5.0 for v in a)
    assert [v.kinematics.x for v in a] == [v.kinematics.x for v in b]
    assert [v.depart_time for v in a] == [v.depart_time for v in b]


def test_reward_composite_case():
    m = mergerl.StepMetrics()
    m.n_collisions = 1
    m.v_highway = 10.0
    m.v_merging = 5.0
    assert mergerl.total_reward(m, mergerl.RewardCoeffs()) == pytest.approx(-30.5, abs=1e-12)


def test_env_idm_episode_runs():
    cfg = mergerl.ScenarioConfig()
    cfg.n_agents = 4
    cfg.max_steps = 150
    cfg.depart_max = 5.0
    env = mergerl.Env(cfg, 9)
    env.reset(11)
    steps = 0
    total = 0.0
    while not env.world().done:
        reward, done, events = env.step(env.idm_actions())
        total += reward
        steps += 1
    assert steps > 0
    assert steps <= cfg.max_steps
    for vid in env.active_ids():
        assert len(env.observe(vid)) == 84


def test_observation_dimension():
    cfg = mergerl.ScenarioConfig()
    cfg.n_agents = 2
    cfg.depart_max = 0.5
    env = mergerl.Env(cfg, 9)
    env.reset(3)
    flat = env.flat_obs()
    assert len(flat) == 2 * 84
    gs = env.global_state()
    assert len(gs) == 5 * 2


def test_tiny_training_run_and_eval():
    cfg = mergerl.small_preset()
    cfg.episodes = 2
    cfg.batch_size = 8
    cfg.scenario.max_steps = 20
    result = mergerl.train(cfg)
    assert len(result.rows) == 2
    assert result.rows[0].episode == 0
    assert result.rows[0].epsilon == 1.0

    report = mergerl.evaluate_idm(cfg, seed_base=100, episodes=2)
    assert report.policy == "idm"
    assert len(report.episodes) == 2


def test_gradcheck_binding():
    results = mergerl.gradcheck(seed=5, configs=2)
    assert all(r["passed"] for r in results)
    names = {r["name"] for r in results}
    assert "multi_head_attention" in names
