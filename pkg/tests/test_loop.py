"""Tests for the collect-and-train loop and its variant dispatch."""

import numpy as np
import pytest

from oracles import binomial_3sigma

from oris import datasets, envs, gan, loop, nets, sac
from oris.data import ReplayBuffer, state_marginal
from oris.errors import ConfigError, ContractError
from oris.gan import GanPair, StateNormalizer
from oris.loop import EpochReport, OrisConfig

HP = sac.SacHparams(hidden=(16, 16), batch_off=16, batch_sim=16)


@pytest.fixture(scope="module")
def pend_random():
    return datasets.generate_dataset("pendulum", "random", episodes=2, seed=0)


@pytest.fixture(scope="module")
def tiny_gan(pend_random):
    hp = gan.GanHparams(z_dim=4, hidden=(16, 16), iterations=150, batch_size=64)
    pair, _ = gan.pretrain(state_marginal(pend_random), hp, np.random.default_rng(0))
    return pair


def rigged_gan(target, sigma=0.0, z_dim=2):
    """GanPair whose generator always emits `target` (before restart noise)."""
    target = np.asarray(target, dtype=np.float64)
    d = len(target)
    gen = nets.MlpNet.he_uniform([z_dim, 4, d], "relu", "tanh", seed=0)
    disc = nets.MlpNet.he_uniform([d, 4, 1], "relu", "sigmoid", seed=1)
    for net in (gen, disc):
        for W in net.weights:
            W[:] = 0.0
        for b in net.biases:
            b[:] = 0.0
    scale = 2.0 * np.max(np.abs(target)) + 1.0
    gen.biases[-1][:] = np.arctanh(target / scale)
    norm = StateNormalizer(np.zeros(d), np.ones(d))
    return GanPair(gen, disc, z_dim, norm, np.full(d, scale), sigma, 0.1, 1.0)


def make_agent(env_id="pendulum", seed=3):
    obs_dim, act_dim = envs.env_dims(env_id)
    return sac.SacAgent.create(obs_dim, act_dim, envs.ACTION_SCALES[env_id],
                               HP, seed)


def test_config_validation_and_json():
    with pytest.raises(ConfigError):
        OrisConfig(variant="h2o")
    with pytest.raises(ConfigError):
        OrisConfig(random_policy_prob=1.5)
    with pytest.raises(ConfigError):
        OrisConfig(rollout_count=0)
    with pytest.raises(ConfigError):
        OrisConfig(weight_mode="squash")
    cfg = OrisConfig(variant="naive_mix", epochs=7, rollout_horizon=42)
    assert OrisConfig.from_json(cfg.to_json()) == cfg


def test_weight_mode_resolution():
    resolved = {v: OrisConfig(variant=v).resolved_weight_mode()
                for v in loop.VARIANTS}
    assert resolved == {"oris": "gan", "no_restart": "gan",
                        "uniform_weight": "ones", "naive_mix": "none",
                        "sim_only_sac": "none", "bc": "none"}
    needs = {v: OrisConfig(variant=v).needs_gan() for v in loop.VARIANTS}
    assert needs == {"oris": True, "no_restart": True, "uniform_weight": True,
                     "naive_mix": False, "sim_only_sac": False, "bc": False}
    # explicit override beats the variant default
    assert OrisConfig(variant="oris", weight_mode="none").resolved_weight_mode() \
        == "none"
    assert not OrisConfig(variant="naive_mix", weight_mode="none").needs_gan()


def test_hybrid_policy_endpoints():
    agent = make_agent()
    env = envs.make_env(envs.EnvSpec.real("pendulum"))
    rng = np.random.default_rng(0)
    assert all(loop.hybrid_policy(agent, env, 1.0, rng)[1] for _ in range(20))
    assert not any(loop.hybrid_policy(agent, env, 0.0, rng)[1] for _ in range(20))

    # the p=0 branch serves the current stochastic policy
    policy, _ = loop.hybrid_policy(agent, env, 0.0, rng)
    obs = np.array([1.0, 0.0, 0.5])
    a = policy(obs, np.random.default_rng(7))
    want = sac.act(agent, obs, "stochastic", np.random.default_rng(7))
    np.testing.assert_array_equal(a, want)
    with pytest.raises(ContractError):
        loop.hybrid_policy(agent, env, -0.1, rng)


def test_hybrid_policy_binomial():
    agent = make_agent()
    env = envs.make_env(envs.EnvSpec.real("pendulum"))
    rng = np.random.default_rng(11)
    n, p = 10_000, 0.3
    frac = sum(loop.hybrid_policy(agent, env, p, rng)[1] for _ in range(n)) / n
    assert abs(frac - p) <= binomial_3sigma(p, n)


def test_collect_epoch_counts():
    agent = make_agent()
    env = envs.make_env(envs.EnvSpec.real("pendulum"))
    buf = ReplayBuffer(10_000, 3, 1)
    cfg = OrisConfig(variant="naive_mix", rollout_count=3, rollout_horizon=50,
                     epochs=1)
    stats = loop.collect_epoch(env, agent, cfg, buf, np.random.default_rng(0))
    assert stats.transitions == 150 and len(buf) == 150
    assert stats.invalid_restarts == 0
    assert stats.rollouts == 3


def test_collect_epoch_rho0_starts():
    agent = make_agent("pointgoal")
    env = envs.make_env(envs.EnvSpec.real("pointgoal"))
    buf = ReplayBuffer(10_000, 4, 2)
    cfg = OrisConfig(variant="no_restart", rollout_count=4, rollout_horizon=7,
                     epochs=1, random_policy_prob=1.0)
    stats = loop.collect_epoch(env, agent, cfg, buf, np.random.default_rng(1))
    assert stats.transitions == 28
    starts = np.stack([buf.get(i).s for i in range(0, 28, 7)])
    np.testing.assert_array_equal(starts[:, 2:], np.zeros((4, 2)))  # velocity 0
    assert np.all(starts[:, :2] >= -1.0) and np.all(starts[:, :2] <= -0.6)


def test_collect_epoch_gan_restarts():
    agent = make_agent("pointgoal")
    env = envs.make_env(envs.EnvSpec.real("pointgoal"))
    buf = ReplayBuffer(10_000, 4, 2)
    target = np.array([0.5, 0.25, 0.0, 0.0])
    cfg = OrisConfig(variant="oris", rollout_count=3, rollout_horizon=5, epochs=1)
    loop.collect_epoch(env, agent, cfg, buf, np.random.default_rng(2),
                       g=rigged_gan(target))
    starts = np.stack([buf.get(i).s for i in range(0, 15, 5)])
    np.testing.assert_allclose(starts, np.tile(target, (3, 1)), atol=1e-12)


def test_collect_epoch_invalid_restart_fallback():
    agent = make_agent("pendulum")
    env = envs.make_env(envs.EnvSpec.real("pendulum"))
    buf = ReplayBuffer(10_000, 3, 1)
    # (0, 0, 0) has zero norm on the circle components: always rejected
    bad = rigged_gan([0.0, 0.0, 0.0])
    cfg = OrisConfig(variant="oris", rollout_count=2, rollout_horizon=5, epochs=1)
    stats = loop.collect_epoch(env, agent, cfg, buf, np.random.default_rng(3), g=bad)
    assert stats.invalid_restarts == 2 * (cfg.restart_max_retries + 1)
    assert len(buf) == 10  # fell back to rho_0 and completed the rollouts

    strict = OrisConfig(variant="oris", rollout_count=2, rollout_horizon=5,
                        epochs=1, restart_fallback=False)
    with pytest.raises(ConfigError):
        loop.collect_epoch(env, agent, strict, buf, np.random.default_rng(3), g=bad)


def test_collect_epoch_requires_gan():
    agent = make_agent()
    env = envs.make_env(envs.EnvSpec.real("pendulum"))
    cfg = OrisConfig(variant="uniform_weight", epochs=1)
    with pytest.raises(ConfigError):
        loop.collect_epoch(env, agent, cfg, ReplayBuffer(10, 3, 1),
                           np.random.default_rng(0))


def test_epoch_report_validation():
    kw = dict(epoch=1, env_steps=10, transitions_collected=10,
              invalid_restart_count=0, eval_return_mean=-100.0,
              eval_return_std=1.0, critic_loss=0.5, actor_loss=0.1,
              temperature=0.2, mean_sim_weight=1.0)
    EpochReport(random_rollout_fraction=0.5, **kw)
    with pytest.raises(ContractError):
        EpochReport(random_rollout_fraction=1.5, **kw)
    with pytest.raises(ContractError):
        EpochReport(random_rollout_fraction=0.5,
                    **{**kw, "critic_loss": float("nan")})


def spec_pair(env_id="pendulum", gravity_scale=2.0):
    real = envs.EnvSpec.real(env_id)
    sim = envs.EnvSpec.sim(env_id, envs.DynamicsPerturbation(
        gravity_scale=gravity_scale))
    return real, sim


def test_train_minimal(pend_random):
    real, sim = spec_pair()
    cfg = OrisConfig(variant="naive_mix", rollout_horizon=1, rollout_count=1,
                     epochs=1, updates_per_epoch=1, eval_episodes=1)
    agent, reports = loop.train(real, sim, pend_random, cfg, HP, seed=0)
    assert len(reports) == 1
    r = reports[0]
    assert r.env_steps == 1 and r.transitions_collected == 1
    assert r.invalid_restart_count == 0
    assert np.isfinite(r.eval_return_mean)


def test_train_determinism(pend_random):
    real, sim = spec_pair()
    cfg = OrisConfig(variant="naive_mix", rollout_horizon=10, rollout_count=2,
                     epochs=2, updates_per_epoch=3, eval_episodes=1)
    a1, r1 = loop.train(real, sim, pend_random, cfg, HP, seed=42)
    a2, r2 = loop.train(real, sim, pend_random, cfg, HP, seed=42)
    assert r1 == r2
    np.testing.assert_array_equal(nets.get_flat_params(a1.actor),
                                  nets.get_flat_params(a2.actor))
    np.testing.assert_array_equal(nets.get_flat_params(a1.critic1),
                                  nets.get_flat_params(a2.critic1))


def test_train_uniform_weight_ones_equals_none(pend_random, tiny_gan):
    """Explicit all-ones weights and the weight-free path match bit-for-bit."""
    real, sim = spec_pair()
    base = dict(variant="uniform_weight", rollout_horizon=10, rollout_count=2,
                epochs=3, updates_per_epoch=4, eval_episodes=1)
    ones_cfg = OrisConfig(weight_mode="ones", **base)
    none_cfg = OrisConfig(weight_mode="none", **base)
    a1, r1 = loop.train(real, sim, pend_random, ones_cfg, HP, seed=5, g=tiny_gan)
    a2, r2 = loop.train(real, sim, pend_random, none_cfg, HP, seed=5, g=tiny_gan)
    assert r1 == r2
    for net in ("actor", "critic1", "critic2", "target1", "target2"):
        np.testing.assert_array_equal(nets.get_flat_params(getattr(a1, net)),
                                      nets.get_flat_params(getattr(a2, net)))
    assert a1.log_temperature == a2.log_temperature


def test_train_env_mismatch(pend_random):
    real, sim = spec_pair("pointgoal")
    with pytest.raises(ConfigError):
        loop.train(real, sim, pend_random, OrisConfig(variant="naive_mix"),
                   HP, seed=0)


def test_train_sim_only(pend_random):
    real, sim = spec_pair()
    cfg = OrisConfig(variant="sim_only_sac", rollout_horizon=10, rollout_count=2,
                     epochs=2, updates_per_epoch=3, eval_episodes=1)
    _, reports = loop.train(real, sim, pend_random, cfg, HP, seed=1)
    assert [r.mean_sim_weight for r in reports] == [1.0, 1.0]
    assert reports[-1].env_steps == 40


def test_train_oris_uses_discriminator_weights(pend_random):
    """With a rigged discriminator at D = 0.2 every sim weight is 0.6."""
    real, sim = spec_pair()
    g = rigged_gan([1.0, 0.0, 0.0])
    g.discriminator.biases[-1][:] = np.log(0.2 / 0.8)
    cfg = OrisConfig(variant="oris", rollout_horizon=5, rollout_count=2,
                     epochs=1, updates_per_epoch=2, eval_episodes=1)
    _, reports = loop.train(real, sim, pend_random, cfg, HP, seed=2, g=g)
    assert reports[0].mean_sim_weight == pytest.approx(0.6, abs=1e-12)


def test_train_bc_runs_without_simulator(pend_random):
    real, sim = spec_pair()
    cfg = OrisConfig(variant="bc", epochs=2, updates_per_epoch=20,
                     eval_episodes=1)
    _, reports = loop.train(real, sim, pend_random, cfg, HP, seed=0)
    assert [r.env_steps for r in reports] == [0, 0]
    assert reports[1].actor_loss < reports[0].actor_loss
