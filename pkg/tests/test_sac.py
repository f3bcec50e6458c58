import copy
import math

import numpy as np
import pytest

from oris import nets, sac
from oris.data import Transition
from oris.errors import ContractError, NumericsError, UsageError

import oracles


def tiny_agent(seed=0, obs_dim=3, action_dim=1, scale=2.0, **hp_kw):
    hp = sac.SacHparams(hidden=(8, 8), **hp_kw)
    return sac.SacAgent.create(obs_dim, action_dim, scale, hp, seed)


def random_batch(rng, n_off, n_sim, obs_dim=3, act_dim=1, weights=None):
    def part(n):
        if n == 0:
            return None
        return (rng.normal(size=(n, obs_dim)), rng.uniform(-1, 1, size=(n, act_dim)),
                rng.normal(size=n), rng.normal(size=(n, obs_dim)),
                (rng.uniform(size=n) < 0.2).astype(np.float64))

    return sac.WeightedBatch.from_arrays(part(n_off), part(n_sim), weights)


def naive_log_prob(agent, S, noise):
    """Independent tanh-Gaussian log-density, naive formulas."""
    out = nets.forward_batch(agent.actor, S)
    A = agent.action_dim
    mu = out[:, :A]
    log_std = np.clip(out[:, A:], sac.LOG_STD_MIN, sac.LOG_STD_MAX)
    std = np.exp(log_std)
    u = mu + std * noise
    gauss = np.sum(-0.5 * ((u - mu) / std) ** 2 - np.log(std) - 0.5 * np.log(2 * np.pi), axis=1)
    jac = np.sum(np.log(agent.action_scale * (1.0 - np.tanh(u) ** 2)), axis=1)
    return gauss - jac


def test_log_prob_matches_naive_formula():
    agent = tiny_agent(seed=1)
    rng = np.random.default_rng(2)
    S = rng.normal(size=(32, 3))
    noise = rng.standard_normal((32, 1))
    sample = sac.sample_actions(agent, S, noise=noise)
    np.testing.assert_allclose(sample.log_prob, naive_log_prob(agent, S, noise),
                               rtol=1e-10, atol=1e-10)


def test_log_prob_is_a_normalized_density():
    # integrate exp(logp) over the 1-D action interval by quadrature
    agent = tiny_agent(seed=3)
    # shrink weights so sigma stays near 1 and mu near 0
    for w in agent.actor.weights:
        w *= 0.3
    rng = np.random.default_rng(4)
    s = rng.normal(size=3)
    out = nets.forward(agent.actor, s)
    mu, log_std = out[0], float(np.clip(out[1], sac.LOG_STD_MIN, sac.LOG_STD_MAX))
    std, scale = math.exp(log_std), agent.action_scale

    def density(a):
        u = np.arctanh(np.clip(a / scale, -1 + 1e-12, 1 - 1e-12))
        logn = -0.5 * ((u - mu) / std) ** 2 - math.log(std) - 0.5 * math.log(2 * math.pi)
        return np.exp(logn) / (scale * (1.0 - np.tanh(u) ** 2))

    total = oracles.gauss_legendre_integral(density, -scale + 1e-9, scale - 1e-9, n=400)
    assert total == pytest.approx(1.0, abs=1e-6)
    # and the packaged log_prob agrees with this density at sampled points
    noise = np.array([[0.3]])
    sample = sac.sample_actions(agent, s[None, :], noise=noise)
    assert sample.log_prob[0] == pytest.approx(
        float(np.log(density(sample.action[0, 0]))), abs=1e-8)


def test_act_modes_and_bounds():
    agent = tiny_agent(seed=5)
    rng = np.random.default_rng(6)
    s = rng.normal(size=3)
    det = sac.act(agent, s, "deterministic")
    out = nets.forward(agent.actor, s)
    assert det[0] == pytest.approx(2.0 * np.tanh(out[0]), abs=1e-12)
    a1 = sac.act(agent, s, "stochastic", np.random.default_rng(7))
    a2 = sac.act(agent, s, "stochastic", np.random.default_rng(7))
    a3 = sac.act(agent, s, "stochastic", np.random.default_rng(8))
    assert a1[0] == a2[0] and a1[0] != a3[0]
    for a in (det, a1, a3):
        assert abs(a[0]) <= agent.action_scale
    with pytest.raises(ContractError):
        sac.act(agent, s, "greedy")
    with pytest.raises(ContractError):
        sac.act(agent, np.zeros(4), "deterministic")
    with pytest.raises(ContractError):
        sac.act(agent, s, "stochastic")


def test_actor_gradients_match_finite_differences():
    rng = np.random.default_rng(9)
    agent = tiny_agent(seed=10, obs_dim=2, action_dim=1)
    for w in agent.actor.weights:
        w *= 0.5
    S = rng.normal(size=(4, 2))
    noise = rng.standard_normal((4, 1))

    # make sure no sample sits on the twin-critic tie or the log-std clip
    sample = sac.sample_actions(agent, S, noise=noise)
    x = np.concatenate([S, sample.action], axis=1)
    q1 = nets.forward_batch(agent.critic1, x)[:, 0]
    q2 = nets.forward_batch(agent.critic2, x)[:, 0]
    assert np.min(np.abs(q1 - q2)) > 1e-4
    assert np.all(sample.clip_mask == 1.0)

    loss0, grads, _ = sac.actor_loss_and_grads(agent, S, noise)
    p0 = nets.get_flat_params(agent.actor)

    def loss_of(flat):
        nets.set_flat_params(agent.actor, flat)
        out = nets.forward_batch(agent.actor, S)
        mu = out[:, :1]
        log_std = np.clip(out[:, 1:], sac.LOG_STD_MIN, sac.LOG_STD_MAX)
        u = mu + np.exp(log_std) * noise
        a = agent.action_scale * np.tanh(u)
        xx = np.concatenate([S, a], axis=1)
        qa = nets.forward_batch(agent.critic1, xx)[:, 0]
        qb = nets.forward_batch(agent.critic2, xx)[:, 0]
        lp = naive_log_prob(agent, S, noise)
        return float(np.mean(-np.minimum(qa, qb) + agent.temperature * lp))

    assert loss_of(p0) == pytest.approx(loss0, abs=1e-12)
    fd = oracles.fd_grad(loss_of, p0)
    nets.set_flat_params(agent.actor, p0)
    assert oracles.max_rel_err(nets.flatten_grads(grads), fd) < 1e-4


def test_actor_gradients_with_override_critic():
    rng = np.random.default_rng(11)
    agent = tiny_agent(seed=12, obs_dim=2, action_dim=2, scale=1.5)
    for w in agent.actor.weights:
        w *= 0.5
    S = rng.normal(size=(3, 2))
    noise = rng.standard_normal((3, 2))
    a_star = np.array([0.4, -0.3])

    def bowl(_S, A):
        return -np.sum((A - a_star) ** 2, axis=1), -2.0 * (A - a_star)

    loss0, grads, _ = sac.actor_loss_and_grads(agent, S, noise, q_and_grad=bowl)
    p0 = nets.get_flat_params(agent.actor)

    def loss_of(flat):
        nets.set_flat_params(agent.actor, flat)
        out = nets.forward_batch(agent.actor, S)
        mu, ks = out[:, :2], out[:, 2:]
        log_std = np.clip(ks, sac.LOG_STD_MIN, sac.LOG_STD_MAX)
        u = mu + np.exp(log_std) * noise
        a = agent.action_scale * np.tanh(u)
        q = -np.sum((a - a_star) ** 2, axis=1)
        lp = naive_log_prob(agent, S, noise)
        return float(np.mean(-q + agent.temperature * lp))

    assert loss_of(p0) == pytest.approx(loss0, abs=1e-12)
    fd = oracles.fd_grad(loss_of, p0)
    nets.set_flat_params(agent.actor, p0)
    assert oracles.max_rel_err(nets.flatten_grads(grads), fd) < 1e-4


def test_actor_update_converges_to_bowl_optimum():
    agent = tiny_agent(seed=13, obs_dim=2, action_dim=1, scale=2.0, actor_lr=1e-2)
    rng = np.random.default_rng(14)
    S = rng.normal(size=(16, 2))
    a_star = 0.8

    def bowl(_S, A):
        return -10.0 * (A[:, 0] - a_star) ** 2, -20.0 * (A - a_star)

    for _ in range(600):
        sac.actor_update(agent, S, rng, q_and_grad=bowl)
    acts = np.array([sac.act(agent, s, "deterministic")[0] for s in S])
    assert np.all(np.abs(acts - a_star) < 0.15)


def test_temperature_first_step_direction():
    # one dual step moves the temperature against the entropy gap
    def flat_q(_S, A):
        return np.zeros(A.shape[0]), np.zeros_like(A)

    for seed in (15, 16, 17):
        agent = tiny_agent(seed=seed)
        S = np.random.default_rng(seed + 100).normal(size=(32, 3))
        # mirror the update's noise draw to know the entropy it will see
        probe = sac.sample_actions(agent, S, np.random.default_rng(seed + 200))
        gap = float(np.mean(probe.log_prob)) + agent.target_entropy
        t0 = agent.temperature
        sac.actor_update(agent, S, np.random.default_rng(seed + 200), q_and_grad=flat_q)
        if gap > 0:  # entropy below target: temperature must rise
            assert agent.temperature > t0
        elif gap < 0:
            assert agent.temperature < t0


def test_bellman_targets_hand_cases():
    agent = tiny_agent(seed=17, obs_dim=2, action_dim=1)
    # rig targets to constants: Q_t1 = 1.5, Q_t2 = -0.5 for every input
    for tnet, b in ((agent.target1, 1.5), (agent.target2, -0.5)):
        for w in tnet.weights:
            w[...] = 0.0
        tnet.biases[-1][...] = b
    rng = np.random.default_rng(18)
    t_done = Transition([0.1, 0.2], [0.3], 2.0, [0.4, 0.5], True)
    assert sac.bellman_target(agent, t_done, rng) == pytest.approx(2.0, abs=1e-12)
    t_live = Transition([0.1, 0.2], [0.3], 2.0, [0.4, 0.5], False)
    # mirror the draw to recover log pi(a'|s')
    probe = np.random.default_rng(19)
    y = sac.bellman_target(agent, t_live, np.random.default_rng(19))
    sample = sac.sample_actions(agent, np.array([[0.4, 0.5]]), probe)
    expect = 2.0 + agent.hparams.gamma * (-0.5 - agent.temperature * sample.log_prob[0])
    assert y == pytest.approx(expect, abs=1e-12)


def test_critic_gradients_match_finite_differences():
    rng = np.random.default_rng(20)
    agent = tiny_agent(seed=21)
    batch = random_batch(rng, 5, 4, weights=rng.uniform(0.1, 1.0, size=4))
    targets = rng.normal(size=9)
    loss0, g1, _, _ = sac.critic_loss_and_grads(agent, batch, targets)
    p0 = nets.get_flat_params(agent.critic1)
    x = np.concatenate([batch.states(),
                        np.concatenate([batch.off_a, batch.sim_a])], axis=1)

    def loss_of(flat):
        nets.set_flat_params(agent.critic1, flat)
        q = nets.forward_batch(agent.critic1, x)[:, 0]
        e = q - targets
        c = batch.coefficients()
        return float(np.sum(c * e * e) / batch.n_total)

    fd = oracles.fd_grad(loss_of, p0)
    nets.set_flat_params(agent.critic1, p0)
    assert oracles.max_rel_err(nets.flatten_grads(g1), fd) < 1e-6


def test_weighted_loss_value_hand_case():
    agent = tiny_agent(seed=22)
    rng = np.random.default_rng(23)
    batch = random_batch(rng, 2, 2, weights=np.array([0.5, 2.0]))
    targets = np.zeros(4)
    loss, _, _, errs = sac.critic_loss_and_grads(agent, batch, targets)
    e1, e2 = errs
    expect = 0.5 * ((e1[0] ** 2 + e1[1] ** 2 + 0.5 * e1[2] ** 2 + 2.0 * e1[3] ** 2) / 4
                    + (e2[0] ** 2 + e2[1] ** 2 + 0.5 * e2[2] ** 2 + 2.0 * e2[3] ** 2) / 4)
    assert loss == pytest.approx(expect, rel=1e-12)


def test_zero_weight_rows_change_nothing_but_count():
    # duplicating a sim row at half weight, padded with a zero-weight row,
    # leaves the loss unchanged
    agent = tiny_agent(seed=24)
    rng = np.random.default_rng(25)
    base = random_batch(rng, 0, 1)
    row = (base.sim_s, base.sim_a, base.sim_r, base.sim_s2, base.sim_done)
    twice = tuple(np.concatenate([v, v]) for v in row)
    targets2 = np.zeros(2)
    half_plus_zero = sac.WeightedBatch.from_arrays(None, twice, np.array([0.5, 0.0]))
    quarters = sac.WeightedBatch.from_arrays(None, twice, np.array([0.25, 0.25]))
    l1, _, _, _ = sac.critic_loss_and_grads(agent, half_plus_zero, targets2)
    l2, _, _, _ = sac.critic_loss_and_grads(agent, quarters, targets2)
    assert l1 == pytest.approx(l2, rel=1e-14)


def test_unit_weight_update_equals_pooled_unweighted_update():
    # the weighted path with w = 1 must match a from-scratch pooled MSE update
    agent = tiny_agent(seed=26)
    clone = copy.deepcopy(agent)
    rng = np.random.default_rng(27)
    batch = random_batch(rng, 6, 6)  # weights default to ones
    sac.critic_update(agent, batch, np.random.default_rng(28))

    # reference: concatenate everything, single mean-squared loss
    S2 = np.concatenate([batch.off_s2, batch.sim_s2])
    R = np.concatenate([batch.off_r, batch.sim_r])
    D = np.concatenate([batch.off_done, batch.sim_done])
    ref_rng = np.random.default_rng(28)
    sample = sac.sample_actions(clone, S2, ref_rng)
    x2 = np.concatenate([S2, sample.action], axis=1)
    qt = np.minimum(nets.forward_batch(clone.target1, x2)[:, 0],
                    nets.forward_batch(clone.target2, x2)[:, 0])
    y = R + (1.0 - D) * clone.hparams.gamma * (qt - clone.temperature * sample.log_prob)
    x = np.concatenate([np.concatenate([batch.off_s, batch.sim_s]),
                        np.concatenate([batch.off_a, batch.sim_a])], axis=1)
    n = x.shape[0]
    for critic, opt in ((clone.critic1, clone.opt_critic1), (clone.critic2, clone.opt_critic2)):
        q = nets.forward_batch(critic, x)[:, 0]
        e = q - y
        g = nets.backward_batch(critic, (2.0 * e / n)[:, None])
        nets.adam_step(critic, g, opt)
    nets.soft_update(clone.target1, clone.critic1, clone.hparams.tau)
    nets.soft_update(clone.target2, clone.critic2, clone.hparams.tau)

    for name in ("critic1", "critic2", "target1", "target2"):
        a = nets.get_flat_params(getattr(agent, name))
        b = nets.get_flat_params(getattr(clone, name))
        assert np.max(np.abs(a - b)) < 1e-12


def test_critic_update_provenance_enforced():
    agent = tiny_agent(seed=29)
    rng = np.random.default_rng(30)
    batch = random_batch(rng, 3, 3)
    batch.sim_provenance = "offline"
    with pytest.raises(UsageError):
        sac.critic_update(agent, batch, rng)
    # single-source batches carry their tag without the cross-check
    solo = random_batch(rng, 0, 4)
    solo.off_provenance = "online_real"
    sac.critic_update(agent, solo, rng)


def test_critic_update_reports_nonfinite_target_row():
    agent = tiny_agent(seed=31)
    agent.target1.biases[-1][...] = 1e308
    agent.target2.biases[-1][...] = 1e308
    rng = np.random.default_rng(32)
    batch = random_batch(rng, 2, 2)
    with pytest.raises(NumericsError) as exc:
        sac.critic_update(agent, batch, rng)
    assert "row" in str(exc.value)


def test_weighted_batch_validation():
    rng = np.random.default_rng(33)
    with pytest.raises(ContractError):
        sac.WeightedBatch.from_arrays(None, None)
    sim = (rng.normal(size=(3, 2)), rng.normal(size=(3, 1)), rng.normal(size=3),
           rng.normal(size=(3, 2)), np.zeros(3))
    with pytest.raises(ContractError):
        sac.WeightedBatch.from_arrays(None, sim, np.array([1.0, 1.0]))
    with pytest.raises(ContractError):
        sac.WeightedBatch.from_arrays(None, sim, np.array([1.0, -0.1, 1.0]))
    with pytest.raises(ContractError):
        sac.WeightedBatch.from_arrays(None, sim, np.array([1.0, np.nan, 1.0]))
    b = sac.WeightedBatch.from_arrays(None, sim)
    np.testing.assert_array_equal(b.coefficients(), np.ones(3))
    assert b.n_off == 0 and b.n_sim == 3 and b.n_total == 3
    ts = [Transition([0.0, 0.0], [0.0], 1.0, [0.0, 0.0], False)]
    mixed = sac.WeightedBatch.from_transitions(ts, ts, np.array([0.7]))
    assert mixed.n_off == 1 and mixed.n_sim == 1
    np.testing.assert_array_equal(mixed.coefficients(), [1.0, 0.7])


def test_bc_update_gradients_and_progress():
    rng = np.random.default_rng(34)
    agent = tiny_agent(seed=35, obs_dim=2, action_dim=1, actor_lr=3e-3)
    S = rng.normal(size=(12, 2))
    A_target = np.clip(0.9 * np.tanh(S[:, :1]), -1.9, 1.9)

    # finite-difference check of one step's gradient
    p0 = nets.get_flat_params(agent.actor)
    out = nets.forward_batch(agent.actor, S)
    mu = out[:, :1]
    e = agent.action_scale * np.tanh(mu) - A_target
    g_mu = (2.0 / 12) * e * agent.action_scale * (1.0 - np.tanh(mu) ** 2)
    grads = nets.backward_batch(agent.actor, np.concatenate([g_mu, np.zeros_like(g_mu)], axis=1))

    def loss_of(flat):
        nets.set_flat_params(agent.actor, flat)
        out = nets.forward_batch(agent.actor, S)
        a = agent.action_scale * np.tanh(out[:, :1])
        return float(np.sum((a - A_target) ** 2) / 12)

    fd = oracles.fd_grad(loss_of, p0)
    nets.set_flat_params(agent.actor, p0)
    assert oracles.max_rel_err(nets.flatten_grads(grads), fd) < 1e-5

    losses = [sac.bc_update(agent, S, A_target) for _ in range(400)]
    assert losses[-1] < 0.05 * losses[0]


def test_agent_save_load_roundtrip(tmp_path):
    agent = tiny_agent(seed=36)
    rng = np.random.default_rng(37)
    batch = random_batch(rng, 4, 4)
    sac.critic_update(agent, batch, rng)
    sac.actor_update(agent, batch.states(), rng)
    sac.save_agent(agent, tmp_path / "agent")
    loaded = sac.load_agent(tmp_path / "agent")
    for name in ("actor", "critic1", "critic2", "target1", "target2"):
        np.testing.assert_array_equal(nets.get_flat_params(getattr(agent, name)),
                                      nets.get_flat_params(getattr(loaded, name)))
    assert loaded.log_temperature == agent.log_temperature
    assert loaded.action_scale == agent.action_scale
    assert loaded.update_count == agent.update_count
    s = rng.normal(size=3)
    np.testing.assert_array_equal(sac.act(agent, s, "deterministic"),
                                  sac.act(loaded, s, "deterministic"))
    with pytest.raises((ContractError, FileNotFoundError)):
        sac.load_agent(tmp_path / "nope")


def test_agent_create_defaults_and_validation():
    agent = tiny_agent(seed=38, obs_dim=4, action_dim=2)
    assert agent.target_entropy == -2.0
    np.testing.assert_array_equal(nets.get_flat_params(agent.critic1),
                                  nets.get_flat_params(agent.target1))
    assert agent.actor.out_dim == 4
    assert agent.critic1.in_dim == 6
    with pytest.raises(ContractError):
        sac.SacAgent.create(0, 1, 1.0, sac.SacHparams(), 0)
    with pytest.raises(ContractError):
        sac.SacHparams(gamma=1.5)
    with pytest.raises(ContractError):
        sac.SacHparams(init_temperature=0.0)


def test_updates_are_deterministic_given_seed():
    def run():
        agent = tiny_agent(seed=39)
        rng = np.random.default_rng(40)
        for _ in range(5):
            batch = random_batch(rng, 4, 4, weights=np.full(4, 0.6))
            sac.critic_update(agent, batch, rng)
            sac.actor_update(agent, batch.states(), rng)
        return np.concatenate([nets.get_flat_params(agent.actor),
                               nets.get_flat_params(agent.critic1),
                               [agent.log_temperature]])

    np.testing.assert_array_equal(run(), run())
