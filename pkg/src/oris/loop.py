"""Interleaved collect-and-train loop mixing offline data with simulator rollouts.

Each epoch performs C rollouts of horizon H in the (possibly perturbed)
simulator, then a block of actor-critic updates on mixed minibatches: offline
rows at implicit weight 1 next to simulator rows weighted by the frozen
discriminator. Where the rollouts restart from, and whether the weights are
live, depends on the variant; see OrisConfig.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import envs, gan as gan_mod, sac
from .data import Dataset, ReplayBuffer, PROVENANCE_SIM, state_marginal
from .errors import ConfigError, ContractError, InvalidStateError

VARIANTS = ("oris", "no_restart", "uniform_weight", "naive_mix",
            "sim_only_sac", "bc")

WEIGHT_MODES = ("auto", "gan", "ones", "none")

# which variants restart rollouts from the generator instead of rho_0
GAN_RESTART_VARIANTS = ("oris", "uniform_weight")


@dataclass(frozen=True)
class OrisConfig:
    variant: str = "oris"
    rollout_horizon: int = 100
    rollout_count: int = 10
    random_policy_prob: float = 0.2
    epochs: int = 500
    updates_per_epoch: int = 250
    replay_capacity: int = 200_000
    eval_episodes: int = 10
    restart_max_retries: int = 20
    restart_fallback: bool = True
    weight_mode: str = "auto"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}, know {VARIANTS}")
        if self.weight_mode not in WEIGHT_MODES:
            raise ConfigError(f"unknown weight_mode {self.weight_mode!r}")
        for k in ("rollout_horizon", "rollout_count", "epochs",
                  "updates_per_epoch", "eval_episodes"):
            if getattr(self, k) < 1:
                raise ConfigError(f"{k} must be >= 1")
        if not 0.0 <= self.random_policy_prob <= 1.0:
            raise ConfigError("random_policy_prob must be in [0, 1]")
        if self.restart_max_retries < 0 or self.replay_capacity < 1:
            raise ConfigError("bad restart_max_retries/replay_capacity")

    def gan_restarts(self) -> bool:
        return self.variant in GAN_RESTART_VARIANTS

    def resolved_weight_mode(self) -> str:
        """Simulator-row weighting: discriminator, all-ones, or none at all.

        "ones" exercises the weighting machinery with w = 1; "none" skips it
        entirely. The two must produce bit-identical updates.
        """
        if self.weight_mode != "auto":
            return self.weight_mode
        if self.variant in ("oris", "no_restart"):
            return "gan"
        if self.variant == "uniform_weight":
            return "ones"
        return "none"

    def needs_gan(self) -> bool:
        return self.gan_restarts() or self.resolved_weight_mode() == "gan"

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_json(cls, d: dict) -> "OrisConfig":
        return cls(**d)


@dataclass
class EpochReport:
    epoch: int
    env_steps: int  # cumulative simulator steps
    transitions_collected: int
    random_rollout_fraction: float
    invalid_restart_count: int
    eval_return_mean: float
    eval_return_std: float
    critic_loss: float
    actor_loss: float
    temperature: float
    mean_sim_weight: float

    def __post_init__(self):
        if not 0.0 <= self.random_rollout_fraction <= 1.0:
            raise ContractError("random_rollout_fraction outside [0, 1]")
        for k in self.__dataclass_fields__:
            if not np.isfinite(getattr(self, k)):
                raise ContractError(f"non-finite {k} in epoch report")


def hybrid_policy(agent: sac.SacAgent, env: envs.Env, p: float, rng):
    """Draw one rollout's action source: random with probability p, else pi.

    Returns (policy, used_random) so the caller can record the choice.
    """
    if not 0.0 <= p <= 1.0:
        raise ContractError("p must be in [0, 1]")
    if rng.random() < p:
        return envs.uniform_random_policy(env), True

    def policy(obs, rng_):
        return sac.act(agent, obs, "stochastic", rng_)

    return policy, False


@dataclass
class CollectStats:
    transitions: int = 0
    random_rollouts: int = 0
    rollouts: int = 0
    invalid_restarts: int = 0


def _draw_restart(env: envs.Env, g: gan_mod.GanPair, cfg: OrisConfig,
                  stats: CollectStats, rng) -> np.ndarray | None:
    """A generator state that the env accepts, or None for a rho_0 fallback."""
    consecutive = 0
    while True:
        s = gan_mod.sample_restart(g, rng)
        try:
            env.set_state(s)
            return s
        except InvalidStateError:
            stats.invalid_restarts += 1
            consecutive += 1
            if consecutive > cfg.restart_max_retries:
                if cfg.restart_fallback:
                    return None
                raise ConfigError(
                    f"{consecutive} consecutive restart states rejected by "
                    f"set_state and fallback disabled")


def collect_epoch(env: envs.Env, agent: sac.SacAgent, cfg: OrisConfig,
                  buffer: ReplayBuffer, rng,
                  g: gan_mod.GanPair | None = None) -> CollectStats:
    """C rollouts of horizon H in the simulator, appended to the buffer."""
    if cfg.gan_restarts() and g is None:
        raise ConfigError(f"variant {cfg.variant!r} needs a pretrained gan")
    stats = CollectStats()
    for _ in range(cfg.rollout_count):
        policy, used_random = hybrid_policy(agent, env, cfg.random_policy_prob, rng)
        stats.rollouts += 1
        stats.random_rollouts += int(used_random)
        start = _draw_restart(env, g, cfg, stats, rng) if cfg.gan_restarts() else None
        transitions = envs.rollout(env, policy, start, cfg.rollout_horizon, rng)
        buffer.extend(transitions)
        stats.transitions += len(transitions)
    return stats


def _sim_weights(mode: str, g, states: np.ndarray):
    if mode == "gan":
        return gan_mod.weight_of_batch(g, states)
    if mode == "ones":
        return np.ones(states.shape[0])
    return None


def _update_block(agent, offline, buffer, cfg, hp, g, rng):
    """One epoch's worth of critic/actor updates on mixed minibatches."""
    mode = cfg.resolved_weight_mode()
    sim_only = cfg.variant == "sim_only_sac"
    critic_losses, actor_losses, sim_weights = [], [], []
    for _ in range(cfg.updates_per_epoch):
        if sim_only:
            n = hp.batch_off + hp.batch_sim
            batch = sac.WeightedBatch.from_arrays(
                sim=buffer.sample_arrays(n, rng), sim_provenance=buffer.provenance)
        else:
            off = offline.sample_arrays(hp.batch_off, rng)
            sim = buffer.sample_arrays(hp.batch_sim, rng)
            batch = sac.WeightedBatch.from_arrays(
                off=off, sim=sim, sim_weights=_sim_weights(mode, g, sim[0]),
                off_provenance=offline.provenance,
                sim_provenance=buffer.provenance)
        creport = sac.critic_update(agent, batch, rng)
        areport = sac.actor_update(agent, batch.states(), rng)
        critic_losses.append(creport.loss)
        actor_losses.append(areport.loss)
        sim_weights.append(creport.mean_sim_weight)
    return (float(np.mean(critic_losses)), float(np.mean(actor_losses)),
            float(np.mean(sim_weights)))


def train(real_spec: envs.EnvSpec, sim_spec: envs.EnvSpec, offline: Dataset,
          cfg: OrisConfig, hp: sac.SacHparams, seed: int,
          g: gan_mod.GanPair | None = None,
          gan_hp: gan_mod.GanHparams | None = None,
          progress=None) -> tuple[sac.SacAgent, list[EpochReport]]:
    """Run one variant to completion; returns the agent and per-epoch reports.

    A pretrained GanPair may be passed in; otherwise one is fit to the offline
    state marginal when the variant calls for it. The real spec is touched
    only by evaluation.
    """
    env_id = offline.meta.get("env_id")
    if real_spec.env_id != env_id or sim_spec.env_id != env_id:
        raise ConfigError(
            f"dataset is {env_id!r} but specs are "
            f"{real_spec.env_id!r}/{sim_spec.env_id!r}")

    ss = np.random.SeedSequence(seed)
    rng_init, rng_gan, rng_collect, rng_update, rng_eval = \
        [np.random.default_rng(s) for s in ss.spawn(5)]

    obs_dim, act_dim = envs.env_dims(env_id)
    agent = sac.SacAgent.create(obs_dim, act_dim, envs.ACTION_SCALES[env_id],
                                hp, seed=int(rng_init.integers(2 ** 31)))
    if g is None and cfg.needs_gan():
        g, _ = gan_mod.pretrain(state_marginal(offline),
                                gan_hp or gan_mod.GanHparams(), rng_gan)

    sim_env = envs.make_env(sim_spec)
    buffer = ReplayBuffer(cfg.replay_capacity, obs_dim, act_dim,
                          provenance=PROVENANCE_SIM)
    bc = cfg.variant == "bc"
    env_steps = 0
    reports: list[EpochReport] = []
    for epoch in range(1, cfg.epochs + 1):
        if bc:
            stats = CollectStats()
            losses = []
            n = hp.batch_off + hp.batch_sim
            for _ in range(cfg.updates_per_epoch):
                s, a, *_ = offline.sample_arrays(n, rng_update)
                losses.append(sac.bc_update(agent, s, a))
            critic_loss, actor_loss = 0.0, float(np.mean(losses))
            mean_w = 1.0
        else:
            stats = collect_epoch(sim_env, agent, cfg, buffer, rng_collect, g)
            env_steps += stats.transitions
            critic_loss, actor_loss, mean_w = _update_block(
                agent, offline, buffer, cfg, hp, g, rng_update)

        det = lambda o, _r: sac.act(agent, o, "deterministic")
        ret, std, _ = envs.evaluate_policy(real_spec, det, cfg.eval_episodes,
                                           rng_eval)
        reports.append(EpochReport(
            epoch=epoch, env_steps=env_steps,
            transitions_collected=stats.transitions,
            random_rollout_fraction=(stats.random_rollouts / stats.rollouts
                                     if stats.rollouts else 0.0),
            invalid_restart_count=stats.invalid_restarts,
            eval_return_mean=ret, eval_return_std=std,
            critic_loss=critic_loss, actor_loss=actor_loss,
            temperature=agent.temperature, mean_sim_weight=mean_w))
        if progress is not None:
            progress(reports[-1])
    return agent, reports
