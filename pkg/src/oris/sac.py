"""Soft actor-critic on the dense-net engine, with a two-source weighted critic loss.

The critic regresses both an offline batch (unit weight) and a simulator batch
(per-sample weights) onto shared soft Bellman targets; the actor ascends the
min of the twin critics with entropy regularization; the temperature follows
the usual dual update toward a target entropy.

All update functions consume a Generator and draw in a fixed order, so a run
is reproducible from its seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json
import math
import os

import numpy as np

from . import nets
from .data import (PROVENANCE_OFFLINE, PROVENANCE_SIM, Transition)
from .errors import ContractError, NumericsError, UsageError

AGENT_FORMAT = "oris-sac"
AGENT_VERSION = 1

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0


@dataclass(frozen=True)
class SacHparams:
    hidden: tuple = (256, 256)
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    temperature_lr: float = 3e-4
    gamma: float = 0.99
    tau: float = 0.005
    init_temperature: float = 0.2
    target_entropy: float | None = None  # None -> -action_dim
    batch_off: int = 128
    batch_sim: int = 128

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0 or not 0.0 < self.tau <= 1.0:
            raise ContractError(f"bad gamma/tau in {self}")
        if self.init_temperature <= 0.0:
            raise ContractError("init_temperature must be positive")
        if self.batch_off < 1 or self.batch_sim < 1:
            raise ContractError("batch sizes must be positive")

    def to_json(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SacHparams":
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(int(h) for h in d["hidden"])
        return cls(**d)


@dataclass
class SacAgent:
    actor: nets.MlpNet
    critic1: nets.MlpNet
    critic2: nets.MlpNet
    target1: nets.MlpNet
    target2: nets.MlpNet
    log_temperature: float
    target_entropy: float
    action_scale: float
    hparams: SacHparams
    opt_actor: nets.AdamState
    opt_critic1: nets.AdamState
    opt_critic2: nets.AdamState
    opt_temperature: nets.ScalarAdam
    update_count: int = 0

    @property
    def obs_dim(self) -> int:
        return self.actor.in_dim

    @property
    def action_dim(self) -> int:
        return self.actor.out_dim // 2

    @property
    def temperature(self) -> float:
        return math.exp(self.log_temperature)

    @classmethod
    def create(cls, obs_dim: int, action_dim: int, action_scale: float,
               hparams: SacHparams, seed: int) -> "SacAgent":
        if obs_dim < 1 or action_dim < 1 or action_scale <= 0.0:
            raise ContractError("bad agent dimensions")
        seeds = np.random.default_rng(seed).integers(2 ** 31, size=3)
        actor = nets.MlpNet.he_uniform([obs_dim, *hparams.hidden, 2 * action_dim],
                                       seed=int(seeds[0]))
        critic1 = nets.MlpNet.he_uniform([obs_dim + action_dim, *hparams.hidden, 1],
                                         seed=int(seeds[1]))
        critic2 = nets.MlpNet.he_uniform([obs_dim + action_dim, *hparams.hidden, 1],
                                         seed=int(seeds[2]))
        target1 = nets.clone_net(critic1)
        target2 = nets.clone_net(critic2)
        te = hparams.target_entropy if hparams.target_entropy is not None else -float(action_dim)
        return cls(
            actor, critic1, critic2, target1, target2,
            log_temperature=math.log(hparams.init_temperature),
            target_entropy=te, action_scale=float(action_scale), hparams=hparams,
            opt_actor=nets.AdamState.for_net(actor, hparams.actor_lr),
            opt_critic1=nets.AdamState.for_net(critic1, hparams.critic_lr),
            opt_critic2=nets.AdamState.for_net(critic2, hparams.critic_lr),
            opt_temperature=nets.ScalarAdam(hparams.temperature_lr),
        )


@dataclass
class ActorSample:
    """One reparameterized draw per row: a = scale * tanh(mu + sigma * noise)."""

    action: np.ndarray
    u: np.ndarray
    log_prob: np.ndarray
    mu: np.ndarray
    log_std: np.ndarray
    noise: np.ndarray
    clip_mask: np.ndarray  # 1 where the raw log-std head was inside the clip range


def sample_actions(agent: SacAgent, S: np.ndarray, rng=None, noise=None) -> ActorSample:
    """Draw actions for a state batch. Consumes one standard_normal((n, A)) from rng."""
    S = np.asarray(S, dtype=np.float64)
    out = nets.forward_batch(agent.actor, S)
    A = agent.action_dim
    mu, kappa = out[:, :A], out[:, A:]
    log_std = np.clip(kappa, LOG_STD_MIN, LOG_STD_MAX)
    clip_mask = ((kappa > LOG_STD_MIN) & (kappa < LOG_STD_MAX)).astype(np.float64)
    std = np.exp(log_std)
    if noise is None:
        noise = rng.standard_normal((S.shape[0], A))
    u = mu + std * noise
    tanh_u = np.tanh(u)
    action = agent.action_scale * tanh_u
    # log N(u; mu, std) minus the tanh-and-scale change of variables,
    # with log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
    log_prob = np.sum(
        -0.5 * noise ** 2 - log_std - 0.5 * np.log(2.0 * np.pi)
        - math.log(agent.action_scale)
        - 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u)),
        axis=1)
    return ActorSample(action, u, log_prob, mu, log_std, noise, clip_mask)


def act(agent: SacAgent, state: np.ndarray, mode: str, rng=None) -> np.ndarray:
    """Single-state policy query. mode is "stochastic" or "deterministic"."""
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (agent.obs_dim,):
        raise ContractError(f"state has shape {state.shape}, want ({agent.obs_dim},)")
    if mode == "deterministic":
        out = nets.forward(agent.actor, state)
        return agent.action_scale * np.tanh(out[:agent.action_dim])
    if mode != "stochastic":
        raise ContractError(f"unknown mode {mode!r}")
    if rng is None:
        raise ContractError("stochastic act needs an rng")
    return sample_actions(agent, state[None, :], rng).action[0]


@dataclass
class WeightedBatch:
    """Offline rows (implicit weight 1) and simulator rows with explicit weights."""

    off_s: np.ndarray
    off_a: np.ndarray
    off_r: np.ndarray
    off_s2: np.ndarray
    off_done: np.ndarray
    sim_s: np.ndarray
    sim_a: np.ndarray
    sim_r: np.ndarray
    sim_s2: np.ndarray
    sim_done: np.ndarray
    sim_w: np.ndarray
    off_provenance: str = PROVENANCE_OFFLINE
    sim_provenance: str = PROVENANCE_SIM

    def __post_init__(self):
        if self.n_off + self.n_sim < 1:
            raise ContractError("empty weighted batch")
        if self.sim_w.shape != (self.n_sim,):
            raise ContractError("sim_w length does not match sim batch")
        if self.n_sim and (not np.all(np.isfinite(self.sim_w)) or np.any(self.sim_w < 0)):
            raise ContractError("sim weights must be finite and non-negative")

    @property
    def n_off(self) -> int:
        return self.off_s.shape[0]

    @property
    def n_sim(self) -> int:
        return self.sim_s.shape[0]

    @property
    def n_total(self) -> int:
        return self.n_off + self.n_sim

    @staticmethod
    def _empty(obs_dim: int, act_dim: int):
        return (np.zeros((0, obs_dim)), np.zeros((0, act_dim)), np.zeros(0),
                np.zeros((0, obs_dim)), np.zeros(0))

    @classmethod
    def from_arrays(cls, off=None, sim=None, sim_weights=None,
                    off_provenance=PROVENANCE_OFFLINE,
                    sim_provenance=PROVENANCE_SIM) -> "WeightedBatch":
        if off is None and sim is None:
            raise ContractError("need at least one of off/sim")
        ref = off if off is not None else sim
        obs_dim, act_dim = ref[0].shape[1], ref[1].shape[1]
        if off is None:
            off = cls._empty(obs_dim, act_dim)
        if sim is None:
            sim = cls._empty(obs_dim, act_dim)
        if sim_weights is None:
            sim_weights = np.ones(sim[0].shape[0])
        return cls(*[np.asarray(x, dtype=np.float64) for x in off],
                   *[np.asarray(x, dtype=np.float64) for x in sim],
                   np.asarray(sim_weights, dtype=np.float64),
                   off_provenance, sim_provenance)

    @classmethod
    def from_transitions(cls, off: list[Transition], sim: list[Transition],
                         sim_weights=None, **kw) -> "WeightedBatch":
        def stack(ts):
            if not ts:
                return None
            return (np.stack([t.s for t in ts]), np.stack([t.a for t in ts]),
                    np.array([t.r for t in ts]), np.stack([t.s_next for t in ts]),
                    np.array([float(t.done) for t in ts]))

        return cls.from_arrays(stack(off), stack(sim), sim_weights, **kw)

    def states(self) -> np.ndarray:
        return np.concatenate([self.off_s, self.sim_s], axis=0)

    def coefficients(self) -> np.ndarray:
        return np.concatenate([np.ones(self.n_off), self.sim_w])


def bellman_targets(agent: SacAgent, S2, R, DONE, rng) -> np.ndarray:
    """Soft targets y = r + (1 - done) gamma (min_k Q_target_k(s', a') - temp log pi(a'|s'))."""
    sample = sample_actions(agent, S2, rng)
    x2 = np.concatenate([np.asarray(S2, dtype=np.float64), sample.action], axis=1)
    q1 = nets.forward_batch(agent.target1, x2)[:, 0]
    q2 = nets.forward_batch(agent.target2, x2)[:, 0]
    soft_q = np.minimum(q1, q2) - agent.temperature * sample.log_prob
    return np.asarray(R, dtype=np.float64) + (1.0 - np.asarray(DONE, dtype=np.float64)) \
        * agent.hparams.gamma * soft_q


def bellman_target(agent: SacAgent, t: Transition, rng) -> float:
    return float(bellman_targets(agent, t.s_next[None, :], np.array([t.r]),
                                 np.array([float(t.done)]), rng)[0])


def critic_loss_and_grads(agent: SacAgent, batch: WeightedBatch, targets: np.ndarray):
    """Weighted squared Bellman error, normalized by total row count.

    loss_k = (sum_off e_k^2 + sum_sim w e_k^2) / (n_off + n_sim). Returns
    (mean loss over the twin critics, grads1, grads2, pooled TD errors).
    """
    S = batch.states()
    A = np.concatenate([batch.off_a, batch.sim_a], axis=0)
    x = np.concatenate([S, A], axis=1)
    c = batch.coefficients()
    n = batch.n_total
    losses, grads, errs = [], [], []
    for critic in (agent.critic1, agent.critic2):
        q = nets.forward_batch(critic, x)[:, 0]
        e = q - targets
        bad = np.flatnonzero(~np.isfinite(e) | (np.abs(e) > 1e150))
        if bad.size:
            raise NumericsError(f"non-finite critic error at batch row {int(bad[0])}")
        losses.append(float(np.sum(c * e * e) / n))
        grads.append(nets.backward_batch(critic, (2.0 * c * e / n)[:, None]))
        errs.append(e)
    return 0.5 * (losses[0] + losses[1]), grads[0], grads[1], errs


@dataclass
class CriticReport:
    loss: float
    target_mean: float
    mean_sim_weight: float


def critic_update(agent: SacAgent, batch: WeightedBatch, rng) -> CriticReport:
    """One weighted twin-critic step plus target soft updates.

    Draw order from rng: one standard_normal((n_total, A)) for the target
    policy actions. Mixed batches must carry offline/sim provenance tags.
    """
    if batch.n_off and batch.n_sim:
        if batch.off_provenance != PROVENANCE_OFFLINE or batch.sim_provenance != PROVENANCE_SIM:
            raise UsageError(
                f"mixed batch with provenance ({batch.off_provenance!r}, "
                f"{batch.sim_provenance!r}); expected ({PROVENANCE_OFFLINE!r}, {PROVENANCE_SIM!r})")
    S2 = np.concatenate([batch.off_s2, batch.sim_s2], axis=0)
    R = np.concatenate([batch.off_r, batch.sim_r])
    DONE = np.concatenate([batch.off_done, batch.sim_done])
    y = bellman_targets(agent, S2, R, DONE, rng)
    bad = np.flatnonzero(~np.isfinite(y))
    if bad.size:
        raise NumericsError(f"non-finite Bellman target at batch row {int(bad[0])}")
    loss, g1, g2, errs = critic_loss_and_grads(agent, batch, y)
    nets.adam_step(agent.critic1, g1, agent.opt_critic1)
    nets.adam_step(agent.critic2, g2, agent.opt_critic2)
    nets.soft_update(agent.target1, agent.critic1, agent.hparams.tau)
    nets.soft_update(agent.target2, agent.critic2, agent.hparams.tau)
    agent.update_count += 1
    mean_w = float(np.mean(batch.sim_w)) if batch.n_sim else 1.0
    return CriticReport(loss=loss, target_mean=float(np.mean(y)), mean_sim_weight=mean_w)


def actor_loss_and_grads(agent: SacAgent, S: np.ndarray, noise: np.ndarray,
                         q_and_grad=None):
    """Entropy-regularized policy loss mean(-min_k Q_k(s, a) + temp * log pi(a|s))
    under the reparameterized draw a = scale * tanh(mu + sigma * noise).

    q_and_grad(S, A) -> (q, dq_dA) overrides the twin critics (testing seam).
    Returns (loss, Gradients for the actor, ActorSample).
    """
    S = np.asarray(S, dtype=np.float64)
    sample = sample_actions(agent, S, noise=noise)
    n = S.shape[0]
    lam = agent.temperature
    if q_and_grad is None:
        x = np.concatenate([S, sample.action], axis=1)
        q1 = nets.forward_batch(agent.critic1, x)[:, 0]
        q2 = nets.forward_batch(agent.critic2, x)[:, 0]
        m1 = (q1 <= q2).astype(np.float64)
        qmin = np.minimum(q1, q2)
        gin1 = nets.backward_batch(agent.critic1, (-m1 / n)[:, None]).input
        gin2 = nets.backward_batch(agent.critic2, (-(1.0 - m1) / n)[:, None]).input
        dL_da = (gin1 + gin2)[:, agent.obs_dim:]
    else:
        qmin, dq_da = q_and_grad(S, sample.action)
        dL_da = -np.asarray(dq_da, dtype=np.float64) / n
    loss = float(np.mean(-qmin + lam * sample.log_prob))

    tanh_u = np.tanh(sample.u)
    dadu = agent.action_scale * (1.0 - tanh_u ** 2)
    dlogp_du = 2.0 * tanh_u
    g_u = dL_da * dadu + (lam / n) * dlogp_du
    g_mu = g_u
    sigma_noise = np.exp(sample.log_std) * sample.noise
    g_kappa = (g_u * sigma_noise - lam / n) * sample.clip_mask
    upstream = np.concatenate([g_mu, g_kappa], axis=1)
    # the actor's recorded forward from sample_actions is still current
    grads = nets.backward_batch(agent.actor, upstream)
    return loss, grads, sample


@dataclass
class ActorReport:
    loss: float
    entropy_estimate: float
    temperature: float


def actor_update(agent: SacAgent, S: np.ndarray, rng, q_and_grad=None) -> ActorReport:
    """One policy step followed by the temperature dual step.

    Draw order from rng: one standard_normal((n, A)) for the policy sample.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] < 1:
        raise ContractError(f"states have shape {S.shape}")
    noise = rng.standard_normal((S.shape[0], agent.action_dim))
    loss, grads, sample = actor_loss_and_grads(agent, S, noise, q_and_grad)
    if not np.isfinite(loss):
        raise NumericsError("non-finite actor loss")
    nets.adam_step(agent.actor, grads, agent.opt_actor)
    # dual step on log temperature: d/dloglam of -lam * mean(logp + target_entropy)
    mean_lp = float(np.mean(sample.log_prob))
    grad_loglam = -agent.temperature * (mean_lp + agent.target_entropy)
    agent.log_temperature = agent.opt_temperature.step(agent.log_temperature, grad_loglam)
    return ActorReport(loss=loss, entropy_estimate=-mean_lp,
                       temperature=agent.temperature)


def bc_update(agent: SacAgent, S: np.ndarray, A_target: np.ndarray) -> float:
    """Mean squared error regression of the deterministic head onto dataset actions."""
    S = np.asarray(S, dtype=np.float64)
    A_target = np.asarray(A_target, dtype=np.float64)
    n = S.shape[0]
    out = nets.forward_batch(agent.actor, S)
    mu = out[:, :agent.action_dim]
    a = agent.action_scale * np.tanh(mu)
    e = a - A_target
    loss = float(np.sum(e * e) / n)
    g_mu = (2.0 / n) * e * agent.action_scale * (1.0 - np.tanh(mu) ** 2)
    upstream = np.concatenate([g_mu, np.zeros_like(g_mu)], axis=1)
    grads = nets.backward_batch(agent.actor, upstream)
    nets.adam_step(agent.actor, grads, agent.opt_actor)
    agent.update_count += 1
    return loss


def save_agent(agent: SacAgent, dirpath) -> None:
    os.makedirs(dirpath, exist_ok=True)
    for name in ("actor", "critic1", "critic2", "target1", "target2"):
        nets.save_checkpoint(getattr(agent, name), os.path.join(dirpath, f"{name}.mlp"))
    meta = {
        "format": AGENT_FORMAT,
        "version": AGENT_VERSION,
        "log_temperature": agent.log_temperature,
        "target_entropy": agent.target_entropy,
        "action_scale": agent.action_scale,
        "update_count": agent.update_count,
        "hparams": agent.hparams.to_json(),
    }
    with open(os.path.join(dirpath, "agent.json"), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=1)
        f.write("\n")


def load_agent(dirpath) -> SacAgent:
    with open(os.path.join(dirpath, "agent.json"), "r", encoding="utf-8") as f:
        meta = json.load(f)
    if meta.get("format") != AGENT_FORMAT or meta.get("version") != AGENT_VERSION:
        raise ContractError(f"not a {AGENT_FORMAT} v{AGENT_VERSION} directory: {dirpath}")
    parts = {name: nets.load_checkpoint(os.path.join(dirpath, f"{name}.mlp"))
             for name in ("actor", "critic1", "critic2", "target1", "target2")}
    hp = SacHparams.from_json(meta["hparams"])
    agent = SacAgent(
        parts["actor"], parts["critic1"], parts["critic2"],
        parts["target1"], parts["target2"],
        log_temperature=float(meta["log_temperature"]),
        target_entropy=float(meta["target_entropy"]),
        action_scale=float(meta["action_scale"]), hparams=hp,
        opt_actor=nets.AdamState.for_net(parts["actor"], hp.actor_lr),
        opt_critic1=nets.AdamState.for_net(parts["critic1"], hp.critic_lr),
        opt_critic2=nets.AdamState.for_net(parts["critic2"], hp.critic_lr),
        opt_temperature=nets.ScalarAdam(hp.temperature_lr),
        update_count=int(meta.get("update_count", 0)),
    )
    return agent
