"""Tuned desk-scale presets: one CPU core, minutes per run.

The library defaults on SacHparams / GanHparams / OrisConfig are the
conventional values; they need far more compute than a laptop budget.
Experiment scripts and the acceptance suite build their configs from
these presets instead so results stay comparable across studies.
"""
from . import gan, sac
from .loop import OrisConfig

# Baselines collect with plain pi rollouts (random_policy_prob 0); the
# budget sits mid-convergence, where restart quality and data reuse still
# matter. Raising w_min to 0.3 compensates the discriminator's lack of
# spatial contrast on densely covered state spaces.
LOOP_DEFAULTS = dict(epochs=20, rollout_count=10, rollout_horizon=100,
                     updates_per_epoch=250, random_policy_prob=0.0,
                     eval_episodes=10)


def desk_sac(**over) -> sac.SacHparams:
    kw = dict(hidden=(64, 64), critic_lr=1e-3, tau=0.01)
    kw.update(over)
    return sac.SacHparams(**kw)


def desk_gan(**over) -> gan.GanHparams:
    kw = dict(iterations=2000, w_min=0.3)
    kw.update(over)
    return gan.GanHparams(**kw)


def desk_loop(variant: str, **over) -> OrisConfig:
    kw = dict(LOOP_DEFAULTS)
    kw.update(over)
    return OrisConfig(variant=variant, **kw)
