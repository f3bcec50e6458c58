"""Command-line entry points: dataset generation, GAN pretraining, training,
evaluation, and sweeps. One JSON config document drives train/sweep."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import datasets, envs, gan, harness, sac
from .data import TIERS, save_dataset, state_marginal, load_dataset
from .errors import ConfigError, ContractError, NumericsError


def _load_json(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{path}: no such file")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from None


def _eprint(*a):
    print(*a, file=sys.stderr)


def cmd_gen_dataset(args) -> int:
    tiers = [t.strip() for t in args.tiers.split(",") if t.strip()]
    if not tiers:
        raise ConfigError("no tiers requested")
    unknown = [t for t in tiers if t not in TIERS]
    if unknown:
        raise ConfigError(f"unknown tiers {unknown}, know {TIERS}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hp = datasets.REFERENCE_DEFAULTS[args.env]
    if args.reference_config is not None:
        hp = datasets.ReferenceHparams.from_json(_load_json(args.reference_config))

    reference = None
    if any(t != "random" for t in tiers):
        _eprint(f"training reference agent on {args.env} "
                f"({hp.total_steps} steps) ...")
        reference = datasets.train_reference(
            args.env, hp, args.seed,
            progress=lambda step, ret: _eprint(f"  step {step}: eval {ret:.1f}"))
        refs = {"env_id": args.env, **reference.refs()}
        (out / f"{args.env}_refs.json").write_text(
            json.dumps(refs, indent=2, sort_keys=True) + "\n")
        _eprint(f"refs: random {refs['random_ref']:.1f}, "
                f"expert {refs['expert_ref']:.1f}")

    for tier in tiers:
        ds = datasets.generate_dataset(args.env, tier, args.episodes, args.seed,
                                       reference)
        path = out / f"{args.env}_{tier}.jsonl"
        save_dataset(ds, path)
        print(f"{path}: {len(ds)} transitions, "
              f"{len(ds.trajectory_boundaries)} trajectories")
    if reference is None:
        _eprint("only the random tier was requested: no reference run, "
                "no refs file")
    return 0


def cmd_pretrain_gan(args) -> int:
    ds = load_dataset(args.dataset)
    hp = gan.GanHparams.from_json(_load_json(args.config)) if args.config \
        else gan.GanHparams()
    rng = np.random.default_rng(args.seed)
    pair, report = gan.pretrain(state_marginal(ds), hp, rng)
    out = Path(args.out)
    gan.save_gan(pair, out)
    print(json.dumps({"out": str(out), **report.summary()}, indent=2,
                     sort_keys=True))
    return 0


def _load_config(args) -> harness.ExperimentConfig:
    cfg = harness.ExperimentConfig.from_json(_load_json(args.config))
    if args.seed is not None:
        cfg = cfg.with_overrides(seeds=[args.seed])
    return cfg


def _progress(args):
    if not args.verbose:
        return None
    return lambda r: _eprint(f"  epoch {r.epoch}: eval {r.eval_return_mean:.1f} "
                             f"critic {r.critic_loss:.3f}")


def cmd_train(args) -> int:
    cfg = _load_config(args)
    table, failures = harness.run_experiment(cfg, args.out,
                                             progress=_progress(args))
    print(json.dumps(table.to_json()["summary"], indent=2, sort_keys=True))
    for f in failures:
        _eprint(f"seed {f['seed']} failed: {f['error']}")
    return 1 if failures else 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    result = harness.sweep(cfg, args.axis, args.out, progress=_progress(args))
    print(json.dumps({p["label"]: p["summary"] for p in result["points"]},
                     indent=2, sort_keys=True))
    for f in result["failures"]:
        _eprint(f"{f['point']} seed {f['seed']} failed: {f['error']}")
    return 1 if result["failures"] else 0


def cmd_evaluate(args) -> int:
    agent = sac.load_agent(args.agent)
    spec = envs.EnvSpec.real(args.env)
    policy = lambda obs, _rng: sac.act(agent, obs, "deterministic")
    mean, std, returns = envs.evaluate_policy(
        spec, policy, args.episodes, np.random.default_rng(args.seed))
    print(json.dumps({"env_id": args.env, "episodes": args.episodes,
                      "return_mean": mean, "return_std": std,
                      "returns": [float(r) for r in returns]},
                     indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="oris",
        description="offline RL with an inaccurate simulator: data generation, "
                    "GAN pretraining, training, evaluation, sweeps")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-dataset", help="generate offline dataset tiers")
    g.add_argument("--env", required=True, choices=envs.ENV_IDS)
    g.add_argument("--tiers", default="random,medium,medium_replay,expert",
                   help="comma-separated tier names")
    g.add_argument("--episodes", type=int, default=50,
                   help="episodes per tier (cap, for medium_replay)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--reference-config", default=None,
                   help="JSON file of reference-run hyperparameters")
    g.set_defaults(func=cmd_gen_dataset)

    pg = sub.add_parser("pretrain-gan", help="fit the restart GAN to a dataset")
    pg.add_argument("--dataset", required=True)
    pg.add_argument("--config", default=None, help="JSON file of GAN hyperparameters")
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--out", required=True, help="output directory")
    pg.set_defaults(func=cmd_pretrain_gan)

    t = sub.add_parser("train", help="run one experiment config over its seeds")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, default=None, help="override config seeds")
    t.add_argument("--out", default=None, help="override output directory")
    t.add_argument("--verbose", action="store_true")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="expand one axis of an experiment config")
    s.add_argument("--config", required=True)
    s.add_argument("--axis", required=True, choices=harness.SWEEP_AXES)
    s.add_argument("--seed", type=int, default=None, help="override config seeds")
    s.add_argument("--out", default=None, help="override output directory")
    s.add_argument("--verbose", action="store_true")
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("evaluate", help="evaluate a saved agent on the real env")
    e.add_argument("--agent", required=True, help="agent checkpoint directory")
    e.add_argument("--env", required=True, choices=envs.ENV_IDS)
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContractError) as e:
        _eprint(f"config error: {e}")
        return 2
    except NumericsError as e:
        _eprint(f"numerics failure: {e}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
