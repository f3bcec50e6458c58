"""Generate offline datasets and normalization refs for both environments.

Trains an online SAC reference per env (minutes on one core), then rolls
out the tier behavior policies. Writes <env>_<tier>.jsonl plus
<env>_refs.json into --out.
"""
import argparse
import json
import pathlib

from oris.data import save_dataset
from oris.datasets import REFERENCE_DEFAULTS, generate_dataset, train_reference

TIER_EPISODES = {
    "pendulum": (("random", 25), ("medium", 50), ("medium_replay", 25),
                 ("expert", 25)),
    "pointgoal": (("random", 100), ("medium", 100)),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--env", choices=("pendulum", "pointgoal", "both"),
                    default="both")
    ap.add_argument("--out", default="data")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    env_ids = ("pendulum", "pointgoal") if args.env == "both" else (args.env,)
    for env_id in env_ids:
        ref = train_reference(env_id, REFERENCE_DEFAULTS[env_id], seed=args.seed)
        med = ref.medium_checkpoint()
        print(f"{env_id}: random={ref.random_return:.1f} "
              f"expert={ref.expert_return:.1f} medium={med.eval_return:.1f} "
              f"(step {med.step})")
        for tier, episodes in TIER_EPISODES[env_id]:
            ds = generate_dataset(env_id, tier, episodes, seed=args.seed + 1,
                                  reference=ref)
            path = out / f"{env_id}_{tier}.jsonl"
            save_dataset(ds, str(path))
            print(f"  {path} ({len(ds)} transitions)")
        refs_path = out / f"{env_id}_refs.json"
        refs_path.write_text(json.dumps({"env_id": env_id, **ref.refs()},
                                        indent=2) + "\n")
        print(f"  {refs_path}")


if __name__ == "__main__":
    main()
