"""Small-dataset study: 100% / 25% / 5% trajectory subsamples.

Runs oris and bc on pendulum medium_replay under the gravity x2 gap at
each fraction.
"""
import argparse
import json

from oris.envs import DynamicsPerturbation
from oris.harness import ExperimentConfig, sweep
from oris.presets import desk_gan, desk_loop, desk_sac


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--data", default="data")
    ap.add_argument("--out", default="runs/small_data")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    args = ap.parse_args()

    for variant in ("oris", "bc"):
        cfg = ExperimentConfig(
            env_id="pendulum",
            dataset=f"{args.data}/pendulum_medium_replay.jsonl",
            variant=variant,
            seeds=tuple(args.seeds),
            perturbation=DynamicsPerturbation(gravity_scale=2.0),
            refs_path=f"{args.data}/pendulum_refs.json",
            out_dir=f"{args.out}/{variant}",
            oris=desk_loop(variant),
            sac=desk_sac(),
            gan=desk_gan(),
        )
        result = sweep(cfg, "fraction")
        for point in result["points"]:
            print(f"{variant} {point['label']}: {json.dumps(point['summary'])}")


if __name__ == "__main__":
    main()
