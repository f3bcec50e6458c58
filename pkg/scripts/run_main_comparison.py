"""Main comparison: oris vs naive_mix vs sim_only_sac.

Pendulum, gravity x2 simulator gap, medium_replay offline data, 5 seeds.
"""
import argparse
import json

from oris.envs import DynamicsPerturbation
from oris.harness import ExperimentConfig, run_experiment
from oris.presets import desk_gan, desk_loop, desk_sac

VARIANTS = ("oris", "naive_mix", "sim_only_sac")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--data", default="data")
    ap.add_argument("--out", default="runs/main_comparison")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    args = ap.parse_args()

    for variant in VARIANTS:
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
        table, failures = run_experiment(cfg)
        print(f"{variant}: {json.dumps(table.summary(), indent=2)}")
        if failures:
            print(f"  failures: {failures}")


if __name__ == "__main__":
    main()
