"""Ablations on the sparse-reward pointgoal env: restarts vs weighting.

oris / no_restart / uniform_weight / naive_mix with a gravity x2 gap and
the pointgoal medium dataset.
"""
import argparse
import json

from oris.envs import DynamicsPerturbation
from oris.harness import ExperimentConfig, sweep
from oris.presets import desk_gan, desk_loop, desk_sac


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--data", default="data")
    ap.add_argument("--out", default="runs/ablations")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    args = ap.parse_args()

    cfg = ExperimentConfig(
        env_id="pointgoal",
        dataset=f"{args.data}/pointgoal_medium.jsonl",
        variant="oris",
        seeds=tuple(args.seeds),
        perturbation=DynamicsPerturbation(gravity_scale=2.0),
        refs_path=f"{args.data}/pointgoal_refs.json",
        out_dir=args.out,
        oris=desk_loop("oris"),
        sac=desk_sac(),
        gan=desk_gan(),
    )
    result = sweep(cfg, "ablation")
    for point in result["points"]:
        print(f"{point['label']}: {json.dumps(point['summary'])}")


if __name__ == "__main__":
    main()
