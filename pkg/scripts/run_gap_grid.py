"""Gap-type grid: the main comparison repeated per simulator-gap type.

Sweeps gravity x2 / friction x0.3 / action-noise (std = action scale) for
each variant on pendulum medium_replay.
"""
import argparse
import json

from oris.harness import ExperimentConfig, sweep
from oris.presets import desk_gan, desk_loop, desk_sac

VARIANTS = ("oris", "naive_mix", "sim_only_sac")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--data", default="data")
    ap.add_argument("--out", default="runs/gap_grid")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    args = ap.parse_args()

    for variant in VARIANTS:
        cfg = ExperimentConfig(
            env_id="pendulum",
            dataset=f"{args.data}/pendulum_medium_replay.jsonl",
            variant=variant,
            seeds=tuple(args.seeds),
            refs_path=f"{args.data}/pendulum_refs.json",
            out_dir=f"{args.out}/{variant}",
            oris=desk_loop(variant),
            sac=desk_sac(),
            gan=desk_gan(),
        )
        result = sweep(cfg, "gap_type")
        for point in result["points"]:
            print(f"{variant} {point['label']}: {json.dumps(point['summary'])}")


if __name__ == "__main__":
    main()
