"""End-to-end tests of the command-line interface (no subprocesses)."""

import json

import numpy as np
import pytest

from oris import cli, datasets, envs, sac
from oris.data import load_dataset, save_dataset


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli_data")
    ds = datasets.generate_dataset("pendulum", "random", episodes=2, seed=0)
    save_dataset(ds, d / "pendulum_random.jsonl")
    return d


def write_config(path, data_dir, **over):
    d = {
        "env_id": "pendulum",
        "dataset": str(data_dir / "pendulum_random.jsonl"),
        "variant": "naive_mix",
        "seeds": [0],
        "perturbation": {"gravity_scale": 2.0},
        "refs": {"random_ref": -1500.0, "expert_ref": -100.0},
        "oris": {"rollout_horizon": 2, "rollout_count": 1, "epochs": 1,
                 "updates_per_epoch": 1, "eval_episodes": 1},
        "sac": {"hidden": [16, 16], "batch_off": 8, "batch_sim": 8},
    }
    d.update(over)
    path.write_text(json.dumps(d))
    return path


def test_gen_dataset_random_only(tmp_path, capsys):
    rc = cli.main(["gen-dataset", "--env", "pendulum", "--tiers", "random",
                   "--episodes", "2", "--seed", "3",
                   "--out", str(tmp_path)])
    assert rc == 0
    ds = load_dataset(tmp_path / "pendulum_random.jsonl")
    assert ds.meta["tier"] == "random"
    assert len(ds.trajectory_boundaries) == 2
    assert "2 trajectories" in capsys.readouterr().out
    assert not (tmp_path / "pendulum_refs.json").exists()


def test_gen_dataset_unknown_tier(tmp_path, capsys):
    rc = cli.main(["gen-dataset", "--env", "pendulum", "--tiers", "shiny",
                   "--out", str(tmp_path)])
    assert rc == 2
    assert "shiny" in capsys.readouterr().err


def test_train_minimal_config(tmp_path, data_dir, capsys):
    cfg = write_config(tmp_path / "c.json", data_dir)
    rc = cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / "run")])
    assert rc == 0
    tags, rows = __import__("oris.harness", fromlist=["x"]).read_metrics_csv(
        tmp_path / "run" / "naive_mix_seed0.csv")
    assert len(rows) == 1
    summary = json.loads(capsys.readouterr().out)
    assert summary["naive_mix"]["n"] == 1


def test_train_schema_violation_names_field(tmp_path, data_dir, capsys):
    cfg = write_config(tmp_path / "c.json", data_dir,
                       perturbation={"gravity_scale": -1.0})
    rc = cli.main(["train", "--config", str(cfg)])
    assert rc == 2
    assert "gravity_scale" in capsys.readouterr().err


def test_train_unknown_key_exits_2(tmp_path, data_dir, capsys):
    cfg = write_config(tmp_path / "c.json", data_dir, frobnicate=1)
    rc = cli.main(["train", "--config", str(cfg)])
    assert rc == 2
    assert "frobnicate" in capsys.readouterr().err


def test_train_missing_config_file(tmp_path, capsys):
    rc = cli.main(["train", "--config", str(tmp_path / "nope.json")])
    assert rc == 2
    assert "no such file" in capsys.readouterr().err


def test_train_seed_override(tmp_path, data_dir):
    cfg = write_config(tmp_path / "c.json", data_dir, seeds=[0, 1])
    rc = cli.main(["train", "--config", str(cfg), "--seed", "5",
                   "--out", str(tmp_path / "run")])
    assert rc == 0
    assert sorted(p.name for p in (tmp_path / "run").glob("*.csv")) \
        == ["naive_mix_seed5.csv"]


def test_pretrain_gan_and_artifacts(tmp_path, data_dir, capsys):
    gan_cfg = tmp_path / "g.json"
    gan_cfg.write_text(json.dumps(
        {"z_dim": 4, "hidden": [16, 16], "iterations": 120, "batch_size": 64}))
    rc = cli.main(["pretrain-gan",
                   "--dataset", str(data_dir / "pendulum_random.jsonl"),
                   "--config", str(gan_cfg), "--seed", "1",
                   "--out", str(tmp_path / "gan")])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["iterations"] == 120
    from oris.gan import load_gan
    pair = load_gan(tmp_path / "gan")
    assert pair.state_dim == 3


def test_evaluate_saved_agent(tmp_path, capsys):
    agent = sac.SacAgent.create(3, 1, 2.0, sac.SacHparams(hidden=(16, 16)), 0)
    sac.save_agent(agent, tmp_path / "agent")
    rc = cli.main(["evaluate", "--agent", str(tmp_path / "agent"),
                   "--env", "pendulum", "--episodes", "2", "--seed", "0"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["episodes"] == 2
    assert len(out["returns"]) == 2
    assert out["return_mean"] == pytest.approx(np.mean(out["returns"]))


def test_sweep_cli(tmp_path, data_dir, capsys):
    cfg = write_config(tmp_path / "c.json", data_dir)
    rc = cli.main(["sweep", "--config", str(cfg), "--axis", "fraction",
                   "--out", str(tmp_path / "sw")])
    assert rc == 0
    table = json.loads((tmp_path / "sw" / "sweep_table.json").read_text())
    assert [p["label"] for p in table["points"]] \
        == ["fraction_1", "fraction_0.25", "fraction_0.05"]
    printed = json.loads(capsys.readouterr().out)
    assert set(printed) == {"fraction_1", "fraction_0.25", "fraction_0.05"}


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit):
        cli.main([])
    with pytest.raises(SystemExit):
        cli.main(["sweep", "--config", "x", "--axis", "bogus"])
