"""Experiment configs, metrics CSVs, normalized scores, and sweep grids.

One ExperimentConfig describes one (env, sim perturbation, dataset, variant)
cell run over a list of seeds. Every output file embeds a hash of the config
that produced it; aggregation refuses to merge files with different hashes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import envs, gan as gan_mod, loop, sac
from .data import load_dataset, subsample_trajectories
from .errors import ConfigError
from .loop import EpochReport, OrisConfig

CSV_COLUMNS = ("epoch", "env_steps", "eval_return_mean", "eval_return_std",
               "normalized_score", "critic_loss", "actor_loss", "temperature",
               "mean_sim_weight", "random_rollout_fraction",
               "invalid_restart_count")

SWEEP_AXES = ("gravity", "gap_type", "fraction", "ablation")

_CONFIG_KEYS = frozenset({
    "env_id", "perturbation", "dataset", "dataset_fraction", "subsample_seed",
    "variant", "seeds", "refs", "refs_path", "eval_every", "out_dir",
    "oris", "sac", "gan"})


def normalized_score(raw: float, random_ref: float, expert_ref: float) -> float:
    """Return on the 0-100 scale anchored at the random and expert references."""
    if not expert_ref > random_ref:
        raise ConfigError(
            f"expert_ref ({expert_ref}) must exceed random_ref ({random_ref})")
    return 100.0 * (raw - random_ref) / (expert_ref - random_ref)


def _section(builder, d: dict, name: str):
    try:
        return builder(d)
    except TypeError as e:
        raise ConfigError(f"bad {name!r} section: {e}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    env_id: str
    dataset: str
    variant: str
    seeds: tuple
    perturbation: envs.DynamicsPerturbation = envs.UNPERTURBED
    dataset_fraction: float = 1.0
    subsample_seed: int = 0
    refs: dict | None = None
    refs_path: str | None = None
    eval_every: int = 1
    out_dir: str = "runs"
    oris: OrisConfig = field(default_factory=OrisConfig)
    sac: sac.SacHparams = field(default_factory=sac.SacHparams)
    gan: gan_mod.GanHparams = field(default_factory=gan_mod.GanHparams)

    def __post_init__(self):
        if self.env_id not in envs.ENV_IDS:
            raise ConfigError(f"unknown env_id {self.env_id!r}")
        if not self.seeds or any(int(s) != s for s in self.seeds):
            raise ConfigError("seeds must be a non-empty list of integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if not 0.0 < self.dataset_fraction <= 1.0:
            raise ConfigError(
                f"dataset_fraction must be in (0, 1], got {self.dataset_fraction}")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if (self.refs is None) == (self.refs_path is None):
            raise ConfigError("provide exactly one of refs / refs_path")
        if self.refs is not None:
            self._check_refs(self.refs)
        if self.variant != self.oris.variant:
            object.__setattr__(self, "oris",
                               OrisConfig(**{**self.oris.to_json(),
                                             "variant": self.variant}))

    @staticmethod
    def _check_refs(refs: dict):
        missing = {"random_ref", "expert_ref"} - set(refs)
        if missing:
            raise ConfigError(f"refs missing {sorted(missing)}")
        normalized_score(0.0, refs["random_ref"], refs["expert_ref"])

    def resolve_refs(self) -> tuple[float, float]:
        refs = self.refs
        if refs is None:
            p = Path(self.refs_path)
            if not p.exists():
                raise ConfigError(f"refs_path {self.refs_path!r} does not exist")
            refs = json.loads(p.read_text())
            self._check_refs(refs)
        return float(refs["random_ref"]), float(refs["expert_ref"])

    def to_json(self) -> dict:
        return {
            "env_id": self.env_id, "dataset": self.dataset,
            "variant": self.variant, "seeds": [int(s) for s in self.seeds],
            "perturbation": self.perturbation.to_json(),
            "dataset_fraction": self.dataset_fraction,
            "subsample_seed": self.subsample_seed,
            "refs": self.refs, "refs_path": self.refs_path,
            "eval_every": self.eval_every, "out_dir": self.out_dir,
            "oris": self.oris.to_json(), "sac": self.sac.to_json(),
            "gan": self.gan.to_json()}

    @classmethod
    def from_json(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"env_id", "dataset", "variant", "seeds"} - set(d)
        if missing:
            raise ConfigError(f"config missing required keys: {sorted(missing)}")
        kw = dict(d)
        kw["seeds"] = tuple(kw["seeds"])
        if "perturbation" in kw:
            kw["perturbation"] = envs.DynamicsPerturbation.from_json(
                kw["perturbation"])
        oris_d = dict(kw.pop("oris", {}))
        if "variant" in oris_d and oris_d["variant"] != d["variant"]:
            raise ConfigError("variant in the oris section contradicts the "
                              "top-level variant")
        oris_d["variant"] = d["variant"]
        kw["oris"] = _section(lambda x: OrisConfig(**x), oris_d, "oris")
        kw["sac"] = _section(sac.SacHparams.from_json, kw.get("sac", {}), "sac")
        kw["gan"] = _section(gan_mod.GanHparams.from_json, kw.get("gan", {}), "gan")
        try:
            return cls(**kw)
        except TypeError as e:
            raise ConfigError(f"bad config: {e}") from None

    def config_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def with_overrides(self, **over) -> "ExperimentConfig":
        d = self.to_json()
        d.update(over)
        return ExperimentConfig.from_json(d)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_metrics_csv(path, reports: list[EpochReport], refs: tuple[float, float],
                      config_hash: str, variant: str, seed: int,
                      eval_every: int = 1) -> None:
    random_ref, expert_ref = refs
    keep = [r for r in reports
            if r.epoch % eval_every == 0 or r.epoch == reports[-1].epoch]
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash} variant={variant} seed={seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in keep:
        score = normalized_score(r.eval_return_mean, random_ref, expert_ref)
        w.writerow([_fmt(v) for v in (
            r.epoch, r.env_steps, r.eval_return_mean, r.eval_return_std,
            score, r.critic_loss, r.actor_loss, r.temperature,
            r.mean_sim_weight, r.random_rollout_fraction,
            r.invalid_restart_count)])
    Path(path).write_text(buf.getvalue())


def read_metrics_csv(path) -> tuple[dict, list[dict]]:
    """-> (header tags, rows as dicts of parsed numbers)."""
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# "):
        raise ConfigError(f"{path}: missing tag line")
    tags = dict(tok.split("=", 1) for tok in text[0][2:].split())
    rows = []
    for row in csv.DictReader(text[1:]):
        parsed = {}
        for k, v in row.items():
            parsed[k] = int(v) if k in ("epoch", "env_steps",
                                        "invalid_restart_count") else float(v)
        rows.append(parsed)
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    return tags, rows


@dataclass
class ScoreTable:
    config_hash: str
    rows: list[dict]  # variant, seed, final_return, final_score, returns

    def summary(self) -> dict:
        by_variant = {}
        for row in self.rows:
            by_variant.setdefault(row["variant"], []).append(row)
        out = {}
        for variant in sorted(by_variant):
            scores = np.array([r["final_score"] for r in by_variant[variant]])
            rets = np.array([r["final_return"] for r in by_variant[variant]])
            out[variant] = {
                "n": int(len(scores)),
                "score_mean": float(scores.mean()),
                "score_std": float(scores.std()),
                "return_mean": float(rets.mean()),
                "return_std": float(rets.std())}
        return out

    def to_json(self) -> dict:
        return {"config_hash": self.config_hash, "rows": self.rows,
                "summary": self.summary()}


def score_table_from_csvs(paths) -> ScoreTable:
    """Rebuild the table purely from emitted CSVs; refuses mixed hashes."""
    rows = []
    hashes = set()
    for path in sorted(Path(p) for p in paths):
        tags, data = read_metrics_csv(path)
        hashes.add(tags["config_hash"])
        rows.append({
            "variant": tags["variant"], "seed": int(tags["seed"]),
            "final_return": data[-1]["eval_return_mean"],
            "final_score": data[-1]["normalized_score"],
            "returns": [r["eval_return_mean"] for r in data]})
    if len(hashes) > 1:
        raise ConfigError(f"refusing to merge mixed config hashes {sorted(hashes)}")
    if not rows:
        raise ConfigError("no CSVs to aggregate")
    return ScoreTable(hashes.pop(), rows)


def _load_offline(cfg: ExperimentConfig):
    p = Path(cfg.dataset)
    if not p.exists():
        raise ConfigError(f"dataset {cfg.dataset!r} does not exist")
    ds = load_dataset(p)
    if ds.meta.get("env_id") != cfg.env_id:
        raise ConfigError(f"dataset is for {ds.meta.get('env_id')!r}, "
                          f"config says {cfg.env_id!r}")
    if cfg.dataset_fraction < 1.0:
        ds = subsample_trajectories(ds, cfg.dataset_fraction, cfg.subsample_seed)
    return ds


def run_experiment(cfg: ExperimentConfig, out_dir=None, progress=None,
                   g: gan_mod.GanPair | None = None):
    """Train every seed, write one CSV each plus a score table.

    Returns (ScoreTable, failures); a seed that raises is recorded in
    `failures` and the table aggregates the rest. A pretrained GanPair may be
    injected; by default each seed fits its own from the offline data.
    """
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    offline = _load_offline(cfg)
    refs = cfg.resolve_refs()
    chash = cfg.config_hash()
    real = envs.EnvSpec.real(cfg.env_id)
    sim = envs.EnvSpec.sim(cfg.env_id, cfg.perturbation)

    failures = []
    csv_paths = []
    for seed in cfg.seeds:
        try:
            _, reports = loop.train(real, sim, offline, cfg.oris, cfg.sac,
                                    int(seed), g=g, gan_hp=cfg.gan,
                                    progress=progress)
        except Exception as e:  # recorded, not fatal to the other seeds
            failures.append({"variant": cfg.variant, "seed": int(seed),
                             "error": f"{type(e).__name__}: {e}"})
            continue
        path = out / f"{cfg.variant}_seed{seed}.csv"
        write_metrics_csv(path, reports, refs, chash, cfg.variant, int(seed),
                          cfg.eval_every)
        csv_paths.append(path)

    table = score_table_from_csvs(csv_paths) if csv_paths else ScoreTable(chash, [])
    (out / "score_table.json").write_text(
        json.dumps(table.to_json(), indent=2, sort_keys=True) + "\n")
    if failures:
        (out / "failures.json").write_text(
            json.dumps(failures, indent=2, sort_keys=True) + "\n")
    return table, failures


def sweep_points(cfg: ExperimentConfig, axis: str) -> list[tuple[str, dict]]:
    """Expand one axis into (label, config overrides) pairs."""
    if axis == "gravity":
        return [(f"gravity_{g:g}", {"perturbation": {"gravity_scale": float(g)}})
                for g in (2, 3, 4, 5)]
    if axis == "gap_type":
        noise = 1.0 * envs.ACTION_SCALES[cfg.env_id]
        return [("gap_gravity", {"perturbation": {"gravity_scale": 2.0}}),
                ("gap_friction", {"perturbation": {"friction_scale": 0.3}}),
                ("gap_action_noise", {"perturbation": {"action_noise_std": noise}})]
    if axis == "fraction":
        return [(f"fraction_{f:g}", {"dataset_fraction": f})
                for f in (1.0, 0.25, 0.05)]
    if axis == "ablation":
        return [(v, {"variant": v})
                for v in ("oris", "no_restart", "uniform_weight", "naive_mix")]
    raise ConfigError(f"unknown sweep axis {axis!r}, know {SWEEP_AXES}")


def sweep(cfg: ExperimentConfig, axis: str, out_dir=None, progress=None) -> dict:
    """Run every point on the axis; aggregate summaries and a failure manifest."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    points = []
    failures = []
    for label, overrides in sweep_points(cfg, axis):
        point_cfg = cfg.with_overrides(**overrides)
        table, point_failures = run_experiment(point_cfg, out / label,
                                               progress=progress)
        points.append({"label": label, "overrides": overrides,
                       "config_hash": point_cfg.config_hash(),
                       "summary": table.summary()})
        for f in point_failures:
            failures.append({"point": label, **f})
    result = {"axis": axis, "base_config_hash": cfg.config_hash(),
              "points": points, "failures": failures}
    (out / "sweep_table.json").write_text(
        json.dumps(result, indent=2, sort_keys=True) + "\n")
    return result
