"""Command-line front end: skill pre-training, downstream hierarchy
training, deterministic evaluation and the single-goal-space sweep.

Every command takes the layered configuration (package defaults, optional
YAML file, ``-s key.path=value`` overrides), writes a snapshot of the
resolved config into the run directory, and reports structured metrics as
CSV. Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import csv
import dataclasses
import sys
from pathlib import Path

import click
import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import load_config, save_config, seed_stream
from .envs import make_env
from .goalspace import FeatureCatalog, enumerate_feature_sets, walker_catalog
from .hilearn import (
    HlTrainConfig,
    LowLevelSkills,
    evaluate,
    run_hl_training,
    sweep_fixed_sets,
)
from .hisac import HiConfig, HighLevelModel
from .pretrain import PretrainConfig, run_pretraining
from .sac import SacConfig, SacModel


# -- config plumbing ------------------------------------------------------

def _dataclass_from(section: dict, cls):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise click.UsageError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**section)


def pretrain_configs(cfg: dict) -> tuple[PretrainConfig, SacConfig]:
    return (_dataclass_from(cfg["pretrain"], PretrainConfig),
            _dataclass_from(cfg["sac"], SacConfig))


def hl_config(cfg: dict, fixed_set_index: int = -1) -> HlTrainConfig:
    train = dict(cfg["train"])
    train.pop("fixed_set", None)
    mode = train.pop("mode")
    return HlTrainConfig(hi=_dataclass_from(cfg["hi"], HiConfig), mode=mode,
                         fixed_set_index=fixed_set_index, **train)


def resolve_set_name(catalog: FeatureCatalog, name: str) -> int:
    sets = enumerate_feature_sets(catalog)
    for i, fs in enumerate(sets):
        if fs.name == name:
            return i
    raise click.UsageError(
        f"unknown feature set {name!r}; see `hskills list-goalspaces`")


def write_metrics_csv(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    keys: list[str] = []
    for row in rows:
        for k in row:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=keys or ["step"], restval="")
        writer.writeheader()
        writer.writerows(rows)


def make_run_dir(cfg: dict, output: str | None) -> Path:
    run_dir = Path(output or cfg["output_dir"])
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    (run_dir / "traces").mkdir(parents=True, exist_ok=True)
    save_config(cfg, run_dir / "config.yaml")
    return run_dir


# -- checkpoint contents --------------------------------------------------

def save_low_level(path: Path, model: SacModel, catalog: FeatureCatalog,
                   proprio_dim: int) -> None:
    tensors = {f"actor_{k}": v for k, v in model.actor.items()}
    tensors.update({f"critic_{k}": v for k, v in model.critics.items()})
    tensors["log_alpha"] = np.asarray(model.log_alpha)
    meta = {
        "kind": "low_level",
        "catalog": catalog.to_config(),
        "proprio_dim": proprio_dim,
        "action_dim": model.action_dim,
        "target_entropy": model.target_entropy,
    }
    save_checkpoint(path, tensors, meta)


def load_low_level(path: str | Path) -> LowLevelSkills:
    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != "low_level":
        raise CheckpointError(
            f"{path}: expected a low-level skill checkpoint, got kind="
            f"{meta.get('kind')!r}")
    catalog = FeatureCatalog.from_config(meta["catalog"])
    actor = {k[len("actor_"):]: v for k, v in tensors.items()
             if k.startswith("actor_")}
    action_dim = actor["head_b"].shape[0] // 2
    return LowLevelSkills(actor, catalog, int(meta["proprio_dim"]), action_dim)


def save_high_level(path: Path, model: HighLevelModel, mode: str,
                    fixed_set_index: int) -> None:
    tensors = {f"pif_{k}": v for k, v in model.pi_f.items()}
    tensors.update({f"pig_{k}": v for k, v in model.pi_g.items()})
    tensors.update({f"q_{k}": v for k, v in model.critics.items()})
    tensors["log_alpha"] = np.asarray(model.log_alpha)
    tensors["log_betas"] = np.asarray(model.log_betas)
    meta = {
        "kind": "high_level",
        "catalog": model.catalog.to_config(),
        "state_dim": model.state_dim,
        "group_masks": [fs.group_mask for fs in model.feature_sets],
        "mode": mode,
        "fixed_set_index": fixed_set_index,
        "hi": dataclasses.asdict(model.cfg),
    }
    save_checkpoint(path, tensors, meta)


def load_high_level(path: str | Path) -> tuple[HighLevelModel, dict]:
    from .goalspace import feature_set_for_mask

    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != "high_level":
        raise CheckpointError(
            f"{path}: expected a high-level policy checkpoint, got kind="
            f"{meta.get('kind')!r}")
    catalog = FeatureCatalog.from_config(meta["catalog"])
    sets = [feature_set_for_mask(catalog, m) for m in meta["group_masks"]]
    cfg = HiConfig(**meta["hi"])
    model = HighLevelModel(int(meta["state_dim"]), catalog, sets, cfg,
                           np.random.default_rng(0))
    model.pi_f = {k[len("pif_"):]: v for k, v in tensors.items()
                  if k.startswith("pif_")}
    model.pi_g = {k[len("pig_"):]: v for k, v in tensors.items()
                  if k.startswith("pig_")}
    model.critics = {k[len("q_"):]: v for k, v in tensors.items()
                     if k.startswith("q_")}
    model.critic_targets = {k: v.copy() for k, v in model.critics.items()}
    model.log_alpha = np.asarray(tensors["log_alpha"])
    model.log_betas = np.asarray(tensors["log_betas"])
    return model, meta


def check_same_catalog(low: LowLevelSkills, meta: dict, ckpt: str) -> None:
    if low.catalog.to_config() != meta["catalog"]:
        raise CheckpointError(
            f"{ckpt}: feature catalog does not match the low-level skills; "
            "the two checkpoints were trained on different goal spaces")


# -- commands -------------------------------------------------------------

@click.group()
def cli() -> None:
    """Hierarchical skill learning for planar robots."""


_config_opts = [
    click.option("--config", "-c", "config_path", type=click.Path(exists=True),
                 default=None, help="YAML config file."),
    click.option("--set", "-s", "overrides", multiple=True,
                 help="Dotted config override, e.g. -s pretrain.horizon=36."),
    click.option("--output", "-o", default=None,
                 help="Run directory (default: config output_dir)."),
]


def config_options(fn):
    for opt in reversed(_config_opts):
        fn = opt(fn)
    return fn


def _load(config_path, overrides) -> dict:
    try:
        return load_config(config_path, overrides)
    except (KeyError, ValueError) as e:
        raise click.UsageError(str(e)) from e


@cli.command("list-goalspaces")
def cmd_list_goalspaces() -> None:
    """Print every candidate goal space with its index and dimensions."""
    catalog = walker_catalog()
    for i, fs in enumerate(enumerate_feature_sets(catalog)):
        click.echo(f"{i:3d}  {fs.n_dims}d  {fs.name}")


@cli.command("pretrain")
@config_options
def cmd_pretrain(config_path, overrides, output) -> None:
    """Pre-train goal-conditioned skills over all candidate goal spaces."""
    cfg = _load(config_path, overrides)
    pre_cfg, sac_cfg = pretrain_configs(cfg)
    run_dir = make_run_dir(cfg, output)

    catalog = walker_catalog()
    env = make_env("pretrain")
    init_rng = seed_stream(cfg["seed"], "init")
    loop_rng = seed_stream(cfg["seed"], "goals")
    sets = enumerate_feature_sets(catalog)
    obs_dim = env.proprio_dim + 2 * catalog.scalar_dims
    sac_cfg.gamma = pre_cfg.gamma
    model = SacModel.create(init_rng, obs_dim, env.action_dim, sac_cfg)

    result = run_pretraining(pre_cfg, env, catalog, loop_rng,
                             feature_sets=sets, sac_cfg=sac_cfg, model=model)
    write_metrics_csv(run_dir / "metrics.csv", result.metrics)
    save_low_level(run_dir / "checkpoints" / "low_level.npz", result.model,
                   catalog, env.proprio_dim)
    write_metrics_csv(run_dir / "reach_rates.csv",
                      [{"set": sets[k].name, "reach_rate": v}
                       for k, v in result.reach_rates.items()])
    click.echo(f"pretrain done: {run_dir / 'checkpoints' / 'low_level.npz'}")


@cli.command("train")
@config_options
@click.option("--low-level", "low_path", required=True,
              type=click.Path(exists=True), help="Low-level skill checkpoint.")
def cmd_train(config_path, overrides, output, low_path) -> None:
    """Train the high-level hierarchy on a downstream task."""
    cfg = _load(config_path, overrides)
    low = load_low_level(low_path)
    fixed_index = -1
    if cfg["train"]["mode"] == "sd":
        name = cfg["train"]["fixed_set"]
        if not name:
            raise click.UsageError("sd mode requires train.fixed_set")
        fixed_index = resolve_set_name(low.catalog, name)
    try:
        train_cfg = hl_config(cfg, fixed_index)
    except (TypeError, ValueError) as e:
        raise click.UsageError(str(e)) from e
    run_dir = make_run_dir(cfg, output)

    env = make_env(cfg["task"])
    eval_env = make_env(cfg["task"])
    rng = seed_stream(cfg["seed"], "init")
    result = run_hl_training(train_cfg, env, eval_env, low, rng)
    write_metrics_csv(run_dir / "metrics.csv", result.metrics)
    write_metrics_csv(run_dir / "eval.csv", result.eval_history)
    save_high_level(run_dir / "checkpoints" / "high_level.npz", result.model,
                    train_cfg.mode, fixed_index)

    sets = result.model.feature_sets
    _, _, _, trace = evaluate(result.model, low, make_env(cfg["task"]), sets,
                              n_trials=1, c=train_cfg.hi.c, record_trace=True)
    with open(run_dir / "traces" / "eval_trace.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "set_index", "set_name", "goal"])
        for t, k, g in trace:
            writer.writerow([t, k, sets[k].name,
                             " ".join(f"{v:.6f}" for v in g)])
    click.echo(f"train done: {run_dir / 'checkpoints' / 'high_level.npz'}")


@cli.command("eval")
@click.option("--checkpoint", "ckpt", required=True,
              type=click.Path(exists=True), help="High-level checkpoint.")
@click.option("--low-level", "low_path", required=True,
              type=click.Path(exists=True), help="Low-level skill checkpoint.")
@click.option("--task", default="hurdles", help="Task name.")
@click.option("--trials", default=50, help="Number of evaluation episodes.")
@click.option("--output", "-o", default=None, help="Write per-seed CSV here.")
def cmd_eval(ckpt, low_path, task, trials, output) -> None:
    """Deterministically evaluate a trained hierarchy over fixed seeds."""
    low = load_low_level(low_path)
    model, meta = load_high_level(ckpt)
    check_same_catalog(low, meta, ckpt)
    c = int(meta["hi"]["c"])
    mean, std, returns = evaluate(model, low, make_env(task),
                                  model.feature_sets, n_trials=trials, c=c)
    if output:
        rows = [{"seed": i, "return": r} for i, r in enumerate(returns)]
        write_metrics_csv(Path(output), rows)
    for i, r in enumerate(returns):
        click.echo(f"seed {i:3d}  return {r:.4f}")
    click.echo(f"mean {mean:.4f}  std {std:.4f}  trials {trials}")


@cli.command("sweep-sd")
@config_options
@click.option("--low-level", "low_path", required=True,
              type=click.Path(exists=True), help="Low-level skill checkpoint.")
@click.option("--sets", "set_names", default="",
              help="Comma-separated feature-set names (default: all).")
def cmd_sweep_sd(config_path, overrides, output, low_path, set_names) -> None:
    """Train one fixed-goal-space run per candidate set; report the best."""
    cfg = _load(config_path, overrides)
    low = load_low_level(low_path)
    if set_names:
        indices = [resolve_set_name(low.catalog, n)
                   for n in set_names.split(",")]
    else:
        indices = None
    try:
        train_cfg = hl_config(cfg, 0)
    except (TypeError, ValueError) as e:
        raise click.UsageError(str(e)) from e
    train_cfg.mode = "sd"
    run_dir = make_run_dir(cfg, output)

    rng = seed_stream(cfg["seed"], "init")
    sweep = sweep_fixed_sets(train_cfg, lambda: make_env(cfg["task"]), low,
                             rng, set_indices=indices)
    rows = []
    for name, run in sweep["runs"].items():
        rows.append({"set": name, "index": run["index"],
                     "mean": run["eval"].get("mean"),
                     "std": run["eval"].get("std")})
        click.echo(f"{name}: mean {run['eval'].get('mean')}")
    write_metrics_csv(run_dir / "sweep.csv", rows)
    best = sweep["runs"][sweep["best"]]
    save_high_level(run_dir / "checkpoints" / "best_sd.npz",
                    best["result"].model, "sd", best["index"])
    click.echo(f"best: {sweep['best']}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as e:
        return int(e.exit_code)
    except click.UsageError as e:
        click.echo(f"error: {e.format_message()}", err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except (CheckpointError, ValueError, KeyError, OSError, RuntimeError) as e:
        click.echo(f"error: {e}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
