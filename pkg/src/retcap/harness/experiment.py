"""Seeded experiment runs: metrics CSV, checkpoints, manifests, evaluation and plot data.

Layout of one run directory::

    <run_dir>/config.txt               materialized config
    <run_dir>/seed_<s>/metrics.csv
    <run_dir>/seed_<s>/checkpoint/     policy.bin, value.bin, trainer.json, moments.npz
    <run_dir>/seed_<s>/manifest.json
    <run_dir>/plotdata.csv             written by emit_plotdata

Every file is written to a temporary name and renamed into place.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from dataclasses import asdict
from importlib import resources
from pathlib import Path
from statistics import NormalDist

import numpy as np

from .. import __version__
from ..algos.trainers import Trainer, evaluate_policy, train
from ..envs import make_env
from ..nn import Mlp, categorical_head, load_params, save_params
from ..risk import empirical_cvar, empirical_var
from .config import ExperimentConfig, serialize_config

METRIC_COLUMNS = (
    "update_index", "cumulative_env_steps", "train_return_mean", "train_cvar_alpha", "train_var_alpha",
    "eval_cvar_alpha", "eval_return_mean", "cap_value", "wall_seconds",
)
# standalone evaluation draws episodes from a sampler stream training never uses
EVAL_STREAM = 1 << 20


class RunError(RuntimeError):
    """A run, evaluation or plot-data step could not complete."""


def atomic_write(path, data: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, str):
        data = data.encode()
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def metrics_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in METRIC_COLUMNS])
    return buf.getvalue()


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        parsed = {}
        for c in METRIC_COLUMNS:
            v = r.get(c, "")
            if v == "":
                parsed[c] = None
            elif c in ("update_index", "cumulative_env_steps"):
                parsed[c] = int(v)
            else:
                parsed[c] = float(v)
        out.append(parsed)
    return out


def code_version() -> str:
    """Package version plus a digest of the package sources."""
    h = hashlib.sha256()
    root = resources.files("retcap")
    for path in sorted(Path(str(root)).rglob("*")):
        if path.suffix in (".py", ".txt", ".mdp") and "__pycache__" not in path.parts:
            h.update(str(path.relative_to(str(root))).encode())
            h.update(path.read_bytes())
    return f"{__version__}+{h.hexdigest()[:12]}"


def save_checkpoint(directory, trainer: Trainer) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    state = trainer.state_dict()
    save_params(d / "policy.bin", trainer.policy.spec, trainer.policy.params)
    save_params(d / "value.bin", trainer.value_fn.spec, trainer.value_fn.params)
    buf = io.BytesIO()
    np.savez(buf, pi_m=state["opt_pi"]["m"], pi_v=state["opt_pi"]["v"],
             v_m=state["opt_v"]["m"], v_v=state["opt_v"]["v"])
    atomic_write(d / "moments.npz", buf.getvalue())
    meta = {
        "algorithm": trainer.algorithm,
        "env": trainer.env_name,
        "seed": trainer.seed,
        "update_index": state["update_index"],
        "env_steps": state["env_steps"],
        "episode_counter": state["episode_counter"],
        "cap_state": state["cap_state"],
        "opt_pi_t": state["opt_pi"]["t"],
        "opt_v_t": state["opt_v"]["t"],
        "rng": state["rng"],
    }
    # trainer.json goes last: its presence marks a complete checkpoint
    atomic_write(d / "trainer.json", json.dumps(meta, indent=1, sort_keys=True) + "\n")


def load_checkpoint(directory, trainer: Trainer) -> None:
    d = Path(directory)
    meta = json.loads((d / "trainer.json").read_text())
    if (meta["algorithm"], meta["env"], meta["seed"]) != (trainer.algorithm, trainer.env_name, trainer.seed):
        raise RunError(f"checkpoint {d} belongs to a different run")
    _, pol = load_params(d / "policy.bin")
    _, val = load_params(d / "value.bin")
    with np.load(d / "moments.npz") as z:
        moments = {k: z[k].copy() for k in z.files}
    trainer.load_state_dict({
        "policy": pol.values,
        "value": val.values,
        "opt_pi": {"m": moments["pi_m"], "v": moments["pi_v"], "t": meta["opt_pi_t"]},
        "opt_v": {"m": moments["v_m"], "v": moments["v_v"], "t": meta["opt_v_t"]},
        "rng": meta["rng"],
        "episode_counter": meta["episode_counter"],
        "cap_state": meta["cap_state"],
        "update_index": meta["update_index"],
        "env_steps": meta["env_steps"],
    })


def run_seed(cfg: ExperimentConfig, seed: int, run_dir, resume: bool = True, log=None) -> list[dict]:
    """Train one seed, resuming from its checkpoint when one exists."""
    seed_dir = Path(run_dir) / f"seed_{seed}"
    ckpt = seed_dir / "checkpoint"
    metrics_path = seed_dir / "metrics.csv"
    trainer = Trainer(cfg.algorithm, cfg.env, cfg.algo, seed)
    rows: list[dict] = []
    if resume and (ckpt / "trainer.json").exists() and metrics_path.exists():
        load_checkpoint(ckpt, trainer)
        rows = read_metrics(metrics_path)[: trainer.update_index]
        if len(rows) != trainer.update_index:
            raise RunError(f"{metrics_path} has {len(rows)} rows but the checkpoint is at update "
                           f"{trainer.update_index}")
        if log:
            log(f"seed {seed}: resuming at update {trainer.update_index}")
    t0 = time.perf_counter()

    def persist(tr: Trainer) -> None:
        atomic_write(metrics_path, metrics_csv(rows))
        save_checkpoint(ckpt, tr)

    def on_update(tr: Trainer, row: dict) -> None:
        rows.append(row)
        k = tr.update_index
        if cfg.checkpoint_every and k % cfg.checkpoint_every == 0 and k < cfg.algo.updates:
            persist(tr)
        if log and row["eval_cvar_alpha"] is not None:
            log(f"seed {seed}: update {k}/{cfg.algo.updates}, steps {row['cumulative_env_steps']}, "
                f"eval CVaR {row['eval_cvar_alpha']:.3f}, eval mean {row['eval_return_mean']:.3f}")

    train(cfg.algorithm, cfg.env, cfg.algo, seed, eval_every=cfg.eval_every, eval_episodes=cfg.eval_episodes,
          trainer=trainer, on_update=on_update, record_wall_time=cfg.record_wall_time)
    persist(trainer)
    manifest = {
        "config": serialize_config(cfg),
        "env": cfg.env,
        "algorithm": cfg.algorithm,
        "seed": seed,
        "min_cap_value": cfg.min_cap_value,
        "algo": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg.algo).items()},
        "code_version": code_version(),
        "updates_completed": trainer.update_index,
        "wall_seconds": time.perf_counter() - t0,
    }
    atomic_write(seed_dir / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return rows


def run_experiment(cfg: ExperimentConfig, resume: bool = True, log=None) -> dict[int, list[dict]]:
    run_dir = Path(cfg.run_dir())
    atomic_write(run_dir / "config.txt", serialize_config(cfg))
    return {seed: run_seed(cfg, seed, run_dir, resume=resume, log=log) for seed in cfg.seeds}


def sampling_policy(policy: Mlp):
    return lambda obs: categorical_head(policy(obs))


def evaluate_fn(policy_fn, env: str, alpha: float, episodes: int, seed: int, out_path=None,
                num_envs: int = 16) -> dict:
    """Roll out ``episodes`` episodes with actions sampled from ``policy_fn``."""
    if episodes < 1:
        raise RunError("episodes must be >= 1")
    returns = evaluate_policy(policy_fn, env, episodes, seed, stream=EVAL_STREAM, num_envs=num_envs)
    result = {
        "cvar": empirical_cvar(returns, alpha),
        "var": empirical_var(returns, alpha),
        "mean": float(returns.mean()),
        "returns": returns,
        "returns_path": None,
    }
    if out_path is not None:
        atomic_write(out_path, "".join(f"{r!r}\n" for r in returns.tolist()))
        result["returns_path"] = str(out_path)
    return result


def evaluate(checkpoint, env: str, alpha: float = 0.2, episodes: int = 1000, seed: int = 0, out_path=None) -> dict:
    """Evaluate a saved policy (a checkpoint directory or a policy.bin file).

    The return list is written next to the checkpoint unless ``out_path`` is given.
    """
    path = Path(checkpoint)
    policy_file = path / "policy.bin" if path.is_dir() else path
    if not policy_file.exists():
        raise RunError(f"no policy parameters at {policy_file}")
    spec, params = load_params(policy_file)
    env_spec = make_env(env).spec
    if spec.input_dim != env_spec.observation_dim or spec.output_dim != env_spec.action_count:
        raise RunError(
            f"checkpoint network is {spec.input_dim} -> {spec.output_dim}, but {env} needs "
            f"{env_spec.observation_dim} observations -> {env_spec.action_count} actions"
        )
    if out_path is None:
        out_path = policy_file.parent / f"eval_{env}_seed{seed}_n{episodes}.txt"
    return evaluate_fn(sampling_policy(Mlp(spec, params=params)), env, alpha, episodes, seed, out_path)


PLOT_METRICS = ("train_return_mean", "train_cvar_alpha", "train_var_alpha", "eval_cvar_alpha",
                "eval_return_mean", "cap_value")
Z95 = NormalDist().inv_cdf(0.975)


def summarize(values: list[float]) -> dict:
    """Mean, min, max and a 95% normal-approximation interval for the mean."""
    n = len(values)
    mean = math.fsum(values) / n
    if n > 1:
        sd = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))
        half = Z95 * sd / math.sqrt(n)
    else:
        half = 0.0
    return {"mean": mean, "min": min(values), "max": max(values), "ci_low": mean - half, "ci_high": mean + half}


def plotdata_rows(per_seed: dict[str, list[dict]]) -> tuple[list[str], list[list]]:
    if not per_seed:
        raise RunError("no completed runs to merge")
    names = sorted(per_seed)
    grids = {n: [r["update_index"] for r in per_seed[n]] for n in names}
    ref = grids[names[0]]
    for n in names[1:]:
        if grids[n] != ref:
            raise RunError(f"update grids differ between {names[0]} ({len(ref)} rows) and {n} ({len(grids[n])} rows)")
    header = ["update_index", "cumulative_env_steps", "seeds"]
    for m in PLOT_METRICS:
        header += [f"{m}_{s}" for s in ("mean", "min", "max", "ci_low", "ci_high")]
    table = []
    for i, k in enumerate(ref):
        steps = [per_seed[n][i]["cumulative_env_steps"] for n in names]
        line = [k, math.fsum(steps) / len(steps), len(names)]
        for m in PLOT_METRICS:
            vals = [per_seed[n][i][m] for n in names if per_seed[n][i][m] is not None]
            if vals:
                s = summarize(vals)
                line += [s["mean"], s["min"], s["max"], s["ci_low"], s["ci_high"]]
            else:
                line += [None] * 5
        table.append(line)
    return header, table


def emit_plotdata(run_dir, out_path=None) -> Path:
    """Merge every ``seed_*/metrics.csv`` under ``run_dir`` into one CSV keyed by update index.

    ``cumulative_env_steps`` is the across-seed mean (the x-axis).
    """
    run_dir = Path(run_dir)
    files = sorted(run_dir.glob("seed_*/metrics.csv"))
    if not files:
        raise RunError(f"no seed_*/metrics.csv under {run_dir}")
    per_seed = {f.parent.name: read_metrics(f) for f in files}
    header, table = plotdata_rows(per_seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for line in table:
        w.writerow([_cell(v) for v in line])
    out = Path(out_path) if out_path else run_dir / "plotdata.csv"
    atomic_write(out, buf.getvalue())
    return out
