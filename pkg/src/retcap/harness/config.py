"""Experiment configuration: flat ``key = value`` lines grouped under ``[section]`` headers.

Every key has a default taken from the per-environment hyperparameter tables,
so a file only needs ``env`` and ``algorithm``; ``parse_config`` fills in the
rest and ``serialize_config`` writes the fully materialized form back out.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field, fields, replace

from ..algos.trainers import ALGORITHMS, FAIRNESS_MODES, AlgoConfig
from ..envs import ENVIRONMENTS

MIN_CAP_CHOICES = ("optimal_var", "expected_value_cvar", "conservative_cvar", "random_cvar")

# minimum-cap presets per environment; a missing entry means the table gives no value
MIN_CAPS = {
    "betting": {"optimal_var": 16.0, "expected_value_cvar": -16.0, "conservative_cvar": 0.0},
    "av": {"optimal_var": 27.0, "expected_value_cvar": 6.0, "random_cvar": -256.0},
    "maze_continuous": {"optimal_var": -3.7, "expected_value_cvar": -54.0, "conservative_cvar": -151.0},
    "maze_discrete": {"optimal_var": -4.0, "expected_value_cvar": -40.0, "conservative_cvar": -90.0},
}
DEFAULT_MIN_CAP = {
    "betting": "conservative_cvar",
    "av": "random_cvar",
    "maze_continuous": "conservative_cvar",
    "maze_discrete": "conservative_cvar",
}

# per-environment table columns: ppo, return_capping, cvar_ppo, cvar_pg.
# Blank cells in the tables take the risk-neutral PPO value.
_COLUMNS = ("ppo", "return_capping", "cvar_ppo", "cvar_pg")
_TABLES = {
    "betting": dict(
        alpha=(1.0, 0.2, 0.2, 0.2), updates=(200,) * 4, batch_env_steps=(5000,) * 4,
        epochs_per_batch=(5,) * 4, sub_batch_size=(50, 50, 50, 1000), cap_eta=(0.2,) * 4,
    ),
    "av": dict(
        alpha=(1.0, 0.05, 0.05, 0.05), updates=(400, 400, 200, 66), batch_env_steps=(1000, 1000, 2000, 6000),
        epochs_per_batch=(1,) * 4, sub_batch_size=(50, 50, 50, 300), cap_eta=(0.6,) * 4,
    ),
    "maze_continuous": dict(
        alpha=(1.0, 0.05, 0.05, 0.05), updates=(100, 100, 200, 66), batch_env_steps=(10000,) * 4,
        epochs_per_batch=(6,) * 4, sub_batch_size=(50, 50, 50, 500), cap_eta=(0.2,) * 4,
    ),
    "maze_discrete": dict(
        alpha=(1.0, 0.2, 0.2, 0.2), updates=(100, 100, 40, 40), batch_env_steps=(1000, 1000, 5000, 1000),
        epochs_per_batch=(6,) * 4, sub_batch_size=(50, 50, 50, 1000), cap_eta=(0.2,) * 4,
    ),
}


class ConfigError(ValueError):
    """Malformed or out-of-range configuration, with the offending line when known."""


def table_defaults(env: str, algorithm: str) -> dict:
    col = _COLUMNS.index(algorithm)
    return {k: v[col] for k, v in _TABLES[env].items()}


def resolve_min_cap(env: str, choice: str) -> float:
    if choice in MIN_CAP_CHOICES:
        if choice not in MIN_CAPS[env]:
            have = ", ".join(MIN_CAPS[env])
            raise ConfigError(f"no {choice} minimum cap is defined for {env} (available: {have})")
        return MIN_CAPS[env][choice]
    try:
        value = float(choice)
    except ValueError:
        raise ConfigError(f"min_cap must be one of {MIN_CAP_CHOICES} or a number, got {choice!r}") from None
    if not math.isfinite(value):
        raise ConfigError("min_cap must be finite")
    return value


def output_root() -> str:
    return os.environ.get("RETCAP_OUTPUT_ROOT", "runs")


@dataclass
class ExperimentConfig:
    env: str
    algorithm: str
    algo: AlgoConfig
    min_cap: str = "conservative_cvar"  # preset name or a number
    seeds: list[int] = field(default_factory=lambda: [1])
    eval_every: int = 5
    eval_episodes: int = 1000
    checkpoint_every: int = 0  # 0 keeps only the final checkpoint
    output_dir: str = ""  # relative paths resolve under RETCAP_OUTPUT_ROOT
    record_wall_time: bool = False

    @property
    def min_cap_value(self) -> float:
        return resolve_min_cap(self.env, self.min_cap)

    def run_dir(self) -> str:
        name = self.output_dir or f"{self.env}_{self.algorithm}"
        return name if os.path.isabs(name) else os.path.join(output_root(), name)


_EXPERIMENT_KEYS = {
    "env": str, "algorithm": str, "seeds": "seeds", "eval_every": int, "eval_episodes": int,
    "checkpoint_every": int, "output_dir": str, "record_wall_time": bool,
}
_ALGO_KEYS = {f.name: f.type for f in fields(AlgoConfig) if f.name not in ("min_cap", "cap_eta")}
_CAP_KEYS = {"min_cap": str, "eta": float}
SECTIONS = {"experiment": _EXPERIMENT_KEYS, "algo": _ALGO_KEYS, "cap": _CAP_KEYS}


def _convert(kind, text: str):
    if kind in (int, "int"):
        return int(text)
    if kind in (float, "float"):
        return float(text)
    if kind in (bool, "bool"):
        low = text.lower()
        if low not in ("true", "false"):
            raise ValueError("expected true or false")
        return low == "true"
    if kind == "seeds":
        seeds = [int(s) for s in text.replace(",", " ").split()]
        if not seeds:
            raise ValueError("at least one seed is required")
        if any(s < 0 for s in seeds):
            raise ValueError("seeds must be nonnegative")
        return seeds
    if kind in ("tuple[int, ...]",):
        dims = tuple(int(s) for s in text.replace(",", " ").split())
        if not dims or any(d < 1 for d in dims):
            raise ValueError("hidden needs one or more positive sizes")
        return dims
    if not text:
        raise ValueError("empty value")
    return text


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    values: dict[str, tuple[object, int]] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{where}: malformed section header {line!r}")
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"{where}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {line!r}")
        if section is None:
            raise ConfigError(f"{where}: key outside of any [section]")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SECTIONS[section]:
            raise ConfigError(f"{where}: unknown key {key!r} in [{section}]")
        full = f"{section}.{key}"
        if full in values:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        try:
            values[full] = (_convert(SECTIONS[section][key], val), lineno)
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key}: {exc}") from None

    def line_of(full: str) -> str:
        return f"{source}:{values[full][1]}" if full in values else source

    def get(full, default=None):
        return values[full][0] if full in values else default

    env, algorithm = get("experiment.env"), get("experiment.algorithm")
    if env is None or algorithm is None:
        raise ConfigError(f"{source}: [experiment] needs both env and algorithm")
    if env not in ENVIRONMENTS:
        raise ConfigError(f"{line_of('experiment.env')}: unknown env {env!r} (choose from {', '.join(ENVIRONMENTS)})")
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"{line_of('experiment.algorithm')}: unknown algorithm {algorithm!r} "
                          f"(choose from {', '.join(ALGORITHMS)})")

    defaults = table_defaults(env, algorithm)
    algo_kwargs = {k: defaults[k] for k in defaults if k != "cap_eta"}
    algo_kwargs["cap_eta"] = defaults["cap_eta"]
    for key in _ALGO_KEYS:
        if f"algo.{key}" in values:
            algo_kwargs[key] = get(f"algo.{key}")
    if "cap.eta" in values:
        algo_kwargs["cap_eta"] = get("cap.eta")
    min_cap = get("cap.min_cap", DEFAULT_MIN_CAP[env])
    try:
        cap_value = resolve_min_cap(env, min_cap)
    except ConfigError as exc:
        raise ConfigError(f"{line_of('cap.min_cap')}: {exc}") from None
    try:
        algo = AlgoConfig(**algo_kwargs, min_cap=cap_value)
    except ValueError as exc:
        # point at the first offending key we can identify
        bad = next((k for k in _ALGO_KEYS if k in str(exc)), None)
        full = f"algo.{bad}" if bad else ("cap.eta" if "cap" in str(exc) else "")
        raise ConfigError(f"{line_of(full)}: {exc}") from None

    cfg = ExperimentConfig(
        env=env,
        algorithm=algorithm,
        algo=algo,
        min_cap=min_cap,
        seeds=get("experiment.seeds", [1]),
        eval_every=get("experiment.eval_every", 5),
        eval_episodes=get("experiment.eval_episodes", 1000),
        checkpoint_every=get("experiment.checkpoint_every", 0),
        output_dir=get("experiment.output_dir", ""),
        record_wall_time=get("experiment.record_wall_time", False),
    )
    for key, low in (("eval_every", 1), ("eval_episodes", 1), ("checkpoint_every", 0)):
        if getattr(cfg, key) < low:
            raise ConfigError(f"{line_of('experiment.' + key)}: {key} must be >= {low}")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        raise ConfigError(f"{line_of('experiment.seeds')}: seeds must be distinct")
    return cfg


def parse_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, source=str(path))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ", ".join(str(x) for x in v)
    return str(v)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Fully materialized config text; parsing it back yields an equal config."""
    algo = asdict(cfg.algo)
    lines = ["[experiment]"]
    for key in _EXPERIMENT_KEYS:
        lines.append(f"{key} = {_fmt(getattr(cfg, key))}" if getattr(cfg, key) != "" else f"# {key} =")
    lines += ["", "[algo]"]
    lines += [f"{key} = {_fmt(algo[key])}" for key in _ALGO_KEYS]
    lines += ["", "[cap]", f"min_cap = {cfg.min_cap}  # resolves to {cfg.min_cap_value!r}",
              f"eta = {_fmt(cfg.algo.cap_eta)}", ""]
    return "\n".join(lines)


def default_config(env: str, algorithm: str, **overrides) -> ExperimentConfig:
    """Table defaults for (env, algorithm); ``overrides`` may name ExperimentConfig or AlgoConfig fields."""
    cfg = parse_config_text(f"[experiment]\nenv = {env}\nalgorithm = {algorithm}\n")
    algo_over = {k: overrides.pop(k) for k in list(overrides) if k in _ALGO_KEYS or k == "cap_eta"}
    if "min_cap" in overrides:
        overrides["min_cap"] = str(overrides["min_cap"])
        algo_over["min_cap"] = resolve_min_cap(env, overrides["min_cap"])
    return replace(cfg, algo=replace(cfg.algo, **algo_over), **overrides)
