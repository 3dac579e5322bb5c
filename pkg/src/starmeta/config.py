"""Experiment configuration: profiles, ``key = value`` files and scenario flags.

A config file is plain text with one ``key = value`` per line; ``#`` starts a
comment.  Keys are the field names of :class:`ExperimentConfig`.  Lists are
comma separated (``seeds = 1,2,3``) and 2-D point lists use ``;`` between
points (``ris_positions = 50,0; 20,0``).
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .agents import AgentConfig, TrainConfig
from .channel import LINK_CLASSES, PathLossModel, Topology, default_topology
from .mdp import EnvParams

SCENARIO_GROUPS = {
    "agent": ("meta", "ddpg"),
    "ris_mode": ("active", "passive"),
    "reflections": ("second_order", "single_reflection"),
    "deployment": ("multi_ris", "single_ris"),
}


@dataclass
class ExperimentConfig:
    # topology
    n_ris: int = 2
    elements: int = 4
    users_per_ris: int = 2
    n_bs: int = 2
    ris_distances: tuple[float, ...] = ()
    ris_positions: tuple[tuple[float, float], ...] = ()
    user_positions: tuple[tuple[float, float], ...] = ()
    user_ris: tuple[int, ...] = ()
    user_side: tuple[str, ...] = ()
    user_distance_min: float = 2.0
    user_distance_max: float = 10.0
    pl_exponent: float = 2.2
    pl_ref_db: float = 30.0
    pl_exponent_ris_bs: float | None = None
    pl_exponent_user_ris: float | None = None
    pl_exponent_ris_ris: float | None = None
    pl_ref_db_ris_bs: float | None = None
    pl_ref_db_user_ris: float | None = None
    pl_ref_db_ris_ris: float | None = None
    # system
    p_max: float = 20.0
    r_min: float = 1.0
    noise_dbm_hz: float = -174.0
    bandwidth_hz: float = 10e6
    delta_max_db: float = 25.0
    # reward
    c1: float = 1.0
    c2: float = 1.0
    c3: float | None = None
    fading: str = "step"
    numerator: str = "serving"
    time_feature: bool = False
    relaxed_beta: bool = False
    # run
    episodes: int = 300
    t_max: int = 50
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    n_jobs: int = 1
    tail_fraction: float = 0.1
    # scenario
    agent: str = "meta"
    ris_mode: str = "active"
    reflections: str = "second_order"
    deployment: str = "multi_ris"
    # learning
    gamma: float = 0.99
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    lr_meta: float = 1e-3
    tau: float = 0.005
    update_period: int = 1
    psi0: float = 0.5
    learn_psi: bool = True
    psi_eps: float = 1e-3
    reg_reduction: str = "mean"
    noise_start: float = 0.2
    noise_end: float = 0.01
    noise_decay: float = 0.995
    batch_size: int = 100
    buffer_capacity: int = 10_000
    hidden: tuple[int, ...] = (64, 64)
    optimizer: str = "adam"
    updates_per_step: int = 1
    dtype: str = "float32"
    meta_critic_hidden: tuple[int, ...] = (16,)
    actor_output: str = "tanh"
    action_scale: float = 4.0
    reward_scale: float = 0.01
    relative_noise: bool = False

    @property
    def n_users(self) -> int:
        return len(self.user_positions) or self.n_ris * self.users_per_ris

    @property
    def noise_power(self) -> float:
        """Noise power in watts over the configured bandwidth."""
        dbm = self.noise_dbm_hz + 10.0 * np.log10(self.bandwidth_hz)
        return 10.0 ** ((dbm - 30.0) / 10.0)

    @property
    def delta_max(self) -> float:
        return 10.0 ** (self.delta_max_db / 10.0)

    @property
    def scenario(self) -> str:
        return "+".join(getattr(self, g) for g in SCENARIO_GROUPS)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def validate(self) -> None:
        for group, options in SCENARIO_GROUPS.items():
            if getattr(self, group) not in options:
                raise ValueError(f"{group} must be one of {options}, got {getattr(self, group)!r}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f"duplicate seeds in {self.seeds}")
        if not 0.0 < self.tail_fraction <= 1.0:
            raise ValueError("tail_fraction must lie in (0, 1]")
        if self.p_max <= 0 or self.bandwidth_hz <= 0:
            raise ValueError("p_max and bandwidth must be positive")


def desk_config(**overrides) -> ExperimentConfig:
    return ExperimentConfig(**overrides)


def full_config(**overrides) -> ExperimentConfig:
    base = dict(
        n_ris=4,
        users_per_ris=4,
        n_bs=4,
        episodes=5000,
        hidden=(256, 256),
        dtype="float64",
        meta_critic_hidden=(64,),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def _field_types():
    return {f.name: f.type for f in fields(ExperimentConfig)}


def _parse_value(name: str, text: str, annotation: str):
    text = text.strip()
    if annotation.endswith("| None") and text.lower() in ("", "none"):
        return None
    base = annotation.replace(" | None", "")
    if base == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {text!r}")
    if base == "int":
        return int(text)
    if base == "float":
        return float(text)
    if base == "str":
        return text
    if base == "tuple[tuple[float, float], ...]":
        pts = [p for p in text.split(";") if p.strip()]
        out = []
        for p in pts:
            xy = [float(v) for v in p.split(",")]
            if len(xy) != 2:
                raise ValueError(f"{name}: points need two coordinates, got {p!r}")
            out.append(tuple(xy))
        return tuple(out)
    item = {"tuple[int, ...]": int, "tuple[float, ...]": float, "tuple[str, ...]": str}[base]
    return tuple(item(v.strip()) for v in text.split(",") if v.strip())


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into typed overrides for ExperimentConfig."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    parser.read_string("[config]\n" + text)
    types = _field_types()
    out = {}
    for key, value in parser["config"].items():
        if key not in types:
            raise ValueError(f"unknown config key {key!r}")
        out[key] = _parse_value(key, value, types[key])
    return out


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    base = base if base is not None else desk_config()
    return base.replace(**parse_config_text(text))


def format_value(value) -> str:
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(",".join(repr(v) for v in p) for p in value)
        return ",".join(str(v) for v in value)
    return str(value)


def config_diff(cfg: ExperimentConfig, base: ExperimentConfig) -> dict[str, str]:
    """Fields whose value differs from ``base``, formatted as config text."""
    out = {}
    for f in fields(ExperimentConfig):
        a, b = getattr(cfg, f.name), getattr(base, f.name)
        if a != b:
            out[f.name] = format_value(a)
    return out


def apply_scenario(cfg: ExperimentConfig, scenario: str | None) -> ExperimentConfig:
    """Apply flags like ``"ddpg+passive"``; at most one flag per group."""
    if not scenario:
        return cfg
    chosen: dict[str, str] = {}
    for flag in scenario.replace(",", "+").split("+"):
        flag = flag.strip()
        if not flag:
            continue
        group = next((g for g, opts in SCENARIO_GROUPS.items() if flag in opts), None)
        if group is None:
            known = sorted(o for opts in SCENARIO_GROUPS.values() for o in opts)
            raise ValueError(f"unknown scenario flag {flag!r}; known flags: {known}")
        if group in chosen and chosen[group] != flag:
            raise ValueError(f"conflicting scenario flags {chosen[group]!r} and {flag!r}")
        chosen[group] = flag
    if chosen.get("deployment") == "single_ris" and chosen.get("reflections") == "second_order":
        raise ValueError("second_order needs at least two surfaces; it cannot be combined with single_ris")
    return cfg.replace(**chosen)


def _path_loss_models(cfg: ExperimentConfig) -> dict[str, PathLossModel]:
    models = {}
    for link in LINK_CLASSES:
        exp = getattr(cfg, f"pl_exponent_{link}")
        ref = getattr(cfg, f"pl_ref_db_{link}")
        models[link] = PathLossModel(
            cfg.pl_exponent if exp is None else exp,
            cfg.pl_ref_db if ref is None else ref,
        )
    return models


def build_topology(cfg: ExperimentConfig) -> Topology:
    """Topology for ``cfg``; ``single_ris`` keeps the users and the BS-closest surface."""
    models = _path_loss_models(cfg)
    if cfg.ris_positions or cfg.user_positions:
        if not (cfg.ris_positions and cfg.user_positions and cfg.user_ris and cfg.user_side):
            raise ValueError("explicit geometry needs ris_positions, user_positions, user_ris and user_side")
        n = len(cfg.ris_positions)
        top = Topology(
            bs_position=np.zeros(2),
            ris_positions=np.array(cfg.ris_positions),
            user_positions=np.array(cfg.user_positions),
            user_ris=np.array(cfg.user_ris),
            user_side=cfg.user_side,
            n_bs=cfg.n_bs,
            elements=(cfg.elements,) * n,
            path_loss=models,
        )
    else:
        top = default_topology(
            n_ris=cfg.n_ris,
            elements=cfg.elements,
            users_per_ris=cfg.users_per_ris,
            n_bs=cfg.n_bs,
            ris_distances=cfg.ris_distances or None,
            user_distance=(cfg.user_distance_min, cfg.user_distance_max),
            path_loss_models=models,
        )
    if cfg.deployment == "single_ris":
        last = top.n_ris - 1
        top = Topology(
            bs_position=top.bs_position,
            ris_positions=top.ris_positions[last:],
            user_positions=top.user_positions,
            user_ris=np.zeros(top.n_users, dtype=int),
            user_side=top.user_side,
            n_bs=top.n_bs,
            elements=top.elements[last:],
            path_loss=top.path_loss,
        )
    return top


def env_params(cfg: ExperimentConfig) -> EnvParams:
    return EnvParams(
        p_max=cfg.p_max,
        delta_max=cfg.delta_max,
        noise_power=cfg.noise_power,
        r_min=cfg.r_min,
        c1=cfg.c1,
        c2=cfg.c2,
        c3=cfg.c3,
        second_order=cfg.reflections == "second_order",
        fixed_delta=1.0 if cfg.ris_mode == "passive" else None,
        numerator=cfg.numerator,
        fading=cfg.fading,
        time_feature=cfg.time_feature,
        relaxed_beta=cfg.relaxed_beta,
    )


def agent_config(cfg: ExperimentConfig) -> AgentConfig:
    names = {f.name for f in fields(AgentConfig)} - {"kind"}
    return AgentConfig(kind=cfg.agent, **{n: getattr(cfg, n) for n in names})


def train_config(cfg: ExperimentConfig, seed: int) -> TrainConfig:
    return TrainConfig(
        topology=build_topology(cfg),
        env=env_params(cfg),
        agent=agent_config(cfg),
        episodes=cfg.episodes,
        t_max=cfg.t_max,
        seed=seed,
    )


__all__ = [
    "ExperimentConfig",
    "SCENARIO_GROUPS",
    "agent_config",
    "apply_scenario",
    "build_topology",
    "config_diff",
    "desk_config",
    "env_params",
    "full_config",
    "load_config",
    "parse_config_text",
    "train_config",
]
