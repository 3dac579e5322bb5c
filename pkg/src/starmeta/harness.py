"""Multi-seed experiment runner, comparisons, sweeps and CSV persistence."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import TrainResult, train
from .config import ExperimentConfig, build_topology, config_diff, desk_config, train_config
from .mdp import action_dim, state_dim
from .neural import flops_count, layer_products

COLUMNS = ("seed", "episode", "reward", "total_rate", "min_rate", "feasible_steps")
METRICS = ("reward", "total_rate", "min_rate", "feasible_steps")
SWEEP_VARIABLES = ("p_max", "elements", "users")


@dataclass
class Row:
    seed: int
    episode: int
    reward: float
    total_rate: float
    min_rate: float
    feasible_steps: int


@dataclass
class MetricsLog:
    """Per-seed, per-episode records of one scenario.

    ``config`` holds the fields that differ from the reference profile, as
    config text, so a log documents which knobs produced it.  ``results`` keeps
    the trained agents when requested; it is not persisted.
    """

    scenario: str
    rows: list[Row] = field(default_factory=list)
    config: dict[str, str] = field(default_factory=dict)
    results: dict[int, TrainResult] = field(default_factory=dict, repr=False, compare=False)

    @property
    def seeds(self) -> list[int]:
        return sorted({r.seed for r in self.rows})

    def episodes(self, seed: int) -> int:
        return sum(1 for r in self.rows if r.seed == seed)

    def series(self, metric: str = "reward") -> np.ndarray:
        """Array of shape (seeds, episodes) ordered by seed then episode."""
        if metric not in METRICS:
            raise ValueError(f"unknown metric {metric!r}; choose from {METRICS}")
        seeds = self.seeds
        if not seeds:
            return np.zeros((0, 0))
        counts = {self.episodes(s) for s in seeds}
        if len(counts) != 1:
            raise ValueError(f"seeds have unequal episode counts {sorted(counts)}")
        out = np.zeros((len(seeds), counts.pop()))
        idx = {s: i for i, s in enumerate(seeds)}
        for r in self.rows:
            out[idx[r.seed], r.episode - 1] = getattr(r, metric)
        return out

    def tail_means(self, metric: str = "reward", fraction: float = 0.1) -> np.ndarray:
        data = self.series(metric)
        n = max(1, int(math.ceil(fraction * data.shape[1])))
        return data[:, -n:].mean(axis=1)

    def head_means(self, metric: str = "reward", fraction: float = 0.1) -> np.ndarray:
        data = self.series(metric)
        n = max(1, int(math.ceil(fraction * data.shape[1])))
        return data[:, :n].mean(axis=1)

    def summary(self, fraction: float = 0.1) -> dict[str, float]:
        out = {}
        if not self.rows:
            return out
        for m in METRICS:
            tail = self.tail_means(m, fraction)
            out[f"tail_{m}_mean"] = float(tail.mean())
            out[f"tail_{m}_std"] = float(tail.std())
        return out


def _rows_from(result: TrainResult, seed: int) -> list[Row]:
    return [
        Row(seed, r.episode, r.reward, r.total_rate, r.min_rate, r.feasible_steps) for r in result.records
    ]


def _train_seed(args):
    cfg, seed = args
    return seed, train(train_config(cfg, seed))


def run_experiment(cfg: ExperimentConfig, keep_agents: bool = False, base: ExperimentConfig | None = None):
    """Train one agent per seed and collect their episode records."""
    cfg.validate()
    build_topology(cfg)  # surface geometry errors before any worker starts
    jobs = [(cfg, s) for s in cfg.seeds]
    if cfg.n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.n_jobs, len(jobs))) as pool:
            done = list(pool.map(_train_seed, jobs))
    else:
        done = [_train_seed(j) for j in jobs]
    log = MetricsLog(cfg.scenario, config=config_diff(cfg, base if base is not None else desk_config()))
    for seed, result in sorted(done, key=lambda x: x[0]):
        log.rows += _rows_from(result, seed)
        if keep_agents:
            log.results[seed] = result
    return log


@dataclass
class Comparison:
    metric: str
    mean_a: float
    mean_b: float
    gain: float
    seeds: list[int]
    diffs: np.ndarray
    positive: int

    def lines(self) -> list[str]:
        out = [
            f"metric = {self.metric}",
            f"mean_a = {self.mean_a!r}",
            f"mean_b = {self.mean_b!r}",
            f"gain = {self.gain!r}",
            f"positive_seeds = {self.positive}/{len(self.seeds)}",
        ]
        out += [f"diff_seed_{s} = {d!r}" for s, d in zip(self.seeds, self.diffs)]
        return out


def compare(log_a: MetricsLog, log_b: MetricsLog, metric: str = "reward", fraction: float = 0.1) -> Comparison:
    """Relative tail gain of A over B plus paired per-seed differences."""
    if log_a.seeds != log_b.seeds:
        raise ValueError(f"seed lists differ: {log_a.seeds} vs {log_b.seeds}")
    if not log_a.seeds:
        raise ValueError("cannot compare empty logs")
    sa, sb = log_a.series(metric), log_b.series(metric)
    if sa.shape != sb.shape:
        raise ValueError(f"episode counts differ: {sa.shape[1]} vs {sb.shape[1]}")
    ta, tb = log_a.tail_means(metric, fraction), log_b.tail_means(metric, fraction)
    mean_a, mean_b = float(ta.mean()), float(tb.mean())
    if mean_b == 0.0:
        raise ValueError("baseline tail mean is zero; relative gain undefined")
    diffs = ta - tb
    return Comparison(metric, mean_a, mean_b, (mean_a - mean_b) / abs(mean_b), log_a.seeds, diffs, int(np.sum(diffs > 0)))


def sweep_config(cfg: ExperimentConfig, variable: str, value) -> ExperimentConfig:
    if variable == "p_max":
        return cfg.replace(p_max=float(value))
    if variable == "elements":
        return cfg.replace(elements=int(value))
    if variable == "users":
        if cfg.user_positions:
            raise ValueError("a users sweep needs the generated geometry, not explicit user positions")
        if int(value) % cfg.n_ris:
            raise ValueError(f"{value} users cannot be split evenly over {cfg.n_ris} surfaces")
        return cfg.replace(users_per_ris=int(value) // cfg.n_ris)
    raise ValueError(f"sweep variable must be one of {SWEEP_VARIABLES}, got {variable!r}")


def sweep(cfg: ExperimentConfig, variable: str, values, runner=run_experiment) -> list[tuple[float, MetricsLog]]:
    """One experiment per value; every other setting, seeds included, is shared."""
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    if any(b <= a for a, b in zip(values[:-1], values[1:])):
        raise ValueError(f"sweep values must be strictly increasing, got {values}")
    return [(v, runner(sweep_config(cfg, variable, v))) for v in values]


@dataclass
class Complexity:
    actor: float
    critic: float
    meta: float
    actor_products: int
    critic_products: int
    meta_products: int

    @property
    def ddpg(self) -> float:
        return self.actor + self.critic

    @property
    def meta_ddpg(self) -> float:
        # the meta-critic runs at half rate in the aggregate count
        return self.ddpg + 0.5 * self.meta

    @property
    def overhead(self) -> float:
        return 0.5 * self.meta / self.ddpg

    @property
    def order_ddpg(self) -> int:
        return self.actor_products + self.critic_products

    @property
    def order_meta(self) -> float:
        return self.order_ddpg + 0.5 * self.meta_products

    def lines(self) -> list[str]:
        return [
            f"actor_flops = {self.actor!r}",
            f"critic_flops = {self.critic!r}",
            f"meta_critic_flops = {self.meta!r}",
            f"ddpg_flops = {self.ddpg!r}",
            f"meta_ddpg_flops = {self.meta_ddpg!r}",
            f"ddpg_order = {self.order_ddpg}",
            f"meta_ddpg_order = {self.order_meta!r}",
            f"meta_overhead = {self.overhead!r}",
        ]


def complexity_report(actor_sizes, critic_sizes, meta_sizes=(), act_cost: float = 1.0) -> Complexity:
    """FLOPS of each network; an empty (or single-layer) meta list counts as zero."""
    meta_sizes = list(meta_sizes)
    has_meta = len(meta_sizes) >= 2
    return Complexity(
        flops_count(actor_sizes, act_cost),
        flops_count(critic_sizes, act_cost),
        flops_count(meta_sizes, act_cost) if has_meta else 0.0,
        layer_products(actor_sizes),
        layer_products(critic_sizes),
        layer_products(meta_sizes) if has_meta else 0,
    )


def architectures(cfg: ExperimentConfig):
    """Layer sizes of the actor, critic and meta-critic implied by ``cfg``."""
    top = build_topology(cfg)
    s, a = state_dim(top), action_dim(top)
    actor = [s, *cfg.hidden, a]
    critic = [s + a, *cfg.hidden, 1]
    meta = [s + a, *cfg.meta_critic_hidden, 1] if cfg.meta_critic_hidden else []
    return actor, critic, meta


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def export(log: MetricsLog, path) -> Path:
    """Write CSV records followed by ``# key = value`` summary lines."""
    path = Path(path)
    lines = [",".join(COLUMNS)]
    for r in sorted(log.rows, key=lambda r: (r.seed, r.episode)):
        lines.append(",".join(_fmt(getattr(r, c)) for c in COLUMNS))
    if log.rows:
        lines.append(f"# scenario = {log.scenario}")
        for key, value in log.summary().items():
            lines.append(f"# {key} = {value!r}")
        for key in sorted(log.config):
            lines.append(f"# config.{key} = {log.config[key]}")
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write metrics to {path}: {exc}") from exc
    return path


def read_log(path) -> MetricsLog:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read metrics from {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0] != ",".join(COLUMNS):
        raise ValueError(f"{path}: missing or unexpected CSV header")
    log = MetricsLog(scenario="")
    for line in lines[1:]:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(" = ")
            if key == "scenario":
                log.scenario = value
            elif key.startswith("config."):
                log.config[key[len("config."):]] = value
            continue
        if not line.strip():
            continue
        f = line.split(",")
        log.rows.append(Row(int(f[0]), int(f[1]), float(f[2]), float(f[3]), float(f[4]), int(f[5])))
    return log


__all__ = [
    "COLUMNS",
    "Comparison",
    "Complexity",
    "MetricsLog",
    "Row",
    "architectures",
    "compare",
    "complexity_report",
    "export",
    "read_log",
    "run_experiment",
    "sweep",
    "sweep_config",
]
