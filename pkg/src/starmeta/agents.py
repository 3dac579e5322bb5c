"""DDPG and Meta-DDPG agents."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .mdp import EnvParams, Environment, Transition
from .channel import Topology
from .neural import SGD, Adam, DenseNet, backward, forward, net_from_arrays, net_to_arrays, soft_update

ACTOR_OUTPUTS = ("tanh", "linear", "inverting")
AGENT_KINDS = ("meta", "ddpg")


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int, dtype="float64"):
        if capacity < 1:
            raise ValueError("replay capacity must be positive")
        self.capacity = int(capacity)
        self.s = np.zeros((capacity, state_dim), dtype=dtype)
        self.a = np.zeros((capacity, action_dim), dtype=dtype)
        self.r = np.zeros(capacity, dtype=dtype)
        self.s2 = np.zeros((capacity, state_dim), dtype=dtype)
        self.done = np.zeros(capacity, dtype=dtype)
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def add(self, tr: Transition) -> None:
        i = self._next
        self.s[i], self.a[i], self.r[i] = tr.state, tr.action, tr.reward
        self.s2[i], self.done[i] = tr.next_state, float(tr.done)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} transitions, need {batch_size}")
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size: int, rng: np.random.Generator) -> "Batch":
        idx = self.sample_indices(batch_size, rng)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx])


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s2: np.ndarray
    done: np.ndarray

    def __len__(self):
        return len(self.r)


@dataclass
class AgentConfig:
    kind: str = "meta"
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
    hidden: tuple[int, ...] = (256, 256)
    optimizer: str = "adam"
    updates_per_step: int = 1
    dtype: str = "float64"
    actor_output: str = "tanh"
    action_scale: float = 4.0
    reward_scale: float = 1.0
    relative_noise: bool = False

    def validate(self) -> None:
        if self.kind not in AGENT_KINDS:
            raise ValueError(f"agent kind must be one of {AGENT_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.gamma}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"soft-update rate must lie in [0, 1], got {self.tau}")
        if not 0.0 <= self.psi0 <= 1.0:
            raise ValueError(f"initial meta knowledge must lie in [0, 1], got {self.psi0}")
        if self.batch_size < 1 or self.batch_size > self.buffer_capacity:
            raise ValueError("batch size must be in [1, buffer capacity]")
        if self.update_period < 1 or self.updates_per_step < 1:
            raise ValueError("update period and updates per step must be >= 1")
        if self.reg_reduction not in ("mean", "sum"):
            raise ValueError("reg_reduction must be 'mean' or 'sum'")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        if min(self.lr_actor, self.lr_critic, self.lr_meta) <= 0:
            raise ValueError("learning rates must be positive")
        if self.actor_output not in ACTOR_OUTPUTS or self.action_scale <= 0:
            raise ValueError(f"actor_output must be one of {ACTOR_OUTPUTS} with a positive action_scale")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be 'float32' or 'float64'")


@dataclass
class AgentBundle:
    actor: DenseNet
    critic: DenseNet
    target_actor: DenseNet
    target_critic: DenseNet
    actor_opt: Adam | SGD
    critic_opt: Adam | SGD
    config: AgentConfig
    noise_scale: float

    @property
    def state_dim(self) -> int:
        return self.actor.sizes[0]

    @property
    def action_dim(self) -> int:
        return self.actor.sizes[-1]


@dataclass
class MetaState:
    psi: float = 0.5
    lr_meta: float = 1e-3

    def clamp(self) -> None:
        self.psi = float(min(max(self.psi, 0.0), 1.0))


def make_bundle(state_dim: int, action_dim: int, config: AgentConfig, rng) -> AgentBundle:
    rng = np.random.default_rng(rng)
    actor = DenseNet.create(
        [state_dim, *config.hidden, action_dim],
        output="tanh" if config.actor_output == "tanh" else "linear",
        rng=rng,
        final_scale=3e-3,
        dtype=config.dtype,
        output_scale=config.action_scale if config.actor_output == "tanh" else 1.0,
    )
    critic = DenseNet.create(
        [state_dim + action_dim, *config.hidden, 1], rng=rng, final_scale=3e-3, dtype=config.dtype
    )
    opt = Adam if config.optimizer == "adam" else SGD
    return AgentBundle(
        actor=actor,
        critic=critic,
        target_actor=actor.copy(),
        target_critic=critic.copy(),
        actor_opt=opt(config.lr_actor),
        critic_opt=opt(config.lr_critic),
        config=config,
        noise_scale=config.noise_start,
    )


def exploration_std(bundle: AgentBundle) -> float:
    """Current noise std; ``relative_noise`` measures it in units of the action bound."""
    cfg = bundle.config
    return bundle.noise_scale * (cfg.action_scale if cfg.relative_noise else 1.0)


def select_action(bundle: AgentBundle, state, explore: bool, rng: np.random.Generator) -> np.ndarray:
    a = bundle.actor(state)[0].astype(float)
    if explore:
        a = a + rng.normal(0.0, 1.0, size=a.shape) * exploration_std(bundle)
    return a


def decay_noise(bundle: AgentBundle) -> None:
    cfg = bundle.config
    bundle.noise_scale = max(cfg.noise_end, bundle.noise_scale * cfg.noise_decay)


def critic_targets(bundle: AgentBundle, batch: Batch) -> np.ndarray:
    a2 = bundle.target_actor(batch.s2)
    q2 = bundle.target_critic(np.hstack([batch.s2, a2]))[:, 0]
    return batch.r + (1.0 - batch.done) * bundle.config.gamma * q2


def critic_update(bundle: AgentBundle, batch: Batch) -> float:
    """One optimizer step on the Bellman error; returns the pre-step loss."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    X = critic_targets(bundle, batch)
    q, cache = forward(bundle.critic, np.hstack([batch.s, batch.a]))
    diff = q[:, 0] - X
    loss = float(np.mean(diff**2))
    grads, _ = backward(bundle.critic, cache, (2.0 * diff / len(batch))[:, None])
    bundle.critic_opt.step(bundle.critic, grads)
    return loss


def invert_gradients(g, a, bound):
    """Bounded-action gradient inversion for a descent gradient ``g`` on outputs ``a``.

    Steps that push an output toward ``+-bound`` shrink linearly as it gets
    closer and reverse once it is outside the range.
    """
    up = g < 0  # descent raises the output
    room_up = (bound - a) / (2 * bound)
    room_down = (a + bound) / (2 * bound)
    return np.where(up, g * room_up, g * room_down)


def actor_objective(actor: DenseNet, critic: DenseNet, states: np.ndarray, with_grad: bool = True, bound=None):
    """``J = -mean Q(s, actor(s))`` and, optionally, its gradient w.r.t. the actor.

    With ``bound`` the action gradient is passed through :func:`invert_gradients`.
    """
    a, a_cache = forward(actor, states)
    q, c_cache = forward(critic, np.hstack([states, a]))
    J = -float(np.mean(q))
    if not with_grad:
        return J, None
    _, g_in = backward(critic, c_cache, np.full_like(q, -1.0 / len(states)))
    g_a = g_in[:, states.shape[1] :]
    if bound is not None:
        g_a = invert_gradients(g_a, a, bound)
    grads, _ = backward(actor, a_cache, g_a)
    return J, grads


def _with_params(net: DenseNet, params) -> DenseNet:
    return DenseNet(list(params[0::2]), list(params[1::2]), net.activations, net.output_scale)


def actor_update_ddpg(bundle: AgentBundle, batch: Batch):
    """Plain policy step; returns ``(J before the step, actor params after it)``."""
    cfg = bundle.config
    bound = cfg.action_scale if cfg.actor_output == "inverting" else None
    J, grads = actor_objective(bundle.actor, bundle.critic, batch.s, bound=bound)
    bundle.actor_opt.step(bundle.actor, grads)
    return J, [p.copy() for p in bundle.actor.params()]


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def meta_regularizer(actor: DenseNet, states: np.ndarray, psi: float, reduction: str = "mean") -> float:
    """``psi`` times the softplus of the actor outputs, averaged over the batch.

    Action dimensions are averaged (``"mean"``) or summed (``"sum"``).
    """
    sp = _softplus(actor(states))
    per_sample = sp.mean(axis=1) if reduction == "mean" else sp.sum(axis=1)
    return float(psi * per_sample.mean())


def regularizer_direction(actor: DenseNet, states: np.ndarray, reduction: str = "mean"):
    """Gradient of the regularizer at ``psi = 1``; the true gradient is ``psi`` times this."""
    out, cache = forward(actor, states)
    scale = len(states) * (out.shape[1] if reduction == "mean" else 1)
    grads, _ = backward(actor, cache, _sigmoid(out) / scale)
    return grads


def actor_update_meta(bundle: AgentBundle, meta: MetaState, batch: Batch, old_params, direction):
    """Apply the regularizer step to the DDPG-updated actor.

    ``direction`` is the psi-free regularizer gradient taken at the actor
    parameters before the DDPG step.  The actor adopts the new parameters.
    Returns ``(new_params, J(new), J(old))`` on the same batch.
    """
    lr = bundle.config.lr_actor
    new = [o - lr * meta.psi * g for o, g in zip(old_params, direction)]
    J_old, _ = actor_objective(_with_params(bundle.actor, old_params), bundle.critic, batch.s, False)
    J_new, _ = actor_objective(_with_params(bundle.actor, new), bundle.critic, batch.s, False)
    bundle.actor.set_params(new)
    return new, J_new, J_old


def meta_loss_gradient(bundle: AgentBundle, batch: Batch, old_params, direction, J_old, psi, eps):
    """Central difference of ``tanh(J(new(psi)) - J(old))`` with respect to ``psi``."""
    lr = bundle.config.lr_actor

    def loss(value):
        params = [o - lr * value * g for o, g in zip(old_params, direction)]
        J, _ = actor_objective(_with_params(bundle.actor, params), bundle.critic, batch.s, False)
        return np.tanh(J - J_old)

    return float((loss(psi + eps) - loss(psi - eps)) / (2.0 * eps))


def meta_update(meta: MetaState, J_new, J_old, batch, bundle, old_params, direction, eps=None) -> float:
    """One descent step on the meta loss; psi is clamped to [0, 1]."""
    eps = bundle.config.psi_eps if eps is None else eps
    grad = meta_loss_gradient(bundle, batch, old_params, direction, J_old, meta.psi, eps)
    meta.psi = meta.psi - meta.lr_meta * grad
    meta.clamp()
    return meta.psi


def sync_targets(bundle: AgentBundle) -> None:
    soft_update(bundle.target_critic, bundle.critic, bundle.config.tau)
    soft_update(bundle.target_actor, bundle.actor, bundle.config.tau)


def update_step(bundle: AgentBundle, meta: MetaState, batch: Batch) -> dict[str, float]:
    """One gradient iteration of the training loop on ``batch``."""
    cfg = bundle.config
    stats = {"critic_loss": critic_update(bundle, batch)}
    if cfg.kind == "meta":
        direction = regularizer_direction(bundle.actor, batch.s, cfg.reg_reduction)
        J, old = actor_update_ddpg(bundle, batch)
        _, J_new, J_old = actor_update_meta(bundle, meta, batch, old, direction)
        if cfg.learn_psi:
            meta_update(meta, J_new, J_old, batch, bundle, old, direction)
        stats.update(J=J, J_new=J_new, J_old=J_old)
    else:
        J, _ = actor_update_ddpg(bundle, batch)
        stats["J"] = J
    return stats


@dataclass
class EpisodeRecord:
    episode: int
    reward: float
    total_rate: float
    min_rate: float
    feasible_steps: int
    qos_violations: int = 0
    psi: float = float("nan")


@dataclass
class TrainConfig:
    topology: Topology
    env: EnvParams = field(default_factory=EnvParams)
    agent: AgentConfig = field(default_factory=AgentConfig)
    episodes: int = 300
    t_max: int = 50
    seed: int = 0

    def validate(self) -> None:
        self.agent.validate()
        if self.episodes < 1 or self.t_max < 1:
            raise ValueError("episodes and t_max must be positive")


@dataclass
class TrainResult:
    records: list[EpisodeRecord]
    bundle: AgentBundle
    meta: MetaState

    @property
    def rewards(self) -> np.ndarray:
        return np.array([r.reward for r in self.records])


def observe(state: np.ndarray, cfg: AgentConfig) -> np.ndarray:
    """Network input for an environment state: the reward entry shares the reward scale."""
    if cfg.reward_scale == 1.0:
        return state
    out = np.array(state, dtype=float)
    out[0] *= cfg.reward_scale
    return out


def learner_view(tr: Transition, cfg: AgentConfig) -> Transition:
    """Transition as stored for learning (rewards and reward features rescaled)."""
    if cfg.reward_scale == 1.0:
        return tr
    return replace(
        tr,
        state=observe(tr.state, cfg),
        reward=tr.reward * cfg.reward_scale,
        next_state=observe(tr.next_state, cfg),
    )


def _streams(seed: int):
    init, env, noise, replay = np.random.SeedSequence(seed).spawn(4)
    return tuple(np.random.default_rng(s) for s in (init, env, noise, replay))


def train(config: TrainConfig, callback=None) -> TrainResult:
    """Run the (Meta-)DDPG loop; fully determined by ``config.seed``.

    Separate random streams drive network init, the environment, exploration
    noise and replay sampling, so both agent kinds consume them identically.
    ``callback(record, bundle, meta)`` runs after every episode.
    """
    config.validate()
    cfg = config.agent
    init_rng, env_rng, noise_rng, replay_rng = _streams(config.seed)
    env = Environment(config.topology, config.env, config.t_max, env_rng)
    bundle = make_bundle(env.state_dim, env.action_dim, cfg, init_rng)
    meta = MetaState(psi=cfg.psi0 if cfg.kind == "meta" else 0.0, lr_meta=cfg.lr_meta)
    buffer = ReplayBuffer(cfg.buffer_capacity, env.state_dim, env.action_dim, cfg.dtype)

    records = []
    for episode in range(1, config.episodes + 1):
        state = env.reset()
        rewards, rates, mins, feasible, qos = [], [], [], 0, 0
        for t in range(1, config.t_max + 1):
            raw = select_action(bundle, observe(state, cfg), True, noise_rng)
            tr, info = env.step(raw)
            buffer.add(learner_view(tr, cfg))
            rewards.append(tr.reward)
            rates.append(info.report.total)
            mins.append(float(info.report.rate.min()))
            feasible += int(info.feasible)
            qos += int(np.sum(info.report.rate < config.env.r_min))
            state = tr.next_state
            if len(buffer) >= cfg.batch_size:
                for _ in range(cfg.updates_per_step):
                    update_step(bundle, meta, buffer.sample(cfg.batch_size, replay_rng))
                if t % cfg.update_period == 0:
                    sync_targets(bundle)
            if tr.done:
                break
        decay_noise(bundle)
        rec = EpisodeRecord(
            episode,
            float(np.mean(rewards)),
            float(np.mean(rates)),
            float(np.mean(mins)),
            feasible,
            qos,
            meta.psi if cfg.kind == "meta" else float("nan"),
        )
        records.append(rec)
        if callback is not None:
            callback(rec, bundle, meta)
    return TrainResult(records, bundle, meta)


def save_checkpoint(path, bundle: AgentBundle, meta: MetaState) -> None:
    arrays = {}
    for name in ("actor", "critic", "target_actor", "target_critic"):
        arrays.update(net_to_arrays(getattr(bundle, name), prefix=f"{name}."))
    for name in ("actor_opt", "critic_opt"):
        for key, value in getattr(bundle, name).state_arrays().items():
            arrays[f"{name}.{key}"] = value
    arrays["psi"] = np.array(meta.psi)
    arrays["lr_meta"] = np.array(meta.lr_meta)
    arrays["noise_scale"] = np.array(bundle.noise_scale)
    cfg = asdict(bundle.config)
    arrays["agent_config"] = np.array(json.dumps(cfg))
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(bundle, meta)``."""
    with np.load(path) as data:
        data = dict(data)
    cfg_dict = json.loads(str(data["agent_config"]))
    cfg_dict["hidden"] = tuple(cfg_dict["hidden"])
    cfg = AgentConfig(**cfg_dict)
    nets = {name: net_from_arrays(data, prefix=f"{name}.") for name in ("actor", "critic", "target_actor", "target_critic")}
    opts = {}
    for name, lr in (("actor_opt", cfg.lr_actor), ("critic_opt", cfg.lr_critic)):
        opt = Adam(lr) if cfg.optimizer == "adam" else SGD(lr)
        prefix = f"{name}."
        opt.load_state_arrays({k[len(prefix) :]: v for k, v in data.items() if k.startswith(prefix)})
        opts[name] = opt
    bundle = AgentBundle(config=cfg, noise_scale=float(data["noise_scale"]), **nets, **opts)
    return bundle, MetaState(float(data["psi"]), float(data["lr_meta"]))
