"""State encoding, action projection and reward shaping for the RL environment."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, Topology, sample_channels
from .physics import (
    RELAXED,
    STRUCTURAL,
    FeasibleAction,
    RateReport,
    StarRisProfile,
    check_constraints,
    rate_report,
)


def state_dim(topology: Topology) -> int:
    M, N = topology.elements, topology.n_ris
    F = sum(m * topology.n_bs for m in M)
    f = sum(M[n] for n in topology.user_ris)
    G = sum(M[a] * M[b] for a in range(N) for b in range(a + 1, N))
    return 1 + 2 * (F + f + G)


def action_dim(topology: Topology) -> int:
    K, N = topology.n_users, topology.n_ris
    return K * N + K + K * 2 * topology.n_bs + 5 * sum(topology.elements)


def encode_state(prev_reward: float, channels: ChannelSet) -> np.ndarray:
    """Flatten ``[reward, F by RIS, f by user, G by (n, n2)]``.

    Each matrix contributes its real parts then its imaginary parts (row-major),
    after division by the square root of its link's large-scale gain.
    """
    parts = [np.array([prev_reward], dtype=float)]

    def add(mat, gain):
        z = np.ravel(mat) / np.sqrt(gain)
        parts.extend([z.real, z.imag])

    for n, F in enumerate(channels.F):
        add(F, channels.F_gain[n])
    for k, f in enumerate(channels.f):
        add(f, channels.f_gain[k])
    for key in sorted(channels.G):
        add(channels.G[key], channels.G_gain[key])
    return np.concatenate(parts)


def _sigmoid(x):
    # split branches keep exp() from overflowing
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax_rows(x):
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def split_action(raw: np.ndarray, topology: Topology) -> dict[str, np.ndarray]:
    """Cut a raw actor output into its named blocks (see ``project_action``)."""
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (action_dim(topology),):
        raise ValueError(f"raw action must have shape ({action_dim(topology)},), got {raw.shape}")
    K, N, B = topology.n_users, topology.n_ris, topology.n_bs
    i = 0
    blocks = {}
    for name, size in (("beta", K * N), ("power", K), ("w", K * 2 * B)):
        blocks[name] = raw[i : i + size]
        i += size
    for name in ("theta_r", "theta_t", "alpha_r", "delta_r", "delta_t"):
        blocks[name] = []
    for m in topology.elements:
        for name in ("theta_r", "theta_t", "alpha_r", "delta_r", "delta_t"):
            blocks[name].append(raw[i : i + m])
            i += m
    return blocks


def project_action(
    raw: np.ndarray,
    topology: Topology,
    p_max: float,
    delta_max: float,
    fixed_delta: float | None = None,
) -> FeasibleAction:
    """Map an unconstrained actor output onto the feasible set.

    Layout: beta logits (K x N, row per user), power logits (K), beamformers
    (K rows of N_BS real parts then N_BS imaginary parts), then for each RIS
    the blocks theta_r, theta_t, alpha_r, delta_r, delta_t of M_n entries.
    ``fixed_delta`` pins every amplification (passive surfaces use 1).
    """
    b = split_action(raw, topology)
    K, N, B = topology.n_users, topology.n_ris, topology.n_bs

    beta = _softmax_rows(b["beta"].reshape(K, N))
    s = _sigmoid(b["power"])
    p = p_max * s / max(s.sum(), 1.0)

    w = b["w"].reshape(K, 2 * B)
    W = w[:, :B] + 1j * w[:, B:]
    norms = np.linalg.norm(W, axis=1, keepdims=True)
    fallback = np.full(B, 1.0 / np.sqrt(B), dtype=complex)
    W = np.where(norms > 1e-12, W / np.where(norms > 1e-12, norms, 1.0), fallback)

    def phase(x):
        return np.mod(2 * np.pi * _sigmoid(x), 2 * np.pi)

    alpha_r = [_sigmoid(x) for x in b["alpha_r"]]
    if fixed_delta is None:
        delta_r = [delta_max * _sigmoid(x) for x in b["delta_r"]]
        delta_t = [delta_max * _sigmoid(x) for x in b["delta_t"]]
    else:
        delta_r = [np.full(len(x), float(fixed_delta)) for x in b["delta_r"]]
        delta_t = [np.full(len(x), float(fixed_delta)) for x in b["delta_t"]]
    profile = StarRisProfile(
        alpha_r=alpha_r,
        alpha_t=[1.0 - a for a in alpha_r],
        theta_r=[phase(x) for x in b["theta_r"]],
        theta_t=[phase(x) for x in b["theta_t"]],
        delta_r=delta_r,
        delta_t=delta_t,
    )
    return FeasibleAction(beta=beta, p=p, W=W, profile=profile)


def penalty(rate: float, r_min: float, c3: float, zero_tol: float = 1e-12) -> float:
    if rate >= r_min:
        return 0.0
    if abs(rate) <= zero_tol:
        return -float(c3)
    return -float(rate)


def shaped_reward(report: RateReport, c1: float, c2: float, c3: float, r_min: float) -> float:
    if min(c1, c2, c3) <= 0:
        raise ValueError(f"reward coefficients must be positive, got c1={c1}, c2={c2}, c3={c3}")
    pen = sum(penalty(float(r), r_min, c3) for r in report.rate)
    return c1 * report.total + c2 * pen


def immediate_reward(shaped: float, constraints_ok: bool) -> float:
    return float(shaped) if constraints_ok else 0.0


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass
class EnvParams:
    """Physical and reward settings shared by every step of an environment."""

    p_max: float = 20.0
    delta_max: float = 10**2.5
    noise_power: float = 10 ** (-13.4)
    r_min: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    c3: float | None = None
    second_order: bool = True
    fixed_delta: float | None = None
    numerator: str = "serving"
    fading: str = "step"
    time_feature: bool = False
    relaxed_beta: bool = False

    def __post_init__(self):
        if self.c3 is None:
            self.c3 = self.r_min
        if self.fading not in ("step", "episode"):
            raise ValueError(f"fading must be 'step' or 'episode', got {self.fading!r}")


@dataclass
class StepInfo:
    """``report`` holds the deployed (binarized association) rates and
    ``train_report`` the rates the reward was computed from."""

    action: FeasibleAction
    report: RateReport
    shaped: float
    feasible: bool
    train_report: RateReport | None = None


def evaluate(channels: ChannelSet, raw: np.ndarray, params: EnvParams):
    """Project, compute rates and rewards on ``channels``; returns ``(reward, StepInfo)``.

    With ``relaxed_beta`` the reward uses the continuous association weights
    and the reported rates use their argmax; otherwise both use the argmax.
    """
    top = channels.topology
    action = project_action(raw, top, params.p_max, params.delta_max, params.fixed_delta)
    args = (params.noise_power, params.r_min, params.second_order, params.numerator)
    report = rate_report(channels, action, *args)
    train_report = rate_report(channels, action, *args, relaxed=True) if params.relaxed_beta else report
    relaxed = check_constraints(action, None, params.p_max, params.r_min, params.delta_max)
    deployed = check_constraints(action.binarized(), None, params.p_max, params.r_min, params.delta_max)
    ok = relaxed.all_pass(RELAXED) and deployed.all_pass(STRUCTURAL)
    shaped = shaped_reward(train_report, params.c1, params.c2, params.c3, params.r_min)
    return immediate_reward(shaped, ok), StepInfo(action, report, shaped, ok, train_report)


def step(
    channels: ChannelSet,
    state: np.ndarray,
    raw: np.ndarray,
    t: int,
    t_max: int,
    rng: np.random.Generator,
    params: EnvParams,
):
    """Advance one time step (``t`` counts from 1).

    Returns ``(Transition, next_channels, StepInfo)``.  The next state carries
    this step's shaped reward and the channels the action was evaluated on.
    """
    reward, info = evaluate(channels, raw, params)
    if params.fading == "step":
        next_channels = sample_channels(channels.topology, rng)
    else:
        next_channels = channels
    next_state = encode_state(info.shaped, channels)
    if params.time_feature:
        next_state = np.append(next_state, t / t_max)
    done = t >= t_max
    return Transition(state, np.asarray(raw, dtype=float), reward, next_state, done), next_channels, info


class Environment:
    """Episode bookkeeping around :func:`step`."""

    def __init__(self, topology: Topology, params: EnvParams, t_max: int, rng):
        self.topology = topology
        self.params = params
        self.t_max = int(t_max)
        self.rng = np.random.default_rng(rng)
        self.channels: ChannelSet | None = None
        self.state: np.ndarray | None = None
        self.t = 0

    @property
    def state_dim(self) -> int:
        return state_dim(self.topology) + int(self.params.time_feature)

    @property
    def action_dim(self) -> int:
        return action_dim(self.topology)

    def reset(self) -> np.ndarray:
        self.t = 0
        prev = sample_channels(self.topology, self.rng)
        self.state = encode_state(0.0, prev)
        if self.params.time_feature:
            self.state = np.append(self.state, 0.0)
        # under block fading the observed channels are the ones acted upon
        self.channels = prev if self.params.fading == "episode" else sample_channels(self.topology, self.rng)
        return self.state

    def step(self, raw: np.ndarray):
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        self.t += 1
        tr, self.channels, info = step(
            self.channels, self.state, raw, self.t, self.t_max, self.rng, self.params
        )
        self.state = tr.next_state
        return tr, info
