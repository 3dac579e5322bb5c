"""STAR-RIS element model, effective channels, SIC decoding and rates."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelSet

NUMERATOR_FORMS = ("serving", "as_printed")


@dataclass
class StarRisProfile:
    """Per-element coefficients; each field is a list with one array per RIS."""

    alpha_r: list[np.ndarray]
    alpha_t: list[np.ndarray]
    theta_r: list[np.ndarray]
    theta_t: list[np.ndarray]
    delta_r: list[np.ndarray]
    delta_t: list[np.ndarray]

    @classmethod
    def uniform(cls, elements, alpha_r=0.5, theta=0.0, delta=1.0) -> "StarRisProfile":
        def full(v):
            return [np.full(m, float(v)) for m in elements]

        return cls(full(alpha_r), full(1.0 - alpha_r), full(theta), full(theta), full(delta), full(delta))

    def coefficients(self, n: int, side: str) -> np.ndarray:
        """Diagonal of the beamforming matrix of RIS n for side ``"r"`` or ``"t"``."""
        if side == "r":
            a, th, d = self.alpha_r[n], self.theta_r[n], self.delta_r[n]
        elif side == "t":
            a, th, d = self.alpha_t[n], self.theta_t[n], self.delta_t[n]
        else:
            raise ValueError(f"side must be 'r' or 't', got {side!r}")
        return np.sqrt(d * a) * np.exp(1j * th)


def beamforming_matrix(profile: StarRisProfile, n: int, side: str) -> np.ndarray:
    return np.diag(profile.coefficients(n, side))


def reflect_transmit(x, alpha_r, alpha_t, theta_r, theta_t, delta_r=1.0, delta_t=1.0):
    """Reflected and transmitted outputs of a single element for incident ``x``."""
    r = np.sqrt(delta_r * alpha_r) * np.exp(1j * theta_r) * x
    t = np.sqrt(delta_t * alpha_t) * np.exp(1j * theta_t) * x
    return r, t


def effective_channel(
    channels: ChannelSet, profile: StarRisProfile, k: int, n: int, second_order: bool = True
) -> np.ndarray:
    """Effective BS-side channel of user k routed through RIS n.

    Users only have a radio link to their own RIS, so routing through any other
    surface gives a zero channel.  For ``n < N-1`` the second-order paths via
    every closer surface ``n2 > n`` are added.
    """
    top = channels.topology
    if top.user_ris[k] != n:
        return np.zeros(top.n_bs, dtype=complex)
    side = top.user_side[k]
    theta_n = profile.coefficients(n, side)
    f = channels.f[k]
    if f.shape != theta_n.shape or channels.F[n].shape[0] != f.shape[0]:
        raise ValueError(f"dimension mismatch for user {k} at RIS {n}")
    h = channels.F[n].conj().T @ (theta_n * f)
    if not second_order:
        return h
    for n2 in range(n + 1, top.n_ris):
        G = channels.G[(n, n2)]
        F2 = channels.F[n2]
        if F2.shape[0] != G.shape[0] or G.shape[1] != f.shape[0]:
            raise ValueError(
                f"second-order path {n}->{n2} needs equal element counts, "
                f"got {top.elements[n]} and {top.elements[n2]}"
            )
        theta_n2 = profile.coefficients(n2, side)
        h = h + F2.conj().T @ (theta_n * (G @ (theta_n2 * f)))
    return h


@dataclass
class FeasibleAction:
    """Joint decision: association weights, powers, receive beamformers, RIS profile.

    ``W`` has one beamformer per row (K x N_BS).
    """

    beta: np.ndarray
    p: np.ndarray
    W: np.ndarray
    profile: StarRisProfile

    @property
    def assignment(self) -> np.ndarray:
        return np.argmax(self.beta, axis=1)

    def binarized(self) -> "FeasibleAction":
        beta = np.zeros_like(self.beta)
        beta[np.arange(len(beta)), self.assignment] = 1.0
        return replace(self, beta=beta)


def serving_channels(channels: ChannelSet, action: FeasibleAction, second_order: bool = True):
    """Effective channel of every user through its argmax-selected RIS (K x N_BS)."""
    top = channels.topology
    H = np.zeros((top.n_users, top.n_bs), dtype=complex)
    for k, n in enumerate(action.assignment):
        H[k] = effective_channel(channels, action.profile, k, int(n), second_order)
    return H


def decoding_order(gains) -> np.ndarray:
    """Users sorted by ascending effective gain; equal gains keep user-id order."""
    return np.argsort(np.asarray(gains, dtype=float), kind="stable")


def _coupling(W: np.ndarray, H: np.ndarray) -> np.ndarray:
    # C[u, v] = |w_u^H h_v|^2
    return np.abs(W.conj() @ H.T) ** 2


def all_routes(channels: ChannelSet, profile: StarRisProfile, second_order: bool = True) -> np.ndarray:
    """Effective channel of every user through every RIS (K x N x N_BS)."""
    top = channels.topology
    return np.stack(
        [[effective_channel(channels, profile, k, n, second_order) for n in range(top.n_ris)] for k in range(top.n_users)]
    )


def relaxed_coupling(W: np.ndarray, H_all: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """``C[u, v] = sum_n beta[v, n] |w_u^H h_{v,n}|^2``; one-hot beta gives the serving coupling."""
    P = np.abs(np.einsum("ub,vnb->uvn", W.conj(), H_all)) ** 2
    return np.einsum("uvn,vn->uv", P, beta)


def sinr_all(
    H: np.ndarray,
    W: np.ndarray,
    p: np.ndarray,
    assignment: np.ndarray,
    order: np.ndarray,
    noise_power: float,
    H_all: np.ndarray | None = None,
    coupling: np.ndarray | None = None,
) -> np.ndarray:
    """SINR of every user, indexed by user id.

    Interference on user u comes from users decoded before u on the same RIS
    and from every user served by a lower-index RIS.  ``H_all`` (K x N x N_BS)
    switches the numerator to the sum over all routes.  ``coupling`` replaces
    the received powers ``|w_u^H h_v|^2`` (e.g. by their relaxed form).
    """
    if noise_power <= 0:
        raise ValueError(f"noise power must be positive, got {noise_power}")
    K = len(p)
    rank = np.empty(K, dtype=int)
    rank[order] = np.arange(K)
    C = _coupling(W, H) if coupling is None else coupling
    same = assignment[:, None] == assignment[None, :]
    earlier = rank[None, :] < rank[:, None]
    lower_ris = assignment[None, :] < assignment[:, None]
    mask = (same & earlier) | lower_ris
    interference = (C * mask) @ p
    if H_all is None:
        signal = p * np.diag(C)
    else:
        signal = p * np.sum(np.abs(np.einsum("kb,knb->kn", W.conj(), H_all)) ** 2, axis=1)
    noise = noise_power * np.sum(np.abs(W) ** 2, axis=1)
    return signal / (interference + noise)


def sinr(k, channels, action, order, noise_power, second_order=True) -> float:
    """SINR of user ``k`` under decoding order ``order``."""
    H = serving_channels(channels, action, second_order)
    return float(sinr_all(H, action.W, action.p, action.assignment, order, noise_power)[k])


@dataclass
class RateReport:
    sinr: np.ndarray
    rate: np.ndarray
    total: float
    slack: np.ndarray
    order: np.ndarray
    assignment: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def rate_report(
    channels: ChannelSet,
    action: FeasibleAction,
    noise_power: float,
    r_min: float,
    second_order: bool = True,
    numerator: str = "serving",
    relaxed: bool = False,
) -> RateReport:
    """Rates of every user.

    With ``relaxed`` every received power (wanted or interfering) is the
    beta-weighted mix over routes, ``sum_n beta_vn |w_u^H h_vn|^2``, as if a
    user split its transmission across surfaces; a binary beta gives the
    argmax-route powers exactly.  SIC grouping follows the argmax assignment.
    """
    if numerator not in NUMERATOR_FORMS:
        raise ValueError(f"numerator must be one of {NUMERATOR_FORMS}")
    H = serving_channels(channels, action, second_order)
    H_all = all_routes(channels, action.profile, second_order) if (relaxed or numerator == "as_printed") else None
    C = relaxed_coupling(action.W, H_all, action.beta) if relaxed else None
    gains = np.diag(C).copy() if relaxed else np.abs(np.sum(action.W.conj() * H, axis=1)) ** 2
    order = decoding_order(gains)
    g = sinr_all(
        H, action.W, action.p, action.assignment, order, noise_power,
        H_all if numerator == "as_printed" else None, C,
    )
    rate = np.log2(1.0 + g)
    return RateReport(g, rate, float(rate.sum()), rate - r_min, order, action.assignment)


@dataclass
class ConstraintReport:
    """Per-constraint ``(passed, violation)`` pairs keyed ``"C1"``..``"C10"``."""

    results: dict[str, tuple[bool, float]]

    def passed(self, name: str) -> bool:
        return self.results[name][0]

    def violation(self, name: str) -> float:
        return self.results[name][1]

    def all_pass(self, names=None) -> bool:
        names = self.results if names is None else names
        return all(self.results[n][0] for n in names)

    def failures(self) -> list[str]:
        return [n for n, (ok, _) in self.results.items() if not ok]


STRUCTURAL = tuple(f"C{i}" for i in range(2, 11))
RELAXED = ("C2",) + tuple(f"C{i}" for i in range(4, 11))


def check_constraints(
    action: FeasibleAction,
    report: RateReport | None,
    p_max: float,
    r_min: float,
    delta_max: float,
    tol: float = 1e-9,
) -> ConstraintReport:
    """Evaluate C1..C10; violation magnitudes are 0 for satisfied constraints."""
    beta, p, prof = action.beta, action.p, action.profile
    res: dict[str, tuple[bool, float]] = {}

    def put(name, violation):
        violation = max(float(violation), 0.0)
        res[name] = (violation <= tol, violation)

    if report is None:
        res["C1"] = (True, 0.0)
    else:
        put("C1", np.max(r_min - report.rate, initial=0.0))
    put("C2", max(np.max(-beta, initial=0.0), np.max(beta - 1.0, initial=0.0)))
    put("C3", np.sum(beta - beta**2))
    put("C4", np.max(beta.sum(axis=1) - 1.0, initial=0.0))
    put("C5", np.max(-p, initial=0.0))
    put("C6", np.sum(p) - p_max)

    a_r, a_t = np.concatenate(prof.alpha_r), np.concatenate(prof.alpha_t)
    alphas = np.concatenate([a_r, a_t])
    put("C7", max(np.max(-alphas, initial=0.0), np.max(alphas - 1.0, initial=0.0)))
    # alpha_t = 1 - alpha_r is exact only up to one rounding
    put("C8", max(np.max(np.abs(a_r + a_t - 1.0), initial=0.0) - 1e-12, 0.0))
    thetas = np.concatenate(prof.theta_r + prof.theta_t)
    th_low = np.max(-thetas, initial=0.0)
    th_high = np.max(thetas - 2 * np.pi, initial=0.0)
    at_wrap = np.any(thetas >= 2 * np.pi)
    res["C9"] = (th_low == 0.0 and not at_wrap, float(max(th_low, th_high)))
    deltas = np.concatenate(prof.delta_r + prof.delta_t)
    put("C10", max(np.max(-deltas, initial=0.0), np.max(deltas - delta_max, initial=0.0)))
    return ConstraintReport(res)
