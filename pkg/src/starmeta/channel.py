"""Network geometry and Rayleigh channel generation.

RIS indices follow the ordering used throughout the package: RIS 0 is the
farthest from the base station and RIS N-1 the closest.  Inter-RIS links
``G[(n, n2)]`` exist only for ``n < n2``, i.e. from a farther surface toward
a closer one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

LINK_CLASSES = ("ris_bs", "user_ris", "ris_ris")
SIDES = ("r", "t")


def path_loss(distance: float, exponent: float = 2.2, ref_loss_db: float = 30.0):
    """Log-distance power gain ``10^(-ref/10) * d^(-exponent)`` with d in metres."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError(f"path_loss needs a positive distance, got {distance!r}")
    gain = 10.0 ** (-ref_loss_db / 10.0) * d ** (-exponent)
    return float(gain) if gain.ndim == 0 else gain


@dataclass(frozen=True)
class PathLossModel:
    exponent: float = 2.2
    ref_loss_db: float = 30.0

    def __call__(self, distance):
        return path_loss(distance, self.exponent, self.ref_loss_db)


def _default_path_loss() -> dict[str, PathLossModel]:
    return {name: PathLossModel() for name in LINK_CLASSES}


@dataclass
class Topology:
    """Positions (metres, 2-D) and per-node counts of one deployment.

    ``user_ris[k]`` is the surface user k has a radio link to and
    ``user_side[k]`` is ``"r"`` or ``"t"`` relative to that surface.
    """

    bs_position: np.ndarray
    ris_positions: np.ndarray
    user_positions: np.ndarray
    user_ris: np.ndarray
    user_side: tuple[str, ...]
    n_bs: int
    elements: tuple[int, ...]
    path_loss: dict[str, PathLossModel] = field(default_factory=_default_path_loss)

    def __post_init__(self):
        self.bs_position = np.asarray(self.bs_position, dtype=float).reshape(2)
        self.ris_positions = np.asarray(self.ris_positions, dtype=float).reshape(-1, 2)
        self.user_positions = np.asarray(self.user_positions, dtype=float).reshape(-1, 2)
        self.user_ris = np.asarray(self.user_ris, dtype=int).reshape(-1)
        self.user_side = tuple(self.user_side)
        self.elements = tuple(int(m) for m in self.elements)
        self.n_bs = int(self.n_bs)
        self.validate()

    @property
    def n_ris(self) -> int:
        return len(self.ris_positions)

    @property
    def n_users(self) -> int:
        return len(self.user_positions)

    @property
    def users_per_ris(self) -> tuple[int, ...]:
        return tuple(int(c) for c in np.bincount(self.user_ris, minlength=self.n_ris))

    def ris_bs_distances(self) -> np.ndarray:
        return np.linalg.norm(self.ris_positions - self.bs_position, axis=1)

    def validate(self) -> None:
        N, K = self.n_ris, self.n_users
        if N < 1 or K < 1 or self.n_bs < 1:
            raise ValueError(f"need N, K, N_BS >= 1 (got N={N}, K={K}, N_BS={self.n_bs})")
        if len(self.elements) != N or min(self.elements) < 1:
            raise ValueError(f"elements must list one positive count per RIS, got {self.elements}")
        if len(self.user_ris) != K or len(self.user_side) != K:
            raise ValueError("user_ris and user_side need one entry per user")
        if self.user_ris.min() < 0 or self.user_ris.max() >= N:
            raise ValueError(f"user_ris entries must lie in [0, {N})")
        bad = [s for s in self.user_side if s not in SIDES]
        if bad:
            raise ValueError(f"user_side entries must be 'r' or 't', got {bad}")
        d = self.ris_bs_distances()
        if np.any(np.diff(d) >= 0):
            raise ValueError(
                f"RIS list must be sorted by strictly decreasing BS distance, got {np.round(d, 3)}"
            )
        missing = set(LINK_CLASSES) - set(self.path_loss)
        if missing:
            raise ValueError(f"path_loss lacks link classes {sorted(missing)}")


def default_topology(
    n_ris: int = 2,
    elements: int | tuple[int, ...] = 4,
    users_per_ris: int = 2,
    n_bs: int = 2,
    ris_distances: tuple[float, ...] | None = None,
    user_distance: tuple[float, float] = (2.0, 10.0),
    ris_spacing_angle: float = 0.0,
    path_loss_models: Mapping[str, PathLossModel] | None = None,
) -> Topology:
    """Deterministic desk geometry.

    The BS sits at the origin and RIS n at distance ``ris_distances[n]`` along
    the x axis (rotated by ``n * ris_spacing_angle`` radians).  Users of each
    surface alternate between the reflection side (facing the BS) and the
    transmission side, at distances spread evenly over ``user_distance``.
    """
    if ris_distances is None:
        ris_distances = tuple(np.linspace(50.0, 20.0, n_ris)) if n_ris > 1 else (20.0,)
    if len(ris_distances) != n_ris:
        raise ValueError("ris_distances needs one entry per RIS")
    if isinstance(elements, (int, np.integer)):
        elements = (int(elements),) * n_ris
    angles = np.arange(n_ris) * ris_spacing_angle
    ris = np.column_stack([np.cos(angles), np.sin(angles)]) * np.asarray(ris_distances)[:, None]

    lo, hi = user_distance
    users, owner, side = [], [], []
    for n in range(n_ris):
        radial = ris[n] / np.linalg.norm(ris[n])
        normal = np.array([-radial[1], radial[0]])
        for j in range(users_per_ris):
            d = lo + (hi - lo) * (j + 0.5) / users_per_ris
            s = SIDES[j % 2]
            # reflection users sit on the BS-facing half plane
            toward = -radial if s == "r" else radial
            direction = toward + normal * (1 if (j // 2) % 2 == 0 else -1)
            direction /= np.linalg.norm(direction)
            users.append(ris[n] + d * direction)
            owner.append(n)
            side.append(s)

    models = _default_path_loss()
    if path_loss_models:
        models.update(path_loss_models)
    return Topology(
        bs_position=np.zeros(2),
        ris_positions=ris,
        user_positions=np.array(users),
        user_ris=np.array(owner),
        user_side=tuple(side),
        n_bs=n_bs,
        elements=tuple(elements),
        path_loss=models,
    )


@dataclass
class ChannelSet:
    """One realization of every link.

    ``F[n]`` is RIS n -> BS (M_n x N_BS), ``f[k]`` user k -> its RIS (M_n,),
    ``G[(n, n2)]`` RIS n -> RIS n2 (M_n x M_n2).  The ``*_gain`` fields hold
    the large-scale power gain of each link, used to normalize the state.
    """

    topology: Topology
    F: list[np.ndarray]
    f: list[np.ndarray]
    G: dict[tuple[int, int], np.ndarray]
    F_gain: np.ndarray
    f_gain: np.ndarray
    G_gain: dict[tuple[int, int], float]

    def zero_inter_ris(self) -> "ChannelSet":
        """Copy with every inter-RIS matrix set to zero (single-reflection model)."""
        return ChannelSet(
            self.topology,
            self.F,
            self.f,
            {key: np.zeros_like(g) for key, g in self.G.items()},
            self.F_gain,
            self.f_gain,
            self.G_gain,
        )


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    # unit-variance circularly-symmetric complex Gaussian
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5)


def link_gains(topology: Topology):
    """Large-scale power gains ``(F_gain, f_gain, G_gain)`` of every link."""
    pl = topology.path_loss
    ris = topology.ris_positions
    F_gain = pl["ris_bs"](np.linalg.norm(ris - topology.bs_position, axis=1))
    F_gain = np.atleast_1d(F_gain)
    d_user = np.linalg.norm(topology.user_positions - ris[topology.user_ris], axis=1)
    f_gain = np.atleast_1d(pl["user_ris"](d_user))
    G_gain = {}
    for n in range(topology.n_ris):
        for n2 in range(n + 1, topology.n_ris):
            G_gain[(n, n2)] = pl["ris_ris"](float(np.linalg.norm(ris[n] - ris[n2])))
    return F_gain, f_gain, G_gain


def sample_channels(topology: Topology, rng) -> ChannelSet:
    """Draw one Rayleigh realization; ``rng`` is a seed or a numpy Generator.

    Draw order is fixed (F by RIS, f by user, G by ordered pair) so a given
    seed always yields the same ChannelSet.
    """
    rng = np.random.default_rng(rng)
    F_gain, f_gain, G_gain = link_gains(topology)
    M = topology.elements
    F = [np.sqrt(F_gain[n]) * _cn(rng, (M[n], topology.n_bs)) for n in range(topology.n_ris)]
    f = [
        np.sqrt(f_gain[k]) * _cn(rng, M[topology.user_ris[k]])
        for k in range(topology.n_users)
    ]
    G = {key: np.sqrt(g) * _cn(rng, (M[key[0]], M[key[1]])) for key, g in G_gain.items()}
    return ChannelSet(topology, F, f, G, F_gain, f_gain, G_gain)
