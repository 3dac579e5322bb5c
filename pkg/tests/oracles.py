"""Slow, loop-based reference implementations used only by the tests.

Everything here is written from the model definitions with explicit scalar
loops and no shared helpers from the package, so an agreement between the two
is meaningful.
"""
import cmath
import math

import numpy as np

from starmeta.channel import PathLossModel, Topology, sample_channels
from starmeta.neural import backward, forward
from starmeta.physics import FeasibleAction, StarRisProfile


def element_coeff(alpha, theta, delta):
    return math.sqrt(delta * alpha) * cmath.exp(1j * theta)


def effective_channel_loops(channels, profile, k, n, second_order=True):
    top = channels.topology
    h = [0j] * top.n_bs
    if int(top.user_ris[k]) != n:
        return np.array(h)
    side = top.user_side[k]
    a = profile.alpha_r if side == "r" else profile.alpha_t
    th = profile.theta_r if side == "r" else profile.theta_t
    d = profile.delta_r if side == "r" else profile.delta_t
    f = channels.f[k]
    M = len(f)
    for b in range(top.n_bs):
        acc = 0j
        for m in range(M):
            c = element_coeff(a[n][m], th[n][m], d[n][m])
            acc += channels.F[n][m, b].conjugate() * c * f[m]
        if second_order:
            for n2 in range(n + 1, top.n_ris):
                G = channels.G[(n, n2)]
                for i in range(M):
                    ci = element_coeff(a[n][i], th[n][i], d[n][i])
                    for j in range(M):
                        cj = element_coeff(a[n2][j], th[n2][j], d[n2][j])
                        acc += channels.F[n2][i, b].conjugate() * ci * G[i, j] * cj * f[j]
        h[b] = acc
    return np.array(h)


def inner(w, h):
    return sum(w[i].conjugate() * h[i] for i in range(len(w)))


def sinr_loops(H, W, p, assignment, noise_power):
    """SINR per user from scratch: ascending-gain decoding, earlier same-RIS
    users and every lower-index-RIS user interfere."""
    K = len(p)
    gains = [abs(inner(W[k], H[k])) ** 2 for k in range(K)]
    order = sorted(range(K), key=lambda k: (gains[k], k))
    rank = {k: i for i, k in enumerate(order)}
    out = []
    for k in range(K):
        n = assignment[k]
        sig = p[k] * abs(inner(W[k], H[k])) ** 2
        intf = 0.0
        for j in range(K):
            if j == k:
                continue
            if (assignment[j] == n and rank[j] < rank[k]) or assignment[j] < n:
                intf += p[j] * abs(inner(W[k], H[j])) ** 2
        noise = noise_power * sum(abs(x) ** 2 for x in W[k])
        out.append(sig / (intf + noise))
    return np.array(out), order


def random_topology(rng, K, N, M, n_bs):
    """Random geometry with strictly decreasing BS distances."""
    dist = np.sort(rng.uniform(10.0, 80.0, size=N))[::-1]
    while N > 1 and np.any(np.diff(dist) > -0.5):
        dist = np.sort(rng.uniform(10.0, 80.0, size=N))[::-1]
    ang = rng.uniform(0, 2 * np.pi, size=N)
    ris = np.column_stack([np.cos(ang), np.sin(ang)]) * dist[:, None]
    owner = rng.integers(0, N, size=K)
    phi = rng.uniform(0, 2 * np.pi, size=K)
    users = ris[owner] + rng.uniform(1.0, 8.0, size=(K, 1)) * np.column_stack([np.cos(phi), np.sin(phi)])
    side = tuple(rng.choice(["r", "t"], size=K))
    pl = {c: PathLossModel(2.0, 0.0) for c in ("ris_bs", "user_ris", "ris_ris")}
    return Topology(np.zeros(2), ris, users, owner, side, n_bs, (M,) * N, pl)


def random_profile(rng, elements, delta_max=10.0):
    a = [rng.uniform(0, 1, m) for m in elements]
    return StarRisProfile(
        alpha_r=a,
        alpha_t=[1.0 - x for x in a],
        theta_r=[rng.uniform(0, 2 * np.pi, m) for m in elements],
        theta_t=[rng.uniform(0, 2 * np.pi, m) for m in elements],
        delta_r=[rng.uniform(0, delta_max, m) for m in elements],
        delta_t=[rng.uniform(0, delta_max, m) for m in elements],
    )


def random_instance(rng, max_k=3, max_n=3, max_m=4, max_bs=2):
    K = int(rng.integers(1, max_k + 1))
    N = int(rng.integers(1, max_n + 1))
    M = int(rng.integers(1, max_m + 1))
    B = int(rng.integers(1, max_bs + 1))
    top = random_topology(rng, K, N, M, B)
    ch = sample_channels(top, rng)
    prof = random_profile(rng, top.elements)
    beta = np.zeros((K, N))
    # mostly home surfaces, sometimes a foreign one (zero channel)
    home = np.where(rng.uniform(size=K) < 0.75, top.user_ris, rng.integers(0, N, size=K))
    beta[np.arange(K), home] = 1.0
    W = rng.standard_normal((K, B)) + 1j * rng.standard_normal((K, B))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    p = rng.uniform(0, 1, size=K)
    return ch, FeasibleAction(beta, p, W, prof)


def finite_difference_error(net, x, g, eps=1e-5):
    """Max relative error of backward() against central differences of <g, net(x)>."""
    _, cache = forward(net, x)
    grads, gin = backward(net, cache, g)
    worst = 0.0
    params = net.params()
    for p, gp in zip(params, grads):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            up = np.sum(net(x) * g)
            p[idx] = old - eps
            dn = np.sum(net(x) * g)
            p[idx] = old
            fd = (up - dn) / (2 * eps)
            worst = max(worst, abs(fd - gp[idx]) / max(1e-6, abs(fd) + abs(gp[idx])))
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        fd = (np.sum(net(xp) * g) - np.sum(net(xm) * g)) / (2 * eps)
        worst = max(worst, abs(fd - gin[idx]) / max(1e-6, abs(fd) + abs(gin[idx])))
    return worst
