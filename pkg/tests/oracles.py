"""Reference computations that share no code with the filters under test."""

import numpy as np

from netkf.netmodel import SubsystemModel, aggregate, build_network


def random_spd(rng, n, floor=0.2):
    G = rng.standard_normal((n, n))
    return G @ G.T / n + floor * np.eye(n)


def random_network(rng, n_nodes=None, max_n=2, max_p=2, density=0.5, gain=0.3):
    """Random stable subsystems with a random sparse coupling pattern."""
    n_nodes = n_nodes or int(rng.integers(1, 4))
    subs = []
    for i in range(1, n_nodes + 1):
        n, p = int(rng.integers(1, max_n + 1)), int(rng.integers(1, max_p + 1))
        A = rng.standard_normal((n, n))
        A *= rng.uniform(0.2, 0.9) / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-9)
        subs.append(SubsystemModel(i, A, rng.standard_normal((p, n)), random_spd(rng, n), random_spd(rng, p), random_spd(rng, n)))
    couplings = {}
    for i in range(1, n_nodes + 1):
        for j in range(1, n_nodes + 1):
            if i != j and rng.uniform() < density:
                couplings[(i, j)] = gain * rng.standard_normal((subs[i - 1].n, subs[j - 1].p))
    return build_network(subs, couplings)


def random_model(rng, dense=True, **kw):
    net = random_network(rng, **kw)
    n = sum(net.state_dims)
    P = random_spd(rng, n) if dense else None
    return aggregate(net, P)


def noise_to_signal_maps(model, K):
    """Linear maps from ``z = (x_0, w_0..w_{K-1}, v_1..v_K)`` to ``x_k`` and ``y_k``.

    Returns ``(Tx, Ty, Cov_z)`` with ``Tx[k] @ z = x_k`` for ``k = 0..K`` and
    ``Ty[k-1] @ z = y_k`` for ``k = 1..K``. The first transition has no
    output feedback; later ones feed ``y_k`` forward through ``L``.
    """
    n, p = model.n, model.p
    dim = n + K * n + K * p
    w = lambda k: slice(n + k * n, n + (k + 1) * n)  # noqa: E731
    v = lambda k: slice(n + K * n + (k - 1) * p, n + K * n + k * p)  # noqa: E731
    Tx = [np.zeros((n, dim)) for _ in range(K + 1)]
    Ty = [np.zeros((p, dim)) for _ in range(K)]
    Tx[0][:, :n] = np.eye(n)
    for k in range(K):
        if k == 0:
            Tx[1] = model.A @ Tx[0]
        else:
            Tx[k + 1] = model.A @ Tx[k] + model.L @ Ty[k - 1]
        Tx[k + 1][:, w(k)] += np.eye(n)
        Ty[k] = model.C @ Tx[k + 1]
        Ty[k][:, v(k + 1)] += np.eye(p)
    Cov = np.zeros((dim, dim))
    Cov[:n, :n] = model.P
    for k in range(K):
        Cov[w(k), w(k)] = model.Q
        Cov[v(k + 1), v(k + 1)] = model.R
    return Tx, Ty, Cov


def conditional_moments(model, ys):
    """``E[x_k | y_1..y_k]`` and ``Cov[x_k | y_1..y_k]`` for ``k = 1..K`` by Gaussian conditioning."""
    ys = np.asarray(ys, dtype=float)
    K = len(ys)
    Tx, Ty, Cov = noise_to_signal_maps(model, K)
    means, covs = [], []
    for k in range(1, K + 1):
        Y = np.vstack(Ty[:k])
        Sxy = Tx[k] @ Cov @ Y.T
        Syy = Y @ Cov @ Y.T
        gain = np.linalg.solve(Syy, Sxy.T).T
        means.append(gain @ ys[:k].ravel())
        covs.append(Tx[k] @ Cov @ Tx[k].T - gain @ Sxy.T)
    return np.array(means), np.array(covs)
