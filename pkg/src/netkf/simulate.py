"""Seeded simulation of the coupled network.

Random numbers come from numpy's ``PCG64`` bit generator seeded through
``SeedSequence([seed, stream])``; stream 0 drives trajectories and stream 1
draws initial covariances. Gaussian vectors are ``F @ z`` with ``F`` the
Cholesky factor of the covariance and ``z`` standard normal. Draw order per
trajectory: ``x_0``, then ``w_k`` and ``v_{k+1}`` alternately for ``k = 0..K-1``.
"""

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from ._linalg import gaussian_factor
from .netmodel import AggregatedModel, NetworkModel, SubsystemModel, build_network

PRNG = "PCG64"
DEFAULT_EDGES = ((1, 2), (2, 3), (3, 4), (4, 5))

CovarianceMode = Literal["subsystem_blocks", "block_diagonal_scalar", "random_spd", "explicit"]


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(stream)])))


@dataclass
class SimConfig:
    """Everything besides the network that fixes an experiment."""

    horizon: int = 100
    seed: int = 0
    covariance_mode: CovarianceMode = "subsystem_blocks"
    eps0: float = 0.1
    eps1_range: tuple = (0.0, 1.0)
    P: np.ndarray | None = None
    n_runs: int = 100
    prng: str = PRNG

    def __post_init__(self):
        if int(self.horizon) < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if not self.eps0 > 0:
            raise ValueError(f"eps0 must be positive, got {self.eps0}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.covariance_mode not in ("subsystem_blocks", "block_diagonal_scalar", "random_spd", "explicit"):
            raise ValueError(f"unknown covariance mode {self.covariance_mode!r}")
        if self.covariance_mode == "explicit" and self.P is None:
            raise ValueError("explicit covariance mode needs a matrix P")
        if self.prng != PRNG:
            raise ValueError(f"only the {PRNG} generator is supported, got {self.prng!r}")
        self.horizon, self.seed, self.n_runs = int(self.horizon), int(self.seed), int(self.n_runs)
        self.eps1_range = tuple(float(v) for v in self.eps1_range)


EPS1_FLOOR = 0.01


def initial_covariance(net: NetworkModel, cfg: SimConfig) -> np.ndarray:
    """Joint ``P`` for the configured mode.

    ``random_spd`` is ``G G^T + eps0 I`` with ``G`` uniform on (0, 1);
    ``block_diagonal_scalar`` is ``eps1 I`` with ``eps1`` uniform on
    ``eps1_range`` and floored at 0.01.
    """
    from scipy.linalg import block_diag

    n = sum(net.state_dims)
    rng = rng_stream(cfg.seed, 1)
    if cfg.covariance_mode == "subsystem_blocks":
        return block_diag(*[s.P for s in net.subsystems])
    if cfg.covariance_mode == "random_spd":
        G = rng.uniform(0.0, 1.0, size=(n, n))
        return G @ G.T + cfg.eps0 * np.eye(n)
    if cfg.covariance_mode == "block_diagonal_scalar":
        lo, hi = cfg.eps1_range
        return max(rng.uniform(lo, hi), EPS1_FLOOR) * np.eye(n)
    return np.asarray(cfg.P, dtype=float)


@dataclass
class Trajectory:
    """States ``x_0..x_K``, measurements ``y_1..y_K`` and the noise that produced them.

    ``w[k]`` is ``w_k`` (``k = 0..K-1``); ``v[k]`` is ``v_{k+1}``, the noise of ``y[k]``.
    """

    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    v: np.ndarray
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.y)

    def residuals(self, model: AggregatedModel):
        """Recursion residuals recomputed from the stored draws; zero by construction."""
        res = [self.x[1] - (model.A @ self.x[0] + self.w[0])]
        for k in range(1, self.horizon):
            res.append(self.x[k + 1] - (model.A_tilde @ self.x[k] + self.w[k] + model.L @ self.v[k - 1]))
        res_y = self.y - (self.x[1:] @ model.C.T + self.v)
        return np.array(res), res_y


def simulate(model: AggregatedModel, cfg: SimConfig | int, horizon: int | None = None) -> Trajectory:
    """Draw one trajectory of the aggregated model.

    ``x_1 = A x_0 + w_0`` (no output at ``k = 0``); afterwards
    ``y_k = C x_k + v_k`` and ``x_{k+1} = A~ x_k + w_k + L v_k``.
    """
    if isinstance(cfg, SimConfig):
        seed, K = cfg.seed, cfg.horizon if horizon is None else horizon
    else:
        seed, K = int(cfg), horizon
    if K is None or K < 1:
        raise ValueError("horizon must be >= 1")
    rng = rng_stream(seed, 0)
    n, p = model.n, model.p
    FP = gaussian_factor(model.P, "P")
    FQ = gaussian_factor(model.Q, "Q")
    FR = gaussian_factor(model.R, "R")
    x = np.zeros((K + 1, n))
    y = np.zeros((K, p))
    w = np.zeros((K, n))
    v = np.zeros((K, p))
    x[0] = FP @ rng.standard_normal(n)
    for k in range(K):
        w[k] = FQ @ rng.standard_normal(n)
        if k == 0:
            x[1] = model.A @ x[0] + w[0]
        else:
            x[k + 1] = model.A_tilde @ x[k] + w[k] + model.L @ v[k - 1]
        v[k] = FR @ rng.standard_normal(p)
        y[k] = model.C @ x[k + 1] + v[k]
    return Trajectory(x, y, w, v, seed)


def simulate_measurements(model: AggregatedModel, horizon: int, seed: int) -> np.ndarray:
    return simulate(model, seed, horizon).y


def default_five_agent_network(edges=DEFAULT_EDGES, pole=0.2, coupling=0.3, noise=0.1, P0=1.0) -> NetworkModel:
    """Five scalar integrators with a pole at ``pole`` on an undirected coupling graph.

    The default edge set is the path 1-2-3-4-5; pass ``edges`` for another graph.
    """
    subs = [SubsystemModel(i, [[pole]], [[1.0]], [[noise]], [[noise]], [[P0]]) for i in range(1, 6)]
    couplings = {}
    for i, j in edges:
        couplings[(i, j)] = [[coupling]]
        couplings[(j, i)] = [[coupling]]
    return build_network(subs, couplings)
