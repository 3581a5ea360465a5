r"""Riemannian distance on SPD matrices and the inequalities built on it.

.. math::
    \delta(P, Q) = \Big(\sum_k \log^2 \lambda_k(P Q^{-1})\Big)^{1/2}

The eigenvalues of :math:`PQ^{-1}` are the generalized eigenvalues of the
pencil :math:`(P, Q)`; both matrices being SPD they are real and positive.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ._linalg import check_spd, min_eig, norm2
from .errors import DimensionMismatch, NonSPD, OrderViolation


@dataclass(frozen=True)
class SpdMetricPair:
    P: np.ndarray
    Q: np.ndarray
    delta: float

    @classmethod
    def of(cls, P, Q):
        return cls(np.asarray(P), np.asarray(Q), riemannian_distance(P, Q))


def _pair(P, Q):
    P = check_spd(P, "P")
    Q = check_spd(Q, "Q")
    if P.shape != Q.shape:
        raise DimensionMismatch(f"P is {P.shape} but Q is {Q.shape}")
    return P, Q


def generalized_eigenvalues(P, Q):
    """Eigenvalues of ``P Q^-1`` in ascending order."""
    P, Q = _pair(P, Q)
    return linalg.eigh(0.5 * (P + P.T), 0.5 * (Q + Q.T), eigvals_only=True)


def riemannian_distance(P, Q) -> float:
    lam = generalized_eigenvalues(P, Q)
    if lam[0] <= 0:
        raise NonSPD("pencil (P, Q)", float(lam[0]))
    return float(np.sqrt(np.sum(np.log(lam) ** 2)))


def _scaled_norm(v):
    # 2-norm that neither underflows nor overflows in the squares
    top = np.max(np.abs(v))
    return float(top * np.sqrt(np.sum((v / top) ** 2))) if top > 0 else 0.0


def riemannian_distance_from_gap(D, Q) -> float:
    """``delta(Q + D, Q)`` evaluated from the difference ``D`` without forming ``Q + D``.

    The eigenvalues of ``(Q + D) Q^-1`` are ``1 + mu`` with ``mu`` the
    generalized eigenvalues of ``(D, Q)``, so ``log1p(mu)`` stays accurate
    when ``D`` is far below the round-off level of ``Q``.
    """
    Q = check_spd(Q, "Q")
    D = np.atleast_2d(np.asarray(D, dtype=float))
    if D.shape != Q.shape:
        raise DimensionMismatch(f"D is {D.shape} but Q is {Q.shape}")
    mu = linalg.eigh(0.5 * (D + D.T), 0.5 * (Q + Q.T), eigvals_only=True)
    if mu[0] <= -1:
        raise NonSPD("Q + D", float(mu[0]))
    return _scaled_norm(np.log1p(mu))


def contraction_check(P, Q, W, B):
    """Both sides of ``delta(W + BPB^T, W + BQB^T) <= a/(a+b) * delta(P, Q)``.

    ``a = max(||BPB^T||, ||BQB^T||)`` and ``b`` is the smallest singular value
    of ``W``. Returns ``(lhs, rhs)``.
    """
    P, Q = _pair(P, Q)
    W = check_spd(W, "W")
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape != (W.shape[0], P.shape[0]):
        raise DimensionMismatch(f"B must be {W.shape[0]}x{P.shape[0]}, got {B.shape}")
    BPB, BQB = B @ P @ B.T, B @ Q @ B.T
    alpha = max(norm2(BPB), norm2(BQB))
    beta = min_eig(W)
    lhs = riemannian_distance(W + BPB, W + BQB)
    rhs = alpha / (alpha + beta) * riemannian_distance(P, Q)
    return lhs, rhs


def norm_gap_bound_check(P, Q):
    """Both sides of ``||P - Q|| <= (exp(delta(P, Q)) - 1) ||Q||`` for ``P > Q``."""
    P, Q = _pair(P, Q)
    if min_eig(P - Q) <= 0:
        raise OrderViolation("P - Q is not positive definite")
    return norm2(P - Q), float(np.expm1(riemannian_distance(P, Q))) * norm2(Q)


def expm1_scaling(x, y):
    """``(exp(xy) - 1, (exp(x) - 1) y)``; the first never exceeds the second for 0 <= y <= 1."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.expm1(x * y), np.expm1(x) * y


def pd_bound(M, split):
    """For PSD ``M = [[A, B^T], [B, C]]`` return ``(||B||, sqrt(||A|| ||C||))``."""
    M = np.asarray(M, dtype=float)
    A, B, C = M[:split, :split], M[split:, :split], M[split:, split:]
    return norm2(B), float(np.sqrt(norm2(A) * norm2(C)))


# --- randomized property checks (used by the test suite and the CLI) -------

def random_spd(rng, n, floor=0.1):
    G = rng.standard_normal((n, n))
    return G @ G.T + floor * np.eye(n)


def property_checks(seed=0, trials=200, max_dim=6, pd_trials=500, grid_step=0.01, tol=1e-10):
    """Run randomized checks of the distance properties and the two auxiliary inequalities.

    Returns a list of ``(name, trials, violations, worst_excess)`` rows. The
    excess is ``lhs - rhs`` for inequalities and ``|lhs - rhs|`` for identities.
    """
    rng = np.random.default_rng(seed)
    rows = []

    def record(name, excess):
        excess = np.asarray(excess, dtype=float)
        rows.append((name, int(excess.size), int(np.sum(excess > tol)), float(np.max(excess))))

    same, symm, inv = [], [], []
    for _ in range(trials):
        n = int(rng.integers(1, max_dim + 1))
        P, Q = random_spd(rng, n), random_spd(rng, n)
        d = riemannian_distance(P, Q)
        same.append(riemannian_distance(P, P))
        symm.append(abs(d - riemannian_distance(Q, P)))
        inv.append(abs(d - riemannian_distance(np.linalg.inv(P), np.linalg.inv(Q))))
    record("distance_self_zero", same)
    record("distance_symmetric", symm)
    record("distance_inverse_invariant", inv)

    contraction = []
    for _ in range(trials):
        n, m = (int(v) for v in rng.integers(1, max_dim + 1, size=2))
        P, Q, W = random_spd(rng, n), random_spd(rng, n), random_spd(rng, m)
        B = rng.standard_normal((m, n)) * rng.uniform(0.1, 3.0)
        lhs, rhs = contraction_check(P, Q, W, B)
        contraction.append(lhs - rhs)
    record("contraction", contraction)

    gap = []
    for _ in range(trials):
        n = int(rng.integers(1, max_dim + 1))
        Q = random_spd(rng, n)
        P = Q + random_spd(rng, n, floor=1e-3) * rng.uniform(0.01, 2.0)
        lhs, rhs = norm_gap_bound_check(P, Q)
        gap.append(lhs - rhs)
    record("norm_gap_bound", gap)

    xs = np.round(np.arange(-5.0, 5.0 + grid_step / 2, grid_step), 10)
    ys = np.round(np.arange(0.0, 1.0 + grid_step / 2, grid_step), 10)
    X, Y = np.meshgrid(xs, ys)
    lhs, rhs = expm1_scaling(X, Y)
    record("expm1_scaling_grid", (lhs - rhs).ravel())

    pd = []
    for _ in range(pd_trials):
        a, c = (int(v) for v in rng.integers(1, 6, size=2))
        G = rng.standard_normal((a + c, int(rng.integers(1, a + c + 1))))
        lhs, rhs = pd_bound(G @ G.T, a)
        pd.append(lhs - rhs)
    record("psd_offdiag_bound", pd)
    return rows
