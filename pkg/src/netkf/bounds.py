"""Convergence of the distributed filter to the centralized one.

Quantities compared along a run (``*`` marks the distributed filter, whose
stacked covariance is block diagonal):

* covariance gaps ``Sigma~ = Sigma - Sigma*`` and ``Gamma~ = Gamma - Gamma*``
  with ``Gamma = Sigma^-1``;
* the Riemannian distance ``delta(Sigma_{k|k}, Sigma*_{k|k})``;
* the predicted-estimate gap ``x~_{k|k-1} = xhat_{k|k-1} - xhat*_{k|k-1}`` and
  its second moment ``Delta_k = E[x~ x~^T]``.

All norms are spectral norms.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from ._linalg import norm2, spd_inv, spd_solve, symmetrize
from .central import central_run, joseph_update, kalman_gain, riccati_step
from .distributed import distributed_run
from .errors import NoConvergence
from .netmodel import AggregatedModel
from .riemann import riemannian_distance_from_gap


# --- Riccati recursions ----------------------------------------------------

def _node_blocks(model):
    dims = list(model.state_dims)
    pdims = list(model.output_dims)
    out = []
    r = c = 0
    for n_i, p_i in zip(dims, pdims):
        sl, ol = slice(r, r + n_i), slice(c, c + p_i)
        out.append((sl, model.A[sl, sl], model.C[ol, sl], model.Q[sl, sl], model.R[ol, ol]))
        r += n_i
        c += p_i
    return out


def _distributed_riccati_step(cov, blocks):
    """Per-node covariance recursion; ``cov`` is the stacked block-diagonal ``Sigma*_{k|k}``."""
    n = cov.shape[0]
    pred, upd = np.zeros((n, n)), np.zeros((n, n))
    gains = []
    for sl, A, C, Q, R in blocks:
        Pp = symmetrize(A @ cov[sl, sl] @ A.T + Q)
        K = kalman_gain(Pp, C, R)
        pred[sl, sl] = Pp
        upd[sl, sl] = joseph_update(Pp, K, C, R)
        gains.append(K)
    return pred, upd, linalg.block_diag(*gains)


@dataclass
class CovarianceRun:
    """Covariances for ``k = 0..horizon`` (index 0 holds the prior; predicted[0] is unused)."""

    updated: np.ndarray
    predicted: np.ndarray
    gains: np.ndarray


def covariance_runs(model: AggregatedModel, horizon: int):
    """Centralized and distributed covariance recursions from ``P`` and ``P*``."""
    n, p = model.n, model.p
    blocks = _node_blocks(model)
    runs = []
    for which in ("centralized", "distributed"):
        upd = np.zeros((horizon + 1, n, n))
        pred = np.zeros((horizon + 1, n, n))
        gains = np.zeros((horizon + 1, n, p))
        upd[0] = model.P if which == "centralized" else model.P_star
        for k in range(1, horizon + 1):
            if which == "centralized":
                pred[k], upd[k], gains[k] = riccati_step(upd[k - 1], model)
            else:
                pred[k], upd[k], gains[k] = _distributed_riccati_step(upd[k - 1], blocks)
        runs.append(CovarianceRun(upd, pred, gains))
    return tuple(runs)


DIVERGED = 1e100


def steady_state_covariance(model: AggregatedModel, which="centralized", rtol=1e-12, max_iter=100_000):
    """Fixed point ``Sigma_bar = lim Sigma_{k|k}`` of the Riccati recursion, iterated from the prior."""
    if which not in ("centralized", "distributed"):
        raise ValueError(f"which must be 'centralized' or 'distributed', got {which!r}")
    blocks = _node_blocks(model)
    cov = np.array(model.P if which == "centralized" else model.P_star)
    inc = math.inf
    for _ in range(max_iter):
        if which == "centralized":
            _, new, _ = riccati_step(cov, model)
        else:
            _, new, _ = _distributed_riccati_step(cov, blocks)
        if not np.all(np.isfinite(new)) or norm2(new) > DIVERGED:
            raise NoConvergence("Riccati iteration diverged", inc)
        inc = norm2(new - cov)
        cov = new
        if inc < rtol * norm2(cov):
            return cov
    raise NoConvergence(f"Riccati iteration did not converge in {max_iter} steps (last increment {inc:.3g})", inc)


def steady_state_gain(model, Sigma_bar=None):
    Sigma_bar = steady_state_covariance(model) if Sigma_bar is None else Sigma_bar
    pred = symmetrize(model.A @ Sigma_bar @ model.A.T + model.Q)
    return kalman_gain(pred, model.C, model.R)


# --- gap recursions free of cancellation ---------------------------------------

@dataclass
class CovarianceGapRun:
    """``Sigma - Sigma*`` and ``K - K*`` for ``k = 0..horizon``, index 0 holding ``P - P*``."""

    updated: np.ndarray
    predicted: np.ndarray
    gains: np.ndarray


def covariance_gap_run(model: AggregatedModel, horizon: int, runs=None) -> CovarianceGapRun:
    """Propagate the covariance gap directly instead of subtracting two recursions.

    Both filters share ``A, C, Q, R``, so ``Q`` cancels from the predicted gap
    ``A Sigma~ A^T`` and the updated gap factors as
    ``(I - K C) Sigma~_pred (I - K* C)^T``; the gain gap is
    ``(I - K C) Sigma~_pred C^T (C Sigma*_pred C^T + R)^-1``. The gaps then
    decay geometrically to zero in floating point, not to the round-off
    level of ``Sigma`` itself.
    """
    central, dist = runs or covariance_runs(model, horizon)
    n, p = model.n, model.p
    A, C, I = model.A, model.C, np.eye(model.n)
    upd = np.zeros((horizon + 1, n, n))
    pred = np.zeros((horizon + 1, n, n))
    gains = np.zeros((horizon + 1, n, p))
    upd[0] = np.asarray(model.P) - np.asarray(model.P_star)
    for k in range(1, horizon + 1):
        pred[k] = A @ upd[k - 1] @ A.T
        IKC = I - central.gains[k] @ C
        S_star = symmetrize(C @ dist.predicted[k] @ C.T + model.R)
        gains[k] = linalg.solve(S_star, (IKC @ pred[k] @ C.T).T, assume_a="pos").T
        upd[k] = symmetrize(IKC @ pred[k] @ (I - dist.gains[k] @ C).T)
    return CovarianceGapRun(upd, pred, gains)


def estimate_gap_run(model: AggregatedModel, measurements, xstar_pred, runs=None, gap_run=None):
    """``x~_{k|k-1}`` for ``k = 1..K`` from the gap recursion.

    ``x~_{k+1|k} = A [(I - K_k C) x~_{k|k-1} + (K_k - K*_k)(y_k - C xhat*_{k|k-1})]``
    with ``x~_{1|0} = 0``; ``xstar_pred[k-1]`` is the distributed ``xhat*_{k|k-1}``.
    Algebraically equal to ``xhat - xhat*`` but without its cancellation floor.
    """
    ys = np.asarray(measurements, dtype=float)
    K = len(ys)
    runs = runs or covariance_runs(model, K)
    gap_run = gap_run or covariance_gap_run(model, K, runs)
    central = runs[0]
    A, C, I = model.A, model.C, np.eye(model.n)
    out = np.zeros((K, model.n))
    for k in range(1, K):
        innov = ys[k - 1] - C @ xstar_pred[k - 1]
        out[k] = A @ ((I - central.gains[k] @ C) @ out[k - 1] + gap_run.gains[k] @ innov)
    return out


def exact_gap_covariance(model: AggregatedModel, horizon: int, runs=None, gap_run=None):
    """``Delta_k`` for ``k = 1..horizon`` by propagating a joint covariance.

    ``(x_k, xhat*_{k|k-1}, x~_{k|k-1})`` is a zero-mean Gaussian vector driven
    by ``w`` and ``v`` through an exact linear recursion; ``Delta_k`` is its
    last diagonal block. Returns an array of shape ``(horizon, n, n)``.
    """
    runs = runs or covariance_runs(model, horizon)
    gap_run = gap_run or covariance_gap_run(model, horizon, runs)
    central, dist = runs
    n = model.n
    A, C, L, I = model.A, model.C, model.L, np.eye(n)
    Z = np.zeros((n, n))
    cov = np.zeros((3 * n, 3 * n))
    cov[:n, :n] = model.A @ model.P @ model.A.T + model.Q
    E = np.vstack([I, Z, Z])
    out = np.zeros((horizon, n, n))
    for k in range(1, horizon + 1):
        out[k - 1] = symmetrize(cov[2 * n:, 2 * n:])
        if k == horizon:
            break
        K, Ks, dK = central.gains[k], dist.gains[k], gap_run.gains[k]
        F = np.block([
            [model.A_tilde, Z, Z],
            [(A @ Ks + L) @ C, A @ (I - Ks @ C), Z],
            [A @ dK @ C, -A @ dK @ C, A @ (I - K @ C)],
        ])
        G = np.vstack([L, A @ Ks + L, A @ dK])
        cov = symmetrize(F @ cov @ F.T + G @ model.R @ G.T + E @ model.Q @ E.T)
    return out


# --- bound constants ----------------------------------------------------------

@dataclass
class BoundReport:
    """Scalar constants of the convergence bounds plus the steady-state matrices."""

    sigma: float
    omega: float
    upsilon1: float
    upsilon2: float
    upsilon: float
    kappa: float
    delta_P: float
    zeta: float
    alpha: float
    beta: float
    lam: float
    rho_H_bar: float
    eps: float
    psi_eps: float
    k_eps: int
    m_eps: float
    phi_eps: float
    A_eps: float
    B_eps: float
    bounds_available: bool
    Sigma_bar: np.ndarray = field(repr=False)
    U: np.ndarray = field(repr=False)
    H_bar: np.ndarray = field(repr=False)

    SCALARS = (
        "sigma", "omega", "upsilon1", "upsilon2", "upsilon", "kappa", "delta_P",
        "zeta", "alpha", "beta", "lam", "rho_H_bar", "eps", "psi_eps", "k_eps",
        "m_eps", "phi_eps", "A_eps", "B_eps", "bounds_available",
    )

    def rows(self):
        """``(name, value)`` pairs for every scalar constant, in a fixed order."""
        return [(name, getattr(self, name)) for name in self.SCALARS]


def compute_bound_report(model: AggregatedModel, eps=1.1, horizon=100, delta=None) -> BoundReport:
    """Evaluate every constant of the covariance-gap and estimate-gap bounds.

    ``delta`` (``Delta_k`` for ``k = 1..horizon``) feeds the estimate of
    ``lam``; by default it is computed exactly with :func:`exact_gap_covariance`.
    """
    if not eps > 1:
        raise ValueError(f"eps must exceed 1, got {eps}")
    P, P_star = np.asarray(model.P), np.asarray(model.P_star)
    Sigma_bar = steady_state_covariance(model, "centralized")
    Sigma_bar_star = steady_state_covariance(model, "distributed")
    inv_norm = lambda M: 1.0 / linalg.eigvalsh(symmetrize(M))[0]  # noqa: E731

    # the distributed fixed point coincides with Sigma_bar; kept in the max so
    # the constants stay valid if the two iterations stop at slightly different points
    sigma = max(norm2(P), norm2(P_star), norm2(Sigma_bar), norm2(Sigma_bar_star))
    omega = max(inv_norm(P), inv_norm(P_star), inv_norm(Sigma_bar), inv_norm(Sigma_bar_star))
    nA2 = norm2(model.A) ** 2
    q_min = linalg.eigvalsh(symmetrize(model.Q))[0]
    U = np.asarray(model.U)
    u_min = linalg.eigvalsh(U)[0]
    bounds_available = u_min > 1e-12 * max(norm2(U), 1e-300)
    upsilon1 = sigma * nA2 / (sigma * nA2 + q_min)
    upsilon2 = omega / (omega + u_min) if bounds_available else 1.0
    upsilon = upsilon1 * upsilon2

    delta_P = riemannian_distance_from_gap(P - P_star, P_star)
    kappa = float(np.expm1(delta_P))
    a_const = kappa**2 * omega**2 * sigma**2 * nA2 * (sigma * nA2 + norm2(model.Q))
    b_const = kappa**2 * omega**2 * sigma**3 * nA2
    zeta = a_const + b_const + 2.0 * math.sqrt(a_const * b_const)

    central, dist = covariance_runs(model, horizon)
    I = np.eye(model.n)
    H = np.array([model.A @ (I - central.updated[k] @ U) for k in range(1, horizon + 1)])
    H_bar = model.A @ (I - Sigma_bar @ U)
    if delta is None:
        delta = exact_gap_covariance(model, horizon, (central, dist))
    lam = zeta
    for k in range(1, horizon + 1):
        prev = norm2(delta[k - 2]) if k >= 2 else 0.0
        lam = max(lam, zeta + 2.0 * math.sqrt(zeta * norm2(H[k - 1]) ** 2 * prev))

    rho = float(np.max(np.abs(linalg.eigvals(H_bar))))
    psi = eps * rho
    thresh = (math.sqrt(eps) - 1.0) * norm2(H_bar)
    close = [k for k in range(1, horizon + 1) if norm2(H[k - 1] - H_bar) <= thresh]
    k_eps = close[0] if close else -1
    m_eps = max([1.0] + [norm2(H[k - 1]) for k in range(1, max(k_eps, 1))])
    phi = math.nan
    if k_eps > 0 and rho > 0:
        _, V = linalg.eig(H_bar)
        if np.linalg.cond(V) < 1e12:
            phi = eps * norm2(V) ** 2 * norm2(np.linalg.inv(V)) ** 2 * (m_eps / psi) ** (2 * (k_eps - 1))
    if psi != upsilon and not math.isnan(phi):
        A_eps = lam * psi * phi / (psi - upsilon)
        B_eps = lam * upsilon * phi / (upsilon - psi)
    else:
        A_eps = B_eps = math.nan

    sigma, omega, upsilon1, upsilon2, upsilon, delta_P, a_const, b_const, zeta, lam, m_eps = (
        float(v) for v in (sigma, omega, upsilon1, upsilon2, upsilon, delta_P, a_const, b_const, zeta, lam, m_eps))
    return BoundReport(
        sigma=sigma, omega=omega, upsilon1=upsilon1, upsilon2=upsilon2, upsilon=upsilon,
        kappa=kappa, delta_P=delta_P, zeta=zeta, alpha=a_const, beta=b_const, lam=lam,
        rho_H_bar=rho, eps=float(eps), psi_eps=psi, k_eps=k_eps, m_eps=m_eps, phi_eps=float(phi),
        A_eps=float(A_eps), B_eps=float(B_eps), bounds_available=bool(bounds_available),
        Sigma_bar=Sigma_bar, U=U, H_bar=H_bar,
    )


# --- gap trajectories ----------------------------------------------------------

@dataclass
class GapTrajectory:
    """Per-step gap records indexed by the steps in ``k`` (unused parts stay ``None``)."""

    k: np.ndarray
    sigma_gap: np.ndarray | None = None
    gamma_gap: np.ndarray | None = None
    delta_sigma: np.ndarray | None = None
    delta_gamma: np.ndarray | None = None
    sigma_norm: np.ndarray | None = None
    sigma_star_norm: np.ndarray | None = None
    gamma_norm: np.ndarray | None = None
    gamma_star_norm: np.ndarray | None = None
    bound_sigma: np.ndarray | None = None
    bound_gamma: np.ndarray | None = None
    bound_delta: np.ndarray | None = None
    x_gap: np.ndarray | None = None
    x_gap_norm: np.ndarray | None = None
    delta_hat_norm: np.ndarray | None = None
    delta_exact_norm: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return len(self.k)


def covariance_gap_trajectory(model: AggregatedModel, horizon: int, report: BoundReport | None = None) -> GapTrajectory:
    """Covariance gaps ``(k|k)`` for ``k = 0..horizon`` and their predicted bound curves.

    Gaps come from :func:`covariance_gap_run`; ``Gamma~`` is evaluated as
    ``-Gamma Sigma~ Gamma*`` and the distance through
    :func:`riemannian_distance_from_gap`, so none of them stalls at round-off.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    report = report or compute_bound_report(model, horizon=horizon)
    runs = covariance_runs(model, horizon)
    gaps = covariance_gap_run(model, horizon, runs)
    central, dist = runs
    ks = np.arange(0, horizon + 1)
    rec = {name: np.zeros(horizon + 1) for name in (
        "sigma_gap", "gamma_gap", "delta_sigma", "delta_gamma",
        "sigma_norm", "sigma_star_norm", "gamma_norm", "gamma_star_norm")}
    for k in ks:
        S, Ss, D = central.updated[k], dist.updated[k], gaps.updated[k]
        G, Gs = spd_inv(S, "Sigma_k|k"), spd_inv(Ss, "Sigma*_k|k")
        G_gap = -G @ D @ Gs
        rec["sigma_gap"][k] = norm2(D)
        rec["gamma_gap"][k] = norm2(G_gap)
        rec["delta_sigma"][k] = riemannian_distance_from_gap(D, Ss)
        rec["delta_gamma"][k] = riemannian_distance_from_gap(symmetrize(G_gap), Gs)
        rec["sigma_norm"][k] = norm2(S)
        rec["sigma_star_norm"][k] = norm2(Ss)
        rec["gamma_norm"][k] = norm2(G)
        rec["gamma_star_norm"][k] = norm2(Gs)
    ups = report.upsilon ** ks
    return GapTrajectory(
        k=ks, **rec,
        bound_sigma=report.kappa * report.sigma * ups,
        bound_gamma=report.kappa * report.omega * ups,
        bound_delta=report.delta_P * ups,
    )


# --- estimate-gap recursion ----------------------------------------------------

@dataclass(frozen=True)
class ErrorDynamicsContext:
    """Filter quantities at step ``k`` needed to advance the estimate gap."""

    A: np.ndarray
    U: np.ndarray
    Sigma: np.ndarray          # centralized Sigma_{k|k}
    Sigma_star: np.ndarray     # distributed Sigma*_{k|k}
    xstar_pred: np.ndarray     # xhat*_{k|k-1}
    xstar_upd: np.ndarray      # xhat*_{k|k}


@dataclass(frozen=True)
class ErrorDynamicsResult:
    x_next: np.ndarray
    a: np.ndarray
    b: np.ndarray
    H: np.ndarray


def error_dynamics_step(x_tilde, ctx: ErrorDynamicsContext) -> ErrorDynamicsResult:
    """``x~_{k+1|k} = H_k x~_{k|k-1} + a_k + b_k`` with ``H_k = A (I - Sigma_{k|k} U)``.

    ``a_k = A Sigma Gamma~ xhat*_{k|k-1}`` and ``b_k = A Sigma~ Gamma* xhat*_{k|k}``.
    ``Sigma Gamma~`` is evaluated as ``I - Sigma Gamma*`` so only the
    distributed covariance is ever solved against.
    """
    n = ctx.A.shape[0]
    S, Ss = np.asarray(ctx.Sigma), np.asarray(ctx.Sigma_star)
    H = ctx.A @ (np.eye(n) - S @ ctx.U)
    solved = spd_solve(Ss, np.column_stack([ctx.xstar_pred, ctx.xstar_upd]), "Sigma*_k|k")
    a = ctx.A @ (ctx.xstar_pred - S @ solved[:, 0])
    b = ctx.A @ ((S - Ss) @ solved[:, 1])
    return ErrorDynamicsResult(H @ np.asarray(x_tilde) + a + b, a, b, H)


def error_recursion_residuals(model: AggregatedModel, measurements):
    """Run both filters and compare the gap recursion with the direct gap.

    Returns ``(direct, recursed, residual)`` where ``direct[k-1]`` is
    ``x~_{k|k-1}`` and ``residual[k-1]`` is the max-abs difference at ``k+1``.
    """
    net = model.network
    c = central_run(model, measurements)
    d = distributed_run(net, measurements, P=model.P)
    direct = c.means("predicted") - d.means("predicted")
    K = len(measurements)
    recursed = np.zeros((K - 1, model.n))
    for k in range(1, K):
        ctx = ErrorDynamicsContext(
            model.A, model.U, c.updated[k - 1].cov, d.updated[k - 1].cov,
            d.predicted[k - 1].mean, d.updated[k - 1].mean,
        )
        recursed[k - 1] = error_dynamics_step(direct[k - 1], ctx).x_next
    residual = np.max(np.abs(recursed - direct[1:]), axis=1) if K > 1 else np.zeros(0)
    return direct, recursed, residual


# --- two-exponential envelope ----------------------------------------------------

@dataclass
class EnvelopeFit:
    """``A psi^k + B upsilon^k`` fitted on ``k <= fit_until`` and tested beyond it."""

    A: float
    B: float
    psi: float
    upsilon: float
    fit_until: int
    slack: float
    worst_ratio: float
    holds: bool

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        with np.errstate(under="ignore"):
            return self.A * self.psi**k + self.B * self.upsilon**k


def fit_envelope(values, psi, upsilon, fit_until, slack=2.0) -> EnvelopeFit:
    """Least-squares fit of ``log(A psi^k + B upsilon^k)`` to ``log values`` on ``1 <= k <= fit_until``.

    ``values[k-1]`` is the sample at ``k``. Zero samples are skipped in the fit
    (they carry no log information) but still count in the held-out test
    ``values[k] <= slack * envelope(k)``.
    """
    values = np.asarray(values, dtype=float)
    ks = np.arange(1, len(values) + 1)
    fit = (ks <= fit_until) & (values > 0)
    if not np.any(fit):
        env = EnvelopeFit(0.0, 0.0, psi, upsilon, fit_until, slack, 0.0, True)
        env.holds = bool(np.all(values[ks > fit_until] <= 0))
        return env
    kf, logv = ks[fit].astype(float), np.log(values[fit])
    with np.errstate(divide="ignore"):
        lp, lu = np.log(psi), np.log(upsilon)

    def model_log(theta):
        return np.logaddexp(theta[0] + kf * lp, theta[1] + kf * lu)

    start = np.full(2, logv.max())
    sol = optimize.least_squares(lambda t: model_log(t) - logv, start, bounds=(-700, 700))
    A, B = (float(v) for v in np.exp(sol.x))
    env = EnvelopeFit(A, B, float(psi), float(upsilon), int(fit_until), float(slack), 0.0, True)
    held = ks > fit_until
    if np.any(held):
        bound = env(ks[held])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(values[held] > 0, values[held] / bound, 0.0)
        env.worst_ratio = float(np.max(ratio))
        env.holds = bool(np.all(values[held] <= slack * bound))
    return env


@dataclass
class MonteCarloGap:
    """Monte-Carlo second moment of the estimate gap and its envelope check.

    ``delta_hat`` averages ``x~ x~^T`` with ``x~`` from the gap recursion;
    ``delta_hat_direct`` uses ``xhat - xhat*`` as subtracted from the two
    filter runs, which bottoms out at the round-off level of the estimates.
    """

    trajectory: GapTrajectory
    delta_hat: np.ndarray
    delta_hat_direct: np.ndarray
    envelope: EnvelopeFit
    report: BoundReport

    def decay_ratio(self, late=None, early=10):
        """``||Delta_hat_late|| / max_{k <= early} ||Delta_hat_k||``."""
        d = self.trajectory.delta_hat_norm
        late = len(d) if late is None else late
        return float(d[late - 1] / np.max(d[:early]))


def estimate_gap_monte_carlo(model: AggregatedModel, horizon: int, n_runs: int, seed: int,
                             eps=1.1, slack=2.0, fit_until=None, report=None) -> MonteCarloGap:
    """Empirical ``Delta_k`` over ``n_runs`` simulated trajectories and its envelope check.

    Run ``r`` draws from the stream seeded with ``seed + r``; the sum over
    runs is accumulated in index order so the result is order-independent.
    """
    from .simulate import simulate_measurements

    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    report = report or compute_bound_report(model, eps=eps, horizon=horizon)
    runs = covariance_runs(model, horizon)
    gap_run = covariance_gap_run(model, horizon, runs)
    acc = np.zeros((horizon, model.n, model.n))
    acc_direct = np.zeros_like(acc)
    last_gap = None
    for r in range(n_runs):
        ys = simulate_measurements(model, horizon, seed + r)
        c = central_run(model, ys)
        d = distributed_run(model.network, ys, P=model.P)
        xstar = d.means("predicted")
        direct = c.means("predicted") - xstar
        gap = estimate_gap_run(model, ys, xstar, runs, gap_run)
        acc += gap[:, :, None] * gap[:, None, :]
        acc_direct += direct[:, :, None] * direct[:, None, :]
        last_gap = direct
    delta_hat, delta_direct = acc / n_runs, acc_direct / n_runs
    dnorm = np.array([norm2(D) for D in delta_hat])
    exact = exact_gap_covariance(model, horizon, runs, gap_run)
    fit_until = horizon // 4 if fit_until is None else fit_until
    env = fit_envelope(dnorm, report.psi_eps, report.upsilon, fit_until, slack)
    traj = GapTrajectory(
        k=np.arange(1, horizon + 1), x_gap=last_gap,
        x_gap_norm=np.linalg.norm(last_gap, axis=1),
        delta_hat_norm=dnorm, delta_exact_norm=np.array([norm2(D) for D in exact]),
    )
    return MonteCarloGap(traj, delta_hat, delta_direct, env, report)


# --- stability -------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityReport:
    detectable: bool
    stabilizable: bool
    rho_H_bar: float


def _pbh_ok(A, M, side, tol):
    n = A.shape[0]
    for lam in linalg.eigvals(A):
        if abs(lam) < 1.0:
            continue
        block = np.vstack([lam * np.eye(n) - A, M]) if side == "rows" else np.hstack([lam * np.eye(n) - A, M])
        s = linalg.svdvals(block)
        if np.sum(s > tol * max(1.0, s[0])) < n:
            return False
    return True


def stability_check(model: AggregatedModel, tol=1e-10) -> StabilityReport:
    """PBH tests for ``(A, C)`` detectability and ``(A, Q^1/2)`` stabilizability, plus ``rho(H_bar)``.

    ``rho_H_bar`` is NaN when the Riccati iteration does not settle.
    """
    A = np.asarray(model.A)
    lam, V = linalg.eigh(symmetrize(model.Q))
    Qhalf = (V * np.sqrt(np.clip(lam, 0, None))) @ V.T
    detectable = _pbh_ok(A, np.asarray(model.C), "rows", tol)
    stabilizable = _pbh_ok(A, Qhalf, "cols", tol)
    try:
        Sigma_bar = steady_state_covariance(model)
        K = steady_state_gain(model, Sigma_bar)
        H_bar = A @ (np.eye(model.n) - K @ model.C)
        rho = float(np.max(np.abs(linalg.eigvals(H_bar))))
    except (NoConvergence, ArithmeticError):
        rho = math.nan
    return StabilityReport(bool(detectable), bool(stabilizable), rho)


__all__ = [
    "BoundReport", "GapTrajectory", "EnvelopeFit", "MonteCarloGap", "StabilityReport",
    "ErrorDynamicsContext", "ErrorDynamicsResult",
    "CovarianceRun", "CovarianceGapRun", "covariance_runs", "covariance_gap_run", "estimate_gap_run",
    "steady_state_covariance", "steady_state_gain", "exact_gap_covariance",
    "compute_bound_report", "covariance_gap_trajectory", "error_dynamics_step",
    "error_recursion_residuals", "fit_envelope", "estimate_gap_monte_carlo", "stability_check",
]
