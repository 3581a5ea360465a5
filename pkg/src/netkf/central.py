"""Centralized Kalman filter for the aggregated network model.

Time convention: ``x_0 ~ N(mean0, P)`` is the prior (``Sigma_{0|0} = P``)
and measurements start at ``k = 1``. No output exists at ``k = 0``, so the
coupling input is absent from the first prediction and ``x_1 = A x_0 + w_0``.
From then on each prediction feeds the measured outputs forward through
``L``; because ``L y_k`` is known at time ``k`` the correlated-noise
prediction collapses to ``A x + L y`` and ``A Sigma A^T + Q``.
"""

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy import linalg

from ._linalg import COND_MAX, check_psd, frozen, spd_cond, symmetrize
from .errors import DimensionMismatch, SingularInnovation, StepError
from .netmodel import AggregatedModel

Kind = Literal["predicted", "updated"]


@dataclass(frozen=True)
class GaussianBelief:
    """Mean and error covariance of the state at step ``k``.

    ``kind`` is ``"predicted"`` for ``(k|k-1)`` and ``"updated"`` for ``(k|k)``.
    """

    mean: np.ndarray
    cov: np.ndarray
    kind: Kind = "updated"
    step: int = 0

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(f"covariance {cov.shape} does not match mean of size {mean.size}")
        if self.kind not in ("predicted", "updated"):
            raise ValueError(f"unknown belief kind {self.kind!r}")
        check_psd(cov)
        object.__setattr__(self, "mean", frozen(mean))
        object.__setattr__(self, "cov", frozen(symmetrize(cov)))


@dataclass(frozen=True)
class KalmanGain:
    K: np.ndarray
    step: int


def _conform(y, size, what="measurement"):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (size,):
        raise DimensionMismatch(f"{what} must have length {size}, got shape {y.shape}")
    return y


def _coupling_input(model, y):
    if y is None:
        return np.zeros(model.n)
    return model.L @ _conform(y, model.p)


def central_predict(belief: GaussianBelief, y, model: AggregatedModel) -> GaussianBelief:
    """One-step prediction ``(k|k) -> (k+1|k)`` using the measured output ``y_k``.

    Pass ``y=None`` at ``k = 0``, where there is no measurement to feed forward.
    """
    if belief.kind != "updated":
        raise ValueError("central_predict expects an updated (k|k) belief")
    if belief.mean.size != model.n:
        raise DimensionMismatch(f"belief has size {belief.mean.size}, model state has {model.n}")
    mean = model.A @ belief.mean + _coupling_input(model, y)
    cov = model.A @ belief.cov @ model.A.T + model.Q
    return GaussianBelief(mean, symmetrize(cov), "predicted", belief.step + 1)


def central_predict_correlated(belief: GaussianBelief, y, model: AggregatedModel) -> GaussianBelief:
    """The same prediction written in correlated-noise form.

    Uses ``(A~ - S~ R^-1 C) x + S~ R^-1 y`` and
    ``F Sigma F^T + Q~ - S~ R^-1 S~^T`` with ``F = A~ - S~ R^-1 C``. Kept as an
    independent evaluation path for cross-checking :func:`central_predict`.
    """
    if belief.kind != "updated":
        raise ValueError("central_predict_correlated expects an updated (k|k) belief")
    S = model.S_tilde
    SRinv = linalg.solve(model.R, S.T, assume_a="pos").T
    F = model.A_tilde - SRinv @ model.C
    if y is None:
        # no output at k = 0: the noise term L v_0 never enters the state
        mean = model.A @ belief.mean
        cov = model.A @ belief.cov @ model.A.T + model.Q
    else:
        mean = F @ belief.mean + SRinv @ _conform(y, model.p)
        cov = F @ belief.cov @ F.T + model.Q_tilde - SRinv @ S.T
    return GaussianBelief(mean, symmetrize(cov), "predicted", belief.step + 1)


def kalman_gain(cov_pred, C, R):
    """``K = Sigma C^T (C Sigma C^T + R)^-1`` via a linear solve."""
    S = symmetrize(C @ cov_pred @ C.T + R)
    if S.size and (cond := spd_cond(S)) > COND_MAX:
        raise SingularInnovation(f"innovation covariance is numerically singular (cond {cond:.3g})")
    return linalg.solve(S, C @ cov_pred, assume_a="pos").T


def joseph_update(cov_pred, K, C, R):
    """``(I - KC) Sigma (I - KC)^T + K R K^T`` (symmetric by construction)."""
    IKC = np.eye(cov_pred.shape[0]) - K @ C
    return symmetrize(IKC @ cov_pred @ IKC.T + K @ R @ K.T)


def short_update(cov_pred, K, C):
    """``(I - KC) Sigma``, the textbook form; not symmetric under round-off."""
    return (np.eye(cov_pred.shape[0]) - K @ C) @ cov_pred


def central_update(belief: GaussianBelief, y, model: AggregatedModel):
    """Measurement update ``(k|k-1) -> (k|k)``; returns the new belief and gain."""
    if belief.kind != "predicted":
        raise ValueError("central_update expects a predicted (k|k-1) belief")
    if belief.mean.size != model.n:
        raise DimensionMismatch(f"belief has size {belief.mean.size}, model state has {model.n}")
    y = _conform(y, model.p)
    K = kalman_gain(belief.cov, model.C, model.R)
    mean = belief.mean + K @ (y - model.C @ belief.mean)
    cov = joseph_update(belief.cov, K, model.C, model.R)
    return GaussianBelief(mean, cov, "updated", belief.step), KalmanGain(frozen(K), belief.step)


@dataclass
class FilterTrajectory:
    """Beliefs of one filter run: ``predicted[k-1]`` is ``(k|k-1)``, ``updated[k-1]`` is ``(k|k)``."""

    initial: GaussianBelief
    predicted: list = field(default_factory=list)
    updated: list = field(default_factory=list)
    gains: list = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return len(self.updated)

    def means(self, kind="updated"):
        seq = self.updated if kind == "updated" else self.predicted
        return np.array([b.mean for b in seq])

    def covs(self, kind="updated"):
        seq = self.updated if kind == "updated" else self.predicted
        return np.array([b.cov for b in seq])


def central_run(model: AggregatedModel, measurements: Sequence, mean0=None) -> FilterTrajectory:
    """Alternate predict/update over ``y_1..y_K`` starting from ``(mean0, P)``."""
    if len(measurements) == 0:
        raise ValueError("central_run needs at least one measurement")
    mean0 = np.zeros(model.n) if mean0 is None else mean0
    belief = GaussianBelief(mean0, model.P, "updated", 0)
    traj = FilterTrajectory(belief)
    y_prev = None
    for k, y in enumerate(measurements, start=1):
        try:
            pred = central_predict(belief, y_prev, model)
            belief, gain = central_update(pred, y, model)
        except Exception as exc:
            raise StepError(k, exc) from exc
        traj.predicted.append(pred)
        traj.updated.append(belief)
        traj.gains.append(gain)
        y_prev = y
    return traj


def riccati_step(cov, model, C=None, R=None):
    """Covariance-only recursion ``Sigma_{k|k} -> (Sigma_{k+1|k}, Sigma_{k+1|k+1}, K_{k+1})``."""
    C = model.C if C is None else C
    R = model.R if R is None else R
    pred = symmetrize(model.A @ cov @ model.A.T + model.Q)
    K = kalman_gain(pred, C, R)
    return pred, joseph_update(pred, K, C, R), K
