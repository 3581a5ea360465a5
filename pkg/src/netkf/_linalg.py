"""Small dense linear-algebra helpers shared by the filters and the analysis."""

import math

import numpy as np
from scipy import linalg

from .errors import NonSPD

SPD_RTOL = 1e-12
PSD_RTOL = 1e-10
COND_MAX = 1e14


def as_matrix(M, name="matrix"):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {M.shape}")
    return M


def frozen(a):
    """Return a read-only float copy of ``a``."""
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def symmetrize(M):
    return 0.5 * (M + M.T)


def norm2(M):
    """Spectral norm (largest singular value); 0 for empty matrices."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    if M.ndim == 1:
        return float(np.linalg.norm(M))
    return float(np.linalg.norm(M, 2))


def min_eig(M):
    return float(linalg.eigvalsh(symmetrize(M))[0])


def check_spd(M, name="matrix", rtol=SPD_RTOL):
    """Raise :class:`NonSPD` unless ``M`` is symmetric with min eigenvalue > rtol*||M||."""
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise NonSPD(name, detail=f"not square, shape {M.shape}")
    scale = norm2(M)
    if not np.all(np.isfinite(M)):
        raise NonSPD(name, detail="non-finite entries")
    if np.max(np.abs(M - M.T), initial=0.0) > rtol * max(scale, np.finfo(float).tiny):
        raise NonSPD(name, detail="not symmetric")
    lam = min_eig(M)
    if not lam > rtol * scale:
        raise NonSPD(name, lam)
    return M


def is_spd(M, rtol=SPD_RTOL):
    try:
        check_spd(M, rtol=rtol)
    except NonSPD:
        return False
    return True


def check_psd(M, name="covariance", rtol=PSD_RTOL):
    """Symmetry and PSD up to round-off, both relative to ||M||."""
    if M.size == 0:
        return M
    lam = np.linalg.eigvalsh(M)
    scale = max(abs(lam[0]), abs(lam[-1]), np.finfo(float).tiny)
    if np.max(np.abs(M - M.T)) > rtol * scale:
        raise NonSPD(name, detail="not symmetric")
    if lam[0] < -rtol * scale:
        raise NonSPD(name, float(lam[0]), "not positive semidefinite")
    return M


def spd_cond(S):
    """Condition number of a symmetric positive (semi)definite matrix; inf if singular."""
    lam = np.linalg.eigvalsh(S)
    return math.inf if lam[0] <= 0 else float(lam[-1] / lam[0])


def gaussian_factor(cov, name="covariance"):
    """A matrix ``F`` with ``F @ F.T == cov``.

    Cholesky when ``cov`` is positive definite; falls back to an eigenvalue
    square root for singular PSD input (e.g. an all-zero noise covariance).
    """
    cov = symmetrize(as_matrix(cov, name))
    if not np.any(cov):
        return np.zeros_like(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        lam, V = linalg.eigh(cov)
        if lam[0] < -PSD_RTOL * max(abs(lam[-1]), 1.0):
            raise NonSPD(name, float(lam[0])) from None
        return V * np.sqrt(np.clip(lam, 0.0, None))


def spd_solve(S, B, name="covariance"):
    """Solve ``S X = B`` for symmetric positive definite ``S`` with a conditioning guard."""
    from .errors import SingularCovariance

    S = symmetrize(S)
    if spd_cond(S) > COND_MAX:
        raise SingularCovariance(f"{name} is numerically singular (condition > {COND_MAX:g})")
    return linalg.solve(S, B, assume_a="pos")


def spd_inv(S, name="covariance"):
    return symmetrize(spd_solve(S, np.eye(S.shape[0]), name))
