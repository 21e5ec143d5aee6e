"""Gaussian message algebra.

Moment-form messages ``(mean, cov)``, the dual ``(xi_tilde, W_tilde)``
parameterization used by backward sweeps, and the conversions between
them.  Every factorization goes through :func:`chol_psd` so that it can be
counted by :mod:`nlgmp.telemetry`.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from . import telemetry
from .errors import ConditioningError, DimensionError, NotPSDError


@dataclass
class Tolerances:
    """Numerical tolerances shared by all modules.

    ``scale`` multiplies every tolerance; it is read from the
    ``NLGMP_TOLERANCE_SCALE`` environment variable by :meth:`from_env`.
    """

    symmetry: float = 1e-10
    psd: float = 1e-10
    psd_clip: float = 1e-8
    max_condition: float = 1e14
    scale: float = 1.0

    @classmethod
    def from_env(cls) -> "Tolerances":
        raw = os.environ.get("NLGMP_TOLERANCE_SCALE", "1")
        try:
            scale = float(raw)
        except ValueError:
            raise ValueError(f"NLGMP_TOLERANCE_SCALE is not a number: {raw!r}") from None
        if not scale > 0:
            raise ValueError(f"NLGMP_TOLERANCE_SCALE must be positive, got {raw!r}")
        return cls(scale=scale)

    @property
    def sym(self) -> float:
        return self.symmetry * self.scale

    @property
    def eig(self) -> float:
        return self.psd * self.scale

    @property
    def clip(self) -> float:
        return self.psd_clip * self.scale


def _initial_tolerances() -> Tolerances:
    try:
        return Tolerances.from_env()
    except ValueError as exc:
        # importing must not fail; the CLI re-validates and exits with status 2
        warnings.warn(f"{exc}; using default tolerances", RuntimeWarning, stacklevel=2)
        return Tolerances()


TOLERANCES = _initial_tolerances()

JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _norm(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def is_symmetric(a: np.ndarray, tol: float | None = None) -> bool:
    tol = TOLERANCES.sym if tol is None else tol
    scale = _norm(a)
    return bool(np.all(np.abs(a - a.T) <= tol * max(scale, 1e-300)))


def check_psd(a: np.ndarray, name: str = "matrix", tol: float | None = None) -> None:
    """Raise :class:`NotPSDError` unless ``a`` is symmetric PSD within ``tol``."""
    tol = TOLERANCES.eig if tol is None else tol
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotPSDError(f"{name} has non-finite entries")
    if not is_symmetric(a):
        raise NotPSDError(f"{name} is not symmetric")
    if a.size == 0:
        return
    lam = np.linalg.eigvalsh(symmetrize(a))
    if lam[0] < -tol * max(np.max(np.abs(lam)), 1e-300):
        raise NotPSDError(f"{name} is not positive semidefinite (min eigenvalue {lam[0]:.3e})")


def clip_psd(a: np.ndarray, name: str = "covariance", tol: float | None = None) -> np.ndarray:
    """Symmetrize ``a`` and clip small negative eigenvalues to zero.

    Negative eigenvalues larger in magnitude than ``tol * ||a||`` are
    treated as a genuine indefiniteness and raise :class:`NotPSDError`.
    """
    tol = TOLERANCES.clip if tol is None else tol
    a = symmetrize(np.asarray(a, dtype=float))
    if a.size == 0:
        return a
    if not np.all(np.isfinite(a)):
        raise NotPSDError(f"{name} has non-finite entries")
    lam, vec = np.linalg.eigh(a)
    if lam[0] >= 0.0:
        return a
    norm = max(np.max(np.abs(lam)), 1e-300)
    if lam[0] < -tol * norm:
        raise NotPSDError(
            f"{name} is indefinite beyond clipping threshold (min eigenvalue {lam[0]:.3e}, "
            f"norm {norm:.3e})"
        )
    lam = np.clip(lam, 0.0, None)
    return symmetrize((vec * lam) @ vec.T)


def chol_psd(matrix: np.ndarray, kind: str = "other") -> np.ndarray:
    """Lower Cholesky factor of a symmetric PSD matrix, with escalating jitter.

    Jitter tries ``0`` then ``{1e-12, 1e-10, 1e-8} * trace / n`` on the
    diagonal.  An all-zero matrix factors to the zero matrix.  ``kind``
    labels the factorization for telemetry ("state", "measurement", ...).
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"chol_psd expects a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotPSDError("matrix has non-finite entries")
    if not is_symmetric(a):
        raise NotPSDError("matrix is not symmetric")
    telemetry.record(kind, a.shape[0])
    n = a.shape[0]
    if n == 0:
        return a.copy()
    a = symmetrize(a)
    if not np.any(a):
        return np.zeros_like(a)
    level = max(np.trace(a) / n, 0.0)
    eye = np.eye(n)
    for rel in JITTER_LADDER:
        if rel > 0 and level == 0.0:
            break
        try:
            return np.linalg.cholesky(a + rel * level * eye)
        except np.linalg.LinAlgError:
            continue
    raise NotPSDError("matrix is not positive semidefinite: Cholesky failed at maximum jitter")


def _condition_from_chol(chol: np.ndarray) -> float:
    d = np.abs(np.diag(chol))
    if d.size == 0:
        return 1.0
    lo = d.min()
    if lo == 0.0:
        return np.inf
    return float((d.max() / lo) ** 2)


def factor_pd(matrix: np.ndarray, name: str, kind: str = "other") -> np.ndarray:
    """Cholesky factor of a matrix that must be invertible.

    Raises :class:`ConditioningError` naming ``name`` when the (jittered)
    factor has condition number above the configured maximum.
    """
    try:
        chol = chol_psd(matrix, kind=kind)
    except NotPSDError as exc:
        raise ConditioningError(f"{name} cannot be factorized: {exc}") from None
    cond = _condition_from_chol(chol)
    if not cond < TOLERANCES.max_condition:
        raise ConditioningError(f"{name} is singular or ill-conditioned (condition ~{cond:.3e})")
    return chol


def inverse_from_chol(chol: np.ndarray) -> np.ndarray:
    return symmetrize(cho_solve((chol, True), np.eye(chol.shape[0])))


@dataclass(frozen=True)
class GaussianMoments:
    """Gaussian in mean/covariance form.

    ``vacuous=True`` marks a message carrying no information (infinite
    covariance); ``mean`` and ``cov`` are then zero placeholders.
    """

    mean: np.ndarray
    cov: np.ndarray
    vacuous: bool = False

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float)).copy()
        if mean.ndim != 1:
            raise DimensionError(f"mean must be a vector, got shape {mean.shape}")
        if cov.shape != (mean.size, mean.size):
            raise DimensionError(f"cov shape {cov.shape} does not match mean length {mean.size}")
        if not self.vacuous:
            if not np.all(np.isfinite(mean)):
                raise ValueError("mean has non-finite entries")
            check_psd(cov, "cov")
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def no_information(cls, n: int) -> "GaussianMoments":
        return cls(np.zeros(n), np.zeros((n, n)), vacuous=True)

    @property
    def dim(self) -> int:
        return self.mean.size

    def __repr__(self):
        if self.vacuous:
            return f"GaussianMoments(vacuous, dim={self.dim})"
        return f"GaussianMoments(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


@dataclass(frozen=True)
class DualMessage:
    """Backward-pass message ``(xi_tilde, W_tilde)``.

    ``W_tilde = (V_fwd + V_bwd)^-1`` and ``xi_tilde = W_tilde (m_fwd - m_bwd)``.
    The all-zero message carries no downstream information.
    """

    xi_tilde: np.ndarray
    W_tilde: np.ndarray

    def __post_init__(self):
        xi = np.atleast_1d(np.asarray(self.xi_tilde, dtype=float)).copy()
        W = np.atleast_2d(np.asarray(self.W_tilde, dtype=float)).copy()
        if xi.ndim != 1 or W.shape != (xi.size, xi.size):
            raise DimensionError(f"inconsistent dual message shapes {xi.shape}, {W.shape}")
        check_psd(W, "W_tilde")
        xi.flags.writeable = False
        W.flags.writeable = False
        object.__setattr__(self, "xi_tilde", xi)
        object.__setattr__(self, "W_tilde", W)

    @classmethod
    def zero(cls, n: int) -> "DualMessage":
        return cls(np.zeros(n), np.zeros((n, n)))

    @property
    def dim(self) -> int:
        return self.xi_tilde.size

    def is_zero(self) -> bool:
        return not (np.any(self.xi_tilde) or np.any(self.W_tilde))


@dataclass(frozen=True)
class JointGaussian:
    """Joint Gaussian over ``(x, y)`` with cross-covariance ``cross = Cov(x, y)``."""

    mean_x: np.ndarray
    mean_y: np.ndarray
    cov_x: np.ndarray
    cov_y: np.ndarray
    cross: np.ndarray = field(repr=False)

    def __post_init__(self):
        n, p = np.size(self.mean_x), np.size(self.mean_y)
        if np.shape(self.cross) != (n, p):
            raise DimensionError(f"cross must be {n}x{p}, got {np.shape(self.cross)}")
        check_psd(self.stacked_cov(), "joint covariance", tol=TOLERANCES.clip)

    def stacked_cov(self) -> np.ndarray:
        c = np.asarray(self.cross, dtype=float)
        return np.block([[np.asarray(self.cov_x), c], [c.T, np.asarray(self.cov_y)]])


def _check_same_dim(a, b, what="messages"):
    if a.dim != b.dim:
        raise DimensionError(f"{what} have different dimensions: {a.dim} vs {b.dim}")


def combine_forward_backward(fwd: GaussianMoments, bwd: GaussianMoments) -> GaussianMoments:
    """Marginal from a forward and a backward message on the same edge.

    Uses one factorization of ``S = V_f + V_b``:
    ``V = V_f S^-1 V_b`` and ``m = V_b S^-1 m_f + V_f S^-1 m_b``, which is
    the precision-weighted combination without inverting either covariance.
    """
    _check_same_dim(fwd, bwd)
    if bwd.vacuous:
        return fwd
    if fwd.vacuous:
        return bwd
    chol = factor_pd(fwd.cov + bwd.cov, "fwd.cov + bwd.cov")
    sol_b = cho_solve((chol, True), bwd.cov)  # S^-1 V_b
    sol_f = cho_solve((chol, True), fwd.cov)  # S^-1 V_f
    cov = fwd.cov @ sol_b
    mean = sol_b.T @ fwd.mean + sol_f.T @ bwd.mean
    return GaussianMoments(mean, clip_psd(cov, "combined covariance"))


def to_dual(fwd: GaussianMoments, bwd: GaussianMoments) -> DualMessage:
    _check_same_dim(fwd, bwd)
    if bwd.vacuous:
        return DualMessage.zero(fwd.dim)
    if fwd.vacuous:
        raise ValueError("to_dual needs an informative forward message")
    chol = factor_pd(fwd.cov + bwd.cov, "fwd.cov + bwd.cov")
    W = inverse_from_chol(chol)
    return DualMessage(W @ (fwd.mean - bwd.mean), clip_psd(W, "W_tilde"))


def marginal_from_dual(fwd: GaussianMoments, dual: DualMessage) -> GaussianMoments:
    """``m = m_f - V_f xi``, ``V = V_f - V_f W V_f`` (PSD-clipped)."""
    if fwd.dim != dual.dim:
        raise DimensionError(f"dimension mismatch: {fwd.dim} vs {dual.dim}")
    if dual.is_zero():
        return fwd
    V = fwd.cov
    mean = fwd.mean - V @ dual.xi_tilde
    cov = V - V @ dual.W_tilde @ V
    return GaussianMoments(mean, clip_psd(cov, "marginal covariance"))
