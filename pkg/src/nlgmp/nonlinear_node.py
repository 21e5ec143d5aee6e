"""Message passing through a deterministic node ``y = f(x)``.

Forward: quadrature estimates of the output mean, covariance and the
input/output cross-covariance.  Backward: RTS-type rules in moment form
(:func:`backward_marginal`) and in the dual form (:func:`backward_dual`).

The backward rules assume the only path between ``X`` and ``Y`` in the graph
goes through this node.  The node cannot check that; callers must.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import cho_solve

from .errors import NotPSDError
from .gaussian import (
    DualMessage,
    GaussianMoments,
    chol_psd,
    clip_psd,
    factor_pd,
    inverse_from_chol,
    symmetrize,
)
from .quadrature import QuadratureRule, evaluate_at, transform_points


@dataclass(frozen=True)
class ForwardPassResult:
    """Output of :func:`forward_pass`.

    Attributes
    ----------
    y_forward : GaussianMoments
        Forward message on the output edge.
    cross : ndarray, shape (n, p)
        Cross-covariance ``Cov(x, f(x))``.
    lin : ndarray, shape (p, n)
        Statistical linearization ``cross.T @ x_precision``.
    x_precision : ndarray, shape (n, n)
        Inverse of the input covariance, cached so backward sweeps need no
        factorization.
    """

    y_forward: GaussianMoments
    cross: np.ndarray
    lin: np.ndarray
    x_precision: np.ndarray


def _precision(chol: np.ndarray) -> np.ndarray:
    if not np.any(chol):
        # deterministic input: cross is zero, so lin is zero for any choice here
        return np.zeros_like(chol)
    return inverse_from_chol(chol)


def forward_pass(
    f: Callable, x_forward: GaussianMoments, rule: QuadratureRule, kind: str = "state"
) -> ForwardPassResult:
    """Propagate ``x_forward`` through ``f`` with one set of sigma points.

    The single Cholesky factor of the input covariance both places the
    sigma points and yields the cached input precision.  ``kind`` labels
    that factorization for telemetry.
    """
    chol = chol_psd(x_forward.cov, kind=kind)
    sp = transform_points(rule, x_forward, chol=chol)
    fx = evaluate_at(f, sp.points)
    w = sp.weights
    m_y = w @ fx
    dy = fx - m_y
    dx = sp.points - x_forward.mean
    try:
        V_y = clip_psd((dy.T * w) @ dy, "output covariance")
    except NotPSDError as exc:
        raise NotPSDError(f"{exc} (rule {rule.name})") from None
    C = (dx.T * w) @ dy
    W_x = _precision(chol)
    return ForwardPassResult(GaussianMoments(m_y, V_y), C, C.T @ W_x, W_x)


def smoothing_gain(fp: ForwardPassResult) -> np.ndarray:
    """``D = C V_y^-1`` via a Cholesky solve."""
    chol = factor_pd(fp.y_forward.cov, "forward output covariance V_y", kind="output")
    return cho_solve((chol, True), fp.cross.T).T


def backward_marginal(
    fp: ForwardPassResult, x_forward: GaussianMoments, y_marginal: GaussianMoments
) -> GaussianMoments:
    y_fwd = fp.y_forward
    if y_marginal.dim != y_fwd.dim:
        raise ValueError(f"y_marginal dimension {y_marginal.dim} != {y_fwd.dim}")
    D = smoothing_gain(fp)
    mean = x_forward.mean + D @ (y_marginal.mean - y_fwd.mean)
    cov = x_forward.cov + D @ (y_marginal.cov - y_fwd.cov) @ D.T
    return GaussianMoments(mean, clip_psd(cov, "smoothed input covariance"))


def backward_dual(fp: ForwardPassResult, y_dual: DualMessage) -> DualMessage:
    B = fp.lin.T  # W_x C
    if y_dual.dim != B.shape[1]:
        raise ValueError(f"y_dual dimension {y_dual.dim} != node output dimension {B.shape[1]}")
    return DualMessage(B @ y_dual.xi_tilde, symmetrize(B @ y_dual.W_tilde @ B.T))
