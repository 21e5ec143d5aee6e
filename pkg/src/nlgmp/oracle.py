"""Reference computations used to validate the production modules.

Deliberately simple and slow.  Nothing here imports the filtering,
smoothing or node code; linear algebra is plain ``numpy.linalg``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.integrate import trapezoid

from .errors import NumericalError, PreconditionError
from .gaussian import GaussianMoments


class McStandardErrors(NamedTuple):
    mean: np.ndarray
    cov: np.ndarray
    cross: np.ndarray


@dataclass(frozen=True)
class McMoments:
    mean: np.ndarray
    cov: np.ndarray
    cross: np.ndarray
    standard_errors: McStandardErrors
    sample_count: int


def _product_se(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample covariance between columns of ``a`` and ``b`` and its standard errors."""
    N = a.shape[0]
    da = a - a.mean(axis=0)
    db = b - b.mean(axis=0)
    prods = da[:, :, None] * db[:, None, :]
    est = prods.mean(axis=0) * N / (N - 1)
    se = prods.std(axis=0, ddof=1) / np.sqrt(N)
    return est, se


def mc_moments(
    f: Callable, input: GaussianMoments, samples: int = 10**6, seed: int = 0, vectorized: bool = False
) -> McMoments:
    """Monte-Carlo moments of ``(X, f(X))`` for ``X ~ input``.

    With ``vectorized=True``, ``f`` receives the whole ``samples x n`` array and
    must return ``samples x p``; otherwise it is called row by row.
    """
    if samples < 10**4:
        raise ValueError("mc_moments needs at least 1e4 samples")
    rng = np.random.default_rng(seed)
    n = input.dim
    lam, vec = np.linalg.eigh(input.cov)
    root = vec * np.sqrt(np.clip(lam, 0, None))
    x = input.mean + rng.standard_normal((samples, n)) @ root.T
    if vectorized:
        y = np.asarray(f(x), dtype=float).reshape(samples, -1)
    else:
        y = np.array([np.atleast_1d(f(row)) for row in x], dtype=float)
    finite = np.all(np.isfinite(y), axis=1)
    bad = samples - int(finite.sum())
    if bad > 1e-4 * samples:
        raise NumericalError(f"f is non-finite on {bad} of {samples} samples")
    x, y = x[finite], y[finite]
    N = x.shape[0]
    mean = y.mean(axis=0)
    mean_se = y.std(axis=0, ddof=1) / np.sqrt(N)
    cov, cov_se = _product_se(y, y)
    cross, cross_se = _product_se(x, y)
    return McMoments(mean, 0.5 * (cov + cov.T), cross, McStandardErrors(mean_se, cov_se, cross_se), N)


def _as_matrix(fn, name):
    if fn is None:
        return None
    if getattr(fn, "matrix", None) is None:
        raise PreconditionError(f"kalman_reference needs a linear {name}")
    return np.asarray(fn.matrix, dtype=float)


def kalman_reference(model, observations, inputs=None):
    """Textbook Kalman filter and RTS smoother for a linear model.

    Returns ``(filtered, smoothed)`` lists of ``(mean, cov)`` tuples, one per
    step.  Missing observations (``None`` or NaN rows) skip the update.
    """
    A = _as_matrix(model.f, "f")
    B = _as_matrix(model.g, "g")
    H = _as_matrix(model.h, "h")
    Q = np.asarray(model.Q, dtype=float)
    R = np.asarray(model.R, dtype=float)
    if model.input_cov is not None:
        Q = Q + B @ model.input_cov @ B.T
    m = np.array(model.x0.mean, dtype=float)
    P = np.array(model.x0.cov, dtype=float)
    obs = list(observations)
    N = len(obs)
    filt_m, filt_P, pred_m, pred_P = [], [], [], []
    for i in range(N):
        mp = A @ m
        if B is not None:
            mp = mp + B @ np.asarray(inputs[i], dtype=float)
        Pp = A @ P @ A.T + Q
        pred_m.append(mp)
        pred_P.append(Pp)
        y = obs[i]
        if y is None or np.all(np.isnan(np.atleast_1d(y))):
            m, P = mp, Pp
        else:
            y = np.atleast_1d(np.asarray(y, dtype=float))
            S = H @ Pp @ H.T + R
            K = Pp @ H.T @ np.linalg.inv(S)
            m = mp + K @ (y - H @ mp)
            P = Pp - K @ S @ K.T
            P = 0.5 * (P + P.T)
        filt_m.append(m)
        filt_P.append(P)
    sm_m = [None] * N
    sm_P = [None] * N
    sm_m[-1], sm_P[-1] = filt_m[-1], filt_P[-1]
    for k in range(N - 2, -1, -1):
        J = filt_P[k] @ A.T @ np.linalg.inv(pred_P[k + 1])
        sm_m[k] = filt_m[k] + J @ (sm_m[k + 1] - pred_m[k + 1])
        Pk = filt_P[k] + J @ (sm_P[k + 1] - pred_P[k + 1]) @ J.T
        sm_P[k] = 0.5 * (Pk + Pk.T)
    return list(zip(filt_m, filt_P)), list(zip(sm_m, sm_P))


def kalman_innovations(model, observations, inputs=None) -> np.ndarray:
    """Normalized innovation sequence ``S^-1/2 (y - H m_pred)`` of the reference filter."""
    A = _as_matrix(model.f, "f")
    B = _as_matrix(model.g, "g")
    H = _as_matrix(model.h, "h")
    m = np.array(model.x0.mean, dtype=float)
    P = np.array(model.x0.cov, dtype=float)
    out = []
    for i, y in enumerate(observations):
        mp = A @ m + (B @ np.asarray(inputs[i], dtype=float) if B is not None else 0.0)
        Pp = A @ P @ A.T + model.Q
        S = H @ Pp @ H.T + model.R
        K = Pp @ H.T @ np.linalg.inv(S)
        e = np.asarray(y, dtype=float) - H @ mp
        out.append(np.linalg.solve(np.linalg.cholesky(S), e))
        m = mp + K @ e
        P = Pp - K @ S @ K.T
    return np.array(out)


def grid_bayes_1d(
    prior: GaussianMoments,
    h: Callable,
    y_obs: float,
    r: float,
    half_width: float = 8.0,
    points: int = 20001,
) -> GaussianMoments:
    """Posterior mean and variance of a scalar state on a dense grid.

    The grid spans ``prior.mean +/- half_width`` prior standard deviations.
    ``h`` must accept a numpy array.
    """
    if prior.dim != 1:
        raise ValueError("grid_bayes_1d handles scalar states only")
    if half_width < 8 or points < 10**4:
        raise ValueError("grid must cover +/-8 prior standard deviations with >= 1e4 points")
    m0 = float(prior.mean[0])
    s0 = float(np.sqrt(prior.cov[0, 0]))
    x = np.linspace(m0 - half_width * s0, m0 + half_width * s0, points)
    log_post = -0.5 * ((x - m0) / s0) ** 2 - 0.5 * (y_obs - np.asarray(h(x), dtype=float)) ** 2 / r
    log_post -= log_post.max()
    dens = np.exp(log_post)
    mass = trapezoid(dens, x)
    if not mass > 0 or not np.isfinite(mass):
        raise NumericalError("posterior mass underflow; widen the grid")
    mean = trapezoid(x * dens, x) / mass
    var = trapezoid((x - mean) ** 2 * dens, x) / mass
    return GaussianMoments([mean], [[var]])
