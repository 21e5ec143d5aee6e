"""Unit-Gaussian quadrature rules and sigma-point transport.

A rule approximates ``E[g(Z)]`` for ``Z ~ N(0, I)`` by ``sum_i w_i g(z_i)``.
Nodes are moved to ``N(m, V)`` by ``x_i = m + L z_i`` with ``L`` the lower
Cholesky factor of ``V``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EvaluationError
from .gaussian import GaussianMoments, chol_psd

MAX_POINTS = 10**7


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (l, n) unit-space nodes
    weights: np.ndarray  # (l,)
    degree: int
    name: str = "rule"

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float)).copy()
        w = np.asarray(self.weights, dtype=float).ravel().copy()
        if pts.shape[0] != w.size:
            raise ValueError(f"{pts.shape[0]} points but {w.size} weights")
        pts.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def has_negative_weights(self) -> bool:
        return bool(np.any(self.weights < 0))

    def moment_errors(self) -> tuple[float, float, float]:
        """Max abs deviations of the zeroth, first and second moments from (1, 0, I)."""
        w, z = self.weights, self.points
        e0 = abs(w.sum() - 1.0)
        e1 = float(np.max(np.abs(w @ z)))
        e2 = float(np.max(np.abs((z.T * w) @ z - np.eye(self.dim))))
        return e0, e1, e2


@dataclass(frozen=True)
class SigmaPoints:
    points: np.ndarray  # (l, n) in x-space
    weights: np.ndarray


def _check_dim(n):
    if int(n) != n or n < 1:
        raise ValueError(f"dimension must be a positive integer, got {n!r}")
    return int(n)


def unscented_rule(n: int, kappa: float | None = None) -> QuadratureRule:
    """Classic unscented transform with ``2n+1`` points.

    ``kappa`` defaults to ``3 - n``.  Negative ``kappa`` gives a negative
    centre weight, which is allowed (see ``has_negative_weights``).
    """
    n = _check_dim(n)
    if kappa is None:
        kappa = 3.0 - n
    kappa = float(kappa)
    if not kappa > -n:
        raise ValueError(f"kappa must exceed -n = {-n}, got {kappa}")
    scale = np.sqrt(n + kappa)
    eye = np.eye(n)
    points = np.vstack([np.zeros((1, n)), scale * eye, -scale * eye])
    weights = np.full(2 * n + 1, 1.0 / (2.0 * (n + kappa)))
    weights[0] = kappa / (n + kappa)
    return QuadratureRule(points, weights, degree=3, name=f"ut(kappa={kappa:g})")


def hermite_1d(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Probabilists' Gauss-Hermite nodes and weights via Golub-Welsch.

    The Jacobi matrix of the monic probabilists' Hermite recurrence has zero
    diagonal and off-diagonal ``sqrt(k)``.  Nodes are its eigenvalues and the
    weights are the squared first eigenvector components.
    """
    if int(m) != m or not 1 <= m <= 20:
        raise ValueError(f"Gauss-Hermite order must be in [1, 20], got {m!r}")
    m = int(m)
    off = np.sqrt(np.arange(1, m, dtype=float))
    jacobi = np.diag(off, 1) + np.diag(off, -1)
    nodes, vecs = np.linalg.eigh(jacobi)
    weights = vecs[0, :] ** 2
    # force exact symmetry: average each +/- pair
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    if m % 2:
        nodes[m // 2] = 0.0
    return nodes, weights / weights.sum()


def gauss_hermite_rule(n: int, order: int = 3) -> QuadratureRule:
    """Tensor-product Gauss-Hermite rule with ``order**n`` points."""
    n = _check_dim(n)
    if int(order) != order or not 1 <= order <= 20:
        raise ValueError(f"Gauss-Hermite order must be in [1, 20], got {order!r}")
    order = int(order)
    if order**n > MAX_POINTS:
        raise ValueError(
            f"Gauss-Hermite rule with order {order} in {n} dimensions needs {order**n} points "
            f"(limit {MAX_POINTS})"
        )
    nodes, w1 = hermite_1d(order)
    grids = np.meshgrid(*([nodes] * n), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.ones(1)
    for _ in range(n):
        weights = np.kron(weights, w1)
    return QuadratureRule(points, weights, degree=2 * order - 1, name=f"ghq(order={order})")


def spherical_radial_rule(n: int) -> QuadratureRule:
    """Third-degree spherical-radial cubature: ``2n`` points at radius ``sqrt(n)``."""
    n = _check_dim(n)
    eye = np.sqrt(n) * np.eye(n)
    points = np.vstack([eye, -eye])
    weights = np.full(2 * n, 1.0 / (2 * n))
    return QuadratureRule(points, weights, degree=3, name="srt")


def make_rule(method: str, n: int, order: int = 3, kappa: float | None = None) -> QuadratureRule:
    """Build a rule by short name: ``ut``, ``ghq`` or ``srt``."""
    method = method.lower()
    if method == "ut":
        return unscented_rule(n, kappa)
    if method == "ghq":
        return gauss_hermite_rule(n, order)
    if method == "srt":
        return spherical_radial_rule(n)
    raise ValueError(f"unknown quadrature method {method!r} (expected ut, ghq or srt)")


def transform_points(rule: QuadratureRule, input: GaussianMoments, chol=None) -> SigmaPoints:
    """Move unit nodes to ``input``.  ``chol`` may pass a precomputed factor."""
    if rule.dim != input.dim:
        raise ValueError(f"rule dimension {rule.dim} != input dimension {input.dim}")
    if chol is None:
        chol = chol_psd(input.cov, kind="state")
    return SigmaPoints(input.mean + rule.points @ chol.T, rule.weights)


def evaluate_at(g: Callable, points: np.ndarray) -> np.ndarray:
    """Stack ``g(x)`` over rows of ``points``; non-finite output raises."""
    values = []
    for i, x in enumerate(points):
        try:
            v = np.atleast_1d(np.asarray(g(x), dtype=float))
        except EvaluationError as exc:
            raise EvaluationError(f"evaluation failed at node {i} (x={x.tolist()}): {exc}") from None
        if not np.all(np.isfinite(v)):
            raise EvaluationError(f"non-finite value at node {i} (x={x.tolist()}): {v.tolist()}")
        values.append(v)
    return np.array(values)


def expect(rule: QuadratureRule, g: Callable, input: GaussianMoments) -> np.ndarray:
    sp = transform_points(rule, input)
    values = evaluate_at(g, sp.points)
    return np.tensordot(sp.weights, values, axes=1)


@dataclass(frozen=True)
class RuleSpec:
    """Rule family plus parameters; builds a rule for any dimension."""

    method: str = "ghq"
    order: int = 3
    kappa: float | None = None

    def build(self, n: int) -> QuadratureRule:
        return make_rule(self.method, n, order=self.order, kappa=self.kappa)


def rule_for(rule, n: int) -> QuadratureRule:
    """Resolve ``rule`` (a :class:`QuadratureRule` or :class:`RuleSpec`) at dimension ``n``."""
    if isinstance(rule, RuleSpec):
        return _build_cached(rule, n)
    if rule.dim != n:
        raise ValueError(
            f"rule {rule.name} has dimension {rule.dim}, needed {n}; pass a RuleSpec to build rules per dimension"
        )
    return rule


@functools.lru_cache(maxsize=64)
def _build_cached(spec: RuleSpec, n: int) -> QuadratureRule:
    return spec.build(n)
