"""Filtering and smoothing on the chain ``x_{i-1} -> f -> (+ g(u_i)) -> (+ w_i) -> x_i``.

:func:`run_filter` is the forward sweep.  Two backward sweeps share its
cache:

* :func:`rts_smooth` works in moment form, applying the node's RTS-type
  rule through each transition.
* :func:`mbf_smooth` works in the dual ``(xi_tilde, W_tilde)`` form.  It
  needs a linear output ``h(x) = H x`` and performs no factorization at all
  in the backward sweep: the input precisions are cached by the forward
  passes and the innovation precision ``G`` by the measurement updates.

Every step records its factorization counts (see :mod:`nlgmp.telemetry`).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import telemetry
from .errors import NumericalError, PreconditionError, StepError
from .gaussian import (
    DualMessage,
    GaussianMoments,
    clip_psd,
    combine_forward_backward,
    factor_pd,
    inverse_from_chol,
    marginal_from_dual,
    symmetrize,
)
from .nonlinear_node import ForwardPassResult, backward_dual, backward_marginal, forward_pass
from .quadrature import rule_for
from .ssm import StateSpaceModel

VARIANCE_FLOOR = 1e-14


@dataclass(frozen=True)
class Innovation:
    """Measurement-update cache for a linear output.

    ``G = (H V H^T + R)^-1``, ``K = V H^T G`` and ``residual = y - H m``,
    all evaluated at the predicted moments.
    """

    G: np.ndarray
    K: np.ndarray
    residual: np.ndarray


@dataclass(frozen=True)
class FilterRecord:
    predicted: GaussianMoments
    filtered: GaussianMoments
    transition: ForwardPassResult
    innovation: Innovation | None = None
    observed: bool = True
    input_prior: GaussianMoments | None = None
    input_pass: ForwardPassResult | None = None
    factorizations: Counter = field(default_factory=Counter, repr=False)


@dataclass(frozen=True)
class FilterState:
    records: list[FilterRecord]
    initial: GaussianMoments

    def __len__(self):
        return len(self.records)

    @property
    def predicted(self) -> list[GaussianMoments]:
        return [r.predicted for r in self.records]

    @property
    def filtered(self) -> list[GaussianMoments]:
        return [r.filtered for r in self.records]


@dataclass(frozen=True)
class SmoothedResult:
    marginals: list[GaussianMoments]
    initial: GaussianMoments
    inputs: list[GaussianMoments] | None = None
    factorizations: list[Counter] = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.marginals)

    @property
    def inversions(self) -> list[int]:
        """Matrix factorizations per backward step (indexed like ``marginals``)."""
        return [sum(c.values()) for c in self.factorizations]


def _input_prior(model: StateSpaceModel, u) -> GaussianMoments | None:
    if isinstance(u, GaussianMoments):
        return u
    if model.input_cov is not None:
        return GaussianMoments(np.asarray(u, dtype=float), model.input_cov)
    return None


def _predict(prev_filtered, u, model, rule):
    n = model.state_dim
    fp = forward_pass(model.f, prev_filtered, rule_for(rule, n))
    mean = fp.y_forward.mean.copy()
    cov = fp.y_forward.cov + model.Q
    prior = _input_prior(model, u)
    input_pass = None
    if prior is not None:
        if model.g is None:
            raise PreconditionError("a Gaussian input needs an input map g")
        input_pass = forward_pass(model.g, prior, rule_for(rule, prior.dim), kind="input")
        mean = mean + input_pass.y_forward.mean
        cov = cov + input_pass.y_forward.cov
    elif model.g is not None:
        mean = mean + model.g(np.asarray(u, dtype=float))
    return GaussianMoments(mean, clip_psd(cov, "predicted covariance")), fp, prior, input_pass


def predict_step(prev_filtered: GaussianMoments, u, model: StateSpaceModel, rule):
    """One prediction through ``f``, the input and the process noise.

    ``u`` is a known input vector, or a :class:`GaussianMoments` prior (which
    is also assumed when the model declares ``input_cov``).

    Returns
    -------
    predicted : GaussianMoments
    fp : ForwardPassResult
        Forward pass through the transition node ``f``.
    """
    predicted, fp, _, _ = _predict(prev_filtered, u, model, rule)
    return predicted, fp


def _linear_update(predicted, y, H, R):
    V = predicted.cov
    S = symmetrize(H @ V @ H.T + R)
    G = inverse_from_chol(factor_pd(S, "innovation covariance", kind="measurement"))
    K = V @ H.T @ G
    residual = y - H @ predicted.mean
    F = np.eye(V.shape[0]) - K @ H
    cov = F @ V @ F.T + K @ R @ K.T
    filtered = GaussianMoments(predicted.mean + K @ residual, clip_psd(cov, "filtered covariance"))
    return filtered, Innovation(G, K, residual)


def _nonlinear_update(predicted, y, model, rule):
    fp_h = forward_pass(model.h, predicted, rule_for(rule, model.state_dim))
    likelihood = GaussianMoments(y, model.R)
    z_marginal = combine_forward_backward(fp_h.y_forward, likelihood)
    return backward_marginal(fp_h, predicted, z_marginal)


def _observation(y):
    if y is None:
        return None
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if np.all(np.isnan(y)):
        return None
    if np.any(np.isnan(y)):
        raise ValueError("partially missing observation vectors are not supported")
    return y


def update_step(predicted: GaussianMoments, y_obs, model: StateSpaceModel, rule) -> GaussianMoments:
    """Condition ``predicted`` on ``y_obs``; ``None`` or all-NaN skips the update."""
    y = _observation(y_obs)
    if y is None:
        return predicted
    if model.h.is_linear:
        return _linear_update(predicted, y, model.H, model.R)[0]
    return _nonlinear_update(predicted, y, model, rule)


def _as_rows(data, N, width, what):
    if data is None:
        if width:
            raise ValueError(f"{what} required: model has dimension {width}")
        return [np.zeros(0)] * N
    rows = list(data)
    if len(rows) != N:
        raise ValueError(f"{what} has {len(rows)} rows, expected {N}")
    return rows


def run_filter(model: StateSpaceModel, observations, inputs=None, rule=None) -> FilterState:
    """Sigma-point filter over ``N = len(observations)`` steps starting from ``model.x0``.

    Missing observations (``None`` or NaN rows) are predict-only steps.
    ``rule`` is a :class:`~nlgmp.quadrature.QuadratureRule` of the state
    dimension or a :class:`~nlgmp.quadrature.RuleSpec`.
    """
    if rule is None:
        raise ValueError("a quadrature rule is required")
    obs = list(observations)
    N = len(obs)
    if N < 1:
        raise ValueError("need at least one step")
    u_rows = _as_rows(inputs, N, model.input_dim, "inputs")
    records = []
    current = model.x0
    for i in range(N):
        with telemetry.counting() as counter:
            try:
                predicted, fp, prior, input_pass = _predict(current, u_rows[i], model, rule)
                y = _observation(obs[i])
                innovation = None
                if y is None:
                    filtered = predicted
                elif model.h.is_linear:
                    filtered, innovation = _linear_update(predicted, y, model.H, model.R)
                else:
                    filtered = _nonlinear_update(predicted, y, model, rule)
            except (NumericalError, ValueError) as exc:
                if isinstance(exc, StepError):
                    raise
                raise StepError(i + 1, exc) from exc
        records.append(
            FilterRecord(
                predicted, filtered, fp, innovation, y is not None, prior, input_pass, Counter(counter.counts)
            )
        )
        current = filtered
    return FilterState(records, model.x0)


def _floor_variance(g: GaussianMoments) -> GaussianMoments:
    d = np.diag(g.cov)
    if np.all(d >= VARIANCE_FLOOR):
        return g
    cov = g.cov.copy()
    idx = np.flatnonzero(d < VARIANCE_FLOOR)
    cov[idx, idx] = VARIANCE_FLOOR
    return GaussianMoments(g.mean, cov)


def _composite(fp: ForwardPassResult, predicted: GaussianMoments) -> ForwardPassResult:
    # f followed by the additive input and noise nodes acts as one node whose
    # output moments are the predicted ones and whose cross-covariance is fp.cross
    return replace(fp, y_forward=predicted)


def rts_smooth(fs: FilterState, model: StateSpaceModel) -> SmoothedResult:
    """Moment-form backward sweep.

    At each step the next smoothed marginal is pulled back through the
    additive noise and input into the transition node, then through the
    node by its RTS-type rule.
    """
    records = fs.records
    N = len(records)
    smoothed: list[GaussianMoments | None] = [None] * N
    inputs: list[GaussianMoments | None] | None = [None] * N if records[0].input_pass else None
    counts: list[Counter] = [Counter() for _ in range(N)]
    smoothed[N - 1] = _floor_variance(records[N - 1].filtered)
    initial = None
    for k in range(N - 1, -1, -1):
        r = records[k]
        prev_filtered = records[k - 1].filtered if k > 0 else fs.initial
        with telemetry.counting() as counter:
            try:
                x_prev = backward_marginal(_composite(r.transition, r.predicted), prev_filtered, smoothed[k])
                if inputs is not None:
                    inputs[k] = backward_marginal(_composite(r.input_pass, r.predicted), r.input_prior, smoothed[k])
            except (NumericalError, ValueError) as exc:
                raise StepError(k + 1, exc) from exc
        counts[k] = Counter(counter.counts)
        if k > 0:
            smoothed[k - 1] = _floor_variance(x_prev)
        else:
            initial = x_prev
    return SmoothedResult(smoothed, initial, inputs, counts)


def _observation_dual(r: FilterRecord, H: np.ndarray, dual: DualMessage) -> DualMessage:
    """Dual message through the equality/observation node, from the filtered edge to the predicted edge."""
    if r.innovation is None:
        return dual
    G, K, res = r.innovation.G, r.innovation.K, r.innovation.residual
    F = np.eye(K.shape[0]) - K @ H
    HtG = H.T @ G
    W = F.T @ dual.W_tilde @ F + HtG @ H
    xi = F.T @ dual.xi_tilde - HtG @ res
    return DualMessage(xi, symmetrize(W))


def mbf_smooth(fs: FilterState, model: StateSpaceModel) -> SmoothedResult:
    """Dual-form backward sweep (modified Bryson-Frazier).

    Starts from the zero dual message at the last filtered edge.  Per step,
    the observation update maps the dual message from the filtered to the
    predicted edge, it passes unchanged through the additive nodes, and
    :func:`~nlgmp.nonlinear_node.backward_dual` carries it through ``f`` (and
    ``g`` for Gaussian inputs).  Marginals come from ``marginal_from_dual``.
    """
    if not model.h.is_linear:
        raise PreconditionError(
            "mbf_smooth requires a linear output h(x) = H x; use rts_smooth for nonlinear h"
        )
    H = model.H
    records = fs.records
    N = len(records)
    for k, r in enumerate(records):
        if r.observed and r.innovation is None:
            raise PreconditionError(f"step {k + 1} has no innovation cache; rerun run_filter with linear h")
    smoothed: list[GaussianMoments | None] = [None] * N
    inputs = [None] * N if records[0].input_pass else None
    counts: list[Counter] = [Counter() for _ in range(N)]
    dual = DualMessage.zero(model.state_dim)
    for k in range(N - 1, -1, -1):
        r = records[k]
        with telemetry.counting() as counter:
            try:
                dual = _observation_dual(r, H, dual)
                smoothed[k] = _floor_variance(marginal_from_dual(r.predicted, dual))
                if inputs is not None:
                    inputs[k] = marginal_from_dual(r.input_prior, backward_dual(r.input_pass, dual))
                dual = backward_dual(r.transition, dual)
            except (NumericalError, ValueError) as exc:
                raise StepError(k + 1, exc) from exc
        counts[k] = Counter(counter.counts)
    initial = marginal_from_dual(fs.initial, dual)
    return SmoothedResult(smoothed, initial, inputs, counts)


def rmse(estimates: Sequence[GaussianMoments], truth) -> float:
    truth = np.asarray(truth, dtype=float)
    if truth.ndim == 1:
        truth = truth[:, None]
    if len(estimates) != truth.shape[0]:
        raise ValueError(f"{len(estimates)} estimates but {truth.shape[0]} truth rows")
    means = np.array([e.mean for e in estimates])
    return float(np.sqrt(np.mean((means - truth) ** 2)))

