"""Approximate Gaussian message passing through nonlinear nodes.

Quadrature-based forward rules, RTS-type backward rules in moment and dual
form, and the filters and smoothers built from them.
"""

from .gaussian import (
    DualMessage,
    GaussianMoments,
    JointGaussian,
    chol_psd,
    combine_forward_backward,
    marginal_from_dual,
    to_dual,
)
from .nonlinear_node import ForwardPassResult, backward_dual, backward_marginal, forward_pass
from .quadrature import (
    QuadratureRule,
    RuleSpec,
    SigmaPoints,
    expect,
    gauss_hermite_rule,
    spherical_radial_rule,
    transform_points,
    unscented_rule,
)
from .smoother import FilterState, SmoothedResult, mbf_smooth, predict_step, rmse, rts_smooth, run_filter, update_step
from .ssm import StateSpaceModel, Trajectory, bundled_model_path, load_model, simulate, ungm_model, validate_model

__version__ = "0.1.0"
