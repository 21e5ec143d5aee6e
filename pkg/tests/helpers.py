"""Random smooth test functions built from the expression language."""

import numpy as np

from nlgmp.gaussian import GaussianMoments
from nlgmp.quadrature import gauss_hermite_rule, spherical_radial_rule, unscented_rule
from nlgmp.ssm import VectorFunction

NONLINEAR_TERMS = [
    "sin({a})",
    "cos({a})",
    "tanh({a})",
    "exp(0.3*{a})",
    "{a}^2/4",
    "{a}*{b}/3",
    "{a}^3/10",
    "sqrt(1 + {a}^2)",
]


def random_dsl_function(rng, n, p):
    """``p`` smooth components over ``x1..xn``: random linear part plus one nonlinear term each."""
    texts = []
    for _ in range(p):
        coef = rng.uniform(-1.5, 1.5, n)
        lin = " + ".join(f"({c:.6f})*x{k + 1}" for k, c in enumerate(coef))
        term = NONLINEAR_TERMS[rng.integers(len(NONLINEAR_TERMS))]
        a, b = (f"x{k + 1}" for k in rng.integers(0, n, 2))
        texts.append(f"{lin} + {rng.uniform(0.3, 1.0):.6f}*{term.format(a=a, b=b)}")
    return VectorFunction.from_strings(texts, n), texts


def random_rule(rng, n):
    kind = rng.integers(3)
    if kind == 0:
        return unscented_rule(n, float(rng.choice([0.5, 1.0, 2.0])))
    if kind == 1:
        return spherical_radial_rule(n)
    return gauss_hermite_rule(n, int(rng.integers(2, 5)))


def random_input(rng, n):
    M = rng.standard_normal((n, n)) * 0.5
    return GaussianMoments(rng.standard_normal(n) * 0.5, M @ M.T + 0.2 * np.eye(n))
