"""State-space models ``x_i = f(x_{i-1}) + g(u_i) + w_i``, ``y_i = h(x_i) + v_i``.

Each of ``f``, ``g``, ``h`` is either a matrix or a list of DSL expressions
(see :mod:`nlgmp.expr`).  Models load from a JSON document::

    {"state_dim": 1, "input_dim": 1, "obs_dim": 1,
     "f": ["0.5*x1 + 25*x1/(1+x1^2)"], "g": ["8*cos(1.2*u1)"], "h": {"matrix": [[1]]},
     "Q": [[10]], "R": [[1]], "x0": {"mean": [0], "cov": [[5]]}}

An optional ``"input_cov"`` matrix declares a Gaussian prior ``N(u_i, input_cov)``
on every input instead of treating inputs as known.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import expr as dsl
from .errors import EvaluationError, ModelError, NumericalError
from .gaussian import GaussianMoments, chol_psd, is_symmetric

MODEL_KEYS = {"state_dim", "input_dim", "obs_dim", "f", "g", "h", "Q", "R", "x0", "input_cov"}
REQUIRED_KEYS = MODEL_KEYS - {"g", "input_cov"}


@dataclass(frozen=True)
class VectorFunction:
    """A map ``R^in -> R^out`` given as a matrix or as expression components.

    ``arg`` says which variable family the expressions read ("x" or "u").
    """

    in_dim: int
    out_dim: int
    matrix: np.ndarray | None = None
    exprs: tuple = ()
    arg: str = "x"

    @classmethod
    def linear(cls, matrix, arg: str = "x") -> "VectorFunction":
        A = np.atleast_2d(np.asarray(matrix, dtype=float))
        A.flags.writeable = False
        return cls(A.shape[1], A.shape[0], matrix=A, arg=arg)

    @classmethod
    def from_strings(cls, texts: Sequence[str], in_dim: int, arg: str = "x") -> "VectorFunction":
        n, m = (in_dim, 0) if arg == "x" else (0, in_dim)
        exprs = tuple(dsl.parse_expr(t, n, m) for t in texts)
        return cls(in_dim, len(exprs), exprs=exprs, arg=arg)

    @property
    def is_linear(self) -> bool:
        return self.matrix is not None

    def __call__(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.matrix is not None:
            return self.matrix @ v
        if self.arg == "x":
            return np.array([dsl.eval_expr(e, v, ()) for e in self.exprs])
        return np.array([dsl.eval_expr(e, (), v) for e in self.exprs])

    def describe(self):
        if self.matrix is not None:
            return {"matrix": self.matrix.tolist()}
        return [dsl.to_string(e) for e in self.exprs]


@dataclass(frozen=True)
class StateSpaceModel:
    state_dim: int
    input_dim: int
    obs_dim: int
    f: VectorFunction
    g: VectorFunction | None
    h: VectorFunction
    Q: np.ndarray
    R: np.ndarray
    x0: GaussianMoments
    input_cov: np.ndarray | None = None

    def __post_init__(self):
        for name in ("Q", "R", "input_cov"):
            value = getattr(self, name)
            if value is not None:
                arr = np.atleast_2d(np.asarray(value, dtype=float)).copy()
                arr.flags.writeable = False
                object.__setattr__(self, name, arr)

    @property
    def H(self) -> np.ndarray | None:
        return self.h.matrix

    @property
    def has_gaussian_inputs(self) -> bool:
        return self.input_cov is not None

    @property
    def is_linear(self) -> bool:
        return self.f.is_linear and self.h.is_linear and (self.g is None or self.g.is_linear)

    def input_effect(self, u) -> np.ndarray:
        if self.g is None:
            return np.zeros(self.state_dim)
        return self.g(u)


def _matrix_violations(name, M, shape, pd=False):
    out = []
    if M is None:
        return [f"{name} missing"]
    if M.shape != shape:
        return [f"{name} has shape {M.shape}, expected {shape}"]
    if not np.all(np.isfinite(M)):
        return [f"{name} has non-finite entries"]
    if not is_symmetric(M):
        return [f"{name} not symmetric"]
    lam = np.linalg.eigvalsh(0.5 * (M + M.T)) if M.size else np.zeros(0)
    scale = max(np.max(np.abs(lam)), 1e-300) if lam.size else 1.0
    if lam.size and lam[0] < -1e-10 * scale:
        out.append(f"{name} not positive semidefinite")
    elif pd and lam.size and lam[0] <= 1e-12 * scale:
        out.append(f"{name} not positive definite")
    return out


def validate_model(model: StateSpaceModel) -> list[str]:
    """Return a list of human-readable invariant violations (empty when valid)."""
    n, m, p = model.state_dim, model.input_dim, model.obs_dim
    out = []
    if n < 1:
        out.append("state_dim must be >= 1")
    if p < 1:
        out.append("obs_dim must be >= 1")
    if m < 0:
        out.append("input_dim must be >= 0")
    if out:
        return out
    if (model.f.in_dim, model.f.out_dim) != (n, n):
        out.append(f"f maps R^{model.f.in_dim} -> R^{model.f.out_dim}, expected R^{n} -> R^{n}")
    if (model.h.in_dim, model.h.out_dim) != (n, p):
        out.append(f"h maps R^{model.h.in_dim} -> R^{model.h.out_dim}, expected R^{n} -> R^{p}")
    if model.g is not None and (model.g.in_dim, model.g.out_dim) != (m, n):
        out.append(f"g maps R^{model.g.in_dim} -> R^{model.g.out_dim}, expected R^{m} -> R^{n}")
    for name, fn in (("f", model.f), ("g", model.g), ("h", model.h)):
        if fn is None or fn.is_linear:
            continue
        bound = n if fn.arg == "x" else m
        for k, e in enumerate(fn.exprs):
            bad = [f"{kind}{i}" for kind, i in dsl.variables(e) if kind != fn.arg or i > bound]
            if bad:
                out.append(f"{name}[{k}] references undeclared variables {sorted(bad)}")
    out += _matrix_violations("Q", model.Q, (n, n))
    out += _matrix_violations("R", model.R, (p, p), pd=True)
    if model.x0.dim != n:
        out.append(f"x0 has dimension {model.x0.dim}, expected {n}")
    if model.input_cov is not None:
        if model.g is None:
            out.append("input_cov given but g is absent")
        out += _matrix_violations("input_cov", model.input_cov, (m, m))
    return out


def _function_from_json(value, key, in_dim, out_dim, arg):
    if isinstance(value, dict):
        extra = set(value) - {"matrix"}
        if extra or "matrix" not in value:
            raise ModelError(f"key {key!r}: expected {{'matrix': [[...]]}}, got keys {sorted(value)}")
        try:
            M = np.array(value["matrix"], dtype=float)
        except (TypeError, ValueError):
            raise ModelError(f"key {key!r}: matrix is not numeric") from None
        if M.ndim != 2:
            raise ModelError(f"key {key!r}: matrix must be two-dimensional")
        return VectorFunction.linear(M, arg=arg)
    if isinstance(value, list) and all(isinstance(t, str) for t in value):
        try:
            return VectorFunction.from_strings(value, in_dim, arg=arg)
        except dsl.ExprSyntaxError as exc:
            raise ModelError(f"key {key!r}: {exc}") from None
    raise ModelError(f"key {key!r}: expected a list of expression strings or a matrix object")


def _matrix_from_json(value, key):
    try:
        M = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ModelError(f"key {key!r}: not a numeric matrix") from None
    if M.ndim != 2:
        raise ModelError(f"key {key!r}: must be a two-dimensional array")
    return M


def model_from_dict(doc: dict) -> StateSpaceModel:
    """Build a model from a parsed JSON document; rejects unknown keys."""
    if not isinstance(doc, dict):
        raise ModelError("model document must be a JSON object")
    unknown = set(doc) - MODEL_KEYS
    if unknown:
        raise ModelError(f"unknown key {sorted(unknown)[0]!r}")
    missing = REQUIRED_KEYS - set(doc)
    if missing:
        raise ModelError(f"missing key {sorted(missing)[0]!r}")
    dims = {}
    for key in ("state_dim", "input_dim", "obs_dim"):
        v = doc[key]
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise ModelError(f"key {key!r}: expected a non-negative integer")
        dims[key] = v
    n, m, p = dims["state_dim"], dims["input_dim"], dims["obs_dim"]
    f = _function_from_json(doc["f"], "f", n, n, "x")
    h = _function_from_json(doc["h"], "h", n, p, "x")
    g = None if doc.get("g") is None else _function_from_json(doc["g"], "g", m, n, "u")
    x0 = doc["x0"]
    if not isinstance(x0, dict) or set(x0) != {"mean", "cov"}:
        raise ModelError("key 'x0': expected an object with exactly 'mean' and 'cov'")
    try:
        prior = GaussianMoments(np.array(x0["mean"], dtype=float), _matrix_from_json(x0["cov"], "x0.cov"))
    except (ValueError, NumericalError) as exc:
        raise ModelError(f"key 'x0': {exc}") from None
    input_cov = doc.get("input_cov")
    model = StateSpaceModel(
        n, m, p, f, g, h,
        Q=_matrix_from_json(doc["Q"], "Q"),
        R=_matrix_from_json(doc["R"], "R"),
        x0=prior,
        input_cov=None if input_cov is None else _matrix_from_json(input_cov, "input_cov"),
    )
    return model


BUNDLED_DIR = Path(__file__).parent / "models"


def bundled_models() -> list[str]:
    """Names of the model files shipped with the package."""
    return sorted(p.stem for p in BUNDLED_DIR.glob("*.json"))


def bundled_model_path(name: str) -> Path:
    path = BUNDLED_DIR / f"{name}.json"
    if not path.is_file():
        raise ModelError(f"no bundled model {name!r} (available: {', '.join(bundled_models())})")
    return path


def load_model(path) -> StateSpaceModel:
    """Load a model from JSON; syntax errors report the character offset."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"offset {exc.pos}: invalid JSON: {exc.msg}") from None
    return model_from_dict(doc)


def model_to_dict(model: StateSpaceModel) -> dict:
    doc = {
        "state_dim": model.state_dim,
        "input_dim": model.input_dim,
        "obs_dim": model.obs_dim,
        "f": model.f.describe(),
        "g": None if model.g is None else model.g.describe(),
        "h": model.h.describe(),
        "Q": model.Q.tolist(),
        "R": model.R.tolist(),
        "x0": {"mean": model.x0.mean.tolist(), "cov": model.x0.cov.tolist()},
    }
    if model.input_cov is not None:
        doc["input_cov"] = model.input_cov.tolist()
    return doc


@dataclass(frozen=True)
class Trajectory:
    """A sample path: ``states[i-1]`` is ``x_i`` for ``i = 1..N``."""

    states: np.ndarray
    inputs: np.ndarray
    observations: np.ndarray
    seed: int | None = None
    initial_state: np.ndarray | None = field(default=None, repr=False)

    @property
    def length(self) -> int:
        return self.states.shape[0]


def _draw(rng, cov_factor):
    return cov_factor @ rng.standard_normal(cov_factor.shape[0])


def simulate(model: StateSpaceModel, inputs, seed: int, steps: int | None = None) -> Trajectory:
    """Sample a trajectory.

    ``inputs`` is an ``N x m`` array (``m`` may be 0, in which case ``steps``
    gives ``N``).  With ``input_cov`` set, the true input at each step is drawn
    from ``N(u_i, input_cov)``; the nominal inputs are stored.
    Draws come from ``numpy.random.default_rng(seed)`` in a fixed order, so a
    seed reproduces the trajectory exactly.
    """
    n, p = model.state_dim, model.obs_dim
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs.reshape(-1, model.input_dim) if model.input_dim else inputs.reshape(-1, 0)
    N = inputs.shape[0] if steps is None else steps
    if inputs.shape[0] != N and not (model.input_dim == 0 and inputs.size == 0):
        raise ModelError(f"inputs have {inputs.shape[0]} rows, expected {N}")
    if inputs.shape[0] != N:
        inputs = np.zeros((N, 0))
    if inputs.shape[1] != model.input_dim:
        raise ModelError(f"inputs have {inputs.shape[1]} columns, expected {model.input_dim}")
    rng = np.random.default_rng(seed)
    L0 = chol_psd(model.x0.cov)
    Lq = chol_psd(model.Q)
    Lr = chol_psd(model.R)
    Lu = chol_psd(model.input_cov) if model.input_cov is not None else None
    x = model.x0.mean + _draw(rng, L0)
    x_init = x.copy()
    states = np.empty((N, n))
    obs = np.empty((N, p))
    for i in range(N):
        u = inputs[i]
        if Lu is not None:
            u = u + _draw(rng, Lu)
        try:
            x = model.f(x) + model.input_effect(u) + _draw(rng, Lq)
            y = model.h(x) + _draw(rng, Lr)
        except EvaluationError as exc:
            raise NumericalError(f"simulation diverged at step {i + 1}: {exc}") from None
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise NumericalError(f"simulation diverged at step {i + 1}: non-finite state")
        states[i] = x
        obs[i] = y
    return Trajectory(states, inputs.copy(), obs, seed=seed, initial_state=x_init)


def ungm_model(linear_output: bool = True, q: float = 10.0, r: float = 1.0, x0_var: float = 5.0) -> StateSpaceModel:
    """Univariate nonstationary growth model with forcing ``8 cos(1.2 t)``.

    The forcing enters through ``g(u) = 8 cos(1.2 u1)`` with ``u_t = t``.
    ``linear_output`` selects ``h(x) = x`` instead of ``x^2 / 20``.
    """
    h = {"matrix": [[1.0]]} if linear_output else ["x1^2/20"]
    return model_from_dict(
        {
            "state_dim": 1,
            "input_dim": 1,
            "obs_dim": 1,
            "f": ["0.5*x1 + 25*x1/(1 + x1^2)"],
            "g": ["8*cos(1.2*u1)"],
            "h": h,
            "Q": [[q]],
            "R": [[r]],
            "x0": {"mean": [0.0], "cov": [[x0_var]]},
        }
    )


def time_index_inputs(model: StateSpaceModel, steps: int) -> np.ndarray:
    """Default inputs: every input component equals the step index ``1..N``."""
    t = np.arange(1, steps + 1, dtype=float)
    return np.repeat(t[:, None], model.input_dim, axis=1)
